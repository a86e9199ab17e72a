#ifndef PPCA_POPULATION_HPP
#define PPCA_POPULATION_HPP

// Population-level functionals under point-mass contamination, together
// with the closed-form second-order predictions they are checked against.
//
// Index convention: eigen-indices are 0-based. A signal/noise pair (j, k)
// satisfies j < r <= k, where r is the model's target rank.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "ppca/linalg.hpp"
#include "ppca/random.hpp"

namespace ppca::population {

using linalg::Index;
using linalg::SpectralDecomposition;
using linalg::SymmetricMatrix;

/// Population eigenvalues (strictly descending, positive), orthonormal
/// eigenvectors and target rank 1 <= r < p.
class SpectralModel {
 public:
  SpectralModel(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors, Index rank);

  /// Γ = I.
  static SpectralModel diagonal(Eigen::VectorXd eigenvalues, Index rank);

  /// Skips the distinct-eigenvalue requirement (descending order and
  /// positivity are still enforced). Operations that need distinct
  /// eigenvalues throw TieError on such a model.
  static SpectralModel allowing_ties(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors,
                                     Index rank);

  Index p() const { return eigenvalues_.size(); }
  Index rank() const { return rank_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }
  double eigenvalue(Index j) const { return eigenvalues_(j); }
  Eigen::VectorXd eigenvector(Index j) const { return eigenvectors_.col(j); }
  Eigen::MatrixXd leading_eigenvectors() const { return eigenvectors_.leftCols(rank_); }

  bool has_distinct_eigenvalues() const;
  /// Throws TieError when two eigenvalues are closer than 1e-12·λ₁.
  void require_distinct() const;

 private:
  SpectralModel(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors, Index rank,
                bool check_gaps);

  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  Index rank_ = 1;
};

/// Model, outlier x and contamination fraction ε ∈ (0, 0.25).
struct PerturbationScenario {
  PerturbationScenario(SpectralModel model, Eigen::VectorXd x, double eps);

  SpectralModel model;
  Eigen::VectorXd x;
  double eps;
};

struct TheoryReport {
  double numeric = 0;
  double theory = 0;
  double abs_gap = 0;
  double rel_gap = 0;
  double eps = 0;

  static TheoryReport make(double numeric, double theory, double eps);
};

SymmetricMatrix covariance_of(const SpectralModel& model);

/// (1 − ε)Σ + ε x xᵀ. Uncentered: the contaminated mean is not subtracted.
SymmetricMatrix perturbed_second_moment(const SymmetricMatrix& sigma, const Eigen::VectorXd& x,
                                        double eps);

/// Covariance of the mixture (1 − ε)F + ε δ_x for a centered F:
/// (1 − ε)Σ + ε(1 − ε) x xᵀ. Point-mass scenarios use this form.
SymmetricMatrix perturbed_covariance(const SymmetricMatrix& sigma, const Eigen::VectorXd& x,
                                     double eps);

/// sym_eig of Σ; when a reference basis is given, each column's sign is
/// chosen to correlate positively with its best-matching reference column.
SpectralDecomposition pca_functional(const SymmetricMatrix& sigma,
                                     const Eigen::MatrixXd* reference = nullptr);

struct PpcaFunctional {
  Eigen::MatrixXd left;
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd right;
  Eigen::MatrixXd integrated;
  std::vector<bool> degenerate;
};

/// SVD of Σ₁^{1/2}Σ₂^{1/2} and the integrated singular vectors.
PpcaFunctional ppca_functional(const SymmetricMatrix& sigma1, const SymmetricMatrix& sigma2);

/// Assigns each reference column j the column of `vectors` it correlates
/// with most (in absolute value). Greedy first, optimal assignment if the
/// greedy choice collides. Throws IndexMatchFailure if a matched |corr|
/// falls below 1/√2.
std::vector<Index> match_indices(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& vectors);

/// λ_j / (λ_j + λ_k); requires λ_j > λ_k > 0.
double rho(double lambda_j, double lambda_k);

/// Perturbed eigenvalues (PCA) or singular values (PPCA), reordered so that
/// entry j belongs to the direction matched to γ_j.
Eigen::VectorXd matched_values_pca(const PerturbationScenario& scn);
Eigen::VectorXd matched_values_ppca(const PerturbationScenario& scn);

double perturbed_rho_pca(const PerturbationScenario& scn, Index j, Index k);
double perturbed_rho_ppca(const PerturbationScenario& scn, Index j, Index k);

double tau_jk_numeric(const PerturbationScenario& scn, Index j, Index k);
/// Average of τ_jk over all r(p − r) signal/noise pairs.
double tau_numeric(const PerturbationScenario& scn);

/// |γ_jᵀ γ_j(F_ε)| and |γ_jᵀ γ_j(F_{2ε}, F)| with index matching.
double eigvec_inner_pca(const PerturbationScenario& scn, Index j);
double eigvec_inner_ppca(const PerturbationScenario& scn, Index j);

/// d_j = (γ_jᵀx)² / λ_j.
Eigen::VectorXd d_vector(const SpectralModel& model, const Eigen::VectorXd& x);

/// xᵀΣ⁻¹x.
double mahalanobis_sq(const SpectralModel& model, const Eigen::VectorXd& x);

/// ρ_jk + ε η_jk (d_j − d_k).
double rho_first_order_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps,
                              Index j, Index k);

double tau_jk_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps, Index j,
                     Index k);
double delta(const SpectralModel& model, const Eigen::VectorXd& x);
double delta_prime(const SpectralModel& model, const Eigen::VectorXd& x);
double tau_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps);
/// Requires x ⟂ S_r (‖P_{S_r}x‖ < 1e-10‖x‖).
double tau_perpendicular_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps);

/// 1 − (ε²/2)(γ_jᵀx)² xᵀM_j²x.
double eigvec_perturbation_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps,
                                  Index j);

/// (λ_j I − Σ)⁺.
SymmetricMatrix m_pseudoinverse(const SpectralModel& model, Index j);

struct FlipThresholds {
  double eta_pca;
  double eta_cdm;
  /// a > 1/(1 − 2ε): the product form needs the larger outlier to flip.
  bool product_more_robust;
};

/// Outlier strengths η at which ν overtakes ξ as the leading eigenvector of
/// (1−ε)Σ + εηννᵀ and of {(1−2ε)Σ + 2εηννᵀ}Σ, for Σ = aξξᵀ + (I − ξξᵀ).
FlipThresholds flip_thresholds(double a, double eps);

/// Σ_β = HᵀWH for Gaussian data, W = (I + K)(Σ ⊗ Σ). Ordering of β is
/// (λ₁..λ_p, vec(Γ)), dimension p(p+1).
Eigen::MatrixXd asymptotic_cov_gaussian(const SpectralModel& model);

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// K with K·vec(A) = vec(Aᵀ) for p×p A (column-major vec).
Eigen::MatrixXd commutation_matrix(Index p);

struct DeltaGenerator {
  enum class Kind { Isotropic, EllipticalScaled };
  Kind kind = Kind::Isotropic;
  /// Covariance multiplier: aI or aΣ.
  double a = 1.0;
  /// Degrees of freedom for the elliptical-t generator.
  double nu = 5.0;
};

struct DeltaMonteCarlo {
  double mean = 0;
  double se_mean = 0;
  double fraction_positive = 0;
  double se_fraction = 0;
  std::int64_t reps = 0;
};

DeltaMonteCarlo monte_carlo_delta(const SpectralModel& model, const DeltaGenerator& generator,
                                  std::int64_t reps, std::uint64_t seed);

}  // namespace ppca::population

#endif  // PPCA_POPULATION_HPP
