#ifndef PPCA_SIMULATION_HPP
#define PPCA_SIMULATION_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ppca/estimators.hpp"
#include "ppca/population.hpp"

namespace ppca::simulation {

using estimators::DataMatrix;
using estimators::Method;
using linalg::Index;
using population::SpectralModel;

/// Mixture (1 − π) t_ν(0, Σ) + π t₃(μ_out, 50 I) over freshly drawn spiked
/// models. ν = +inf samples the clean component from a Gaussian.
struct SimulationConfig {
  Index n = 200;
  Index p = 100;
  Index r = 5;
  double nu = 5.0;
  double pi = 0.0;
  std::vector<Index> q_grid;
  Index replicates = 100;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::PCA, Method::PPCA};
  unsigned threads = 1;

  /// {r, r+1, ..., min(r + 35, p)}.
  static std::vector<Index> default_q_grid(Index r, Index p);
  Index max_q() const;
  void validate() const;
};

struct XiCurve {
  Method method = Method::PCA;
  std::vector<Index> q;
  std::vector<double> mean;
  std::vector<double> sd;
  Index replicates = 0;
};

struct MethodTrial {
  Method method = Method::PCA;
  bool ok = false;
  std::string error;
  /// ξ_q for each q of the grid (empty when !ok).
  std::vector<double> xi;
};

struct RawRow {
  Index replicate;
  Method method;
  Index q;
  double xi;
};

struct FailedTrial {
  Index replicate;
  Method method;
  std::string error;
};

struct StudyResult {
  SimulationConfig config;
  std::vector<XiCurve> curves;
  std::vector<RawRow> raw;
  std::vector<FailedTrial> failures;
};

/// Signal eigenvalues 1 + √(p/n) + p^{1/(1+j)} (j = 1..r), noise
/// eigenvalues U(0.5, 1.5), Γ from QR of a p×p standard Gaussian matrix.
SpectralModel gen_spiked_model(Index p, Index n, Index r, Rng& rng);

/// Multivariate t rows with the given mean and covariance (not scale).
DataMatrix sample_mvt(Index count, const Eigen::VectorXd& mean, const linalg::SymmetricMatrix& cov,
                      double nu, Rng& rng);

DataMatrix sample_mixture(const SimulationConfig& config, const SpectralModel& model, Rng& rng);

/// Samples one dataset and scores each configured method. PPCA and CDM-PCA
/// share one random split.
std::vector<MethodTrial> run_trial(const SimulationConfig& config, const SpectralModel& model,
                                   Rng& rng);

/// Replicate i uses the substream make_stream(seed, i) for both the model
/// and the data, so output does not depend on the thread count.
StudyResult run_study(const SimulationConfig& config);

/// `method,q,mean_xi,sd_xi,replicates,n,p,r,nu,pi,seed`.
void write_aggregate_csv(std::ostream& out, const StudyResult& study, bool header = true);
/// `replicate,method,q,xi`.
void write_raw_csv(std::ostream& out, const StudyResult& study, bool header = true);

/// Mean ξ_q curves as a static SVG line chart.
std::string xi_plot_svg(const StudyResult& study);

struct AsymptoticMoments {
  Index n = 0;
  Index replicates = 0;
  /// Empirical mean and covariance of √n(β̂ − β), β = (λ, vec Γ).
  Eigen::VectorXd mean_pca, mean_ppca;
  Eigen::MatrixXd cov_pca, cov_ppca;
  Eigen::MatrixXd theory;
  /// Relative Frobenius distances on the eigenvalue block.
  double eig_pca_vs_theory = 0;
  double eig_ppca_vs_theory = 0;
  double eig_ppca_vs_pca = 0;
  /// Same, over the full p(p+1) covariance.
  double full_pca_vs_theory = 0;
  double full_ppca_vs_theory = 0;
  double full_ppca_vs_pca = 0;
};

/// Gaussian samples from `model` at each n; eigenvectors are sign-aligned to
/// the truth before differencing.
std::vector<AsymptoticMoments> monte_carlo_asymptotics(const std::vector<Index>& n_list,
                                                       const SpectralModel& model,
                                                       Index replicates, std::uint64_t seed);

/// ‖a − b‖_F / ‖b‖_F.
double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace ppca::simulation

#endif  // PPCA_SIMULATION_HPP
