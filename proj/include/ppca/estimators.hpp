#ifndef PPCA_ESTIMATORS_HPP
#define PPCA_ESTIMATORS_HPP

#include <Eigen/Dense>

#include <string_view>
#include <vector>

#include "ppca/linalg.hpp"
#include "ppca/random.hpp"

namespace ppca::estimators {

using linalg::Index;
using linalg::SymmetricMatrix;

enum class Method { PCA, PPCA, CDMPCA };

std::string_view to_string(Method m);
/// Accepts "pca", "ppca", "cdm" / "cdmpca" (any case).
Method parse_method(std::string_view name);

/// n×p sample matrix, one row per observation.
class DataMatrix {
 public:
  explicit DataMatrix(Eigen::MatrixXd rows);

  Index n() const { return rows_.rows(); }
  Index p() const { return rows_.cols(); }
  const Eigen::MatrixXd& rows() const { return rows_; }

 private:
  Eigen::MatrixXd rows_;
};

struct SplitPair {
  DataMatrix first;
  DataMatrix second;
  /// permutation[i] is the input row placed at position i of first ++ second.
  std::vector<Index> permutation;

  /// Pairs two given halves; the permutation is the identity over the
  /// concatenation.
  static SplitPair from_halves(DataMatrix first, DataMatrix second);
};

struct SpectrumEstimate {
  Method method = Method::PCA;
  Index rank = 0;
  /// Descending. Length p for dense fits; for low-rank fits (n < p) only
  /// the components supported by the data are reported.
  Eigen::VectorXd eigenvalues;
  /// Unit-norm columns matching `eigenvalues`. Orthonormal for PCA only.
  Eigen::MatrixXd eigenvectors;

  /// Singular vector pairs (PPCA: of Ŝ₁^{1/2}Ŝ₂^{1/2}; CDM-PCA: of the
  /// scaled cross-data matrix, so n₁×r and n₂×r).
  Eigen::MatrixXd left;
  Eigen::MatrixXd right;
  /// PPCA columns where uᵀv vanished and the left vector was used instead.
  std::vector<bool> degenerate;

  /// CDM-PCA only: Γ̄₁, Γ̄₂ and their unnormalized average Γ̄.
  Eigen::MatrixXd cdm_first;
  Eigen::MatrixXd cdm_second;
  Eigen::MatrixXd cdm_raw;

  Index components() const { return eigenvalues.size(); }
  bool any_degenerate() const;
  /// Orthonormal basis of the span of the leading q eigenvectors.
  Eigen::MatrixXd leading_basis(Index q) const;
};

struct FitOptions {
  bool center = true;
};

SymmetricMatrix sample_covariance(const DataMatrix& x, bool center);

/// Uniform random halving; sizes ⌈n/2⌉ and ⌊n/2⌋.
SplitPair random_split(const DataMatrix& x, Rng& rng);

SpectrumEstimate pca_fit(const DataMatrix& x, Index r, FitOptions opts = {});

/// Top eigenvector of uuᵀ + vvᵀ for unit u, v.
Eigen::VectorXd integrate_singular_vectors(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

SpectrumEstimate ppca_fit(const DataMatrix& x, Index r, Rng& rng, FitOptions opts = {});
SpectrumEstimate ppca_fit(const SplitPair& split, Index r, FitOptions opts = {});

SpectrumEstimate cdm_pca_fit(const DataMatrix& x, Index r, Rng& rng, FitOptions opts = {});
SpectrumEstimate cdm_pca_fit(const SplitPair& split, Index r, FitOptions opts = {});

/// Dispatch on method; PCA ignores the generator.
SpectrumEstimate fit(Method method, const DataMatrix& x, Index r, Rng& rng, FitOptions opts = {});

/// Integrates every column pair of an SVD of Ŝ₁₂ into eigenvector
/// estimates. Columns with uᵀv ≈ 0 fall back to u and are flagged.
Eigen::MatrixXd integrate_columns(const Eigen::MatrixXd& left, const Eigen::MatrixXd& right,
                                  std::vector<bool>& degenerate);

}  // namespace ppca::estimators

#endif  // PPCA_ESTIMATORS_HPP
