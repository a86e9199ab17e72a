#ifndef PPCA_LINALG_HPP
#define PPCA_LINALG_HPP

// Dense symmetric eigendecomposition, PSD square root, SVD and subspace
// helpers. Everything here is header-only and templated on the scalar type;
// the rest of the library instantiates it with double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ppca/errors.hpp"

namespace ppca::linalg {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

/// A square real matrix that is exactly symmetric and finite.
///
/// Construction symmetrizes the input as (A + Aᵀ)/2, so entries (i,j) and
/// (j,i) are bitwise equal afterwards.
template <typename Scalar>
class BasicSymmetricMatrix {
 public:
  BasicSymmetricMatrix() = default;

  template <typename Derived>
  explicit BasicSymmetricMatrix(const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() != m.cols()) {
      throw InvalidInput("symmetric matrix must be square, got " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()));
    }
    if (m.rows() == 0) throw InvalidInput("symmetric matrix must have positive dimension");
    if (!all_finite(m)) throw InvalidInput("symmetric matrix has non-finite entries");
    Mat<Scalar> a = m.template cast<Scalar>();
    m_ = (a + a.transpose()) / Scalar(2);
  }

  static BasicSymmetricMatrix identity(Index p) {
    return BasicSymmetricMatrix(Mat<Scalar>::Identity(p, p));
  }

  Index dim() const { return m_.rows(); }
  const Mat<Scalar>& matrix() const { return m_; }
  Scalar operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Mat<Scalar> m_;
};

/// Eigenpairs sorted by descending eigenvalue; eigenvectors are columns.
template <typename Scalar>
struct BasicSpectralDecomposition {
  Vec<Scalar> eigenvalues;
  Mat<Scalar> eigenvectors;
};

/// Thin SVD with descending singular values: A = left * diag(s) * rightᵀ.
template <typename Scalar>
struct BasicSvdResult {
  Mat<Scalar> left;
  Vec<Scalar> singular_values;
  Mat<Scalar> right;
};

using SymmetricMatrix = BasicSymmetricMatrix<double>;
using SpectralDecomposition = BasicSpectralDecomposition<double>;
using SvdResult = BasicSvdResult<double>;

/// Index of the entry of largest magnitude, lowest index on ties.
template <typename Derived>
Index dominant_index(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  auto best_abs = std::abs(v(0));
  for (Index i = 1; i < v.size(); ++i) {
    const auto a = std::abs(v(i));
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  return best;
}

/// Flips columns of `vectors` so that each column's dominant entry is
/// positive. Columns of `partner` (if given) are flipped in tandem.
template <typename Scalar>
void apply_sign_convention(Mat<Scalar>& vectors, Mat<Scalar>* partner = nullptr) {
  for (Index c = 0; c < vectors.cols(); ++c) {
    const Index i = dominant_index(vectors.col(c));
    if (vectors(i, c) < Scalar(0)) {
      vectors.col(c) *= Scalar(-1);
      if (partner != nullptr) partner->col(c) *= Scalar(-1);
    }
  }
}

template <typename Scalar>
void apply_sign_convention(Vec<Scalar>& v) {
  const Index i = dominant_index(v);
  if (v(i) < Scalar(0)) v *= Scalar(-1);
}

template <typename Scalar>
BasicSpectralDecomposition<Scalar> sym_eig(const BasicSymmetricMatrix<Scalar>& s) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> solver(s.matrix(), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver did not converge");

  const Index p = s.dim();
  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Index{0});
  const auto& values = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });

  BasicSpectralDecomposition<Scalar> out;
  out.eigenvalues.resize(p);
  out.eigenvectors.resize(p, p);
  for (Index c = 0; c < p; ++c) {
    out.eigenvalues(c) = values(order[static_cast<std::size_t>(c)]);
    out.eigenvectors.col(c) = solver.eigenvectors().col(order[static_cast<std::size_t>(c)]);
  }
  apply_sign_convention(out.eigenvectors);
  return out;
}

/// Relative tolerance for negative eigenvalues accepted (and clamped to 0)
/// by psd_sqrt.
inline constexpr double kPsdNegativeTolerance = 1e-10;

template <typename Scalar>
BasicSymmetricMatrix<Scalar> psd_sqrt(const BasicSymmetricMatrix<Scalar>& s) {
  auto eig = sym_eig(s);
  const Scalar top = eig.eigenvalues(0);
  const Scalar bottom = eig.eigenvalues(eig.eigenvalues.size() - 1);
  const Scalar floor = -Scalar(kPsdNegativeTolerance) * std::max(top, Scalar(0));
  if (bottom < floor) {
    throw NotPositiveSemidefinite("matrix has eigenvalue " + std::to_string(double(bottom)) +
                                  " below tolerance relative to largest " +
                                  std::to_string(double(top)));
  }
  const Vec<Scalar> roots = eig.eigenvalues.cwiseMax(Scalar(0)).cwiseSqrt();
  const Mat<Scalar> r = eig.eigenvectors * roots.asDiagonal() * eig.eigenvectors.transpose();
  return BasicSymmetricMatrix<Scalar>(r);
}

/// SVD of an arbitrary finite matrix, singular values descending. For a
/// square input the factors are full; otherwise thin.
template <typename Derived>
auto svd_desc(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.size() == 0) throw InvalidInput("svd of an empty matrix");
  if (!all_finite(a)) throw InvalidInput("svd input has non-finite entries");
  Mat<Scalar> m = a;
  Eigen::BDCSVD<Mat<Scalar>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("svd did not converge");
  BasicSvdResult<Scalar> out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  apply_sign_convention(out.left, &out.right);
  return out;
}

template <typename Derived>
auto singular_values(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> m = a;
  Eigen::JacobiSVD<Mat<Scalar>> svd(m);
  return Vec<Scalar>(svd.singularValues());
}

/// Orthonormal basis of the column span of `m` (p×q, q ≤ p).
///
/// Householder QR without pivoting, with R's diagonal made positive. The
/// span of the first k output columns equals the span of the first k input
/// columns for every k.
template <typename Derived>
auto orthonormal_basis(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Index p = m.rows();
  const Index q = m.cols();
  if (q == 0 || q > p) {
    throw InvalidInput("orthonormal_basis needs 1 <= q <= p, got q=" + std::to_string(q) +
                       ", p=" + std::to_string(p));
  }
  if (!all_finite(m)) throw InvalidInput("orthonormal_basis input has non-finite entries");
  const Vec<Scalar> sv = singular_values(m);
  if (!(sv(q - 1) > Scalar(1e-12) * sv(0))) {
    throw RankDeficient("columns are numerically rank deficient (sigma_min/sigma_max = " +
                        std::to_string(double(sv(0) > 0 ? sv(q - 1) / sv(0) : 0)) + ")");
  }
  Mat<Scalar> a = m;
  Eigen::HouseholderQR<Mat<Scalar>> qr(a);
  Mat<Scalar> basis = qr.householderQ() * Mat<Scalar>::Identity(p, q);
  for (Index c = 0; c < q; ++c) {
    if (qr.matrixQR()(c, c) < Scalar(0)) basis.col(c) *= Scalar(-1);
  }
  return basis;
}

/// Orthonormality residual ‖QᵀQ − I‖_F.
template <typename Derived>
auto orthonormality_error(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  return (q.transpose() * q - Mat<Scalar>::Identity(q.cols(), q.cols())).norm();
}

/// Mean of the singular values of Bᵀ·Γ_r, in [0, 1].
template <typename DerivedB, typename DerivedG>
auto subspace_similarity(const Eigen::MatrixBase<DerivedB>& basis,
                         const Eigen::MatrixBase<DerivedG>& target) {
  using Scalar = typename DerivedB::Scalar;
  if (basis.rows() != target.rows()) throw InvalidInput("subspace_similarity: row mismatch");
  const Index q = basis.cols();
  const Index r = target.cols();
  if (r == 0) throw InvalidInput("subspace_similarity: empty target");
  if (q < r) {
    throw InvalidInput("subspace_similarity needs q >= r, got q=" + std::to_string(q) +
                       ", r=" + std::to_string(r));
  }
  if (orthonormality_error(basis) > Scalar(1e-8) || orthonormality_error(target) > Scalar(1e-8)) {
    throw InvalidInput("subspace_similarity: inputs must be orthonormal");
  }
  const Mat<Scalar> cross = basis.transpose() * target;
  return singular_values(cross).sum() / Scalar(r);
}

/// Sine of the largest principal angle between span(a) and span(b); both
/// inputs orthonormal with equal column counts.
template <typename DerivedA, typename DerivedB>
auto max_principal_angle_sine(const Eigen::MatrixBase<DerivedA>& a,
                              const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Mat<Scalar> residual = b - a * (a.transpose() * b);
  return singular_values(residual)(0);
}

}  // namespace ppca::linalg

#endif  // PPCA_LINALG_HPP
