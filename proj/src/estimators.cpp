#include "ppca/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <string>

namespace ppca::estimators {

namespace {

Eigen::MatrixXd centered_rows(const Eigen::MatrixXd& x, bool center) {
  if (!center) return x;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return x.rowwise() - mean;
}

void check_rank_range(Index r, Index lo, Index hi, const char* what) {
  if (r < lo || r > hi) {
    throw InvalidInput(std::string(what) + ": rank " + std::to_string(r) + " outside [" +
                       std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

// sqrt(X'X/n) = V diag(s) V' from the thin SVD of X/sqrt(n). Returns (V, s).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> gram_sqrt_factor(const Eigen::MatrixXd& xc) {
  const Eigen::MatrixXd scaled = xc / std::sqrt(static_cast<double>(xc.rows()));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinV);
  return {svd.matrixV(), svd.singularValues()};
}

SpectrumEstimate ppca_from_svd(linalg::SvdResult svd, Index r) {
  SpectrumEstimate est;
  est.method = Method::PPCA;
  est.rank = r;
  est.eigenvalues = std::move(svd.singular_values);
  est.eigenvectors = integrate_columns(svd.left, svd.right, est.degenerate);
  est.left = std::move(svd.left);
  est.right = std::move(svd.right);
  return est;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::PCA:
      return "PCA";
    case Method::PPCA:
      return "PPCA";
    case Method::CDMPCA:
      return "CDMPCA";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "pca") return Method::PCA;
  if (lower == "ppca") return Method::PPCA;
  if (lower == "cdm" || lower == "cdmpca" || lower == "cdm-pca") return Method::CDMPCA;
  throw InvalidInput("unknown method '" + std::string(name) + "'");
}

DataMatrix::DataMatrix(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
  if (rows_.rows() < 2) throw InvalidInput("data matrix needs at least 2 rows");
  if (rows_.cols() < 1) throw InvalidInput("data matrix needs at least 1 column");
  if (!rows_.allFinite()) throw InvalidInput("data matrix has non-finite entries");
}

SplitPair SplitPair::from_halves(DataMatrix first, DataMatrix second) {
  if (first.p() != second.p()) throw InvalidInput("split halves differ in column count");
  std::vector<Index> perm(static_cast<std::size_t>(first.n() + second.n()));
  std::iota(perm.begin(), perm.end(), Index{0});
  return SplitPair{std::move(first), std::move(second), std::move(perm)};
}

bool SpectrumEstimate::any_degenerate() const {
  return std::any_of(degenerate.begin(), degenerate.end(), [](bool b) { return b; });
}

Eigen::MatrixXd SpectrumEstimate::leading_basis(Index q) const {
  if (q < 1 || q > eigenvectors.cols()) {
    throw InvalidInput("leading_basis: q=" + std::to_string(q) + " exceeds " +
                       std::to_string(eigenvectors.cols()) + " available components");
  }
  return linalg::orthonormal_basis(eigenvectors.leftCols(q));
}

SymmetricMatrix sample_covariance(const DataMatrix& x, bool center) {
  const Eigen::MatrixXd xc = centered_rows(x.rows(), center);
  const Eigen::MatrixXd s = xc.transpose() * xc / static_cast<double>(x.n());
  return SymmetricMatrix(s);
}

SplitPair random_split(const DataMatrix& x, Rng& rng) {
  const Index n = x.n();
  if (n < 4) throw InvalidInput("random_split needs n >= 4, got " + std::to_string(n));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  const Index n1 = (n + 1) / 2;
  Eigen::MatrixXd a(n1, x.p());
  Eigen::MatrixXd b(n - n1, x.p());
  for (Index i = 0; i < n; ++i) {
    const auto src = x.rows().row(perm[static_cast<std::size_t>(i)]);
    if (i < n1) {
      a.row(i) = src;
    } else {
      b.row(i - n1) = src;
    }
  }
  return SplitPair{DataMatrix(std::move(a)), DataMatrix(std::move(b)), std::move(perm)};
}

SpectrumEstimate pca_fit(const DataMatrix& x, Index r, FitOptions opts) {
  check_rank_range(r, 1, std::min(x.n() - 1, x.p()), "pca_fit");
  SpectrumEstimate est;
  est.method = Method::PCA;
  est.rank = r;
  if (x.n() >= x.p()) {
    auto eig = linalg::sym_eig(sample_covariance(x, opts.center));
    est.eigenvalues = std::move(eig.eigenvalues);
    est.eigenvectors = std::move(eig.eigenvectors);
    return est;
  }
  // n < p: the covariance has rank < n, so work from the thin SVD of the data.
  auto [v, s] = gram_sqrt_factor(centered_rows(x.rows(), opts.center));
  est.eigenvalues = s.cwiseAbs2();
  est.eigenvectors = std::move(v);
  linalg::apply_sign_convention(est.eigenvectors);
  return est;
}

Eigen::VectorXd integrate_singular_vectors(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw InvalidInput("integrate_singular_vectors: size mismatch");
  if (std::abs(u.norm() - 1.0) > 1e-10 || std::abs(v.norm() - 1.0) > 1e-10) {
    throw InvalidInput("integrate_singular_vectors: inputs must be unit vectors");
  }
  const double c = u.dot(v);
  if (std::abs(c) < 1e-12) {
    throw DegenerateIntegration("singular vector pair is orthogonal; top eigenvector not unique");
  }
  // u + sign(c) v spans the top eigenvector of uu' + vv' (eigenvalue 1 + |c|).
  Eigen::VectorXd w = u + (c > 0 ? 1.0 : -1.0) * v;
  w.normalize();
  linalg::apply_sign_convention(w);
  return w;
}

Eigen::MatrixXd integrate_columns(const Eigen::MatrixXd& left, const Eigen::MatrixXd& right,
                                  std::vector<bool>& degenerate) {
  Eigen::MatrixXd out(left.rows(), left.cols());
  degenerate.assign(static_cast<std::size_t>(left.cols()), false);
  for (Index j = 0; j < left.cols(); ++j) {
    try {
      out.col(j) = integrate_singular_vectors(left.col(j), right.col(j));
    } catch (const DegenerateIntegration&) {
      Eigen::VectorXd u = left.col(j);
      linalg::apply_sign_convention(u);
      out.col(j) = u;
      degenerate[static_cast<std::size_t>(j)] = true;
    }
  }
  return out;
}

SpectrumEstimate ppca_fit(const DataMatrix& x, Index r, Rng& rng, FitOptions opts) {
  if (x.n() < 4) throw InvalidInput("ppca_fit needs n >= 4");
  check_rank_range(r, 1, x.p(), "ppca_fit");
  return ppca_fit(random_split(x, rng), r, opts);
}

SpectrumEstimate ppca_fit(const SplitPair& split, Index r, FitOptions opts) {
  const Index p = split.first.p();
  if (split.second.p() != p) throw InvalidInput("ppca_fit: halves differ in column count");
  check_rank_range(r, 1, p, "ppca_fit");

  const Eigen::MatrixXd x1 = centered_rows(split.first.rows(), opts.center);
  const Eigen::MatrixXd x2 = centered_rows(split.second.rows(), opts.center);

  if (std::max(x1.rows(), x2.rows()) >= p) {
    const auto root1 = linalg::psd_sqrt(SymmetricMatrix(x1.transpose() * x1 / double(x1.rows())));
    const auto root2 = linalg::psd_sqrt(SymmetricMatrix(x2.transpose() * x2 / double(x2.rows())));
    return ppca_from_svd(linalg::svd_desc(root1.matrix() * root2.matrix()), r);
  }

  // Both halves have fewer rows than columns: Ŝ_k^{1/2} = V_k D_k V_kᵀ with
  // V_k p×n_k, so Ŝ₁₂ = V₁ (D₁ V₁ᵀV₂ D₂) V₂ᵀ and only the small core needs
  // an SVD. The remaining singular values are exactly zero.
  const auto [v1, d1] = gram_sqrt_factor(x1);
  const auto [v2, d2] = gram_sqrt_factor(x2);
  const Eigen::MatrixXd core = d1.asDiagonal() * (v1.transpose() * v2) * d2.asDiagonal();
  const auto small = linalg::svd_desc(core);
  linalg::SvdResult svd{v1 * small.left, small.singular_values, v2 * small.right};
  linalg::apply_sign_convention(svd.left, &svd.right);
  if (r > svd.singular_values.size()) {
    throw InvalidInput("ppca_fit: rank " + std::to_string(r) + " exceeds the " +
                       std::to_string(svd.singular_values.size()) +
                       " components supported by the split halves");
  }
  return ppca_from_svd(std::move(svd), r);
}

SpectrumEstimate cdm_pca_fit(const DataMatrix& x, Index r, Rng& rng, FitOptions opts) {
  if (x.n() < 4) throw InvalidInput("cdm_pca_fit needs n >= 4");
  return cdm_pca_fit(random_split(x, rng), r, opts);
}

SpectrumEstimate cdm_pca_fit(const SplitPair& split, Index r, FitOptions opts) {
  const Index n1 = split.first.n();
  const Index n2 = split.second.n();
  const Index p = split.first.p();
  if (split.second.p() != p) throw InvalidInput("cdm_pca_fit: halves differ in column count");
  check_rank_range(r, 1, std::min({n1, n2, p}), "cdm_pca_fit");

  const Eigen::MatrixXd x1 = centered_rows(split.first.rows(), opts.center);
  const Eigen::MatrixXd x2 = centered_rows(split.second.rows(), opts.center);
  const Eigen::MatrixXd cross = x1 * x2.transpose() / std::sqrt(double(n1) * double(n2));
  auto svd = linalg::svd_desc(cross);

  const Eigen::VectorXd sigma = svd.singular_values.head(r);
  if (!(sigma(r - 1) > 1e-12 * sigma(0))) {
    throw RankDeficient("cdm_pca_fit: leading " + std::to_string(r) +
                        " singular values of the cross-data matrix are not all positive");
  }
  const Eigen::VectorXd inv_root = sigma.cwiseSqrt().cwiseInverse();

  SpectrumEstimate est;
  est.method = Method::CDMPCA;
  est.rank = r;
  est.eigenvalues = sigma;
  est.left = svd.left.leftCols(r);
  est.right = svd.right.leftCols(r);
  est.cdm_first = x1.transpose() * est.left * inv_root.asDiagonal() / std::sqrt(double(n1));
  est.cdm_second = x2.transpose() * est.right * inv_root.asDiagonal() / std::sqrt(double(n2));
  est.cdm_raw = (est.cdm_first + est.cdm_second) / 2.0;
  est.eigenvectors = est.cdm_raw.colwise().normalized();

  for (Index c = 0; c < r; ++c) {
    const Index i = linalg::dominant_index(est.eigenvectors.col(c));
    if (est.eigenvectors(i, c) < 0) {
      for (auto* m : {&est.eigenvectors, &est.cdm_raw, &est.cdm_first, &est.cdm_second, &est.left,
                      &est.right}) {
        m->col(c) *= -1.0;
      }
    }
  }
  return est;
}

SpectrumEstimate fit(Method method, const DataMatrix& x, Index r, Rng& rng, FitOptions opts) {
  switch (method) {
    case Method::PCA:
      return pca_fit(x, r, opts);
    case Method::PPCA:
      return ppca_fit(x, r, rng, opts);
    case Method::CDMPCA:
      return cdm_pca_fit(x, r, rng, opts);
  }
  throw InvalidInput("unknown method");
}

}  // namespace ppca::estimators
