#include "ppca/population.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ppca/estimators.hpp"

namespace ppca::population {

namespace {

void check_pair(const SpectralModel& model, Index j, Index k) {
  if (!(j >= 0 && j < model.rank() && k >= model.rank() && k < model.p())) {
    throw InvalidInput("signal/noise pair (" + std::to_string(j) + ", " + std::to_string(k) +
                       ") must satisfy j < r <= k < p with r=" + std::to_string(model.rank()));
  }
}

void check_x(const SpectralModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.p()) throw InvalidInput("outlier length does not match model dimension");
  if (!x.allFinite()) throw InvalidInput("outlier has non-finite entries");
}

double raw_rho(double a, double b) { return a / (a + b); }

double eta(double rho_value) { return rho_value * (1.0 - rho_value); }

// Minimum-cost assignment on a square matrix (Hungarian method, O(n³)).
std::vector<Index> assign_min_cost(const Eigen::MatrixXd& cost) {
  const Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = match[j0];
      double step = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < step) {
          step = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += step;
          v[j] -= step;
        } else {
          minv[j] -= step;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> row_to_col(n);
  for (Index j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

Eigen::VectorXd reorder(const Eigen::VectorXd& values, const std::vector<Index>& match) {
  Eigen::VectorXd out(static_cast<Index>(match.size()));
  for (std::size_t j = 0; j < match.size(); ++j) out(static_cast<Index>(j)) = values(match[j]);
  return out;
}

PpcaFunctional perturbed_ppca(const PerturbationScenario& scn) {
  const auto sigma = covariance_of(scn.model);
  return ppca_functional(perturbed_covariance(sigma, scn.x, 2.0 * scn.eps), sigma);
}

}  // namespace

SpectralModel::SpectralModel(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors,
                             Index rank)
    : SpectralModel(std::move(eigenvalues), std::move(eigenvectors), rank, true) {}

SpectralModel::SpectralModel(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors, Index rank,
                             bool check_gaps)
    : eigenvalues_(std::move(eigenvalues)), eigenvectors_(std::move(eigenvectors)), rank_(rank) {
  const Index p = eigenvalues_.size();
  if (p < 2) throw InvalidInput("spectral model needs p >= 2");
  if (!eigenvalues_.allFinite() || !eigenvectors_.allFinite()) {
    throw InvalidInput("spectral model has non-finite entries");
  }
  if (eigenvectors_.rows() != p || eigenvectors_.cols() != p) {
    throw InvalidInput("eigenvector matrix must be p×p");
  }
  if (rank_ < 1 || rank_ >= p) throw InvalidInput("target rank must satisfy 1 <= r < p");
  if (eigenvalues_(p - 1) <= 0) throw InvalidInput("eigenvalues must be strictly positive");
  for (Index j = 0; j + 1 < p; ++j) {
    if (eigenvalues_(j) < eigenvalues_(j + 1)) throw InvalidInput("eigenvalues must be descending");
  }
  if (check_gaps && !has_distinct_eigenvalues()) {
    throw TieError("eigenvalues must be distinct (gap > 1e-12·λ₁)");
  }
  if (linalg::orthonormality_error(eigenvectors_) > 1e-10) {
    throw InvalidInput("eigenvectors must be orthonormal");
  }
}

SpectralModel SpectralModel::diagonal(Eigen::VectorXd eigenvalues, Index rank) {
  const Index p = eigenvalues.size();
  return SpectralModel(std::move(eigenvalues), Eigen::MatrixXd::Identity(p, p), rank);
}

SpectralModel SpectralModel::allowing_ties(Eigen::VectorXd eigenvalues,
                                           Eigen::MatrixXd eigenvectors, Index rank) {
  return SpectralModel(std::move(eigenvalues), std::move(eigenvectors), rank, false);
}

bool SpectralModel::has_distinct_eigenvalues() const {
  const double tol = 1e-12 * eigenvalues_(0);
  for (Index j = 0; j + 1 < p(); ++j) {
    if (!(eigenvalues_(j) - eigenvalues_(j + 1) > tol)) return false;
  }
  return true;
}

void SpectralModel::require_distinct() const {
  if (!has_distinct_eigenvalues()) {
    throw TieError("model has tied eigenvalues; the perturbation expansion is undefined");
  }
}

PerturbationScenario::PerturbationScenario(SpectralModel model_in, Eigen::VectorXd x_in,
                                           double eps_in)
    : model(std::move(model_in)), x(std::move(x_in)), eps(eps_in) {
  check_x(model, x);
  if (x.squaredNorm() == 0) throw InvalidInput("outlier must be nonzero");
  if (!(eps > 0 && eps < 0.25)) throw InvalidInput("contamination fraction must lie in (0, 0.25)");
}

TheoryReport TheoryReport::make(double numeric, double theory, double eps) {
  TheoryReport r;
  r.numeric = numeric;
  r.theory = theory;
  r.abs_gap = std::abs(numeric - theory);
  r.rel_gap = theory != 0 ? r.abs_gap / std::abs(theory)
                          : (r.abs_gap == 0 ? 0.0 : std::numeric_limits<double>::infinity());
  r.eps = eps;
  return r;
}

SymmetricMatrix covariance_of(const SpectralModel& model) {
  const auto& g = model.eigenvectors();
  return SymmetricMatrix(g * model.eigenvalues().asDiagonal() * g.transpose());
}

SymmetricMatrix perturbed_second_moment(const SymmetricMatrix& sigma, const Eigen::VectorXd& x,
                                        double eps) {
  if (x.size() != sigma.dim()) throw InvalidInput("outlier length does not match dimension");
  if (!(eps >= 0 && eps < 1)) throw InvalidInput("contamination fraction must lie in [0, 1)");
  return SymmetricMatrix((1.0 - eps) * sigma.matrix() + eps * x * x.transpose());
}

SymmetricMatrix perturbed_covariance(const SymmetricMatrix& sigma, const Eigen::VectorXd& x,
                                     double eps) {
  // The mixture mean ε x contributes −ε² x xᵀ, which is second order and
  // therefore visible in the ordering measures.
  const auto moment = perturbed_second_moment(sigma, x, eps);
  return SymmetricMatrix(moment.matrix() - eps * eps * x * x.transpose());
}

SpectralDecomposition pca_functional(const SymmetricMatrix& sigma,
                                     const Eigen::MatrixXd* reference) {
  auto eig = linalg::sym_eig(sigma);
  if (reference != nullptr) {
    const Eigen::MatrixXd corr = reference->transpose() * eig.eigenvectors;
    for (Index c = 0; c < corr.cols(); ++c) {
      Index best = 0;
      corr.col(c).cwiseAbs().maxCoeff(&best);
      if (corr(best, c) < 0) eig.eigenvectors.col(c) *= -1.0;
    }
  }
  return eig;
}

PpcaFunctional ppca_functional(const SymmetricMatrix& sigma1, const SymmetricMatrix& sigma2) {
  if (sigma1.dim() != sigma2.dim()) throw InvalidInput("ppca_functional: dimension mismatch");
  const auto root1 = linalg::psd_sqrt(sigma1);
  const auto root2 = linalg::psd_sqrt(sigma2);
  auto svd = linalg::svd_desc(root1.matrix() * root2.matrix());
  PpcaFunctional out;
  out.integrated = estimators::integrate_columns(svd.left, svd.right, out.degenerate);
  out.left = std::move(svd.left);
  out.singular_values = std::move(svd.singular_values);
  out.right = std::move(svd.right);
  return out;
}

std::vector<Index> match_indices(const Eigen::MatrixXd& reference,
                                 const Eigen::MatrixXd& vectors) {
  if (reference.rows() != vectors.rows() || reference.cols() != vectors.cols()) {
    throw InvalidInput("match_indices: shape mismatch");
  }
  const Index n = reference.cols();
  const Eigen::MatrixXd corr = (reference.transpose() * vectors).cwiseAbs();

  std::vector<Index> match(static_cast<std::size_t>(n));
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  bool bijective = true;
  for (Index j = 0; j < n; ++j) {
    Index best = 0;
    corr.row(j).maxCoeff(&best);
    match[static_cast<std::size_t>(j)] = best;
    if (taken[static_cast<std::size_t>(best)]) bijective = false;
    taken[static_cast<std::size_t>(best)] = 1;
  }
  if (!bijective) match = assign_min_cost(-corr);

  const double floor = 1.0 / std::sqrt(2.0);
  for (Index j = 0; j < n; ++j) {
    if (corr(j, match[static_cast<std::size_t>(j)]) < floor) {
      throw IndexMatchFailure("direction " + std::to_string(j) +
                              " has no unambiguous perturbed counterpart");
    }
  }
  return match;
}

double rho(double lambda_j, double lambda_k) {
  if (!(lambda_j > lambda_k && lambda_k > 0)) {
    throw InvalidInput("rho requires lambda_j > lambda_k > 0");
  }
  return raw_rho(lambda_j, lambda_k);
}

Eigen::VectorXd matched_values_pca(const PerturbationScenario& scn) {
  scn.model.require_distinct();
  const auto perturbed =
      pca_functional(perturbed_covariance(covariance_of(scn.model), scn.x, scn.eps));
  return reorder(perturbed.eigenvalues,
                 match_indices(scn.model.eigenvectors(), perturbed.eigenvectors));
}

Eigen::VectorXd matched_values_ppca(const PerturbationScenario& scn) {
  scn.model.require_distinct();
  const auto f = perturbed_ppca(scn);
  return reorder(f.singular_values, match_indices(scn.model.eigenvectors(), f.integrated));
}

double perturbed_rho_pca(const PerturbationScenario& scn, Index j, Index k) {
  check_pair(scn.model, j, k);
  const auto v = matched_values_pca(scn);
  return raw_rho(v(j), v(k));
}

double perturbed_rho_ppca(const PerturbationScenario& scn, Index j, Index k) {
  check_pair(scn.model, j, k);
  const auto v = matched_values_ppca(scn);
  return raw_rho(v(j), v(k));
}

double tau_jk_numeric(const PerturbationScenario& scn, Index j, Index k) {
  check_pair(scn.model, j, k);
  const auto a = matched_values_ppca(scn);
  const auto b = matched_values_pca(scn);
  const auto& lambda = scn.model.eigenvalues();
  return (raw_rho(a(j), a(k)) - raw_rho(b(j), b(k))) / eta(raw_rho(lambda(j), lambda(k)));
}

double tau_numeric(const PerturbationScenario& scn) {
  const auto a = matched_values_ppca(scn);
  const auto b = matched_values_pca(scn);
  const auto& lambda = scn.model.eigenvalues();
  const Index r = scn.model.rank();
  const Index p = scn.model.p();
  double total = 0;
  for (Index j = 0; j < r; ++j) {
    for (Index k = r; k < p; ++k) {
      total += (raw_rho(a(j), a(k)) - raw_rho(b(j), b(k))) / eta(raw_rho(lambda(j), lambda(k)));
    }
  }
  return total / double(r * (p - r));
}

double eigvec_inner_pca(const PerturbationScenario& scn, Index j) {
  scn.model.require_distinct();
  const auto perturbed =
      pca_functional(perturbed_covariance(covariance_of(scn.model), scn.x, scn.eps));
  const auto match = match_indices(scn.model.eigenvectors(), perturbed.eigenvectors);
  return std::abs(
      scn.model.eigenvector(j).dot(perturbed.eigenvectors.col(match[static_cast<std::size_t>(j)])));
}

double eigvec_inner_ppca(const PerturbationScenario& scn, Index j) {
  scn.model.require_distinct();
  const auto f = perturbed_ppca(scn);
  const auto match = match_indices(scn.model.eigenvectors(), f.integrated);
  return std::abs(
      scn.model.eigenvector(j).dot(f.integrated.col(match[static_cast<std::size_t>(j)])));
}

Eigen::VectorXd d_vector(const SpectralModel& model, const Eigen::VectorXd& x) {
  check_x(model, x);
  const Eigen::VectorXd proj = model.eigenvectors().transpose() * x;
  return proj.cwiseAbs2().cwiseQuotient(model.eigenvalues());
}

double mahalanobis_sq(const SpectralModel& model, const Eigen::VectorXd& x) {
  return d_vector(model, x).sum();
}

double rho_first_order_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps,
                              Index j, Index k) {
  check_pair(model, j, k);
  const auto d = d_vector(model, x);
  const double base = raw_rho(model.eigenvalue(j), model.eigenvalue(k));
  return base + eps * eta(base) * (d(j) - d(k));
}

double tau_jk_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps, Index j,
                     Index k) {
  check_pair(model, j, k);
  const auto d = d_vector(model, x);
  const auto& lambda = model.eigenvalues();
  double sum = 0;
  for (Index l = 0; l < model.p(); ++l) {
    sum += lambda(l) * d(l) * (d(k) / (lambda(l) + lambda(k)) - d(j) / (lambda(l) + lambda(j)));
  }
  return eps * eps * sum;
}

double delta(const SpectralModel& model, const Eigen::VectorXd& x) {
  const auto d = d_vector(model, x);
  const Index r = model.rank();
  const Index p = model.p();
  return d.tail(p - r).sum() / double(p - r) - d.head(r).sum() / double(r);
}

double delta_prime(const SpectralModel& model, const Eigen::VectorXd& x) {
  const auto d = d_vector(model, x);
  const double m = d.sum();
  if (!(m > 0)) throw InvalidInput("delta_prime requires a nonzero outlier");
  const auto& lambda = model.eigenvalues();
  const Index r = model.rank();
  const Index p = model.p();
  double sum = 0;
  for (Index j = 0; j < r; ++j) {
    for (Index k = r; k < p; ++k) {
      sum += (lambda(j) - lambda(k)) / (lambda(j) + lambda(k)) * d(j) * d(k);
    }
  }
  return double(p) * sum / (double(r * (p - r)) * m);
}

double tau_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps) {
  const double m = mahalanobis_sq(model, x);
  return 0.5 * eps * eps * m * (delta(model, x) + delta_prime(model, x));
}

double tau_perpendicular_theory(const SpectralModel& model, const Eigen::VectorXd& x,
                                double eps) {
  check_x(model, x);
  const Eigen::VectorXd signal = model.leading_eigenvectors().transpose() * x;
  if (signal.norm() > 1e-10 * x.norm()) {
    throw InvalidInput("outlier is not perpendicular to the leading eigen-subspace");
  }
  const double m = mahalanobis_sq(model, x);
  return eps * eps * m * m / (2.0 * double(model.p() - model.rank()));
}

SymmetricMatrix m_pseudoinverse(const SpectralModel& model, Index j) {
  model.require_distinct();
  if (j < 0 || j >= model.p()) throw InvalidInput("eigen-index out of range");
  const auto& lambda = model.eigenvalues();
  Eigen::VectorXd m(model.p());
  for (Index l = 0; l < model.p(); ++l) m(l) = l == j ? 0.0 : 1.0 / (lambda(j) - lambda(l));
  const auto& g = model.eigenvectors();
  return SymmetricMatrix(g * m.asDiagonal() * g.transpose());
}

double eigvec_perturbation_theory(const SpectralModel& model, const Eigen::VectorXd& x, double eps,
                                  Index j) {
  check_x(model, x);
  const Eigen::VectorXd mx = m_pseudoinverse(model, j).matrix() * x;
  const double along = model.eigenvector(j).dot(x);
  return 1.0 - 0.5 * eps * eps * along * along * mx.squaredNorm();
}

FlipThresholds flip_thresholds(double a, double eps) {
  if (!(a > 1)) throw InvalidInput("signal size a must exceed 1");
  if (!(eps > 0 && eps < 0.5)) throw InvalidInput("contamination fraction must lie in (0, 0.5)");
  FlipThresholds t{};
  t.eta_pca = (1.0 - eps) / eps * (a - 1.0);
  t.eta_cdm = (1.0 - 2.0 * eps) / (2.0 * eps) * (a * a - 1.0);
  t.product_more_robust = a > 1.0 / (1.0 - 2.0 * eps);
  return t;
}

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Eigen::MatrixXd commutation_matrix(Index p) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(p * p, p * p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) k(j + i * p, i + j * p) = 1.0;
  }
  return k;
}

Eigen::MatrixXd asymptotic_cov_gaussian(const SpectralModel& model) {
  model.require_distinct();
  const Index p = model.p();
  const Eigen::MatrixXd sigma = covariance_of(model).matrix();
  const Eigen::MatrixXd kron = kronecker(sigma, sigma);
  const Eigen::MatrixXd w = kron + commutation_matrix(p) * kron;

  Eigen::MatrixXd h(p * p, p * (p + 1));
  for (Index j = 0; j < p; ++j) {
    const Eigen::MatrixXd g = model.eigenvector(j);
    h.col(j) = kronecker(g, g);
    h.block(0, p + j * p, p * p, p) = kronecker(g, m_pseudoinverse(model, j).matrix());
  }
  const Eigen::MatrixXd out = h.transpose() * w * h;
  return (out + out.transpose()) / 2.0;
}

DeltaMonteCarlo monte_carlo_delta(const SpectralModel& model, const DeltaGenerator& generator,
                                  std::int64_t reps, std::uint64_t seed) {
  if (reps < 1000) throw InvalidInput("monte_carlo_delta needs at least 1000 draws");
  if (!(generator.a > 0)) throw InvalidInput("generator scale must be positive");
  const Index p = model.p();

  Eigen::MatrixXd factor;
  double nu = std::numeric_limits<double>::infinity();
  if (generator.kind == DeltaGenerator::Kind::Isotropic) {
    factor = std::sqrt(generator.a) * Eigen::MatrixXd::Identity(p, p);
  } else {
    if (!(generator.nu > 2)) throw InvalidInput("elliptical generator needs nu > 2");
    nu = generator.nu;
    const double scale = generator.a * (nu - 2.0) / nu;
    factor = model.eigenvectors() * (scale * model.eigenvalues()).cwiseSqrt().asDiagonal();
  }

  Rng rng = make_stream(seed, 0);
  const Eigen::MatrixXd draws = t_draws(reps, Eigen::VectorXd::Zero(p), factor, nu, rng);
  double sum = 0, sum_sq = 0;
  std::int64_t positive = 0;
  for (Index i = 0; i < reps; ++i) {
    const double value = delta(model, draws.row(i).transpose());
    sum += value;
    sum_sq += value * value;
    if (value > 0) ++positive;
  }
  DeltaMonteCarlo out;
  out.reps = reps;
  const double n = double(reps);
  out.mean = sum / n;
  out.se_mean = std::sqrt(std::max(0.0, (sum_sq - n * out.mean * out.mean) / (n - 1.0)) / n);
  out.fraction_positive = double(positive) / n;
  out.se_fraction = std::sqrt(out.fraction_positive * (1.0 - out.fraction_positive) / n);
  return out;
}

}  // namespace ppca::population
