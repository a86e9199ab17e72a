#include "ppca/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "ppca/csv.hpp"

namespace ppca::simulation {

namespace {

constexpr double kOutlierRadius = 50.0;
constexpr double kOutlierVariance = 50.0;
constexpr double kOutlierDof = 3.0;

// Factor A with A Aᵀ = ((ν − 2)/ν)·cov, so t rows built from it have
// covariance `cov`.
Eigen::MatrixXd t_factor(const Eigen::MatrixXd& cov_root, double nu) {
  if (std::isinf(nu)) return cov_root;
  return std::sqrt((nu - 2.0) / nu) * cov_root;
}

void check_nu(double nu) {
  if (!(nu > 2.0)) throw InvalidInput("degrees of freedom must exceed 2 (got " +
                                      csv::format_number(nu) + ")");
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / double(v.size() - 1));
}

}  // namespace

std::vector<Index> SimulationConfig::default_q_grid(Index r, Index p) {
  std::vector<Index> q;
  for (Index v = r; v <= std::min(r + 35, p); ++v) q.push_back(v);
  return q;
}

Index SimulationConfig::max_q() const {
  return q_grid.empty() ? r : *std::max_element(q_grid.begin(), q_grid.end());
}

void SimulationConfig::validate() const {
  if (n < 4) throw InvalidInput("n must be at least 4");
  if (p < 2) throw InvalidInput("p must be at least 2");
  if (r < 1 || r >= p) throw InvalidInput("r must satisfy 1 <= r < p");
  check_nu(nu);
  if (!(pi >= 0 && pi < 1)) throw InvalidInput("pi must lie in [0, 1)");
  if (q_grid.empty()) throw InvalidInput("q_grid must not be empty");
  for (Index q : q_grid) {
    if (q < r || q > p) throw InvalidInput("q_grid entries must lie in [r, p]");
  }
  if (max_q() > n - 1) throw InvalidInput("max(q_grid) must not exceed n - 1");
  if (replicates < 1) throw InvalidInput("replicates must be positive");
  if (methods.empty()) throw InvalidInput("at least one method is required");
  if (threads < 1) throw InvalidInput("threads must be positive");
}

SpectralModel gen_spiked_model(Index p, Index n, Index r, Rng& rng) {
  if (!(r >= 1 && r < p)) throw InvalidInput("gen_spiked_model needs 1 <= r < p");
  if (n < 1) throw InvalidInput("gen_spiked_model needs n >= 1");
  Eigen::VectorXd lambda(p);
  const double base = 1.0 + std::sqrt(double(p) / double(n));
  for (Index j = 1; j <= r; ++j) lambda(j - 1) = base + std::pow(double(p), 1.0 / double(1 + j));
  std::uniform_real_distribution<double> noise(0.5, 1.5);
  for (Index j = r; j < p; ++j) lambda(j) = noise(rng);
  std::sort(lambda.data(), lambda.data() + p, std::greater<>());

  const Eigen::MatrixXd z = standard_normal(p, p, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  Eigen::MatrixXd gamma = qr.householderQ();
  for (Index c = 0; c < p; ++c) {
    if (qr.matrixQR()(c, c) < 0) gamma.col(c) *= -1.0;
  }
  return SpectralModel(std::move(lambda), std::move(gamma), r);
}

DataMatrix sample_mvt(Index count, const Eigen::VectorXd& mean, const linalg::SymmetricMatrix& cov,
                      double nu, Rng& rng) {
  check_nu(nu);
  if (mean.size() != cov.dim()) throw InvalidInput("sample_mvt: mean/cov dimension mismatch");
  const auto root = linalg::psd_sqrt(cov);
  return DataMatrix(t_draws(count, mean, t_factor(root.matrix(), nu), nu, rng));
}

DataMatrix sample_mixture(const SimulationConfig& config, const SpectralModel& model, Rng& rng) {
  const Index p = model.p();
  const Index n = config.n;

  Eigen::VectorXd mu_out = standard_normal(1, p, rng).row(0).transpose();
  mu_out *= kOutlierRadius / mu_out.norm();

  std::bernoulli_distribution is_outlier(config.pi);
  std::vector<char> outlier(static_cast<std::size_t>(n));
  Index n_out = 0;
  for (auto& o : outlier) {
    o = is_outlier(rng) ? 1 : 0;
    n_out += o;
  }

  const Eigen::MatrixXd clean_root =
      model.eigenvectors() * model.eigenvalues().cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd clean =
      t_draws(n - n_out, Eigen::VectorXd::Zero(p), t_factor(clean_root, config.nu), config.nu, rng);
  const Eigen::MatrixXd out_root = std::sqrt(kOutlierVariance) * Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd outliers =
      t_draws(n_out, mu_out, t_factor(out_root, kOutlierDof), kOutlierDof, rng);

  Eigen::MatrixXd rows(n, p);
  Index ci = 0, oi = 0;
  for (Index i = 0; i < n; ++i) {
    rows.row(i) = outlier[static_cast<std::size_t>(i)] ? outliers.row(oi++) : clean.row(ci++);
  }
  return DataMatrix(std::move(rows));
}

std::vector<MethodTrial> run_trial(const SimulationConfig& config, const SpectralModel& model,
                                   Rng& rng) {
  const DataMatrix data = sample_mixture(config, model, rng);
  const Index q_max = config.max_q();
  const Eigen::MatrixXd target = model.leading_eigenvectors();

  std::optional<estimators::SplitPair> split;
  const bool needs_split = std::any_of(config.methods.begin(), config.methods.end(),
                                       [](Method m) { return m != Method::PCA; });
  if (needs_split) split = estimators::random_split(data, rng);

  std::vector<MethodTrial> out;
  for (Method m : config.methods) {
    MethodTrial t;
    t.method = m;
    try {
      estimators::SpectrumEstimate est;
      switch (m) {
        case Method::PCA:
          est = estimators::pca_fit(data, q_max);
          break;
        case Method::PPCA:
          est = estimators::ppca_fit(*split, q_max);
          break;
        case Method::CDMPCA:
          est = estimators::cdm_pca_fit(*split, q_max);
          break;
      }
      // Unpivoted QR keeps spans nested, so one basis serves every q.
      const Eigen::MatrixXd basis = est.leading_basis(q_max);
      for (Index q : config.q_grid) {
        t.xi.push_back(linalg::subspace_similarity(basis.leftCols(q), target));
      }
      t.ok = true;
    } catch (const Error& e) {
      t.ok = false;
      t.error = e.what();
      t.xi.clear();
    }
    out.push_back(std::move(t));
  }
  return out;
}

StudyResult run_study(const SimulationConfig& config) {
  config.validate();
  const auto reps = static_cast<std::size_t>(config.replicates);
  std::vector<std::vector<MethodTrial>> trials(reps);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reps; i = next++) {
      Rng rng = make_stream(config.seed, i);
      const SpectralModel model = gen_spiked_model(config.p, config.n, config.r, rng);
      trials[i] = run_trial(config, model, rng);
    }
  };
  const unsigned threads = std::min<unsigned>(config.threads, static_cast<unsigned>(reps));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  StudyResult study;
  study.config = config;
  for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
    const Method m = config.methods[mi];
    std::vector<std::vector<double>> per_q(config.q_grid.size());
    Index ok = 0;
    for (std::size_t i = 0; i < reps; ++i) {
      const MethodTrial& t = trials[i][mi];
      if (!t.ok) {
        study.failures.push_back({Index(i), m, t.error});
        continue;
      }
      ++ok;
      for (std::size_t qi = 0; qi < config.q_grid.size(); ++qi) {
        per_q[qi].push_back(t.xi[qi]);
        study.raw.push_back({Index(i), m, config.q_grid[qi], t.xi[qi]});
      }
    }
    if (double(ok) < 0.8 * double(config.replicates)) {
      throw StudyIncomplete(std::string(estimators::to_string(m)) + ": only " +
                            std::to_string(ok) + " of " + std::to_string(config.replicates) +
                            " replicates succeeded");
    }
    XiCurve curve;
    curve.method = m;
    curve.q = config.q_grid;
    curve.replicates = ok;
    for (const auto& values : per_q) {
      const double mu = mean_of(values);
      curve.mean.push_back(mu);
      curve.sd.push_back(sd_of(values, mu));
    }
    study.curves.push_back(std::move(curve));
  }
  std::stable_sort(study.raw.begin(), study.raw.end(), [](const RawRow& a, const RawRow& b) {
    return a.replicate < b.replicate;
  });
  return study;
}

void write_aggregate_csv(std::ostream& out, const StudyResult& study, bool header) {
  const auto& c = study.config;
  if (header) out << "method,q,mean_xi,sd_xi,replicates,n,p,r,nu,pi,seed\n";
  for (const auto& curve : study.curves) {
    for (std::size_t i = 0; i < curve.q.size(); ++i) {
      out << estimators::to_string(curve.method) << ',' << curve.q[i] << ','
          << csv::format_number(curve.mean[i]) << ',' << csv::format_number(curve.sd[i]) << ','
          << curve.replicates << ',' << c.n << ',' << c.p << ',' << c.r << ','
          << csv::format_number(c.nu) << ',' << csv::format_number(c.pi) << ',' << c.seed << '\n';
    }
  }
}

void write_raw_csv(std::ostream& out, const StudyResult& study, bool header) {
  if (header) out << "replicate,method,q,xi\n";
  for (const auto& row : study.raw) {
    out << row.replicate << ',' << estimators::to_string(row.method) << ',' << row.q << ','
        << csv::format_number(row.xi) << '\n';
  }
}

std::string xi_plot_svg(const StudyResult& study) {
  constexpr double width = 480, height = 360;
  constexpr double left = 60, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const auto& grid = study.config.q_grid;
  const double q_lo = double(*std::min_element(grid.begin(), grid.end()));
  const double q_hi = double(*std::max_element(grid.begin(), grid.end()));

  double y_lo = 1.0;
  for (const auto& c : study.curves) {
    for (double v : c.mean) y_lo = std::min(y_lo, v);
  }
  y_lo = std::max(0.0, std::floor(y_lo * 10.0) / 10.0);
  const double y_hi = 1.0;

  auto sx = [&](double q) {
    return left + (q_hi > q_lo ? (q - q_lo) / (q_hi - q_lo) : 0.5) * plot_w;
  };
  auto sy = [&](double v) {
    return top + (1.0 - (v - y_lo) / std::max(1e-12, y_hi - y_lo)) * plot_h;
  };
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">n=" << study.config.n
      << ", p=" << study.config.p << ", nu=" << csv::format_number(study.config.nu)
      << ", pi=" << csv::format_number(study.config.pi) << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / 5.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << num(sy(v) + 4) << "\" text-anchor=\"end\">"
        << num(std::round(v * 100) / 100) << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">q</text>\n";
  svg << "<text x=\"" << left - 6 << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"end\">"
      << num(q_lo) << "</text>\n";
  svg << "<text x=\"" << left + plot_w << "\" y=\"" << top + plot_h + 16
      << "\" text-anchor=\"end\">" << num(q_hi) << "</text>\n";

  const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c"};
  const char* dashes[] = {"", " stroke-dasharray=\"6,3\"", " stroke-dasharray=\"2,2\""};
  for (std::size_t ci = 0; ci < study.curves.size(); ++ci) {
    const auto& c = study.curves[ci];
    svg << "<polyline fill=\"none\" stroke=\"" << colours[ci % 3] << "\" stroke-width=\"2\""
        << dashes[ci % 3] << " points=\"";
    for (std::size_t i = 0; i < c.q.size(); ++i) {
      svg << (i ? " " : "") << num(sx(double(c.q[i]))) << ',' << num(sy(c.mean[i]));
    }
    svg << "\"/>\n";
    const double ly = top + 16 + 16 * double(ci);
    svg << "<line x1=\"" << left + plot_w - 90 << "\" y1=\"" << ly << "\" x2=\""
        << left + plot_w - 60 << "\" y2=\"" << ly << "\" stroke=\"" << colours[ci % 3]
        << "\" stroke-width=\"2\"" << dashes[ci % 3] << "/>\n";
    svg << "<text x=\"" << left + plot_w - 55 << "\" y=\"" << ly + 4 << "\">"
        << estimators::to_string(c.method) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

std::vector<AsymptoticMoments> monte_carlo_asymptotics(const std::vector<Index>& n_list,
                                                       const SpectralModel& model,
                                                       Index replicates, std::uint64_t seed) {
  if (replicates < 2) throw InvalidInput("monte_carlo_asymptotics needs at least 2 replicates");
  const Index p = model.p();
  const Index dim = p * (p + 1);
  const Eigen::MatrixXd theory = population::asymptotic_cov_gaussian(model);
  const Eigen::MatrixXd root = model.eigenvectors() * model.eigenvalues().cwiseSqrt().asDiagonal();

  Eigen::VectorXd beta(dim);
  beta.head(p) = model.eigenvalues();
  beta.tail(p * p) = model.eigenvectors().reshaped();

  auto centred_beta = [&](const estimators::SpectrumEstimate& est) {
    Eigen::MatrixXd g = est.eigenvectors.leftCols(p);
    for (Index j = 0; j < p; ++j) {
      if (g.col(j).dot(model.eigenvector(j)) < 0) g.col(j) *= -1.0;
    }
    Eigen::VectorXd b(dim);
    b.head(p) = est.eigenvalues.head(p);
    b.tail(p * p) = g.reshaped();
    return Eigen::VectorXd(b - beta);
  };

  std::vector<AsymptoticMoments> out;
  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    const Index n = n_list[ni];
    if (n < 4 || n <= p) throw InvalidInput("monte_carlo_asymptotics needs n > p and n >= 4");
    Eigen::MatrixXd pca(replicates, dim), ppca(replicates, dim);
    for (Index rep = 0; rep < replicates; ++rep) {
      Rng rng = make_stream(seed, std::uint64_t(ni) << 32 | std::uint64_t(rep));
      const DataMatrix x(t_draws(n, Eigen::VectorXd::Zero(p), root,
                                 std::numeric_limits<double>::infinity(), rng));
      const double scale = std::sqrt(double(n));
      pca.row(rep) = scale * centred_beta(estimators::pca_fit(x, p)).transpose();
      ppca.row(rep) = scale * centred_beta(estimators::ppca_fit(x, p, rng)).transpose();
    }
    AsymptoticMoments m;
    m.n = n;
    m.replicates = replicates;
    m.theory = theory;
    auto moments = [&](const Eigen::MatrixXd& z, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
      mean = z.colwise().mean().transpose();
      const Eigen::MatrixXd c = z.rowwise() - mean.transpose();
      cov = c.transpose() * c / double(replicates - 1);
    };
    moments(pca, m.mean_pca, m.cov_pca);
    moments(ppca, m.mean_ppca, m.cov_ppca);
    const auto eig_block = [p](const Eigen::MatrixXd& c) { return Eigen::MatrixXd(c.topLeftCorner(p, p)); };
    m.eig_pca_vs_theory = relative_frobenius(eig_block(m.cov_pca), eig_block(theory));
    m.eig_ppca_vs_theory = relative_frobenius(eig_block(m.cov_ppca), eig_block(theory));
    m.eig_ppca_vs_pca = relative_frobenius(eig_block(m.cov_ppca), eig_block(m.cov_pca));
    m.full_pca_vs_theory = relative_frobenius(m.cov_pca, theory);
    m.full_ppca_vs_theory = relative_frobenius(m.cov_ppca, theory);
    m.full_ppca_vs_pca = relative_frobenius(m.cov_ppca, m.cov_pca);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace ppca::simulation
