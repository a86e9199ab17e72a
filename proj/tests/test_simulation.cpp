#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ppca/simulation.hpp"
#include "support.hpp"

using namespace ppca;
using namespace ppca::simulation;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SimulationConfig small_config() {
  SimulationConfig c;
  c.n = 60;
  c.p = 8;
  c.r = 2;
  c.nu = 5;
  c.pi = 0.05;
  c.q_grid = {2, 3, 4, 5, 6, 7, 8};
  c.replicates = 12;
  c.seed = 77;
  c.methods = {Method::PCA, Method::PPCA, Method::CDMPCA};
  return c;
}

std::string aggregate_text(const StudyResult& s) {
  std::ostringstream out;
  write_aggregate_csv(out, s);
  write_raw_csv(out, s);
  return out.str();
}

}  // namespace

TEST_CASE("spiked model spectrum") {
  Rng rng(1);
  const auto m = gen_spiked_model(250, 500, 5, rng);
  CHECK(m.eigenvalue(0) == doctest::Approx(1 + std::sqrt(0.5) + std::sqrt(250.0)).epsilon(1e-12));
  CHECK(m.eigenvalue(0) == doctest::Approx(17.52).epsilon(1e-3));
  for (Index j = 0; j + 1 < 5; ++j) CHECK(m.eigenvalue(j) > m.eigenvalue(j + 1));
  for (Index j = 5; j < 250; ++j) {
    CHECK(m.eigenvalue(j) >= 0.5);
    CHECK(m.eigenvalue(j) <= 1.5);
  }
  CHECK(linalg::orthonormality_error(m.eigenvectors()) < 1e-10);
  CHECK(m.rank() == 5);
}

TEST_CASE("multivariate t moments") {
  Rng rng(2);
  MatrixXd cov(3, 3);
  cov << 2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 0.5;
  const VectorXd mean = Eigen::Vector3d(1, -2, 0.5);
  const auto x = sample_mvt(100000, mean, linalg::SymmetricMatrix(cov), 5.0, rng);
  const auto s = estimators::sample_covariance(x, true);
  CHECK(test::rel_fro(s.matrix(), cov) < 0.05);
  const VectorXd m = x.rows().colwise().mean();
  for (Index a = 0; a < 3; ++a) CHECK(std::abs(m(a) - mean(a)) < 4 * std::sqrt(cov(a, a) / 1e5));

  // Near-Gaussian limit: marginal kurtosis close to 3.
  const auto g = sample_mvt(100000, VectorXd::Zero(3), linalg::SymmetricMatrix(cov), 1e6, rng);
  for (Index a = 0; a < 3; ++a) {
    const VectorXd c = g.rows().col(a).array() - g.rows().col(a).mean();
    const double k = c.array().pow(4).mean() / std::pow(c.array().square().mean(), 2);
    CHECK(std::abs(k - 3.0) < 4 * std::sqrt(24.0 / 1e5));
  }
  CHECK_THROWS_AS(sample_mvt(10, mean, linalg::SymmetricMatrix(cov), 2.0, rng), InvalidInput);
}

TEST_CASE("config validation") {
  auto c = small_config();
  CHECK_NOTHROW(c.validate());
  c.nu = 2.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = small_config();
  c.q_grid = {1, 2};
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = small_config();
  c.q_grid = {2, 9};
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = small_config();
  c.pi = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = small_config();
  c.nu = std::numeric_limits<double>::infinity();
  CHECK_NOTHROW(c.validate());
  CHECK(SimulationConfig::default_q_grid(5, 100).back() == 40);
  CHECK(SimulationConfig::default_q_grid(5, 20).back() == 20);
}

TEST_CASE("per-replicate xi is monotone in q and one at q = p") {
  const auto c = small_config();
  for (Index rep = 0; rep < 5; ++rep) {
    Rng rng = make_stream(c.seed, std::uint64_t(rep));
    const auto model = gen_spiked_model(c.p, c.n, c.r, rng);
    const auto trials = run_trial(c, model, rng);
    CHECK(trials.size() == 3);
    for (const auto& t : trials) {
      if (t.method == Method::CDMPCA && !t.ok) continue;
      REQUIRE(t.ok);
      for (std::size_t i = 0; i + 1 < t.xi.size(); ++i) CHECK(t.xi[i + 1] >= t.xi[i] - 1e-10);
      CHECK(t.xi.back() == doctest::Approx(1.0).epsilon(1e-8));
      for (double v : t.xi) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-10);
      }
    }
  }
}

TEST_CASE("study output is deterministic and independent of thread count") {
  auto c = small_config();
  c.methods = {Method::PCA, Method::PPCA};
  const auto a = run_study(c);
  c.threads = 3;
  const auto b = run_study(c);
  CHECK(aggregate_text(a) == aggregate_text(b));
  CHECK(a.raw.size() == std::size_t(12 * 2 * 7));
  CHECK(a.failures.empty());
}

TEST_CASE("csv schema") {
  auto c = small_config();
  c.replicates = 2;
  c.methods = {Method::PCA};
  const auto s = run_study(c);
  std::ostringstream agg, raw;
  write_aggregate_csv(agg, s);
  write_raw_csv(raw, s);
  CHECK(agg.str().rfind("method,q,mean_xi,sd_xi,replicates,n,p,r,nu,pi,seed\n", 0) == 0);
  CHECK(raw.str().rfind("replicate,method,q,xi\n", 0) == 0);
  std::istringstream lines(agg.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 1 + 7);
  CHECK(xi_plot_svg(s).find("<svg") != std::string::npos);
}

TEST_CASE("too many failed replicates abort the study") {
  SimulationConfig c;
  c.n = 20;
  c.p = 30;
  c.r = 2;
  c.q_grid = {2, 15};
  c.replicates = 5;
  c.methods = {Method::CDMPCA};
  CHECK_THROWS_AS(run_study(c), StudyIncomplete);
}

TEST_CASE("eigenvector block of the asymptotic covariance matches Monte Carlo") {
  const auto model = population::SpectralModel::diagonal(Eigen::Vector3d(4, 2, 1), 1);
  const Index reps = 600;
  const auto moments = monte_carlo_asymptotics({1000}, model, reps, 5);
  REQUIRE(moments.size() == 1);
  const auto& mo = moments[0];
  const Index dim = 3 * 4;
  CHECK(mo.theory.rows() == dim);
  for (Index i = 3; i < dim; ++i) {
    const double th = mo.theory(i, i);
    if (th < 0.1) continue;
    const double se = th * std::sqrt(2.0 / double(reps - 1));
    CHECK(std::abs(mo.cov_pca(i, i) - th) < 3 * se);
  }
  for (Index j = 0; j < 3; ++j) {
    const double th = mo.theory(j, j);
    CHECK(th == doctest::Approx(2 * model.eigenvalue(j) * model.eigenvalue(j)));
  }
}
