#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "ppca/population.hpp"
#include "support.hpp"

using namespace ppca;
using namespace ppca::population;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SpectralModel diag_model(std::initializer_list<double> values, Index r) {
  VectorXd l(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) l(i++) = v;
  return SpectralModel::diagonal(l, r);
}

// Well-separated descending spectrum with a random eigenbasis.
SpectralModel random_model(Index p, Index r, Rng& rng) {
  std::uniform_real_distribution<double> ratio(0.45, 0.8);
  VectorXd l(p);
  l(0) = std::uniform_real_distribution<double>(4.0, 10.0)(rng);
  for (Index j = 1; j < p; ++j) l(j) = l(j - 1) * ratio(rng);
  return SpectralModel(l, test::random_orthogonal(p, rng), r);
}

VectorXd draw_x(const SpectralModel& m, Rng& rng) {
  return m.eigenvectors() * m.eigenvalues().cwiseSqrt().asDiagonal() *
         test::gaussian(m.p(), 1, rng).col(0);
}

// Leading eigenvector of a general (possibly nonsymmetric) real matrix.
VectorXd leading_eigvec(const MatrixXd& a) {
  Eigen::EigenSolver<MatrixXd> es(a);
  Index best = 0;
  for (Index i = 1; i < a.rows(); ++i)
    if (es.eigenvalues()(i).real() > es.eigenvalues()(best).real()) best = i;
  return es.eigenvectors().col(best).real().normalized();
}

}  // namespace

TEST_CASE("spectral model validation") {
  CHECK_THROWS_AS(diag_model({1.0, 2.0}, 1), InvalidInput);
  CHECK_THROWS_AS(diag_model({2.0, 1.0}, 2), InvalidInput);
  CHECK_THROWS_AS(diag_model({2.0, 1.0}, 0), InvalidInput);
  CHECK_THROWS_AS(diag_model({2.0, 0.0}, 1), InvalidInput);
  CHECK_THROWS_AS(diag_model({2.0, 2.0}, 1), TieError);
  MatrixXd skew = MatrixXd::Identity(2, 2);
  skew(0, 1) = 0.1;
  CHECK_THROWS_AS(SpectralModel(Eigen::Vector2d(2, 1), skew, 1), InvalidInput);

  const auto tied = SpectralModel::allowing_ties(Eigen::Vector3d(1, 1, 1), MatrixXd::Identity(3, 3), 1);
  CHECK_FALSE(tied.has_distinct_eigenvalues());
  CHECK_THROWS_AS(tied.require_distinct(), TieError);
  CHECK_THROWS_AS(m_pseudoinverse(tied, 0), TieError);
}

TEST_CASE("covariance_of") {
  const auto c = covariance_of(diag_model({2.0, 1.0}, 1));
  CHECK((c.matrix() - Eigen::Vector2d(2, 1).asDiagonal().toDenseMatrix()).norm() == 0.0);

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(5, 2, rng);
    const auto s = covariance_of(m);
    CHECK(s.matrix().trace() == doctest::Approx(m.eigenvalues().sum()).epsilon(1e-12));
    const auto eig = linalg::sym_eig(s);
    CHECK((eig.eigenvalues - m.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
    for (Index j = 0; j < 5; ++j)
      CHECK(std::abs(std::abs(eig.eigenvectors.col(j).dot(m.eigenvector(j))) - 1.0) < 1e-10);
  }
}

TEST_CASE("perturbed second moment") {
  const auto id = SymmetricMatrix::identity(2);
  CHECK(perturbed_second_moment(id, Eigen::Vector2d(1, 1), 0.0).matrix() == id.matrix());
  const double eta = 7.0;
  const auto s = perturbed_second_moment(id, Eigen::Vector2d(0, std::sqrt(eta)), 0.1);
  CHECK(s(0, 0) == doctest::Approx(0.9));
  CHECK(s(1, 1) == doctest::Approx(0.9 + 0.1 * eta));
  CHECK(s(0, 1) == 0.0);
  CHECK_THROWS_AS(perturbed_second_moment(id, Eigen::Vector2d(1, 0), 1.0), InvalidInput);
}

TEST_CASE("perturbed covariance is the covariance of the point-mass mixture") {
  Rng rng(31);
  const auto m = random_model(4, 2, rng);
  const auto sigma = covariance_of(m);
  const VectorXd x = draw_x(m, rng);
  const double eps = 0.2;
  // Oracle: mixture second moment minus the outer product of the mixture mean.
  const Eigen::MatrixXd mean_outer = (eps * x) * (eps * x).transpose();
  const Eigen::MatrixXd expect = (1 - eps) * sigma.matrix() + eps * x * x.transpose() - mean_outer;
  CHECK((perturbed_covariance(sigma, x, eps).matrix() - expect).norm() < 1e-12);
}

TEST_CASE("ppca functional collapse, symmetry and product eigenvalues") {
  Rng rng(2);
  const auto m = random_model(5, 2, rng);
  const auto sigma = covariance_of(m);
  const auto same = ppca_functional(sigma, sigma);
  CHECK((same.singular_values - m.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
  for (Index j = 0; j < 5; ++j)
    CHECK(std::abs(std::abs(same.integrated.col(j).dot(m.eigenvector(j))) - 1.0) < 1e-10);

  const auto s1 = perturbed_second_moment(sigma, draw_x(m, rng), 0.1);
  const auto a = ppca_functional(s1, sigma);
  const auto b = ppca_functional(sigma, s1);
  CHECK((a.singular_values - b.singular_values).cwiseAbs().maxCoeff() < 1e-10);

  // Two-direction model: Σ = aξξᵀ + (I − ξξᵀ), Σ₁ = (1−2ε)Σ + 2εηννᵀ.
  const Index p = 4;
  const VectorXd xi = VectorXd::Unit(p, 0);
  const VectorXd nu = VectorXd::Unit(p, 1);
  const double amp = 2.0, eps = 0.05, eta = 12.0;
  const SymmetricMatrix sig(amp * xi * xi.transpose() + MatrixXd::Identity(p, p) - xi * xi.transpose());
  const SymmetricMatrix sig1((1 - 2 * eps) * sig.matrix() + 2 * eps * eta * nu * nu.transpose());
  const auto f = ppca_functional(sig1, sig);
  Eigen::EigenSolver<MatrixXd> es(sig1.matrix() * sig.matrix(), false);
  VectorXd ev = es.eigenvalues().real();
  std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
  CHECK((f.singular_values.cwiseAbs2() - ev).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("rho") {
  CHECK(rho(3, 1) == doctest::Approx(0.75));
  CHECK(rho(4.5, 0.5) == doctest::Approx(0.9));
  CHECK(rho(1.0, 1.0 - 1e-9) == doctest::Approx(0.5));
  CHECK_THROWS_AS(rho(1, 2), InvalidInput);
  CHECK_THROWS_AS(rho(1, 0), InvalidInput);
}

TEST_CASE("d vector identities") {
  const auto m = diag_model({4.0, 2.0, 1.0}, 1);
  const VectorXd d = d_vector(m, VectorXd::Unit(3, 0) * 2.0);
  CHECK((d - VectorXd::Unit(3, 0)).norm() < 1e-15);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rm = random_model(6, 2, rng);
    const VectorXd x = draw_x(rm, rng);
    CHECK(d_vector(rm, x).sum() == doctest::Approx(mahalanobis_sq(rm, x)).epsilon(1e-12));
    const MatrixXd sinv = rm.eigenvectors() * rm.eigenvalues().cwiseInverse().asDiagonal() *
                          rm.eigenvectors().transpose();
    CHECK(mahalanobis_sq(rm, x) == doctest::Approx(x.dot(sinv * x)).epsilon(1e-10));
  }

  const VectorXd perp(Eigen::Vector3d(0, 1, 1));
  CHECK(d_vector(m, perp)(0) == 0.0);
}

TEST_CASE("theory values at the outlier-free and perpendicular cases") {
  const auto m = diag_model({2.0, 1.0, 0.5}, 1);
  CHECK(tau_jk_theory(m, VectorXd::Zero(3), 1e-3, 0, 1) == 0.0);

  const VectorXd x(Eigen::Vector3d(0, 1, 1));
  CHECK(mahalanobis_sq(m, x) == doctest::Approx(3.0));
  CHECK(tau_perpendicular_theory(m, x, 1e-3) == doctest::Approx(2.25e-6).epsilon(1e-12));
  // Sum of pairwise terms over the r(p−r) pairs, averaged, equals the closed form.
  const double avg = (tau_jk_theory(m, x, 1e-3, 0, 1) + tau_jk_theory(m, x, 1e-3, 0, 2)) / 2.0;
  CHECK(avg == doctest::Approx(2.25e-6).epsilon(1e-10));
  CHECK(tau_theory(m, x, 1e-3) == doctest::Approx(2.25e-6).epsilon(1e-10));
  CHECK(delta(m, x) == doctest::Approx(1.5));
  CHECK(delta_prime(m, x) == 0.0);
  CHECK(tau_perpendicular_theory(m, 3.0 * x, 1e-3) ==
        doctest::Approx(81.0 * 2.25e-6).epsilon(1e-12));

  CHECK_THROWS_AS(tau_perpendicular_theory(m, Eigen::Vector3d(1, 1, 1), 1e-3), InvalidInput);
  CHECK_THROWS_AS(delta_prime(m, VectorXd::Zero(3)), InvalidInput);
  CHECK(eigvec_perturbation_theory(m, x, 1e-2, 0) == 1.0);
}

TEST_CASE("delta properties over random draws") {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index p = 3 + trial % 6;
    const auto m = random_model(p, 1 + trial % (p - 1), rng);
    const VectorXd x = test::gaussian(p, 1, rng).col(0) * 3.0;
    CHECK(delta_prime(m, x) >= -1e-12);
    const double c = 0.5 + trial % 4;
    CHECK(delta(m, c * x) == doctest::Approx(c * c * delta(m, x)).epsilon(1e-12));
  }
  const auto flat = SpectralModel::allowing_ties(VectorXd::Constant(4, 2.0), MatrixXd::Identity(4, 4), 2);
  CHECK(delta_prime(flat, Eigen::Vector4d(1, -2, 0.5, 3)) == 0.0);
}

TEST_CASE("m pseudoinverse") {
  const auto m = diag_model({3.0, 2.0, 0.5}, 1);
  const auto mp = m_pseudoinverse(m, 1);
  CHECK(mp(0, 0) == doctest::Approx(-1.0));
  CHECK(mp(1, 1) == 0.0);
  CHECK(mp(2, 2) == doctest::Approx(1.0 / 1.5));
}

TEST_CASE("index matching") {
  const MatrixXd id = MatrixXd::Identity(3, 3);
  MatrixXd swapped = id;
  swapped.col(0).swap(swapped.col(1));
  CHECK(match_indices(id, swapped) == std::vector<Index>{1, 0, 2});

  // Greedy sends references 0 and 1 to column 0; the assignment resolves it.
  MatrixXd vec(3, 3);
  vec << 0.9, 0.85, 0.0,
         0.8, 0.0, 0.75,
         0.0, 0.1, 0.95;
  CHECK(match_indices(id, vec) == std::vector<Index>{1, 0, 2});

  MatrixXd flat(2, 2);
  flat << 0.6, 0.6, 0.6, -0.6;
  CHECK_THROWS_AS(match_indices(MatrixXd::Identity(2, 2), flat), IndexMatchFailure);
}

TEST_CASE("perturbed rho matches first-order coefficients") {
  Rng rng(5);
  const auto m = random_model(5, 2, rng);
  const VectorXd x = draw_x(m, rng);
  const VectorXd d = d_vector(m, x);
  for (Index j = 0; j < 2; ++j)
    for (Index k = 2; k < 5; ++k) {
      const double rho0 = rho(m.eigenvalue(j), m.eigenvalue(k));
      const double coef = rho0 * (1 - rho0) * (d(j) - d(k));
      if (std::abs(coef) < 1e-3) continue;
      // Central difference in ε removes the quadratic term.
      const double h = 1e-4;
      const double pca = (perturbed_rho_pca(PerturbationScenario(m, x, 2 * h), j, k) -
                          perturbed_rho_pca(PerturbationScenario(m, x, h), j, k)) / h;
      const double ppca = (perturbed_rho_ppca(PerturbationScenario(m, x, 2 * h), j, k) -
                           perturbed_rho_ppca(PerturbationScenario(m, x, h), j, k)) / h;
      CHECK(std::abs(pca - coef) < 0.05 * std::abs(coef));
      CHECK(std::abs(ppca - coef) < 0.05 * std::abs(coef));
      CHECK(rho_first_order_theory(m, x, 1e-3, j, k) ==
            doctest::Approx(rho0 + 1e-3 * coef).epsilon(1e-12));
    }
}

TEST_CASE("perpendicular outlier ordering chain") {
  const auto m = diag_model({2.0, 1.0, 0.5}, 1);
  const PerturbationScenario scn(m, Eigen::Vector3d(0, 1, 1), 1e-2);
  for (Index k = 1; k < 3; ++k) {
    const double pca = perturbed_rho_pca(scn, 0, k);
    const double ppca = perturbed_rho_ppca(scn, 0, k);
    CHECK(pca < ppca);
    CHECK(ppca < rho(m.eigenvalue(0), m.eigenvalue(k)));
  }
  const PerturbationScenario small(m, Eigen::Vector3d(0, 1, 1), 1e-3);
  CHECK(std::abs(tau_numeric(small) - 2.25e-6) < 0.15 * 2.25e-6);

  std::vector<double> eps{1e-2, 1e-3}, tau;
  for (double e : eps) tau.push_back(tau_numeric(PerturbationScenario(m, Eigen::Vector3d(0, 1, 1), e)));
  CHECK(std::abs(test::loglog_slope(eps, tau) - 2.0) < 0.1);
}

TEST_CASE("tau numeric agrees with the second-order theory") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_model(6, 2, rng);
    const VectorXd x = draw_x(m, rng);
    const PerturbationScenario scn(m, x, 1e-3);
    const double th = tau_theory(m, x, 1e-3);
    CHECK(std::abs(tau_numeric(scn) - th) < 0.15 * std::abs(th));
    double sum = 0;
    for (Index j = 0; j < 2; ++j)
      for (Index k = 2; k < 6; ++k) sum += tau_jk_theory(m, x, 1e-3, j, k);
    CHECK(sum / 8.0 == doctest::Approx(th).epsilon(1e-9));
  }
}

TEST_CASE("pairwise tau converges to the second-order theory") {
  // The remainder is O(eps^3), so the scaled gap must shrink about tenfold per decade.
  // The rate is read at 1e-3 and 1e-4: at 1e-5 tau is near 1e-10 and eigensolver roundoff
  // puts a floor near 1e-5 on the scaled gap.
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_model(6, 2, rng);
    const VectorXd x = draw_x(m, rng);
    for (Index j = 0; j < 2; ++j)
      for (Index k = 2; k < 6; ++k) {
        const double th = tau_jk_theory(m, x, 1.0, j, k);
        const double g3 = std::abs(tau_jk_numeric(PerturbationScenario(m, x, 1e-3), j, k) / 1e-6 - th);
        const double g4 = std::abs(tau_jk_numeric(PerturbationScenario(m, x, 1e-4), j, k) / 1e-8 - th);
        const double g5 = std::abs(tau_jk_numeric(PerturbationScenario(m, x, 1e-5), j, k) / 1e-10 - th);
        CHECK(g5 < 0.1 * std::abs(th));
        CHECK(g4 < 0.2 * g3 + 1e-6);
      }
  }
}

TEST_CASE("eigenvector deficits are quadratic in epsilon") {
  Rng rng(7);
  const auto m = random_model(6, 2, rng);
  const VectorXd x = draw_x(m, rng);
  for (Index j = 0; j < 2; ++j) {
    std::vector<double> eps{1e-2, 3e-3, 1e-3}, pca, resid;
    for (double e : eps) {
      const PerturbationScenario scn(m, x, e);
      const double a = 1 - eigvec_inner_pca(scn, j);
      const double b = 1 - eigvec_inner_ppca(scn, j);
      const double th = 1 - eigvec_perturbation_theory(m, x, e, j);
      pca.push_back(a);
      resid.push_back(std::abs(a - th));
      CHECK(std::abs(b - a) < 0.1 * a);
    }
    CHECK(std::abs(test::loglog_slope(eps, pca) - 2.0) < 0.1);
    CHECK(test::loglog_slope(eps, resid) > 2.0);
  }
}

TEST_CASE("flip thresholds") {
  const auto t = flip_thresholds(2.0, 0.05);
  CHECK(t.eta_pca == doctest::Approx(19.0).epsilon(1e-12));
  CHECK(t.eta_cdm == doctest::Approx(27.0).epsilon(1e-12));
  CHECK(t.product_more_robust);
  CHECK_FALSE(flip_thresholds(1.05, 0.05).product_more_robust);
  CHECK(flip_thresholds(2.0, 1e-9).eta_pca > 1e8);
  CHECK_THROWS_AS(flip_thresholds(1.0, 0.05), InvalidInput);
  CHECK_THROWS_AS(flip_thresholds(2.0, 0.5), InvalidInput);

  // Bracket oracle on the perturbed matrices themselves.
  const Index p = 3;
  const VectorXd xi = VectorXd::Unit(p, 0), nu = VectorXd::Unit(p, 1);
  const double a = 2.0, eps = 0.05;
  const MatrixXd sigma = a * xi * xi.transpose() + MatrixXd::Identity(p, p) - xi * xi.transpose();
  for (double side : {1 - 1e-3, 1 + 1e-3}) {
    const double eta_p = t.eta_pca * side;
    const MatrixXd pca = (1 - eps) * sigma + eps * eta_p * nu * nu.transpose();
    const VectorXd lead = leading_eigvec(pca);
    CHECK(std::abs(lead.dot(side < 1 ? xi : nu)) > 1 - 1e-9);

    const double eta_c = t.eta_cdm * side;
    const MatrixXd cdm = ((1 - 2 * eps) * sigma + 2 * eps * eta_c * nu * nu.transpose()) * sigma;
    const VectorXd lead_c = leading_eigvec(cdm);
    CHECK(std::abs(lead_c.dot(side < 1 ? xi : nu)) > 1 - 1e-9);
  }
}

TEST_CASE("gaussian asymptotic covariance") {
  const auto m = diag_model({2.0, 1.0}, 1);
  const MatrixXd sb = asymptotic_cov_gaussian(m);
  CHECK(sb.rows() == 6);
  CHECK(sb(0, 0) == doctest::Approx(8.0));
  CHECK(sb(1, 1) == doctest::Approx(2.0));
  CHECK(std::abs(sb(0, 1)) < 1e-12);

  Rng rng(8);
  const auto rm = random_model(4, 2, rng);
  const MatrixXd s = asymptotic_cov_gaussian(rm);
  CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  const auto eig = linalg::sym_eig(SymmetricMatrix(s));
  CHECK(eig.eigenvalues.minCoeff() > -1e-10 * eig.eigenvalues(0));

  MatrixXd a(2, 2);
  a << 1, 2, 3, 4;
  const MatrixXd k = commutation_matrix(2);
  const Eigen::Map<const VectorXd> va(a.data(), 4);
  const MatrixXd at = a.transpose();
  const Eigen::Map<const VectorXd> vat(at.data(), 4);
  CHECK((k * va - vat).norm() == 0.0);
  CHECK(kronecker(MatrixXd::Identity(2, 2), a).block(2, 2, 2, 2) == a);
}

TEST_CASE("monte carlo delta") {
  Rng rng(9);
  VectorXd l(10);
  for (Index j = 0; j < 10; ++j) l(j) = 10.0 * std::pow(0.7, double(j));
  const SpectralModel m(l, test::random_orthogonal(10, rng), 2);
  const auto iso = monte_carlo_delta(m, {DeltaGenerator::Kind::Isotropic, 1.0, 5.0}, 5000, 11);
  CHECK(iso.reps == 5000);
  CHECK(iso.mean > 3 * iso.se_mean);
  const auto ell = monte_carlo_delta(m, {DeltaGenerator::Kind::EllipticalScaled, 1.0, 5.0}, 5000, 12);
  CHECK(ell.fraction_positive - 0.5 > 3 * ell.se_fraction);
  CHECK_THROWS_AS(monte_carlo_delta(m, {}, 999, 1), InvalidInput);
  // Seeded runs repeat exactly.
  const auto again = monte_carlo_delta(m, {DeltaGenerator::Kind::Isotropic, 1.0, 5.0}, 5000, 11);
  CHECK(again.mean == iso.mean);
}
