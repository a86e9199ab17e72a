#ifndef PPCA_RANDOM_HPP
#define PPCA_RANDOM_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace ppca {

using Rng = std::mt19937_64;

/// Independent substream for (seed, index), e.g. one per replicate.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x5eedu};
  return Rng(seq);
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(rows, cols);
  // Row-major fill so that the draws for sample i do not depend on `rows`.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = normal(rng);
  }
  return z;
}

/// `count` rows of mean + A z sqrt(ν / w), z ~ N(0, I_m), w ~ χ²_ν, where A
/// is the p×m `factor`. An infinite ν gives Gaussian rows. The covariance of
/// each row is (ν/(ν−2)) A Aᵀ.
inline Eigen::MatrixXd t_draws(Eigen::Index count, const Eigen::VectorXd& mean,
                               const Eigen::MatrixXd& factor, double nu, Rng& rng) {
  const Eigen::Index m = factor.cols();
  const bool gaussian = std::isinf(nu);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(gaussian ? 1.0 : nu);
  Eigen::MatrixXd z(m, count);
  Eigen::VectorXd mix(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) z(j, i) = normal(rng);
    mix(i) = gaussian ? 1.0 : std::sqrt(nu / chi2(rng));
  }
  Eigen::MatrixXd out = (factor * z).transpose();
  for (Eigen::Index i = 0; i < count; ++i) out.row(i) = out.row(i) * mix(i) + mean.transpose();
  return out;
}

}  // namespace ppca

#endif  // PPCA_RANDOM_HPP
