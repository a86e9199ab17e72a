#ifndef PPCA_TESTS_SUPPORT_HPP
#define PPCA_TESTS_SUPPORT_HPP

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>

#include "ppca/random.hpp"

namespace ppca::test {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  return standard_normal(rows, cols, rng);
}

inline Eigen::MatrixXd random_orthogonal(Eigen::Index p, Rng& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(p, p, rng));
  return qr.householderQ();
}

/// Gram matrix GᵀG/rows of a rows×p Gaussian matrix (rank min(rows, p)).
inline Eigen::MatrixXd random_gram(Eigen::Index rows, Eigen::Index p, Rng& rng) {
  const Eigen::MatrixXd g = gaussian(rows, p, rng);
  return g.transpose() * g / double(rows);
}

inline double rel_fro(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ppca_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Least-squares slope of log(y) against log(x).
template <typename Xs, typename Ys>
double loglog_slope(const Xs& xs, const Ys& ys) {
  const auto n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace ppca::test

#endif  // PPCA_TESTS_SUPPORT_HPP
