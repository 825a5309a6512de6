#ifndef COMHE_TESTS_SUPPORT_ORACLES_HPP
#define COMHE_TESTS_SUPPORT_ORACLES_HPP

// Test-only reference computations. Nothing here calls into the code paths
// under test except through the scalar function handed to it.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "comhe/numkit/matrix.hpp"

namespace comhe::testing {

/// Central differences of a scalar function of a matrix.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                 double step = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe.data()[k];
    probe.data()[k] = orig + step;
    const double up = f(probe);
    probe.data()[k] = orig - step;
    const double down = f(probe);
    probe.data()[k] = orig;
    g.data()[k] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), with an absolute floor for all-zero gradients.
inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12) {
  const double diff = frobenius_norm(a - b);
  const double scale = std::max({frobenius_norm(a), frobenius_norm(b), floor});
  return diff / scale;
}

/// Haar-random orthogonal matrix via QR of a Gaussian matrix.
inline Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd diag = qr.matrixQR().diagonal();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = q(i, j) * (diag(j) < 0 ? -1.0 : 1.0);
  return out;
}

/// Points at angles 2πk/n on the unit circle.
inline Matrix circle_points(std::size_t n, double phase = 0.0) {
  Matrix m(n, 2);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    m(k, 0) = std::cos(a);
    m(k, 1) = std::sin(a);
  }
  return m;
}

/// Brute-force energy over all ordered pairs, straight from the definition.
inline double brute_energy(const Matrix& unit, double s) {
  double e = 0.0;
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    for (std::size_t j = 0; j < unit.rows(); ++j) {
      if (i == j) continue;
      double r2 = 0.0;
      for (std::size_t k = 0; k < unit.cols(); ++k) {
        const double d = unit(i, k) - unit(j, k);
        r2 += d * d;
      }
      const double r = std::sqrt(r2);
      e += s == 0.0 ? std::log(1.0 / r) : std::pow(r, -s);
    }
  }
  return e;
}

}  // namespace comhe::testing

#endif  // COMHE_TESTS_SUPPORT_ORACLES_HPP
