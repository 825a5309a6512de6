#ifndef COMHE_ENERGY_HPP
#define COMHE_ENERGY_HPP

#include <cmath>
#include <sstream>

#include "comhe/numkit/matrix.hpp"
#include "comhe/numkit/tape.hpp"

namespace comhe {

/// Pairwise distances below this make the Riesz kernel blow past float64 range.
inline constexpr double kDistanceTolerance = 1e-9;

/// Kernel choice for the hyperspherical energy.
///
/// s > 0 selects the Riesz kernel z^-s, s == 0 the log kernel -log z.
/// half_space augments the set with every neuron's antipode. normalized
/// divides by the number of ordered pairs M(M-1) of the evaluated set
/// (M = 2N with half_space).
struct EnergySpec {
  double s = 2.0;
  bool half_space = false;
  bool normalized = false;
};

/// N neurons stored as the rows of a matrix. Rows need not be unit norm;
/// energy evaluation normalizes them.
class NeuronBank {
 public:
  NeuronBank() = default;
  explicit NeuronBank(Matrix weights) : weights_(std::move(weights)) {}

  std::size_t n() const { return weights_.rows(); }
  std::size_t dim() const { return weights_.cols(); }
  const Matrix& weights() const { return weights_; }
  Matrix& weights() { return weights_; }

  Matrix unit_rows() const { return rowwise_normalize(weights_); }

 private:
  Matrix weights_;
};

enum class GradientMode {
  raw,   ///< d/dw through the normalization w -> w/||w||
  unit,  ///< d/dŵ, treating the unit rows as free variables
};

inline double kernel_value(double r, double s) { return s == 0.0 ? -std::log(r) : std::pow(r, -s); }

inline double kernel_derivative(double r, double s) {
  return s == 0.0 ? -1.0 / r : -s * std::pow(r, -s - 1.0);
}

namespace detail {

inline void check_spec(const EnergySpec& spec) {
  if (!(spec.s >= 0.0) || !std::isfinite(spec.s)) {
    throw InvalidArgument("kernel power s must be finite and >= 0");
  }
}

inline Matrix augment_half_space(const Matrix& unit) {
  return vstack(unit, -1.0 * unit);
}

inline void require_pairs(std::size_t m) {
  if (m < 2) throw InvalidArgument("energy needs at least two points, got " + std::to_string(m));
}

inline double pair_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

[[noreturn]] inline void throw_degenerate(std::size_t i, std::size_t j, double r) {
  std::ostringstream msg;
  msg << "points " << i << " and " << j << " are at distance " << r << " < "
      << kDistanceTolerance;
  throw DegenerateDistance(msg.str());
}

/// Σ_{i≠j} f_s(||x_i - x_j||) over the rows of `points`, unnormalized.
inline double ordered_pair_sum(const Matrix& points, double s) {
  const std::size_t m = points.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double r = pair_distance(points.row(i), points.row(j));
      if (r < kDistanceTolerance) throw_degenerate(i, j, r);
      total += 2.0 * kernel_value(r, s);
    }
  }
  return total;
}

/// Gradient of ordered_pair_sum with respect to every row of `points`.
inline Matrix ordered_pair_sum_gradient(const Matrix& points, double s) {
  const std::size_t m = points.rows();
  const std::size_t d = points.cols();
  Matrix g(m, d);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      for (std::size_t k = 0; k < d; ++k) diff[k] = points(i, k) - points(j, k);
      const double r = norm(diff);
      if (r < kDistanceTolerance) throw_degenerate(i, j, r);
      const double c = 2.0 * kernel_derivative(r, s) / r;
      for (std::size_t k = 0; k < d; ++k) {
        g(i, k) += c * diff[k];
        g(j, k) -= c * diff[k];
      }
    }
  }
  return g;
}

}  // namespace detail

/// Energy of rows that are already unit norm.
inline double unit_energy(const Matrix& unit, const EnergySpec& spec) {
  detail::check_spec(spec);
  const Matrix points = spec.half_space ? detail::augment_half_space(unit) : unit;
  const std::size_t m = points.rows();
  detail::require_pairs(m);
  double e = detail::ordered_pair_sum(points, spec.s);
  if (spec.normalized) e /= static_cast<double>(m * (m - 1));
  return e;
}

/// d(unit_energy)/d(unit rows).
inline Matrix unit_energy_gradient(const Matrix& unit, const EnergySpec& spec) {
  detail::check_spec(spec);
  const std::size_t n = unit.rows();
  if (!spec.half_space) {
    detail::require_pairs(n);
    Matrix g = detail::ordered_pair_sum_gradient(unit, spec.s);
    if (spec.normalized) g = (1.0 / static_cast<double>(n * (n - 1))) * g;
    return g;
  }
  const Matrix points = detail::augment_half_space(unit);
  const std::size_t m = points.rows();
  Matrix ga = detail::ordered_pair_sum_gradient(points, spec.s);
  // x_{N+i} = -x_i, so the chain rule subtracts the antipode's gradient.
  Matrix g = row_block(ga, 0, n) - row_block(ga, n, m);
  if (spec.normalized) g = (1.0 / static_cast<double>(m * (m - 1))) * g;
  return g;
}

/// Hyperspherical energy of the bank's normalized rows.
inline double energy(const NeuronBank& bank, const EnergySpec& spec) {
  return unit_energy(bank.unit_rows(), spec);
}

/// Maps d/dŵ to d/dw for ŵ = w/||w||, row by row.
inline Matrix pullback_normalization(const Matrix& raw, const Matrix& unit, const Matrix& g_unit) {
  Matrix g(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const double n = norm(raw.row(i));
    const double proj = dot(unit.row(i), g_unit.row(i));
    for (std::size_t k = 0; k < raw.cols(); ++k) g(i, k) = (g_unit(i, k) - unit(i, k) * proj) / n;
  }
  return g;
}

inline Matrix energy_gradient(const NeuronBank& bank, const EnergySpec& spec,
                              GradientMode mode = GradientMode::raw) {
  const Matrix unit = bank.unit_rows();
  Matrix g_unit = unit_energy_gradient(unit, spec);
  if (mode == GradientMode::unit) return g_unit;
  return pullback_normalization(bank.weights(), unit, g_unit);
}

/// Component of d/dŵ orthogonal to each ŵ_i (the Riemannian gradient on the sphere).
inline Matrix tangential_gradient(const NeuronBank& bank, const EnergySpec& spec) {
  const Matrix unit = bank.unit_rows();
  const Matrix g = unit_energy_gradient(unit, spec);
  Matrix t = g;
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    const double proj = dot(unit.row(i), g.row(i));
    for (std::size_t k = 0; k < unit.cols(); ++k) t(i, k) -= unit(i, k) * proj;
  }
  return t;
}

/// Distance of each ŵ_i from the α-weighted barycenter of the others,
/// α_j = ||ŵ_i - ŵ_j||^-(s+2); the largest such distance is returned.
/// Only defined for s = 2. The barycenter map is the Euclidean fixed-point
/// form, so it ignores the sphere constraint: an antipodal pair scores 2
/// even though its tangential gradient vanishes.
inline double stationarity_residual(const NeuronBank& bank, const EnergySpec& spec) {
  if (spec.s != 2.0) throw UnsupportedKernel("stationarity residual is defined for s = 2 only");
  const Matrix unit = bank.unit_rows();
  const std::size_t n = unit.rows();
  detail::require_pairs(n);
  const std::size_t d = unit.cols();
  double worst = 0.0;
  std::vector<double> bary(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(bary.begin(), bary.end(), 0.0);
    double weight = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double r = detail::pair_distance(unit.row(i), unit.row(j));
      if (r < kDistanceTolerance) detail::throw_degenerate(i, j, r);
      const double alpha = std::pow(r, -(spec.s + 2.0));
      weight += alpha;
      for (std::size_t k = 0; k < d; ++k) bary[k] += alpha * unit(j, k);
    }
    double dist2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = unit(i, k) - bary[k] / weight;
      dist2 += diff * diff;
    }
    worst = std::max(worst, std::sqrt(dist2));
  }
  return worst;
}

namespace ad {

/// Fused energy node over rows that are already unit norm (typically the
/// output of rowwise_normalize). First-order only.
inline Var energy_node(Var unit_rows, const EnergySpec& spec) {
  const double e = unit_energy(unit_rows.value(), spec);
  return custom({unit_rows}, Matrix::scalar(e),
                [id = unit_rows.id, spec](const Tape& tp, const Matrix& g) {
                  return std::vector<Matrix>{g(0, 0) * unit_energy_gradient(tp.value(id), spec)};
                });
}

/// Energy of raw rows: normalize, then evaluate.
inline Var energy_of_raw(Var raw_rows, const EnergySpec& spec) {
  return energy_node(rowwise_normalize(raw_rows), spec);
}

}  // namespace ad

}  // namespace comhe

#endif  // COMHE_ENERGY_HPP
