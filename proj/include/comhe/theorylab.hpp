#ifndef COMHE_THEORYLAB_HPP
#define COMHE_THEORYLAB_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "comhe/errors.hpp"
#include "comhe/numkit/random.hpp"
#include "json.hpp"

namespace comhe::theory {

using json = nlohmann::ordered_json;

/// Outcome of one Monte-Carlo check.
///
/// For rate checks `empirical` is the fraction of trials inside the bound and
/// `theoretical` the guaranteed probability; `allowance` is the 3σ binomial
/// slack. For mean checks (Lemma 1) they are the sample mean, the target and
/// four standard errors.
struct BoundReport {
  std::string name;
  json params = json::object();
  std::size_t trials = 0;
  std::size_t successes = 0;
  double empirical = 0.0;
  double theoretical = 0.0;
  double margin = 0.0;
  double allowance = 0.0;
  bool vacuous = false;
  bool pass = false;

  json to_json() const {
    json j;
    j["name"] = name;
    j["params"] = params;
    j["trials"] = trials;
    j["successes"] = successes;
    j["empirical"] = empirical;
    j["theoretical"] = theoretical;
    j["margin"] = margin;
    j["allowance"] = allowance;
    j["vacuous"] = vacuous;
    j["pass"] = pass;
    return j;
  }
};

// ---- closed forms ------------------------------------------------------------

inline double theorem1_lower(double c, double eps) { return (c - eps) / (1.0 + eps); }
inline double theorem1_upper(double c, double eps) { return (c + eps) / (1.0 - eps); }

inline double theorem2_lower(double c, double eps) {
  return (1.0 + eps) / (1.0 - eps) * c - 2.0 * eps / (1.0 - eps);
}
inline double theorem2_upper(double c, double eps) {
  return (1.0 - eps) / (1.0 + eps) * c + (1.0 + 2.0 * eps) / (1.0 + eps) -
         std::sqrt(1.0 - eps * eps) / (1.0 + eps);
}

/// Single factor 1 - 2exp(-kε²/8); the theorem's probability is its square.
inline double theorem1_factor(std::size_t k, double eps) {
  return 1.0 - 2.0 * std::exp(-static_cast<double>(k) * eps * eps / 8.0);
}

inline double theorem2_rate(std::size_t k, double eps) {
  return 1.0 - 6.0 * std::exp(-0.5 * static_cast<double>(k) * (eps * eps / 2.0 - eps * eps * eps / 3.0));
}

inline double jll_rate(std::size_t k, double eps) {
  return 1.0 - 2.0 * std::exp(-static_cast<double>(k) * eps * eps / 8.0);
}

/// Cosines below this make the first lower bound the larger one.
inline double lower_crossover_cosine(double eps) {
  return (eps + 3.0 * eps * eps) / (3.0 * eps + eps * eps);
}

/// Cosines below this make the first upper bound the smaller one.
inline double upper_crossover_cosine(double eps) {
  return (1.0 - 3.0 * eps * eps - (1.0 - eps) * std::sqrt(1.0 - eps * eps)) / (3.0 * eps - eps * eps);
}

inline double binomial_sigma(double p, std::size_t n) {
  const double q = std::clamp(p, 0.0, 1.0);
  return std::sqrt(q * (1.0 - q) / static_cast<double>(n));
}

// ---- sampling ----------------------------------------------------------------

/// A fixed pair of vectors in R^d.
struct VectorPair {
  std::vector<double> w1;
  std::vector<double> w2;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void check_eps(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
}

inline void check_dims(std::size_t d, std::size_t k, std::size_t trials) {
  if (d < 2) throw InvalidArgument("dimension d must be >= 2");
  if (k == 0) throw InvalidArgument("projection dimension k must be >= 1");
  if (trials == 0) throw InvalidArgument("trials must be >= 1");
}

/// Runs fn(trial, rng) for every trial with an rng seeded from (seed, trial),
/// so the result does not depend on how trials are split across threads.
template <class Fn>
void for_each_trial(std::size_t trials, std::uint64_t seed, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, trials));
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      Rng rng(derive_seed(seed, t));
      fn(t, rng);
    }
  };
  if (workers == 1) {
    run(0, trials);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (trials + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(trials, begin + chunk);
    if (begin < end) pool.emplace_back(run, begin, end);
  }
  for (auto& th : pool) th.join();
}

inline std::size_t count(const std::vector<char>& flags) {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), char{1}));
}

}  // namespace detail

/// Unit vectors u, v in R^d with angle `angle_deg`, drawn uniformly up to that constraint.
inline VectorPair unit_pair_at_angle(std::size_t d, double angle_deg, std::uint64_t seed) {
  if (d < 2) throw InvalidArgument("need d >= 2 for a pair at a given angle");
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> u(d), v(d);
  for (double& x : u) x = normal(rng);
  for (double& x : v) x = normal(rng);
  const double nu = std::sqrt(detail::dot(u, u));
  for (double& x : u) x /= nu;
  const double proj = detail::dot(u, v);
  for (std::size_t i = 0; i < d; ++i) v[i] -= proj * u[i];
  const double nv = std::sqrt(detail::dot(v, v));
  for (double& x : v) x /= nv;
  const double a = angle_deg * std::numbers::pi / 180.0;
  VectorPair pair{u, std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) pair.w2[i] = std::cos(a) * u[i] + std::sin(a) * v[i];
  return pair;
}

/// Draws (P w1, P w2) for P with i.i.d. N(0, scale²) entries without forming P.
///
/// Each row r of P gives (r·w1, r·w2) ~ N(0, scale² G), G the 2x2 Gram matrix
/// of the pair, independently across rows; a Cholesky factor of G maps two
/// standard normals to one such row.
class ProjectedPairSampler {
 public:
  ProjectedPairSampler(const VectorPair& pair, double scale) : scale_(scale) {
    const double g11 = detail::dot(pair.w1, pair.w1);
    const double g12 = detail::dot(pair.w1, pair.w2);
    const double g22 = detail::dot(pair.w2, pair.w2);
    l11_ = std::sqrt(g11);
    l21_ = l11_ > 0.0 ? g12 / l11_ : 0.0;
    l22_ = std::sqrt(std::max(0.0, g22 - l21_ * l21_));
  }

  void sample(Rng& rng, std::size_t k, std::vector<double>& a, std::vector<double>& b) const {
    std::normal_distribution<double> normal;
    a.resize(k);
    b.resize(k);
    for (std::size_t l = 0; l < k; ++l) {
      const double z1 = normal(rng);
      const double z2 = normal(rng);
      a[l] = scale_ * l11_ * z1;
      b[l] = scale_ * (l21_ * z1 + l22_ * z2);
    }
  }

 private:
  double scale_;
  double l11_ = 0.0, l21_ = 0.0, l22_ = 0.0;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return detail::dot(a, b) / std::sqrt(detail::dot(a, a) * detail::dot(b, b));
}

namespace detail {

inline BoundReport rate_report(std::string name, json params, const std::vector<char>& hits,
                               double theoretical) {
  BoundReport r;
  r.name = std::move(name);
  r.params = std::move(params);
  r.trials = hits.size();
  r.successes = count(hits);
  r.empirical = static_cast<double>(r.successes) / static_cast<double>(r.trials);
  r.vacuous = theoretical <= 0.0;
  r.theoretical = std::max(0.0, theoretical);
  r.margin = r.empirical - r.theoretical;
  r.allowance = 3.0 * binomial_sigma(r.theoretical, r.trials);
  r.pass = r.vacuous || r.empirical >= r.theoretical - r.allowance;
  return r;
}

}  // namespace detail

// ---- checks ------------------------------------------------------------------

/// Mean of <Pw1, Pw2> with P_ij ~ N(0, 1/k) against <w1, w2>; passes within
/// four standard errors.
inline BoundReport check_lemma1(const VectorPair& pair, std::size_t k, std::size_t trials,
                                std::uint64_t seed, std::size_t threads = 1) {
  detail::check_dims(pair.w1.size(), k, trials);
  if (pair.w1.size() != pair.w2.size()) throw ShapeMismatch("lemma 1 pair differs in length");
  const ProjectedPairSampler sampler(pair, 1.0 / std::sqrt(static_cast<double>(k)));
  std::vector<double> values(trials);
  detail::for_each_trial(trials, seed, threads, [&](std::size_t t, Rng& rng) {
    std::vector<double> a, b;
    sampler.sample(rng, k, a, b);
    values[t] = detail::dot(a, b);
  });
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(trials);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(trials > 1 ? trials - 1 : 1);
  BoundReport r;
  r.name = "lemma1";
  r.params = {{"d", pair.w1.size()}, {"k", k}, {"seed", seed}};
  r.trials = trials;
  r.empirical = mean;
  r.theoretical = detail::dot(pair.w1, pair.w2);
  r.margin = r.empirical - r.theoretical;
  r.allowance = 4.0 * std::sqrt(var / static_cast<double>(trials));
  r.pass = std::abs(r.margin) <= r.allowance;
  r.successes = r.pass ? trials : 0;
  return r;
}

inline BoundReport check_lemma1(std::size_t d, std::size_t k, std::size_t trials, std::uint64_t seed,
                                double angle_deg = 60.0, std::size_t threads = 1) {
  BoundReport r = check_lemma1(unit_pair_at_angle(d, angle_deg, derive_seed(seed, ~0ull)), k, trials,
                               seed, threads);
  r.params["angle"] = angle_deg;
  return r;
}

/// Fraction of projections whose cosine lands strictly inside the first
/// angle-preservation interval.
inline BoundReport check_theorem1(std::size_t d, std::size_t k, double eps, double angle_deg,
                                  std::size_t trials, std::uint64_t seed, std::size_t threads = 1) {
  detail::check_eps(eps);
  detail::check_dims(d, k, trials);
  const VectorPair pair = unit_pair_at_angle(d, angle_deg, derive_seed(seed, ~0ull));
  const double c = detail::dot(pair.w1, pair.w2);
  const double lo = theorem1_lower(c, eps);
  const double hi = theorem1_upper(c, eps);
  const ProjectedPairSampler sampler(pair, 1.0);
  std::vector<char> hits(trials);
  detail::for_each_trial(trials, seed, threads, [&](std::size_t t, Rng& rng) {
    std::vector<double> a, b;
    sampler.sample(rng, k, a, b);
    const double cp = cosine(a, b);
    hits[t] = lo < cp && cp < hi;
  });
  const double factor = theorem1_factor(k, eps);
  BoundReport r = detail::rate_report(
      "theorem1", {{"d", d}, {"k", k}, {"epsilon", eps}, {"angle", angle_deg}, {"seed", seed}}, hits,
      factor <= 0.0 ? 0.0 : factor * factor);
  r.vacuous = factor <= 0.0;
  r.pass = r.vacuous || r.pass;
  return r;
}

/// Second angle-preservation interval; requires an acute angle.
inline BoundReport check_theorem2(std::size_t d, std::size_t k, double eps, double angle_deg,
                                  std::size_t trials, std::uint64_t seed, std::size_t threads = 1) {
  detail::check_eps(eps);
  detail::check_dims(d, k, trials);
  const VectorPair pair = unit_pair_at_angle(d, angle_deg, derive_seed(seed, ~0ull));
  const double c = detail::dot(pair.w1, pair.w2);
  if (!(c > 0.0) || !(angle_deg < 90.0)) throw RequiresAcuteAngle("w1·w2 must be positive, got " + std::to_string(c));
  const double lo = theorem2_lower(c, eps);
  const double hi = theorem2_upper(c, eps);
  // Entries N(0,1)/√d; the scale cancels in the cosine but is kept for fidelity.
  const ProjectedPairSampler sampler(pair, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<char> hits(trials);
  detail::for_each_trial(trials, seed, threads, [&](std::size_t t, Rng& rng) {
    std::vector<double> a, b;
    sampler.sample(rng, k, a, b);
    const double cp = cosine(a, b);
    hits[t] = lo < cp && cp < hi;
  });
  BoundReport r = detail::rate_report(
      "theorem2", {{"d", d}, {"k", k}, {"epsilon", eps}, {"angle", angle_deg}, {"seed", seed}}, hits,
      theorem2_rate(k, eps));
  r.params["upper_exceeds_one"] = hi >= 1.0;
  return r;
}

/// Squared-distance preservation with P_ij ~ N(0, σ²).
inline BoundReport check_jll(const VectorPair& pair, std::size_t k, double eps, std::size_t trials,
                             std::uint64_t seed, double sigma = 1.0, std::size_t threads = 1) {
  detail::check_eps(eps);
  detail::check_dims(pair.w1.size(), k, trials);
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be > 0");
  double dist2 = 0.0;
  for (std::size_t i = 0; i < pair.w1.size(); ++i) {
    const double diff = pair.w1[i] - pair.w2[i];
    dist2 += diff * diff;
  }
  const double base = static_cast<double>(k) * sigma * sigma * dist2;
  std::vector<char> hits(trials);
  if (dist2 == 0.0) {
    // P(w1 - w2) is exactly zero: the interval collapses onto the observed value.
    std::fill(hits.begin(), hits.end(), char{1});
  } else {
    // P(w1 - w2) has i.i.d. N(0, σ²||w1 - w2||²) entries.
    const double sd = sigma * std::sqrt(dist2);
    detail::for_each_trial(trials, seed, threads, [&](std::size_t t, Rng& rng) {
      std::normal_distribution<double> normal(0.0, sd);
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) {
        const double z = normal(rng);
        s += z * z;
      }
      hits[t] = (1.0 - eps) * base < s && s < (1.0 + eps) * base;
    });
  }
  return detail::rate_report(
      "jll", {{"d", pair.w1.size()}, {"k", k}, {"epsilon", eps}, {"sigma", sigma}, {"seed", seed}},
      hits, jll_rate(k, eps));
}

inline BoundReport check_jll(std::size_t d, std::size_t k, double eps, std::size_t trials,
                             std::uint64_t seed, double sigma = 1.0, std::size_t threads = 1) {
  Rng rng(derive_seed(seed, ~0ull));
  std::normal_distribution<double> normal;
  VectorPair pair{std::vector<double>(d), std::vector<double>(d)};
  for (double& x : pair.w1) x = normal(rng);
  for (double& x : pair.w2) x = normal(rng);
  return check_jll(pair, k, eps, trials, seed, sigma, threads);
}

inline double predicted_mean_abs_cosine(std::size_t d) {
  return std::sqrt(2.0 / (std::numbers::pi * static_cast<double>(d)));
}

/// Mean |cos| between independent uniform unit vectors in R^d.
///
/// By rotation invariance one vector can be fixed to e1, so the cosine is
/// x1 / sqrt(x1² + χ²_{d-1}) with x1 standard normal.
inline double check_orthogonality(std::size_t d, std::size_t trials, std::uint64_t seed,
                                  std::size_t threads = 1) {
  if (d < 100) throw InvalidArgument("orthogonality check needs d >= 100");
  if (trials == 0) throw InvalidArgument("trials must be >= 1");
  std::vector<double> values(trials);
  detail::for_each_trial(trials, seed, threads, [&](std::size_t t, Rng& rng) {
    std::normal_distribution<double> normal;
    std::gamma_distribution<double> chi2(0.5 * static_cast<double>(d - 1), 2.0);
    const double x1 = normal(rng);
    values[t] = std::abs(x1) / std::sqrt(x1 * x1 + chi2(rng));
  });
  double mean = 0.0;
  for (double v : values) mean += v;
  return mean / static_cast<double>(trials);
}

inline BoundReport orthogonality_report(std::size_t d, std::size_t trials, std::uint64_t seed,
                                        std::size_t threads = 1) {
  BoundReport r;
  r.name = "orthogonality";
  r.params = {{"d", d}, {"seed", seed}};
  r.trials = trials;
  r.empirical = check_orthogonality(d, trials, seed, threads);
  r.theoretical = predicted_mean_abs_cosine(d);
  r.margin = r.empirical - r.theoretical;
  // |cos| has standard deviation about sqrt((1 - 2/π)/d); allow 4 standard errors.
  r.allowance = 4.0 * std::sqrt((1.0 - 2.0 / std::numbers::pi) / static_cast<double>(d)) /
                std::sqrt(static_cast<double>(trials));
  r.pass = r.empirical >= 0.0 && r.empirical <= 1.0 && std::abs(r.margin) <= r.allowance;
  return r;
}

/// Checks on a grid that the first lower (upper) bound is tighter exactly
/// when the angle exceeds the closed-form crossover.
inline BoundReport check_crossover(const std::vector<double>& eps_grid, std::size_t angle_steps = 179) {
  std::size_t cases = 0, agree = 0;
  for (double eps : eps_grid) {
    detail::check_eps(eps);
    const double lower_c = lower_crossover_cosine(eps);
    const double upper_c = upper_crossover_cosine(eps);
    for (std::size_t s = 1; s <= angle_steps; ++s) {
      // Theorem 2 needs an acute angle, so the grid covers (0°, 90°).
      const double angle = 90.0 * static_cast<double>(s) / static_cast<double>(angle_steps + 1);
      const double c = std::cos(angle * std::numbers::pi / 180.0);
      if (std::abs(c - lower_c) > 1e-9) {
        const bool predicted = std::abs(lower_c) <= 1.0 ? angle * std::numbers::pi / 180.0 > std::acos(lower_c)
                                                         : c < lower_c;
        ++cases;
        agree += (theorem1_lower(c, eps) > theorem2_lower(c, eps)) == predicted;
      }
      if (std::abs(c - upper_c) > 1e-9) {
        const bool predicted = std::abs(upper_c) <= 1.0 ? angle * std::numbers::pi / 180.0 > std::acos(upper_c)
                                                         : c < upper_c;
        ++cases;
        agree += (theorem1_upper(c, eps) < theorem2_upper(c, eps)) == predicted;
      }
    }
  }
  BoundReport r;
  r.name = "crossover";
  r.params = {{"epsilons", eps_grid}, {"angle_steps", angle_steps}};
  r.trials = cases;
  r.successes = agree;
  r.empirical = cases ? static_cast<double>(agree) / static_cast<double>(cases) : 0.0;
  r.theoretical = 1.0;
  r.margin = r.empirical - 1.0;
  r.pass = cases > 0 && agree == cases;
  return r;
}

}  // namespace comhe::theory

#endif  // COMHE_THEORYLAB_HPP
