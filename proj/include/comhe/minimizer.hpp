#ifndef COMHE_MINIMIZER_HPP
#define COMHE_MINIMIZER_HPP

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "comhe/projection.hpp"

namespace comhe {

enum class Objective { plain, half_space, rp, ap_alternating, ap_unrolled, adversarial, group };

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::plain: return "plain";
    case Objective::half_space: return "half_space";
    case Objective::rp: return "rp";
    case Objective::ap_alternating: return "ap_alternating";
    case Objective::ap_unrolled: return "ap_unrolled";
    case Objective::adversarial: return "adversarial";
    case Objective::group: return "group";
  }
  return "?";
}

inline std::optional<Objective> objective_from_string(const std::string& name) {
  for (Objective o : {Objective::plain, Objective::half_space, Objective::rp, Objective::ap_alternating,
                      Objective::ap_unrolled, Objective::adversarial, Objective::group}) {
    if (name == to_string(o)) return o;
  }
  return std::nullopt;
}

struct MinimizeConfig {
  Objective objective = Objective::plain;
  double lr = 0.1;
  std::size_t max_iters = 5000;
  double tol = 1e-8;
  std::uint64_t seed = 0;

  // Projection settings, used by the objectives that need them.
  std::size_t proj_dim = 8;  ///< k+1
  std::size_t views = 5;
  Aggregation aggregation = Aggregation::mean;
  std::size_t reinit_period = 1000;
  double ap_inner_lr = 0.01;
  std::size_t ap_update_every = 10;
  AngleForm ap_form = AngleForm::cosine;
  double adversarial_lr = 0.01;
  std::size_t group_size = 8;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be > 0");
    if (!(tol > 0.0)) throw InvalidArgument("tol must be > 0");
    if (proj_dim == 0) throw InvalidArgument("proj_dim must be >= 1");
    if (views == 0) throw InvalidArgument("views must be >= 1");
    if (group_size == 0) throw InvalidArgument("group_size must be >= 1");
    if (!(ap_inner_lr >= 0.0)) throw InvalidArgument("ap_inner_lr must be >= 0");
    if (ap_update_every == 0) throw InvalidArgument("ap_update_every must be >= 1");
    if (!(adversarial_lr >= 0.0)) throw InvalidArgument("adversarial_lr must be >= 0");
  }
};

struct TracePoint {
  std::size_t iter = 0;
  double energy_full = 0.0;  ///< unprojected, full-space, unnormalized energy
  double objective = 0.0;    ///< the value being minimized
  double grad_norm = 0.0;    ///< tangential gradient norm of the objective
};

struct EnergyTrace {
  std::vector<TracePoint> points;

  void write_csv(std::ostream& os) const {
    os << "iter,energy_full,objective,grad_norm\n";
    char buf[128];
    for (const TracePoint& p : points) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", p.iter, p.energy_full, p.objective,
                    p.grad_norm);
      os << buf;
    }
  }
};

struct MinimizeResult {
  NeuronBank bank;
  EnergyTrace trace;
  double final_lr = 0.0;
  bool converged = false;
};

namespace detail {

/// Objective state for one minimization run. `evaluate` may advance
/// internal schedules; `value_at` is pure so that backtracking compares the
/// candidate against the same projection.
class ObjectiveState {
 public:
  ObjectiveState(const MinimizeConfig& cfg, const EnergySpec& spec, std::size_t dim)
      : cfg_(cfg), spec_(spec) {
    switch (cfg.objective) {
      case Objective::plain:
        break;
      case Objective::half_space:
        spec_.half_space = true;
        break;
      case Objective::rp:
        rp_.emplace(cfg.views, cfg.proj_dim, dim, cfg.aggregation, cfg.reinit_period, cfg.seed);
        break;
      case Objective::ap_alternating:
      case Objective::ap_unrolled: {
        ap_ = ApState::random(cfg.proj_dim, dim, cfg.seed,
                              cfg.objective == Objective::ap_unrolled ? ApMode::unrolled
                                                                      : ApMode::alternating);
        ap_->inner_lr = cfg.ap_inner_lr;
        ap_->update_every = cfg.ap_update_every;
        ap_->form = cfg.ap_form;
        ap_->reinit_period = cfg.reinit_period;
        break;
      }
      case Objective::adversarial:
        if (cfg.proj_dim == 0 || cfg.proj_dim > dim) {
          throw InvalidArgument("projection dimension must be in [1, input dimension]");
        }
        p_ = gaussian_matrix(cfg.proj_dim, dim, cfg.seed);
        break;
      case Objective::group:
        group_.emplace(GroupScheme::consecutive(dim, cfg.group_size));
        break;
    }
  }

  /// Value and raw-weight gradient at `bank`, advancing pre-step schedules.
  ValueGrad evaluate(const NeuronBank& bank) {
    switch (cfg_.objective) {
      case Objective::plain:
      case Objective::half_space:
        return {energy(bank, spec_), energy_gradient(bank, spec_)};
      case Objective::rp:
        return rp_energy_with_gradient(bank, *rp_, spec_);
      case Objective::ap_alternating:
        return ap_energy_alternating_with_gradient(bank, *ap_, spec_);
      case Objective::ap_unrolled: {
        auto un = ap_energy_unrolled_with_gradient(bank, *ap_, spec_);
        stepped_p_ = std::move(un.stepped_p);
        return {un.value, std::move(un.weight_grad)};
      }
      case Objective::adversarial:
        return projected_energy_with_gradient(bank, p_, spec_);
      case Objective::group:
        return group_energy_with_gradient(bank, *group_, spec_);
    }
    return {};
  }

  /// Objective at `bank` under the projection used by the last evaluate().
  double value_at(const NeuronBank& bank) const {
    switch (cfg_.objective) {
      case Objective::plain:
      case Objective::half_space:
        return energy(bank, spec_);
      case Objective::rp:
        return rp_energy(bank, *rp_, spec_);
      case Objective::ap_alternating:
        return projected_energy(bank, ap_->p, spec_);
      case Objective::ap_unrolled:
        return ap_energy_unrolled(bank, *ap_, spec_);
      case Objective::adversarial:
        return projected_energy(bank, p_, spec_);
      case Objective::group:
        return group_energy(bank, *group_, spec_);
    }
    return 0.0;
  }

  /// Post-step updates: projection redraws, AP commit, adversarial ascent.
  void after_step(const NeuronBank& bank) {
    switch (cfg_.objective) {
      case Objective::rp:
        rp_->tick();
        break;
      case Objective::ap_unrolled:
        ap_commit_unrolled(*ap_, std::move(stepped_p_));
        break;
      case Objective::adversarial:
        p_ = adversarial_step(bank, p_, spec_, cfg_.adversarial_lr);
        break;
      default:
        break;
    }
  }

 private:
  MinimizeConfig cfg_;
  EnergySpec spec_;
  std::optional<ProjectionSet> rp_;
  std::optional<ApState> ap_;
  std::optional<GroupScheme> group_;
  Matrix p_;
  Matrix stepped_p_;
};

inline double value_or_inf(const ObjectiveState& obj, const NeuronBank& bank) {
  try {
    const double v = obj.value_at(bank);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const DegenerateDistance&) {
    return std::numeric_limits<double>::infinity();
  } catch (const DegenerateProjection&) {
    return std::numeric_limits<double>::infinity();
  } catch (const DegenerateRow&) {
    return std::numeric_limits<double>::infinity();
  }
}

/// Steps smaller than this cannot move a unit vector in double precision.
inline constexpr double kMinStep = 1e-18;

}  // namespace detail

/// Projected gradient descent on the sphere: w <- normalize(w - lr * grad).
/// The step is halved (for the rest of the run) whenever it would increase
/// the objective. The trace records the full-space energy at every iterate.
inline MinimizeResult minimize(const NeuronBank& init, const MinimizeConfig& cfg, const EnergySpec& spec) {
  cfg.validate();
  detail::check_spec(spec);
  const EnergySpec full{spec.s, false, false};
  NeuronBank bank(init.unit_rows());
  detail::ObjectiveState obj(cfg, spec, bank.dim());
  MinimizeResult out;
  double lr = cfg.lr;

  for (std::size_t it = 0;; ++it) {
    ValueGrad vg = obj.evaluate(bank);
    if (!std::isfinite(vg.value) || !vg.grad.all_finite()) {
      throw DivergedEnergy("objective became non-finite at iteration " + std::to_string(it) +
                           "; reduce lr");
    }
    // Rows are unit norm, so the raw gradient is already tangential.
    const double gnorm = frobenius_norm(vg.grad);
    const double efull = energy(bank, full);
    if (!std::isfinite(efull)) throw DivergedEnergy("energy became non-finite; reduce lr");
    out.trace.points.push_back({it, efull, vg.value, gnorm});
    if (gnorm < cfg.tol) {
      out.converged = true;
      break;
    }
    if (it >= cfg.max_iters) break;

    NeuronBank next;
    for (;;) {
      next = NeuronBank(rowwise_normalize(bank.weights() - lr * vg.grad));
      if (detail::value_or_inf(obj, next) <= vg.value) break;
      lr *= 0.5;
      if (lr < detail::kMinStep) break;
    }
    if (lr < detail::kMinStep) break;  // no descent direction left at machine precision
    bank = std::move(next);
    obj.after_step(bank);
  }
  out.bank = std::move(bank);
  out.final_lr = lr;
  return out;
}

}  // namespace comhe

#endif  // COMHE_MINIMIZER_HPP
