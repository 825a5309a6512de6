#ifndef COMHE_PROJECTION_HPP
#define COMHE_PROJECTION_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "comhe/energy.hpp"
#include "comhe/numkit/random.hpp"
#include "comhe/numkit/tape.hpp"

namespace comhe {

enum class Aggregation { mean, max };

struct ValueGrad {
  double value = 0.0;
  Matrix grad;
};

/// C projection matrices of shape proj_dim x input_dim, redrawn from N(0,1)
/// every `reinit_period` uses (0 disables redraws).
class ProjectionSet {
 public:
  ProjectionSet(std::size_t views, std::size_t proj_dim, std::size_t input_dim,
                Aggregation aggregation = Aggregation::mean, std::size_t reinit_period = 1000,
                std::uint64_t seed = 0)
      : views_(views),
        proj_dim_(proj_dim),
        input_dim_(input_dim),
        aggregation_(aggregation),
        reinit_period_(reinit_period),
        seed_(seed) {
    if (views == 0) throw InvalidArgument("projection set needs at least one view");
    if (proj_dim == 0 || proj_dim > input_dim) {
      throw InvalidArgument("projection dimension must be in [1, input dimension]");
    }
    draw();
  }

  /// Fixed matrices that are never redrawn.
  static ProjectionSet fixed(std::vector<Matrix> mats, Aggregation aggregation = Aggregation::mean) {
    if (mats.empty()) throw InvalidArgument("projection set needs at least one view");
    for (const Matrix& m : mats) {
      if (!m.same_shape(mats.front())) throw ShapeMismatch("projection views differ in shape");
    }
    ProjectionSet ps;
    ps.views_ = mats.size();
    ps.proj_dim_ = mats.front().rows();
    ps.input_dim_ = mats.front().cols();
    ps.aggregation_ = aggregation;
    ps.reinit_period_ = 0;
    ps.mats_ = std::move(mats);
    return ps;
  }

  const std::vector<Matrix>& matrices() const { return mats_; }
  std::size_t views() const { return views_; }
  std::size_t proj_dim() const { return proj_dim_; }
  std::size_t input_dim() const { return input_dim_; }
  Aggregation aggregation() const { return aggregation_; }
  std::size_t reinit_period() const { return reinit_period_; }
  std::size_t generation() const { return generation_; }
  std::size_t uses() const { return uses_; }

  /// Records one use; returns true when this use triggered a redraw.
  bool tick() {
    ++uses_;
    if (reinit_period_ != 0 && uses_ % reinit_period_ == 0) {
      reinitialize();
      return true;
    }
    return false;
  }

  void reinitialize() {
    ++generation_;
    draw();
  }

 private:
  ProjectionSet() = default;

  void draw() {
    mats_.clear();
    for (std::size_t c = 0; c < views_; ++c) {
      mats_.push_back(
          gaussian_matrix(proj_dim_, input_dim_, derive_seed(derive_seed(seed_, generation_), c)));
    }
  }

  std::size_t views_ = 0;
  std::size_t proj_dim_ = 0;
  std::size_t input_dim_ = 0;
  Aggregation aggregation_ = Aggregation::mean;
  std::size_t reinit_period_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t generation_ = 0;
  std::size_t uses_ = 0;
  std::vector<Matrix> mats_;
};

enum class ApMode { alternating, unrolled };

/// Cosine form compares inner products of normalized vectors; angle form
/// compares the angles themselves through a clamped arccos.
enum class AngleForm { cosine, angle };

/// Angle-preserving projection state (single view).
struct ApState {
  Matrix p;
  double inner_lr = 0.01;
  std::size_t inner_steps = 1;
  ApMode mode = ApMode::unrolled;
  std::size_t update_every = 10;
  AngleForm form = AngleForm::cosine;
  std::size_t reinit_period = 1000;  ///< 0 disables random redraws
  std::uint64_t seed = 0;
  std::size_t calls = 0;
  std::size_t generation = 0;

  static ApState random(std::size_t proj_dim, std::size_t input_dim, std::uint64_t seed,
                        ApMode mode = ApMode::unrolled) {
    if (proj_dim == 0 || proj_dim > input_dim) {
      throw InvalidArgument("projection dimension must be in [1, input dimension]");
    }
    ApState s;
    s.p = gaussian_matrix(proj_dim, input_dim, derive_seed(seed, 0));
    s.mode = mode;
    s.seed = seed;
    return s;
  }

  void validate() const {
    if (!(inner_lr >= 0.0)) throw InvalidArgument("AP inner learning rate must be >= 0");
    if (inner_steps == 0) throw InvalidArgument("AP needs at least one inner step");
    if (update_every == 0) throw InvalidArgument("AP update_every must be >= 1");
  }

  /// Redraws P when the call counter crosses the reinit period.
  void maybe_reinitialize() {
    if (reinit_period != 0 && calls > 0 && calls % reinit_period == 0) {
      ++generation;
      p = gaussian_matrix(p.rows(), p.cols(), derive_seed(seed, generation));
    }
  }
};

/// Diagonal 0/1 channel masks, one per group.
class GroupScheme {
 public:
  GroupScheme(std::vector<std::vector<double>> diagonals, bool require_partition = false)
      : diagonals_(std::move(diagonals)) {
    if (diagonals_.empty()) throw InvalidArgument("group scheme needs at least one mask");
    const std::size_t dim = diagonals_.front().size();
    std::vector<double> cover(dim, 0.0);
    for (const auto& d : diagonals_) {
      if (d.size() != dim) throw ShapeMismatch("group masks differ in length");
      for (std::size_t k = 0; k < dim; ++k) {
        if (d[k] != 0.0 && d[k] != 1.0) throw InvalidArgument("group mask entries must be 0 or 1");
        cover[k] += d[k];
      }
    }
    if (require_partition) {
      for (double c : cover) {
        if (c != 1.0) throw InvalidArgument("group masks do not sum to the identity");
      }
    }
  }

  /// Consecutive channel blocks of `group_size`; the last block may be smaller.
  static GroupScheme consecutive(std::size_t dim, std::size_t group_size = 8) {
    if (group_size == 0) throw InvalidArgument("group size must be >= 1");
    std::vector<std::vector<double>> diagonals;
    for (std::size_t start = 0; start < dim; start += group_size) {
      std::vector<double> d(dim, 0.0);
      for (std::size_t k = start; k < std::min(dim, start + group_size); ++k) d[k] = 1.0;
      diagonals.push_back(std::move(d));
    }
    return GroupScheme(std::move(diagonals), true);
  }

  std::size_t groups() const { return diagonals_.size(); }
  std::size_t dim() const { return diagonals_.front().size(); }
  const std::vector<double>& diagonal(std::size_t c) const { return diagonals_[c]; }

  Matrix mask_matrix(std::size_t c) const {
    Matrix m(dim(), dim());
    for (std::size_t k = 0; k < dim(); ++k) m(k, k) = diagonals_[c][k];
    return m;
  }

 private:
  std::vector<std::vector<double>> diagonals_;
};

/// Left (dimension) and right (neuron-count) projections for a weight
/// matrix W of shape m x n whose columns are neurons.
struct BilateralState {
  Matrix p1;  ///< r x m
  Matrix p2;  ///< n x r
  bool low_rank_mode = false;

  static BilateralState random(std::size_t m, std::size_t n, std::size_t r, std::uint64_t seed) {
    return {gaussian_matrix(r, m, derive_seed(seed, 1)), gaussian_matrix(n, r, derive_seed(seed, 2)),
            false};
  }
};

/// Condition numbers above this make the low-rank core unusable.
inline constexpr double kMaxCoreCondition = 1e12;

namespace detail {

template <class F>
auto as_projection_error(F&& f) {
  try {
    return f();
  } catch (const DegenerateRow& e) {
    throw DegenerateProjection(e.what());
  } catch (const DegenerateDistance& e) {
    throw DegenerateProjection(e.what());
  }
}

inline Matrix offdiag_mask(std::size_t n) {
  Matrix m(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 0.0;
  return m;
}

inline void require_input_dim(const Matrix& weights, const Matrix& p) {
  if (p.cols() != weights.cols()) {
    throw ShapeMismatch("projection expects input dimension " + std::to_string(p.cols()) +
                        ", bank has " + std::to_string(weights.cols()));
  }
}

}  // namespace detail

// ---- tape builders -----------------------------------------------------------

namespace ad {

/// Energy of normalize(unit_rows * P^T).
inline Var projected_energy(Var unit_rows, Var p, const EnergySpec& spec) {
  return comhe::detail::as_projection_error([&] {
    return energy_node(rowwise_normalize(matmul(unit_rows, transpose(p))), spec);
  });
}

inline Var aggregate(const std::vector<Var>& views, Aggregation aggregation) {
  if (aggregation == Aggregation::max) return max(views);
  return scale(add_n(views), 1.0 / static_cast<double>(views.size()));
}

inline Var rp_energy(Var raw_rows, const ProjectionSet& ps, const EnergySpec& spec) {
  Tape& t = *raw_rows.tape;
  Var unit = rowwise_normalize(raw_rows);
  std::vector<Var> views;
  for (const Matrix& p : ps.matrices()) views.push_back(projected_energy(unit, t.constant(p), spec));
  return aggregate(views, ps.aggregation());
}

/// Σ_{i≠j} (c(ŵ_i, ŵ_j) - c(Pŵ_i, Pŵ_j))^2, c = cosine or angle.
inline Var ap_loss(Var raw_rows, Var p, AngleForm form = AngleForm::cosine) {
  Tape& t = *raw_rows.tape;
  return comhe::detail::as_projection_error([&] {
    Var unit = rowwise_normalize(raw_rows);
    Var proj = rowwise_normalize(matmul(unit, transpose(p)));
    Var before = matmul(unit, transpose(unit));
    Var after = matmul(proj, transpose(proj));
    if (form == AngleForm::angle) {
      before = arccos(before);
      after = arccos(after);
    }
    Var diff = hadamard(sub(before, after), t.constant(comhe::detail::offdiag_mask(raw_rows.rows())));
    return sum(hadamard(diff, diff));
  });
}

struct UnrolledNodes {
  Var energy;
  Var stepped_p;
};

/// Projected energy at P' = P - lr * dL_P/dP, with P' kept symbolic so the
/// energy's gradient with respect to the weights includes the path through P'.
/// `p` must be a leaf (or depend on one) for the inner gradient to exist.
inline UnrolledNodes ap_unrolled_energy(Var raw_rows, Var p, double inner_lr, AngleForm form,
                                        const EnergySpec& spec) {
  Tape& t = *raw_rows.tape;
  Var loss = ap_loss(raw_rows, p, form);
  Var inner = grad(t, loss, {p})[0];
  Var stepped = sub(p, scale(inner, inner_lr));
  Var unit = rowwise_normalize(raw_rows);
  return {projected_energy(unit, stepped, spec), stepped};
}

inline Var group_energy(Var raw_rows, const GroupScheme& gs, const EnergySpec& spec) {
  Tape& t = *raw_rows.tape;
  Var unit = rowwise_normalize(raw_rows);
  std::vector<Var> views;
  for (std::size_t c = 0; c < gs.groups(); ++c)
    views.push_back(projected_energy(unit, t.constant(gs.mask_matrix(c)), spec));
  return aggregate(views, Aggregation::mean);
}

/// Energies of the columns of P1 W and of W P2, summed. `w_cols` is m x n
/// with neurons as columns.
inline Var bilateral_energy(Var w_cols, const BilateralState& bs, const EnergySpec& spec) {
  Tape& t = *w_cols.tape;
  return comhe::detail::as_projection_error([&] {
    Var left = transpose(matmul(t.constant(bs.p1), w_cols));   // n x r, rows = columns of Y1
    Var right = transpose(matmul(w_cols, t.constant(bs.p2)));  // r x m, rows = columns of Y2
    return add(energy_of_raw(left, spec), energy_of_raw(right, spec));
  });
}

}  // namespace ad

// ---- random projection -------------------------------------------------------

/// Mean (or max) over views of the energy of normalize(P_c ŵ_i).
inline double rp_energy(const NeuronBank& bank, const ProjectionSet& ps, const EnergySpec& spec) {
  detail::require_input_dim(bank.weights(), ps.matrices().front());
  const Matrix unit = bank.unit_rows();
  return detail::as_projection_error([&] {
    double best = 0.0, total = 0.0;
    for (std::size_t c = 0; c < ps.views(); ++c) {
      const double e = unit_energy(rowwise_normalize(matmul_nt(unit, ps.matrices()[c])), spec);
      total += e;
      if (c == 0 || e > best) best = e;
    }
    return ps.aggregation() == Aggregation::max ? best : total / static_cast<double>(ps.views());
  });
}

inline ValueGrad rp_energy_with_gradient(const NeuronBank& bank, const ProjectionSet& ps,
                                         const EnergySpec& spec) {
  detail::require_input_dim(bank.weights(), ps.matrices().front());
  ad::Tape tape;
  ad::Var w = tape.leaf(bank.weights());
  ad::Var e = ad::rp_energy(w, ps, spec);
  return {e.value().value(), ad::backward(tape, e)[w]};
}

/// Energy of the bank under a single projection matrix.
inline double projected_energy(const NeuronBank& bank, const Matrix& p, const EnergySpec& spec) {
  detail::require_input_dim(bank.weights(), p);
  const Matrix unit = bank.unit_rows();
  return detail::as_projection_error(
      [&] { return unit_energy(rowwise_normalize(matmul_nt(unit, p)), spec); });
}

inline ValueGrad projected_energy_with_gradient(const NeuronBank& bank, const Matrix& p,
                                                const EnergySpec& spec) {
  detail::require_input_dim(bank.weights(), p);
  ad::Tape tape;
  ad::Var w = tape.leaf(bank.weights());
  ad::Var e = ad::projected_energy(ad::rowwise_normalize(w), tape.constant(p), spec);
  return {e.value().value(), ad::backward(tape, e)[w]};
}

// ---- angle-preserving projection --------------------------------------------

inline double ap_loss(const NeuronBank& bank, const Matrix& p, AngleForm form = AngleForm::cosine) {
  detail::require_input_dim(bank.weights(), p);
  ad::Tape tape;
  return ad::ap_loss(tape.constant(bank.weights()), tape.constant(p), form).value().value();
}

/// dL_P/dP.
inline Matrix ap_loss_gradient(const NeuronBank& bank, const Matrix& p,
                               AngleForm form = AngleForm::cosine) {
  detail::require_input_dim(bank.weights(), p);
  ad::Tape tape;
  ad::Var pv = tape.leaf(p);
  ad::Var loss = ad::ap_loss(tape.constant(bank.weights()), pv, form);
  return ad::backward(tape, loss)[pv];
}

/// Plain gradient descent on L_P with respect to P.
inline Matrix ap_descend(const NeuronBank& bank, Matrix p, double lr, std::size_t steps,
                         AngleForm form = AngleForm::cosine) {
  for (std::size_t k = 0; k < steps; ++k) p = p - lr * ap_loss_gradient(bank, p, form);
  return p;
}

namespace detail {
inline void require_mode(const ApState& ap, ApMode mode) {
  ap.validate();
  if (ap.mode != mode) throw InvalidArgument("AP state is in the wrong mode for this call");
}

/// Advances the alternating schedule by one call.
inline void alternating_schedule(const NeuronBank& bank, ApState& ap) {
  ap.maybe_reinitialize();
  if (ap.calls % ap.update_every == 0) ap.p = ap_descend(bank, ap.p, ap.inner_lr, ap.inner_steps, ap.form);
  ++ap.calls;
}
}  // namespace detail

/// Every `update_every` calls, takes `inner_steps` descent steps on L_P;
/// returns the projected energy under the current P.
inline double ap_energy_alternating(const NeuronBank& bank, ApState& ap, const EnergySpec& spec) {
  detail::require_mode(ap, ApMode::alternating);
  detail::require_input_dim(bank.weights(), ap.p);
  detail::alternating_schedule(bank, ap);
  return projected_energy(bank, ap.p, spec);
}

inline ValueGrad ap_energy_alternating_with_gradient(const NeuronBank& bank, ApState& ap,
                                                     const EnergySpec& spec) {
  detail::require_mode(ap, ApMode::alternating);
  detail::require_input_dim(bank.weights(), ap.p);
  detail::alternating_schedule(bank, ap);
  return projected_energy_with_gradient(bank, ap.p, spec);
}

struct UnrolledEvaluation {
  double value = 0.0;
  Matrix weight_grad;  ///< includes the second-order path through the inner step
  Matrix stepped_p;    ///< P - lr * dL_P/dP
};

inline UnrolledEvaluation ap_energy_unrolled_with_gradient(const NeuronBank& bank, const ApState& ap,
                                                           const EnergySpec& spec) {
  detail::require_mode(ap, ApMode::unrolled);
  detail::require_input_dim(bank.weights(), ap.p);
  if (ap.inner_steps != 1) throw InvalidArgument("unrolled AP supports exactly one inner step");
  ad::Tape tape;
  ad::Var w = tape.leaf(bank.weights());
  ad::Var p = tape.leaf(ap.p);
  auto nodes = ad::ap_unrolled_energy(w, p, ap.inner_lr, ap.form, spec);
  return {nodes.energy.value().value(), ad::backward(tape, nodes.energy)[w],
          nodes.stepped_p.value()};
}

/// Projected energy at P' = P - lr * dL_P/dP.
inline double ap_energy_unrolled(const NeuronBank& bank, const ApState& ap, const EnergySpec& spec) {
  detail::require_mode(ap, ApMode::unrolled);
  detail::require_input_dim(bank.weights(), ap.p);
  const Matrix stepped = ap.p - ap.inner_lr * ap_loss_gradient(bank, ap.p, ap.form);
  return projected_energy(bank, stepped, spec);
}

/// Commits an unrolled evaluation: P follows its own inner step, and the
/// random redraw schedule advances.
inline void ap_commit_unrolled(ApState& ap, Matrix stepped_p) {
  ap.p = std::move(stepped_p);
  ++ap.calls;
  ap.maybe_reinitialize();
}

// ---- adversarial projection --------------------------------------------------

/// d(projected energy)/dP.
inline Matrix adversarial_gradient(const NeuronBank& bank, const Matrix& p, const EnergySpec& spec) {
  detail::require_input_dim(bank.weights(), p);
  ad::Tape tape;
  ad::Var pv = tape.leaf(p);
  ad::Var e = ad::projected_energy(ad::rowwise_normalize(tape.constant(bank.weights())), pv, spec);
  return ad::backward(tape, e)[pv];
}

/// One ascent step for the max player, then P is rescaled back to its
/// previous Frobenius norm (the projected energy is invariant to a global
/// scale of P, so the objective is unchanged by the rescale).
inline Matrix adversarial_step(const NeuronBank& bank, const Matrix& p, const EnergySpec& spec,
                               double lr_p) {
  if (!(lr_p >= 0.0)) throw InvalidArgument("adversarial step size must be >= 0");
  if (lr_p == 0.0) return p;
  Matrix next = p + lr_p * adversarial_gradient(bank, p, spec);
  const double before = frobenius_norm(p);
  const double after = frobenius_norm(next);
  if (!(after > 0.0) || !std::isfinite(after)) throw DegenerateProjection("ascent step collapsed P");
  return (before / after) * next;
}

// ---- group -----------------------------------------------------------------------

inline double group_energy(const NeuronBank& bank, const GroupScheme& gs, const EnergySpec& spec) {
  if (gs.dim() != bank.dim()) throw ShapeMismatch("group masks do not match neuron dimension");
  const Matrix unit = bank.unit_rows();
  double total = 0.0;
  for (std::size_t c = 0; c < gs.groups(); ++c) {
    Matrix masked = unit;
    for (std::size_t i = 0; i < masked.rows(); ++i)
      for (std::size_t k = 0; k < masked.cols(); ++k) masked(i, k) *= gs.diagonal(c)[k];
    total += detail::as_projection_error([&] { return unit_energy(rowwise_normalize(masked), spec); });
  }
  return total / static_cast<double>(gs.groups());
}

inline ValueGrad group_energy_with_gradient(const NeuronBank& bank, const GroupScheme& gs,
                                            const EnergySpec& spec) {
  if (gs.dim() != bank.dim()) throw ShapeMismatch("group masks do not match neuron dimension");
  ad::Tape tape;
  ad::Var w = tape.leaf(bank.weights());
  ad::Var e = ad::group_energy(w, gs, spec);
  return {e.value().value(), ad::backward(tape, e)[w]};
}

// ---- bilateral -------------------------------------------------------------------

/// (energy of the columns of P1 W, energy of the columns of W P2).
inline std::pair<double, double> bilateral_energies(const Matrix& w, const BilateralState& bs,
                                                    const EnergySpec& spec) {
  if (bs.p1.cols() != w.rows() || bs.p2.rows() != w.cols()) {
    throw ShapeMismatch("bilateral projections do not conform to W " + w.shape_string());
  }
  return detail::as_projection_error([&] {
    const double left = unit_energy(rowwise_normalize(transpose(matmul(bs.p1, w))), spec);
    const double right = unit_energy(rowwise_normalize(transpose(matmul(w, bs.p2))), spec);
    return std::make_pair(left, right);
  });
}

inline ValueGrad bilateral_energy_with_gradient(const Matrix& w, const BilateralState& bs,
                                                const EnergySpec& spec) {
  if (bs.p1.cols() != w.rows() || bs.p2.rows() != w.cols()) {
    throw ShapeMismatch("bilateral projections do not conform to W " + w.shape_string());
  }
  ad::Tape tape;
  ad::Var wv = tape.leaf(w);
  ad::Var e = ad::bilateral_energy(wv, bs, spec);
  return {e.value().value(), ad::backward(tape, e)[wv]};
}

namespace detail {
inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

inline Matrix from_eigen(const Eigen::MatrixXd& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}
}  // namespace detail

/// 2-norm condition number via SVD; infinity for singular input.
inline double condition_number(const Matrix& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(detail::to_eigen(a));
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 ? smax / smin : INFINITY;
}

/// W̃ = Y2 (P1 Y2)^-1 Y1, the low-rank reconstruction from both projections.
inline Matrix lowrank_reconstruct(const BilateralState& bs, const Matrix& y1, const Matrix& y2) {
  const Matrix core = matmul(bs.p1, y2);
  if (core.rows() != core.cols()) throw ShapeMismatch("P1 Y2 must be square, got " + core.shape_string());
  if (y1.rows() != core.rows()) throw ShapeMismatch("Y1 rows must match the core size");
  const double cond = condition_number(core);
  if (!(cond <= kMaxCoreCondition)) {
    std::ostringstream msg;
    msg << "condition number of P1 Y2 is " << cond;
    throw SingularCore(msg.str());
  }
  const Eigen::MatrixXd solved =
      detail::to_eigen(core).fullPivLu().solve(detail::to_eigen(y1));  // core^-1 Y1
  return matmul(y2, detail::from_eigen(solved));
}

// ---- shared projection basis -------------------------------------------------

/// Layers with equal input dimension share one ProjectionSet instance.
class SharedBasisRegistry {
 public:
  SharedBasisRegistry(const std::vector<std::size_t>& layer_dims, std::size_t proj_dim,
                      std::size_t views = 5, Aggregation aggregation = Aggregation::mean,
                      std::size_t reinit_period = 1000, std::uint64_t seed = 0) {
    for (std::size_t dim : layer_dims) {
      auto it = by_dim_.find(dim);
      if (it == by_dim_.end()) {
        it = by_dim_
                 .emplace(dim, std::make_shared<ProjectionSet>(views, proj_dim, dim, aggregation,
                                                               reinit_period, derive_seed(seed, dim)))
                 .first;
      }
      layers_.push_back(it->second);
    }
  }

  std::shared_ptr<ProjectionSet> for_layer(std::size_t layer) const { return layers_.at(layer); }
  std::shared_ptr<ProjectionSet> for_dim(std::size_t dim) const { return by_dim_.at(dim); }
  std::size_t distinct() const { return by_dim_.size(); }
  std::size_t layers() const { return layers_.size(); }

  /// One training iteration: every distinct set records exactly one use.
  void tick() {
    for (auto& [dim, ps] : by_dim_) ps->tick();
  }

  void reinitialize_all() {
    for (auto& [dim, ps] : by_dim_) ps->reinitialize();
  }

 private:
  std::map<std::size_t, std::shared_ptr<ProjectionSet>> by_dim_;
  std::vector<std::shared_ptr<ProjectionSet>> layers_;
};

}  // namespace comhe

#endif  // COMHE_PROJECTION_HPP
