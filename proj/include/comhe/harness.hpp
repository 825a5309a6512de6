#ifndef COMHE_HARNESS_HPP
#define COMHE_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "comhe/projection.hpp"
#include "json.hpp"

namespace comhe::harness {

using json = nlohmann::ordered_json;

// ---- data --------------------------------------------------------------------

struct Dataset {
  Matrix x_train;
  std::vector<std::size_t> y_train;
  Matrix x_test;
  std::vector<std::size_t> y_test;
  std::size_t classes = 0;
  std::size_t dim = 0;
};

/// Gaussian blobs around random class centers, projected onto the unit
/// sphere. `spread` is the per-coordinate noise relative to 1/sqrt(dim);
/// small spread means a wide margin. Each class is split 80/20.
inline Dataset make_dataset(std::size_t classes, std::size_t samples_per_class, std::size_t dim,
                            std::uint64_t seed, double spread = 1.0) {
  if (classes < 4) throw InvalidArgument("dataset needs at least 4 classes");
  if (samples_per_class < 5) throw InvalidArgument("need at least 5 samples per class for the split");
  if (dim < 2) throw InvalidArgument("dataset dimension must be >= 2");
  if (!(spread >= 0.0)) throw InvalidArgument("spread must be >= 0");
  Rng rng(derive_seed(seed, 0xda7a));
  std::normal_distribution<double> normal;
  const Matrix centers = random_unit_rows(classes, dim, rng);
  const double noise = spread / std::sqrt(static_cast<double>(dim));
  const std::size_t n_train = samples_per_class * 4 / 5;
  const std::size_t n_test = samples_per_class - n_train;

  Dataset ds;
  ds.classes = classes;
  ds.dim = dim;
  ds.x_train = Matrix(classes * n_train, dim);
  ds.x_test = Matrix(classes * n_test, dim);
  std::size_t tr = 0, te = 0;
  std::vector<double> x(dim);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      for (std::size_t k = 0; k < dim; ++k) x[k] = centers(c, k) + noise * normal(rng);
      const double n = norm(x);
      Matrix& dst = s < n_train ? ds.x_train : ds.x_test;
      const std::size_t row = s < n_train ? tr++ : te++;
      for (std::size_t k = 0; k < dim; ++k) dst(row, k) = x[k] / n;
      (s < n_train ? ds.y_train : ds.y_test).push_back(c);
    }
  }
  return ds;
}

// ---- model -------------------------------------------------------------------

/// Layer widths from input to classes. Every layer but the last is hidden
/// and takes part in energy regularization.
struct MlpSpec {
  std::vector<std::size_t> widths{16, 64, 64, 64, 8};

  std::size_t layers() const { return widths.size() - 1; }
  std::size_t hidden() const { return widths.size() - 2; }

  void validate() const {
    if (widths.size() < 4) throw InvalidArgument("MLP needs at least two hidden layers");
    for (std::size_t w : widths)
      if (w == 0) throw InvalidArgument("layer widths must be positive");
  }
};

struct Params {
  std::vector<Matrix> w;  ///< layer l: widths[l+1] x widths[l], rows are neurons
  std::vector<Matrix> b;  ///< layer l: 1 x widths[l+1]
};

/// He-style initialization N(0, 2/fan_in), zero biases.
inline Params init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, 1));
  Params p;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const double scale = std::sqrt(2.0 / static_cast<double>(spec.widths[l]));
    p.w.push_back(gaussian_matrix(spec.widths[l + 1], spec.widths[l], rng, scale));
    p.b.emplace_back(1, spec.widths[l + 1]);
  }
  return p;
}

/// Logits for a batch, evaluated without a tape.
inline Matrix predict_logits(const std::vector<Matrix>& w, const std::vector<Matrix>& b, const Matrix& x) {
  Matrix h = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Matrix z = matmul_nt(h, w[l]);
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) {
        z(i, j) += b[l](0, j);
        if (l + 1 < w.size() && z(i, j) < 0.0) z(i, j) = 0.0;
      }
    h = std::move(z);
  }
  return h;
}

inline double error_rate(const Matrix& logits, const std::vector<std::size_t>& labels) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    wrong += best != labels[i];
  }
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

inline ad::Var forward_logits(const std::vector<ad::Var>& w, const std::vector<ad::Var>& b, ad::Var x) {
  ad::Var h = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    h = ad::add_row(ad::matmul(h, ad::transpose(w[l])), b[l]);
    if (l + 1 < w.size()) h = ad::relu(h);
  }
  return h;
}

/// Normalized half-space s=1 energy: the logged measurement for every arm.
inline double logged_energy(const Matrix& neurons) {
  return unit_energy(rowwise_normalize(neurons), {1.0, true, true});
}

// ---- configuration -----------------------------------------------------------

enum class Regularizer { none, mhe, hs_mhe, rp, ap_alternating, ap_unrolled, adversarial, group, bilateral };

inline const char* to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::mhe: return "mhe";
    case Regularizer::hs_mhe: return "hs_mhe";
    case Regularizer::rp: return "rp";
    case Regularizer::ap_alternating: return "ap_alternating";
    case Regularizer::ap_unrolled: return "ap_unrolled";
    case Regularizer::adversarial: return "adversarial";
    case Regularizer::group: return "group";
    case Regularizer::bilateral: return "bilateral";
  }
  return "?";
}

inline constexpr Regularizer kAllRegularizers[] = {
    Regularizer::none,        Regularizer::mhe,         Regularizer::hs_mhe,
    Regularizer::rp,          Regularizer::ap_alternating, Regularizer::ap_unrolled,
    Regularizer::adversarial, Regularizer::group,       Regularizer::bilateral};

inline std::optional<Regularizer> regularizer_from_string(const std::string& name) {
  for (Regularizer r : kAllRegularizers)
    if (name == to_string(r)) return r;
  return std::nullopt;
}

struct TrainConfig {
  Regularizer regularizer = Regularizer::none;
  double reg_weight = 1.0;
  double weight_decay = 1e-4;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double s = 2.0;

  std::size_t proj_dim = 8;  ///< k+1 for projection-based arms
  std::size_t views = 5;
  std::size_t reinit_period = 10;  ///< in steps; short runs need frequent redraws
  double ap_inner_lr = 0.01;
  std::size_t ap_reinit_period = 1000;
  std::size_t ap_update_every = 10;
  double adversarial_lr = 0.01;
  std::size_t group_size = 8;
  std::size_t bilateral_rank = 8;
  double rotation_lr = 0.0;  ///< 0 means: same as lr

  void validate() const {
    if (!(reg_weight >= 0.0)) throw InvalidArgument("reg_weight must be >= 0");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
    if (!(lr > 0.0)) throw InvalidArgument("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    if (epochs == 0) throw InvalidArgument("epochs must be >= 1");
    if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
    if (seeds.empty()) throw InvalidArgument("need at least one seed");
    if (!(s >= 0.0)) throw InvalidArgument("s must be >= 0");
    if (!(rotation_lr >= 0.0)) throw InvalidArgument("rotation_lr must be >= 0");
    if (reinit_period == 0 || ap_reinit_period == 0) throw InvalidArgument("reinit periods must be >= 1");
  }

  /// Step size for epoch e: constant, halved at 1/2 and again at 3/4 of training.
  double lr_at(std::size_t epoch) const {
    double r = lr;
    if (2 * epoch >= epochs) r *= 0.5;
    if (4 * epoch >= 3 * epochs) r *= 0.5;
    return r;
  }
};

// ---- results -----------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_error = 0.0;
  std::vector<double> layer_energy;
  double total_energy = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  double test_error = 0.0;
  std::vector<EpochRecord> epochs;     ///< epoch 0 is the initialization
  std::vector<double> step_energy;     ///< total logged energy after every step
};

struct ArmSummary {
  std::string arm;
  std::vector<RunResult> runs;

  double mean_error() const {
    double m = 0.0;
    for (const auto& r : runs) m += r.test_error;
    return m / static_cast<double>(runs.size());
  }
  double std_error() const {
    if (runs.size() < 2) return 0.0;
    const double m = mean_error();
    double v = 0.0;
    for (const auto& r : runs) v += (r.test_error - m) * (r.test_error - m);
    return std::sqrt(v / static_cast<double>(runs.size() - 1));
  }
  double final_energy_mean() const {
    double m = 0.0;
    for (const auto& r : runs) m += r.epochs.back().total_energy;
    return m / static_cast<double>(runs.size());
  }

  json to_json() const {
    json j;
    j["arm"] = arm;
    json seeds = json::array();
    for (const auto& r : runs) seeds.push_back(r.seed);
    j["seeds"] = seeds;
    j["mean_error"] = mean_error();
    j["std_error"] = std_error();
    j["final_energy_mean"] = final_energy_mean();
    return j;
  }

  void write_csv(std::ostream& os) const {
    if (runs.empty()) return;
    const std::size_t layers = runs.front().epochs.front().layer_energy.size();
    os << "seed,iter,train_loss,test_error";
    for (std::size_t l = 0; l < layers; ++l) os << ",energy_layer_" << (l + 1);
    os << ",energy_total\n";
    char buf[64];
    const auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    for (const auto& r : runs) {
      for (const auto& e : r.epochs) {
        os << r.seed << ',' << e.epoch << ',' << num(e.train_loss) << ',' << num(e.test_error);
        for (double v : e.layer_energy) os << ',' << num(v);
        os << ',' << num(e.total_energy) << '\n';
      }
    }
  }
};

// ---- regularizers ------------------------------------------------------------

/// Projection state for every hidden layer of one run.
class RegularizerState {
 public:
  RegularizerState(const MlpSpec& spec, const TrainConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), hidden_(spec.hidden()) {
    const std::uint64_t base = derive_seed(seed, 3);
    std::vector<std::size_t> dims;
    for (std::size_t l = 0; l < hidden_; ++l) dims.push_back(spec.widths[l]);
    switch (cfg.regularizer) {
      case Regularizer::rp:
        registry_.emplace(dims, cfg.proj_dim, cfg.views, Aggregation::mean, cfg.reinit_period, base);
        break;
      case Regularizer::ap_alternating:
      case Regularizer::ap_unrolled:
        for (std::size_t l = 0; l < hidden_; ++l) {
          ApState ap = ApState::random(cfg.proj_dim, dims[l], derive_seed(base, l),
                                       cfg.regularizer == Regularizer::ap_unrolled ? ApMode::unrolled
                                                                                   : ApMode::alternating);
          ap.inner_lr = cfg.ap_inner_lr;
          ap.update_every = cfg.ap_update_every;
          ap.reinit_period = cfg.ap_reinit_period;
          ap_.push_back(std::move(ap));
        }
        stepped_.resize(hidden_);
        break;
      case Regularizer::adversarial:
        for (std::size_t l = 0; l < hidden_; ++l) {
          if (cfg.proj_dim == 0 || cfg.proj_dim > dims[l])
            throw InvalidArgument("projection dimension must be in [1, layer input dimension]");
          adv_.push_back(gaussian_matrix(cfg.proj_dim, dims[l], derive_seed(base, l)));
        }
        break;
      case Regularizer::group:
        for (std::size_t l = 0; l < hidden_; ++l) groups_.push_back(GroupScheme::consecutive(dims[l], cfg.group_size));
        break;
      case Regularizer::bilateral:
        for (std::size_t l = 0; l < hidden_; ++l) {
          const std::size_t m = dims[l], n = spec.widths[l + 1];
          if (cfg.bilateral_rank == 0 || cfg.bilateral_rank > std::min(m, n))
            throw InvalidArgument("bilateral rank must be in [1, min(layer dims)]");
          bilateral_.push_back(BilateralState::random(m, n, cfg.bilateral_rank, derive_seed(base, l)));
        }
        break;
      default:
        break;
    }
  }

  EnergySpec base_spec() const {
    switch (cfg_.regularizer) {
      case Regularizer::mhe: return {cfg_.s, false, true};
      default: return {cfg_.s, true, true};
    }
  }

  /// Schedules that run before the gradient is taken (alternating AP).
  void before_step(const Params& p) {
    if (cfg_.regularizer != Regularizer::ap_alternating) return;
    for (std::size_t l = 0; l < hidden_; ++l) {
      const NeuronBank bank(p.w[l]);
      comhe::detail::alternating_schedule(bank, ap_[l]);
    }
  }

  /// Sum over hidden layers of the regularizer on the tape (null when none).
  std::optional<ad::Var> term(ad::Tape& tape, const std::vector<ad::Var>& w) {
    if (cfg_.regularizer == Regularizer::none) return std::nullopt;
    const EnergySpec spec = base_spec();
    std::vector<ad::Var> terms;
    for (std::size_t l = 0; l < hidden_; ++l) {
      switch (cfg_.regularizer) {
        case Regularizer::mhe:
        case Regularizer::hs_mhe:
          terms.push_back(ad::energy_of_raw(w[l], spec));
          break;
        case Regularizer::rp:
          terms.push_back(ad::rp_energy(w[l], *registry_->for_layer(l), spec));
          break;
        case Regularizer::ap_alternating:
          terms.push_back(ad::projected_energy(ad::rowwise_normalize(w[l]), tape.constant(ap_[l].p), spec));
          break;
        case Regularizer::ap_unrolled: {
          auto nodes = ad::ap_unrolled_energy(w[l], tape.leaf(ap_[l].p), ap_[l].inner_lr, ap_[l].form, spec);
          stepped_[l] = nodes.stepped_p.value();
          terms.push_back(nodes.energy);
          break;
        }
        case Regularizer::adversarial:
          terms.push_back(ad::projected_energy(ad::rowwise_normalize(w[l]), tape.constant(adv_[l]), spec));
          break;
        case Regularizer::group:
          terms.push_back(ad::group_energy(w[l], groups_[l], spec));
          break;
        case Regularizer::bilateral:
          terms.push_back(ad::bilateral_energy(ad::transpose(w[l]), bilateral_[l], spec));
          break;
        default:
          break;
      }
    }
    return ad::add_n(terms);
  }

  /// Post-step updates: projection redraws, AP commit, adversarial ascent.
  void after_step(const Params& p) {
    switch (cfg_.regularizer) {
      case Regularizer::rp:
        registry_->tick();
        break;
      case Regularizer::ap_unrolled:
        for (std::size_t l = 0; l < hidden_; ++l) ap_commit_unrolled(ap_[l], stepped_[l]);
        break;
      case Regularizer::adversarial:
        for (std::size_t l = 0; l < hidden_; ++l)
          adv_[l] = adversarial_step(NeuronBank(p.w[l]), adv_[l], base_spec(), cfg_.adversarial_lr);
        break;
      default:
        break;
    }
  }

 private:
  TrainConfig cfg_;
  std::size_t hidden_;
  std::optional<SharedBasisRegistry> registry_;
  std::vector<ApState> ap_;
  std::vector<Matrix> stepped_;
  std::vector<Matrix> adv_;
  std::vector<GroupScheme> groups_;
  std::vector<BilateralState> bilateral_;
};

// ---- training ----------------------------------------------------------------

struct Batch {
  Matrix x;
  std::vector<std::size_t> y;
};

inline Batch gather(const Matrix& x, const std::vector<std::size_t>& y, const std::vector<std::size_t>& idx,
                    std::size_t begin, std::size_t end) {
  Batch b{Matrix(end - begin, x.cols()), {}};
  for (std::size_t i = begin; i < end; ++i) {
    std::copy(x.row(idx[i]).begin(), x.row(idx[i]).end(), b.x.row(i - begin).begin());
    b.y.push_back(y[idx[i]]);
  }
  return b;
}

/// Epoch order shared by every arm with the same seed.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(derive_seed(seed, 2), epoch));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

struct LossGrad {
  double loss = 0.0;
  Params grad;
};

namespace detail {

inline ad::Var weight_decay_term(const std::vector<ad::Var>& w, double wd) {
  std::vector<ad::Var> sq;
  for (ad::Var v : w) sq.push_back(ad::sum(ad::hadamard(v, v)));
  return ad::scale(ad::add_n(sq), 0.5 * wd);
}

inline void momentum_update(Matrix& param, Matrix& velocity, const Matrix& grad, double lr, double mu) {
  auto p = param.data();
  auto v = velocity.data();
  auto g = grad.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    v[k] = mu * v[k] + g[k];
    p[k] -= lr * v[k];
  }
}

inline void require_finite(double loss, std::size_t step) {
  if (!std::isfinite(loss)) throw DivergedLoss("training loss became non-finite at step " + std::to_string(step));
}

}  // namespace detail

/// One training run (one seed, one regularizer arm).
class Trainer {
 public:
  Trainer(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, std::uint64_t seed)
      : spec_(spec), cfg_(cfg), data_(data), seed_(seed), params_(init_params(spec, seed)), reg_(spec, cfg, seed) {
    cfg.validate();
    if (spec.widths.front() != data.dim) throw ShapeMismatch("MLP input width does not match data dimension");
    if (spec.widths.back() != data.classes) throw ShapeMismatch("MLP output width does not match class count");
    for (const Matrix& w : params_.w) vel_w_.emplace_back(w.rows(), w.cols());
    for (const Matrix& b : params_.b) vel_b_.emplace_back(b.rows(), b.cols());
  }

  const Params& params() const { return params_; }
  RegularizerState& regularizer() { return reg_; }

  /// Total loss and its gradient at `p` under the current regularizer state.
  LossGrad loss_and_grad(const Params& p, const Batch& batch) {
    ad::Tape tape;
    std::vector<ad::Var> w, b;
    for (const Matrix& m : p.w) w.push_back(tape.leaf(m));
    for (const Matrix& m : p.b) b.push_back(tape.leaf(m));
    ad::Var loss = ad::softmax_cross_entropy(forward_logits(w, b, tape.constant(batch.x)), batch.y);
    const std::vector<ad::Var> hidden(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(spec_.hidden()));
    if (auto reg = reg_.term(tape, hidden)) loss = ad::add(loss, ad::scale(*reg, cfg_.reg_weight));
    if (cfg_.weight_decay > 0.0) loss = ad::add(loss, detail::weight_decay_term(w, cfg_.weight_decay));
    const ad::Gradient g = ad::backward(tape, loss);
    LossGrad out{loss.value().value(), {}};
    for (ad::Var v : w) out.grad.w.push_back(g[v]);
    for (ad::Var v : b) out.grad.b.push_back(g[v]);
    return out;
  }

  /// One optimizer step on `batch`; returns the total loss before the step.
  double step(const Batch& batch, double lr) {
    reg_.before_step(params_);
    LossGrad lg = loss_and_grad(params_, batch);
    detail::require_finite(lg.loss, steps_);
    for (std::size_t l = 0; l < params_.w.size(); ++l) {
      detail::momentum_update(params_.w[l], vel_w_[l], lg.grad.w[l], lr, cfg_.momentum);
      detail::momentum_update(params_.b[l], vel_b_[l], lg.grad.b[l], lr, cfg_.momentum);
    }
    reg_.after_step(params_);
    ++steps_;
    return lg.loss;
  }

  EpochRecord record(std::size_t epoch, double train_loss) const {
    EpochRecord e{epoch, train_loss, error_rate(predict_logits(params_.w, params_.b, data_.x_test), data_.y_test),
                  {}, 0.0};
    for (std::size_t l = 0; l < spec_.hidden(); ++l) {
      e.layer_energy.push_back(logged_energy(params_.w[l]));
      e.total_energy += e.layer_energy.back();
    }
    return e;
  }

  double total_energy() const {
    double t = 0.0;
    for (std::size_t l = 0; l < spec_.hidden(); ++l) t += logged_energy(params_.w[l]);
    return t;
  }

  RunResult run(bool log_steps = false) {
    RunResult out;
    out.seed = seed_;
    out.epochs.push_back(record(0, std::nan("")));
    const std::size_t n = data_.y_train.size();
    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const auto idx = epoch_order(n, seed_, epoch);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t at = 0; at < n; at += cfg_.batch_size) {
        loss_sum += step(gather(data_.x_train, data_.y_train, idx, at, std::min(n, at + cfg_.batch_size)),
                         cfg_.lr_at(epoch));
        ++batches;
        if (log_steps) out.step_energy.push_back(total_energy());
      }
      out.epochs.push_back(record(epoch + 1, loss_sum / static_cast<double>(batches)));
    }
    out.test_error = out.epochs.back().test_error;
    return out;
  }

 private:
  MlpSpec spec_;
  TrainConfig cfg_;
  const Dataset& data_;
  std::uint64_t seed_;
  Params params_;
  std::vector<Matrix> vel_w_, vel_b_;
  RegularizerState reg_;
  std::size_t steps_ = 0;
};

inline RunResult train_seed(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, std::uint64_t seed,
                            bool log_steps = false) {
  Trainer t(spec, cfg, data, seed);
  return t.run(log_steps);
}

/// All seeds of one arm.
inline ArmSummary train(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, bool log_steps = false) {
  cfg.validate();
  ArmSummary s{to_string(cfg.regularizer), {}};
  for (std::uint64_t seed : cfg.seeds) s.runs.push_back(train_seed(spec, cfg, data, seed, log_steps));
  return s;
}

// ---- rotation training -------------------------------------------------------

/// Classical Gram-Schmidt with one re-orthogonalization pass, row by row,
/// recorded on the tape so gradients flow back to `r`.
inline ad::Var gram_schmidt(ad::Var r) {
  std::optional<ad::Var> q;
  for (std::size_t i = 0; i < r.rows(); ++i) {
    ad::Var v = ad::row_slice(r, i);
    if (q) {
      for (int pass = 0; pass < 2; ++pass) v = ad::sub(v, ad::matmul(ad::matmul(v, ad::transpose(*q)), *q));
    }
    const double n = norm(v.value().data());
    if (!(n >= kNormTolerance)) {
      throw GramSchmidtDegenerate("row " + std::to_string(i) + " collapsed to norm " + std::to_string(n));
    }
    ad::Var u = ad::rowwise_normalize(v);
    q = q ? ad::vstack(*q, u) : u;
  }
  return *q;
}

inline Matrix gram_schmidt(const Matrix& r) {
  ad::Tape tape;
  return gram_schmidt(tape.constant(r)).value();
}

/// Frozen random hidden weights W, learnable per-layer R; the hidden neurons
/// are the rows of W Q^T with Q = GramSchmidt(R). The classifier is trained
/// normally; hidden biases stay at zero.
class RotationTrainer {
 public:
  RotationTrainer(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data, std::uint64_t seed)
      : spec_(spec), cfg_(cfg), data_(data), seed_(seed), frozen_(init_params(spec, seed)) {
    cfg.validate();
    if (spec.widths.front() != data.dim) throw ShapeMismatch("MLP input width does not match data dimension");
    if (spec.widths.back() != data.classes) throw ShapeMismatch("MLP output width does not match class count");
    for (std::size_t l = 0; l < spec.hidden(); ++l) {
      rot_.push_back(Matrix::identity(spec.widths[l]));
      vel_r_.emplace_back(spec.widths[l], spec.widths[l]);
    }
    cls_w_ = frozen_.w.back();
    cls_b_ = frozen_.b.back();
    vel_w_ = Matrix(cls_w_.rows(), cls_w_.cols());
    vel_b_ = Matrix(cls_b_.rows(), cls_b_.cols());
  }

  const std::vector<Matrix>& rotations() const { return rot_; }

  /// Orthonormalized rotation of layer l.
  Matrix orthonormal(std::size_t l) const { return gram_schmidt(rot_[l]); }

  std::vector<Matrix> hidden_neurons() const {
    std::vector<Matrix> out;
    for (std::size_t l = 0; l < spec_.hidden(); ++l) out.push_back(matmul_nt(frozen_.w[l], orthonormal(l)));
    return out;
  }

  struct Grad {
    double loss = 0.0;
    std::vector<Matrix> rot;
    Matrix cls_w, cls_b;
  };

  Grad loss_and_grad(const std::vector<Matrix>& rot, const Matrix& cls_w, const Matrix& cls_b,
                     const Batch& batch) const {
    ad::Tape tape;
    std::vector<ad::Var> r, w, b;
    for (std::size_t l = 0; l < spec_.hidden(); ++l) {
      r.push_back(tape.leaf(rot[l]));
      w.push_back(ad::matmul(tape.constant(frozen_.w[l]), ad::transpose(gram_schmidt(r.back()))));
      b.push_back(tape.constant(frozen_.b[l]));
    }
    ad::Var cw = tape.leaf(cls_w);
    ad::Var cb = tape.leaf(cls_b);
    w.push_back(cw);
    b.push_back(cb);
    ad::Var loss = ad::softmax_cross_entropy(forward_logits(w, b, tape.constant(batch.x)), batch.y);
    if (cfg_.weight_decay > 0.0) loss = ad::add(loss, detail::weight_decay_term({cw}, cfg_.weight_decay));
    const ad::Gradient g = ad::backward(tape, loss);
    Grad out{loss.value().value(), {}, g[cw], g[cb]};
    for (ad::Var v : r) out.rot.push_back(g[v]);
    return out;
  }

  double step(const Batch& batch, double lr) {
    Grad g = loss_and_grad(rot_, cls_w_, cls_b_, batch);
    detail::require_finite(g.loss, steps_);
    const double rlr = cfg_.rotation_lr > 0.0 ? cfg_.rotation_lr * lr / cfg_.lr : lr;
    for (std::size_t l = 0; l < rot_.size(); ++l) detail::momentum_update(rot_[l], vel_r_[l], g.rot[l], rlr, cfg_.momentum);
    detail::momentum_update(cls_w_, vel_w_, g.cls_w, lr, cfg_.momentum);
    detail::momentum_update(cls_b_, vel_b_, g.cls_b, lr, cfg_.momentum);
    ++steps_;
    return g.loss;
  }

  EpochRecord record(std::size_t epoch, double train_loss) const {
    std::vector<Matrix> w = hidden_neurons();
    std::vector<Matrix> b(frozen_.b.begin(), frozen_.b.end() - 1);
    EpochRecord e{epoch, train_loss, 0.0, {}, 0.0};
    for (const Matrix& m : w) {
      e.layer_energy.push_back(logged_energy(m));
      e.total_energy += e.layer_energy.back();
    }
    w.push_back(cls_w_);
    b.push_back(cls_b_);
    e.test_error = error_rate(predict_logits(w, b, data_.x_test), data_.y_test);
    return e;
  }

  RunResult run(bool log_steps = true) {
    RunResult out;
    out.seed = seed_;
    out.epochs.push_back(record(0, std::nan("")));
    const std::size_t n = data_.y_train.size();
    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const auto idx = epoch_order(n, seed_, epoch);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t at = 0; at < n; at += cfg_.batch_size) {
        loss_sum += step(gather(data_.x_train, data_.y_train, idx, at, std::min(n, at + cfg_.batch_size)),
                         cfg_.lr_at(epoch));
        ++batches;
        if (log_steps) {
          double t = 0.0;
          for (const Matrix& m : hidden_neurons()) t += logged_energy(m);
          out.step_energy.push_back(t);
        }
      }
      out.epochs.push_back(record(epoch + 1, loss_sum / static_cast<double>(batches)));
    }
    out.test_error = out.epochs.back().test_error;
    return out;
  }

  const Matrix& classifier_w() const { return cls_w_; }
  const Matrix& classifier_b() const { return cls_b_; }

 private:
  MlpSpec spec_;
  TrainConfig cfg_;
  const Dataset& data_;
  std::uint64_t seed_;
  Params frozen_;
  std::vector<Matrix> rot_, vel_r_;
  Matrix cls_w_, cls_b_, vel_w_, vel_b_;
  std::size_t steps_ = 0;
};

inline ArmSummary train_rotation(const MlpSpec& spec, const TrainConfig& cfg, const Dataset& data,
                                 bool log_steps = true) {
  cfg.validate();
  ArmSummary s{"rotation", {}};
  for (std::uint64_t seed : cfg.seeds) {
    RotationTrainer t(spec, cfg, data, seed);
    s.runs.push_back(t.run(log_steps));
  }
  return s;
}

}  // namespace comhe::harness

#endif  // COMHE_HARNESS_HPP
