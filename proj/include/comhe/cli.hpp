#ifndef COMHE_CLI_HPP
#define COMHE_CLI_HPP

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "comhe/harness.hpp"
#include "comhe/minimizer.hpp"
#include "comhe/theorylab.hpp"
#include "json.hpp"

namespace comhe::cli {

using json = nlohmann::ordered_json;

/// Bad config file, unknown key, wrong type or invalid value. Exit status 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("ConfigError: " + what), message(what) {}
  std::string message;
};

/// The experiment ran but a checked invariant failed. Exit status 1.
class ExperimentFailure : public Error {
 public:
  explicit ExperimentFailure(const std::string& what) : Error("ExperimentFailure: " + what) {}
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

// ---- settings ----------------------------------------------------------------

struct Common {
  std::uint64_t seed = 0;
  std::string out = "comhe_out";
  std::size_t threads = 1;
};

struct MinimizeSettings {
  std::size_t n = 4;
  std::size_t dim = 3;
  double s = 2.0;
  bool half_space = false;
  bool normalized = false;
  MinimizeConfig cfg;
};

struct TrainSettings {
  std::vector<std::string> arms{"none", "hs_mhe", "rp"};
  std::size_t classes = 8;
  std::size_t samples_per_class = 100;
  std::size_t dim = 16;
  double spread = 1.0;
  std::uint64_t data_seed = 7;
  std::vector<std::size_t> hidden{64, 64, 64};
  harness::TrainConfig cfg;
};

struct TheorySettings {
  std::vector<std::string> which{"theorem1", "theorem2", "jll", "lemma1", "orthogonality", "crossover"};
  std::size_t d = 1000;
  std::size_t k = 800;
  double eps = 0.3;
  double angle = 60.0;
  std::size_t trials = 10000;
  double sigma = 1.0;
  std::vector<double> eps_grid{0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9};
};

struct BilateralSettings {
  std::size_t m = 64;
  std::size_t n = 48;
  std::size_t rank = 8;
  std::size_t trials = 20;
  double s = 2.0;
};

struct Settings {
  Common common;
  MinimizeSettings minimize;
  TrainSettings train;
  TheorySettings theory;
  BilateralSettings bilateral;
};

// ---- strict config reading ---------------------------------------------------

namespace detail {

/// Reads fields out of one JSON object, then rejects whatever was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.emplace_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError(field(key) + " must be a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError(field(key) + " must be a number");
      }
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key) + " has the wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.emplace_back(key);
    return j_.at(key);
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError("unknown key " + field(it.key().c_str()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <class Parse>
auto enum_field(Section& s, const char* key, Parse parse, std::string current) {
  s.get(key, current);
  auto v = parse(current);
  if (!v) throw ConfigError(s.field(key) + ": unknown value '" + current + "'");
  return *v;
}

inline std::optional<Aggregation> aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "max") return Aggregation::max;
  return std::nullopt;
}

inline std::optional<AngleForm> angle_form_from_string(const std::string& s) {
  if (s == "cosine") return AngleForm::cosine;
  if (s == "angle") return AngleForm::angle;
  return std::nullopt;
}

inline void read_minimize(const json& j, MinimizeSettings& m) {
  Section s(j, "minimize");
  s.get("n", m.n);
  s.get("dim", m.dim);
  s.get("s", m.s);
  s.get("half_space", m.half_space);
  s.get("normalized", m.normalized);
  m.cfg.objective = enum_field(s, "objective", objective_from_string, to_string(m.cfg.objective));
  s.get("lr", m.cfg.lr);
  s.get("max_iters", m.cfg.max_iters);
  s.get("tol", m.cfg.tol);
  s.get("proj_dim", m.cfg.proj_dim);
  s.get("views", m.cfg.views);
  m.cfg.aggregation = enum_field(s, "aggregation", aggregation_from_string,
                                 m.cfg.aggregation == Aggregation::mean ? "mean" : "max");
  s.get("reinit_period", m.cfg.reinit_period);
  s.get("ap_inner_lr", m.cfg.ap_inner_lr);
  s.get("ap_update_every", m.cfg.ap_update_every);
  m.cfg.ap_form = enum_field(s, "ap_form", angle_form_from_string,
                             m.cfg.ap_form == AngleForm::cosine ? "cosine" : "angle");
  s.get("adversarial_lr", m.cfg.adversarial_lr);
  s.get("group_size", m.cfg.group_size);
  s.finish();
}

inline void read_train(const json& j, TrainSettings& t) {
  Section s(j, "train");
  s.get("arms", t.arms);
  s.get("classes", t.classes);
  s.get("samples_per_class", t.samples_per_class);
  s.get("dim", t.dim);
  s.get("spread", t.spread);
  s.get("data_seed", t.data_seed);
  s.get("hidden", t.hidden);
  auto& c = t.cfg;
  s.get("reg_weight", c.reg_weight);
  s.get("weight_decay", c.weight_decay);
  s.get("lr", c.lr);
  s.get("momentum", c.momentum);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("seeds", c.seeds);
  s.get("s", c.s);
  s.get("proj_dim", c.proj_dim);
  s.get("views", c.views);
  s.get("reinit_period", c.reinit_period);
  s.get("ap_inner_lr", c.ap_inner_lr);
  s.get("ap_reinit_period", c.ap_reinit_period);
  s.get("ap_update_every", c.ap_update_every);
  s.get("adversarial_lr", c.adversarial_lr);
  s.get("group_size", c.group_size);
  s.get("bilateral_rank", c.bilateral_rank);
  s.get("rotation_lr", c.rotation_lr);
  s.finish();
}

inline void read_theory(const json& j, TheorySettings& t) {
  Section s(j, "theory");
  s.get("which", t.which);
  s.get("d", t.d);
  s.get("k", t.k);
  s.get("eps", t.eps);
  s.get("angle", t.angle);
  s.get("trials", t.trials);
  s.get("sigma", t.sigma);
  s.get("eps_grid", t.eps_grid);
  s.finish();
}

inline void read_bilateral(const json& j, BilateralSettings& b) {
  Section s(j, "bilateral");
  s.get("m", b.m);
  s.get("n", b.n);
  s.get("rank", b.rank);
  s.get("trials", b.trials);
  s.get("s", b.s);
  s.finish();
}

/// Overlays `patch` onto `base`, recursing into objects.
inline void merge(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size())), '\n'));
}

}  // namespace detail

inline json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
}

/// Builds validated settings from a config tree (unknown keys rejected).
inline Settings settings_from_json(const json& j) {
  Settings st;
  detail::Section top(j, "");
  top.get("seed", st.common.seed);
  top.get("out", st.common.out);
  top.get("threads", st.common.threads);
  if (top.has("minimize")) detail::read_minimize(top.raw("minimize"), st.minimize);
  if (top.has("train")) detail::read_train(top.raw("train"), st.train);
  if (top.has("theory")) detail::read_theory(top.raw("theory"), st.theory);
  if (top.has("bilateral")) detail::read_bilateral(top.raw("bilateral"), st.bilateral);
  top.finish();
  if (st.common.threads == 0) throw ConfigError("threads must be >= 1");
  return st;
}

// ---- output helpers ----------------------------------------------------------

namespace detail {

inline std::filesystem::path prepare_out(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExperimentFailure("cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ---- experiments -------------------------------------------------------------

inline int run_minimize(const Settings& st, std::ostream& out) {
  const auto& m = st.minimize;
  MinimizeConfig cfg = m.cfg;
  cfg.seed = st.common.seed;
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("minimize: ") + e.what());
  }
  if (m.n < 2 || m.dim < 2) throw ConfigError("minimize: need n >= 2 and dim >= 2");
  const EnergySpec spec{m.s, m.half_space, m.normalized};
  const auto dir = detail::prepare_out(st.common.out);
  const MinimizeResult r = minimize(NeuronBank(gaussian_matrix(m.n, m.dim, st.common.seed)), cfg, spec);
  std::ostringstream trace;
  r.trace.write_csv(trace);
  detail::write_text(dir / "minimize_trace.csv", trace.str());
  const TracePoint& last = r.trace.points.back();
  json summary;
  summary["n"] = m.n;
  summary["dim"] = m.dim;
  summary["s"] = m.s;
  summary["objective"] = to_string(cfg.objective);
  summary["seed"] = st.common.seed;
  summary["iterations"] = last.iter;
  summary["converged"] = r.converged;
  summary["final_energy"] = last.energy_full;
  summary["final_objective"] = last.objective;
  summary["final_grad_norm"] = last.grad_norm;
  summary["final_lr"] = r.final_lr;
  detail::write_json(dir / "minimize_summary.json", summary);
  out << "final energy: " << detail::fmt(last.energy_full) << "\n";
  return kExitOk;
}

inline int run_train(const Settings& st, std::ostream& out) {
  const auto& t = st.train;
  if (t.arms.empty()) throw ConfigError("train.arms must not be empty");
  std::vector<std::optional<harness::Regularizer>> arms;
  for (const auto& name : t.arms) {
    if (name == "rotation") {
      arms.push_back(std::nullopt);
    } else if (auto r = harness::regularizer_from_string(name)) {
      arms.push_back(*r);
    } else {
      throw ConfigError("train.arms: unknown arm '" + name + "'");
    }
  }
  harness::MlpSpec spec;
  spec.widths = {t.dim};
  spec.widths.insert(spec.widths.end(), t.hidden.begin(), t.hidden.end());
  spec.widths.push_back(t.classes);
  harness::Dataset data;
  try {
    spec.validate();
    t.cfg.validate();
    data = harness::make_dataset(t.classes, t.samples_per_class, t.dim, t.data_seed, t.spread);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  std::vector<harness::ArmSummary> results(arms.size());
  std::vector<std::exception_ptr> errors(arms.size());
  const auto work = [&](std::size_t i) {
    try {
      harness::TrainConfig cfg = t.cfg;
      if (arms[i]) {
        cfg.regularizer = *arms[i];
        results[i] = harness::train(spec, cfg, data);
      } else {
        results[i] = harness::train_rotation(spec, cfg, data, false);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  // One arm per worker; results land in arm order whatever the thread count.
  const std::size_t workers = std::min(st.common.threads, arms.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < arms.size(); i += workers) work(i);
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const auto dir = detail::prepare_out(st.common.out);
  json summary = json::array();
  for (const auto& r : results) {
    std::ostringstream csv;
    r.write_csv(csv);
    detail::write_text(dir / ("train_" + r.arm + ".csv"), csv.str());
    summary.push_back(r.to_json());
    char line[160];
    std::snprintf(line, sizeof line, "%-15s error %.4f +- %.4f  energy %.6f\n", r.arm.c_str(), r.mean_error(),
                  r.std_error(), r.final_energy_mean());
    out << line;
  }
  detail::write_json(dir / "train_summary.json", summary);
  return kExitOk;
}

inline int run_theory(const Settings& st, std::ostream& out) {
  const auto& t = st.theory;
  const std::uint64_t seed = st.common.seed;
  const std::size_t threads = st.common.threads;
  json reports = json::array();
  bool all_pass = true;
  for (const auto& which : t.which) {
    theory::BoundReport r;
    try {
      if (which == "theorem1") {
        r = theory::check_theorem1(t.d, t.k, t.eps, t.angle, t.trials, seed, threads);
      } else if (which == "theorem2") {
        r = theory::check_theorem2(t.d, t.k, t.eps, t.angle, t.trials, seed, threads);
      } else if (which == "jll") {
        r = theory::check_jll(t.d, t.k, t.eps, t.trials, seed, t.sigma, threads);
      } else if (which == "lemma1") {
        r = theory::check_lemma1(t.d, t.k, t.trials, seed, t.angle, threads);
      } else if (which == "orthogonality") {
        r = theory::orthogonality_report(t.d, t.trials, seed, threads);
      } else if (which == "crossover") {
        r = theory::check_crossover(t.eps_grid);
      } else {
        throw ConfigError("theory.which: unknown check '" + which + "'");
      }
    } catch (const InvalidArgument& e) {
      throw ConfigError("theory." + which + ": " + e.what());
    } catch (const RequiresAcuteAngle& e) {
      throw ConfigError("theory." + which + ": " + e.what());
    }
    all_pass = all_pass && r.pass;
    reports.push_back(r.to_json());
    out << r.name << ": " << (r.pass ? "PASS" : "FAIL") << " empirical " << detail::fmt(r.empirical)
        << " theoretical " << detail::fmt(r.theoretical) << "\n";
  }
  const auto dir = detail::prepare_out(st.common.out);
  detail::write_json(dir / "theory_report.json", reports);
  return all_pass ? kExitOk : kExitFailure;
}

/// Exact-rank instances: P1 W̃ = Y1 and W̃ = W are checked on every trial.
inline int run_bilateral(const Settings& st, std::ostream& out) {
  const auto& b = st.bilateral;
  if (b.rank == 0 || b.rank > std::min(b.m, b.n)) throw ConfigError("bilateral.rank must be in [1, min(m, n)]");
  if (b.trials == 0) throw ConfigError("bilateral.trials must be >= 1");
  constexpr double kIdentityTol = 1e-9;
  constexpr double kReconstructTol = 1e-8;
  std::ostringstream csv;
  csv << "trial,identity_residual,reconstruction_error,core_condition,left_energy,right_energy\n";
  double worst_identity = 0.0, worst_rec = 0.0;
  for (std::size_t trial = 0; trial < b.trials; ++trial) {
    const std::uint64_t seed = derive_seed(st.common.seed, trial);
    const Matrix w = matmul(gaussian_matrix(b.m, b.rank, derive_seed(seed, 10)),
                            gaussian_matrix(b.rank, b.n, derive_seed(seed, 11)));
    const auto bs = BilateralState::random(b.m, b.n, b.rank, seed);
    const Matrix y1 = matmul(bs.p1, w);
    const Matrix y2 = matmul(w, bs.p2);
    const Matrix rec = lowrank_reconstruct(bs, y1, y2);
    const double identity = max_abs_diff(matmul(bs.p1, rec), y1);
    const double error = max_abs_diff(rec, w);
    const auto [left, right] = bilateral_energies(w, bs, {b.s, true, true});
    worst_identity = std::max(worst_identity, identity);
    worst_rec = std::max(worst_rec, error);
    csv << trial << ',' << detail::fmt(identity) << ',' << detail::fmt(error) << ','
        << detail::fmt(condition_number(matmul(bs.p1, y2))) << ',' << detail::fmt(left) << ','
        << detail::fmt(right) << '\n';
  }
  const bool pass = worst_identity <= kIdentityTol && worst_rec <= kReconstructTol;
  const auto dir = detail::prepare_out(st.common.out);
  detail::write_text(dir / "bilateral.csv", csv.str());
  json summary;
  summary["m"] = b.m;
  summary["n"] = b.n;
  summary["rank"] = b.rank;
  summary["trials"] = b.trials;
  summary["seed"] = st.common.seed;
  summary["max_identity_residual"] = worst_identity;
  summary["max_reconstruction_error"] = worst_rec;
  summary["pass"] = pass;
  detail::write_json(dir / "bilateral_summary.json", summary);
  out << "identity residual " << detail::fmt(worst_identity) << ", reconstruction error " << detail::fmt(worst_rec)
      << ": " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitFailure;
}

// ---- command line ------------------------------------------------------------

namespace detail {

template <class T>
struct is_list : std::false_type {};
template <class T>
struct is_list<std::vector<T>> : std::true_type {};

/// Collects flags that were actually given, as a JSON patch over the config.
class Overrides {
 public:
  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& section, const std::string& key,
           const std::string& help) {
    auto& slot = store<T>().emplace_back();
    CLI::Option* opt = app->add_option(flag, slot, help);
    if constexpr (is_list<T>::value) opt->delimiter(',');
    appliers_.push_back([opt, &slot, section, key](json& patch) {
      if (opt->count() == 0) return;
      if (section.empty()) {
        patch[key] = slot;
      } else {
        patch[section][key] = slot;
      }
    });
  }

  void apply(json& patch) const {
    for (const auto& f : appliers_) f(patch);
  }

 private:
  template <class T>
  std::deque<T>& store() {
    static_assert(sizeof(T) > 0);
    if constexpr (std::is_same_v<T, double>) return doubles_;
    else if constexpr (std::is_same_v<T, std::uint64_t>) return ints_;
    else if constexpr (std::is_same_v<T, std::string>) return strings_;
    else if constexpr (std::is_same_v<T, bool>) return bools_;
    else if constexpr (std::is_same_v<T, std::vector<std::string>>) return string_lists_;
    else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) return int_lists_;
    else return double_lists_;
  }

  std::deque<double> doubles_;
  std::deque<std::uint64_t> ints_;
  std::deque<std::string> strings_;
  std::deque<bool> bools_;
  std::deque<std::vector<std::string>> string_lists_;
  std::deque<std::vector<std::uint64_t>> int_lists_;
  std::deque<std::vector<double>> double_lists_;
  std::vector<std::function<void(json&)>> appliers_;
};

inline void add_common(CLI::App* app, Overrides& o, std::string& config_path) {
  app->add_option("--config", config_path, "JSON config file");
  o.add<std::uint64_t>(app, "--seed", "", "seed", "random seed");
  o.add<std::string>(app, "--out", "", "out", "output directory");
  o.add<std::uint64_t>(app, "--threads", "", "threads", "worker threads");
}

}  // namespace detail

/// Entry point shared by the binary and the tests. Flags override the config.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using U = std::uint64_t;
  using D = double;
  using S = std::string;
  CLI::App app("Hyperspherical energy toolkit", "comhe");
  app.require_subcommand(1);
  detail::Overrides o;
  std::string config_path;

  CLI::App* mini = app.add_subcommand("minimize", "minimize the energy of random unit vectors");
  detail::add_common(mini, o, config_path);
  o.add<U>(mini, "--n", "minimize", "n", "number of points");
  o.add<U>(mini, "--dim", "minimize", "dim", "ambient dimension");
  o.add<D>(mini, "--s", "minimize", "s", "kernel exponent (0 = log)");
  o.add<S>(mini, "--objective", "minimize", "objective", "plain|half_space|rp|ap_alternating|ap_unrolled|adversarial|group");
  o.add<D>(mini, "--lr", "minimize", "lr", "step size");
  o.add<U>(mini, "--max-iters", "minimize", "max_iters", "iteration cap");
  o.add<D>(mini, "--tol", "minimize", "tol", "gradient norm tolerance");
  o.add<U>(mini, "--proj-dim", "minimize", "proj_dim", "projection dimension");
  o.add<U>(mini, "--views", "minimize", "views", "random projection views");

  CLI::App* tr = app.add_subcommand("train", "train the MLP harness for several regularizer arms");
  detail::add_common(tr, o, config_path);
  o.add<std::vector<S>>(tr, "--arms", "train", "arms", "comma-separated arms (regularizers or 'rotation')");
  o.add<U>(tr, "--epochs", "train", "epochs", "training epochs");
  o.add<D>(tr, "--reg-weight", "train", "reg_weight", "regularizer weight");
  o.add<D>(tr, "--lr", "train", "lr", "initial step size");
  o.add<std::vector<U>>(tr, "--seeds", "train", "seeds", "comma-separated seeds");
  o.add<U>(tr, "--classes", "train", "classes", "number of classes");
  o.add<U>(tr, "--samples", "train", "samples_per_class", "samples per class");
  o.add<D>(tr, "--spread", "train", "spread", "class noise level");

  CLI::App* th = app.add_subcommand("validate-theory", "Monte-Carlo checks of the angle-preservation bounds");
  detail::add_common(th, o, config_path);
  o.add<std::vector<S>>(th, "--which", "theory", "which", "theorem1,theorem2,jll,lemma1,orthogonality,crossover");
  o.add<U>(th, "--d", "theory", "d", "ambient dimension");
  o.add<U>(th, "--k", "theory", "k", "projected dimension");
  o.add<D>(th, "--eps", "theory", "eps", "epsilon");
  o.add<D>(th, "--angle", "theory", "angle", "pair angle in degrees");
  o.add<U>(th, "--trials", "theory", "trials", "Monte-Carlo trials");

  CLI::App* bi = app.add_subcommand("bilateral-demo", "bilateral projection and low-rank reconstruction");
  detail::add_common(bi, o, config_path);
  o.add<U>(bi, "--m", "bilateral", "m", "rows");
  o.add<U>(bi, "--n", "bilateral", "n", "columns");
  o.add<U>(bi, "--rank", "bilateral", "rank", "rank");
  o.add<U>(bi, "--trials", "bilateral", "trials", "instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    json tree = config_path.empty() ? json::object() : load_config_file(config_path);
    json patch = json::object();
    o.apply(patch);
    detail::merge(tree, patch);
    const Settings st = [&] {
      try {
        return settings_from_json(tree);
      } catch (const ConfigError& e) {
        if (config_path.empty()) throw;
        throw ConfigError(config_path + ": " + e.message);
      }
    }();
    if (mini->parsed()) return run_minimize(st, out);
    if (tr->parsed()) return run_train(st, out);
    if (th->parsed()) return run_theory(st, out);
    return run_bilateral(st, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace comhe::cli

#endif  // COMHE_CLI_HPP
