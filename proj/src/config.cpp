#include "mptp/config.hpp"

#include "mptp/io.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace mptp {

using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::optional<double> number(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(field(key), "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) fail(field(key), "must be finite");
    return x;
  }

  std::optional<long long> integer(const std::string& key, long long lo, long long hi) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) fail(field(key), "expected an integer");
    const long long x = v->get<long long>();
    if (x < lo || x > hi) {
      fail(field(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  std::optional<std::uint64_t> seed(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_number_unsigned()) fail(field(key), "expected a nonnegative integer");
    return v->get<std::uint64_t>();
  }

  std::optional<bool> boolean(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) fail(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) fail(field(key), "expected a string");
    return v->get<std::string>();
  }

  std::optional<Vector> vector(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (v->is_number()) return Vector::Constant(1, v->get<double>());
    if (!v->is_array()) fail(field(key), "expected an array of numbers");
    Vector out(static_cast<Eigen::Index>(v->size()));
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a number");
      out[static_cast<Eigen::Index>(i)] = (*v)[i].get<double>();
    }
    return out;
  }

  std::optional<std::vector<int>> int_list(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) fail(field(key), "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      if (!e.is_number_integer() || e.get<long long>() < 1 || e.get<long long>() > 100000000) {
        fail(field(key) + "[" + std::to_string(i) + "]", "expected a positive integer");
      }
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::optional<std::vector<std::string>> string_list(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) fail(field(key), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  std::optional<Section> child(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Section(*v, field(key));
  }

  // Rejects keys that no accessor asked for.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) fail(field(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
void assign(T& dst, const std::optional<T>& v) {
  if (v) dst = *v;
}

// Library errors already name their field; registry lookups get `field` prepended.
template <typename Fn>
auto rethrow_as_config(Fn&& fn, const std::string& field = "") {
  const auto wrap = [&](const char* what) { return ConfigError(field.empty() ? what : field + ": " + what); };
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::logic_error& e) {
    throw wrap(e.what());
  }
}

constexpr long long kIntMax = std::numeric_limits<int>::max();

void parse_model(Section s, ExperimentConfig& cfg) {
  ModelSpec& m = cfg.model;
  m.d = static_cast<int>(s.integer("d", 1, 1000000).value_or(1));
  assign(m.sigma, s.number("sigma"));
  assign(m.T, s.number("T"));
  m.x0 = s.vector("x0").value_or(Vector::Zero(m.d));
  m.xT = s.vector("xT").value_or(Vector::Zero(m.d));

  KernelParams params;
  std::string family = "zero";
  if (auto k = s.child("kernel")) {
    assign(family, k->string("family"));
    assign(params.kappa, k->number("kappa"));
    assign(params.lambda, k->number("lambda"));
    assign(params.a, k->number("a"));
    assign(params.b, k->number("b"));
    if (auto pot = k->string("potential")) {
      params.potential =
          rethrow_as_config([&] { return local_potential_from_string(*pot); }, k->field("potential"));
    }
    k->finish();
    m.kernel = rethrow_as_config([&] { return DriftKernel::from_name(family, params); }, k->field("family"));
  }

  m.mu0.mean = m.x0;
  if (auto mu = s.child("mu0")) {
    const std::string type = mu->string("type").value_or("dirac");
    if (type == "dirac") {
      m.mu0.type = InitialLawType::kDirac;
    } else if (type == "gaussian") {
      m.mu0.type = InitialLawType::kGaussian;
    } else {
      Section::fail(mu->field("type"), "expected 'dirac' or 'gaussian'");
    }
    assign(m.mu0.mean, mu->vector("mean"));
    assign(m.mu0.std, mu->number("std"));
    mu->finish();
  }
  s.finish();
  rethrow_as_config([&] {
    m.validate();
    return 0;
  });
}

void parse_grid(Section s, ExperimentConfig& cfg) {
  const auto M = s.integer("M", 1, kIntMax);
  const auto dt = s.number("dt");
  s.finish();
  if (dt) {
    if (!(*dt > 0.0)) Section::fail(s.field("dt"), "must be > 0");
    const double steps = cfg.model.T / *dt;
    const long long rounded = std::llround(steps);
    if (rounded < 1 || std::abs(steps - static_cast<double>(rounded)) > 1e-9 * std::max(1.0, steps)) {
      Section::fail(s.field("dt"), "model.T / dt must be a positive integer");
    }
    if (M && *M != rounded) Section::fail(s.field("M"), "inconsistent with grid.dt and model.T");
    cfg.M = static_cast<int>(rounded);
  } else if (M) {
    cfg.M = static_cast<int>(*M);
  }
}

void parse_solver(Section s, ExperimentConfig& cfg) {
  SolverOptions& o = cfg.solver.options;
  if (auto v = s.integer("max_iters", 1, kIntMax)) o.max_iters = static_cast<int>(*v);
  assign(o.grad_tol, s.number("grad_tol"));
  assign(o.armijo_c, s.number("armijo_c"));
  assign(o.backtrack, s.number("backtrack"));
  assign(o.initial_step, s.number("initial_step"));
  if (auto m = s.string("method")) {
    o.method = rethrow_as_config([&] { return descent_method_from_string(*m); }, s.field("method"));
  }
  assign(o.newton_tol, s.number("newton_tol"));
  if (auto v = s.integer("max_newton_iters", 1, kIntMax)) o.max_newton_iters = static_cast<int>(*v);
  assign(o.fd_step, s.number("fd_step"));
  if (auto t = s.string("terminal")) {
    if (*t == "penalty") {
      cfg.solver.terminal = TerminalMode::kPenalty;
    } else if (*t == "pinned") {
      cfg.solver.terminal = TerminalMode::kPinned;
    } else {
      Section::fail(s.field("terminal"), "expected 'penalty' or 'pinned'");
    }
  }
  assign(cfg.solver.rho_pen, s.number("rho_pen"));
  if (!(cfg.solver.rho_pen > 0.0)) Section::fail(s.field("rho_pen"), "must be > 0");
  if (auto v = s.integer("multistart", 1, 10000)) cfg.solver.multistart = static_cast<int>(*v);
  s.finish();
}

void parse_sim(std::optional<Section> s, ExperimentConfig& cfg) {
  SimConfig& sim = cfg.sim;
  std::optional<long long> n_steps;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  if (s) {
    n_steps = s->integer("n_steps", 1, kIntMax);
    dt = s->number("dt");
    if (auto v = s->integer("n_particles", 1, kIntMax)) sim.n_particles = static_cast<int>(*v);
    seed = s->seed("seed");
    s->finish();
  }
  sim.seed = seed.value_or(cfg.seed);
  if (n_steps && dt) {
    sim.n_steps = static_cast<int>(*n_steps);
    sim.dt = *dt;
  } else if (dt) {
    if (!(*dt > 0.0)) Section::fail("sim.dt", "must be > 0");
    sim.n_steps = static_cast<int>(std::llround(cfg.model.T / *dt));
    sim.dt = *dt;
  } else {
    sim.n_steps = static_cast<int>(n_steps.value_or(100));
    sim.dt = cfg.model.T / sim.n_steps;
  }
  rethrow_as_config([&] {
    sim.validate_against(cfg.model);
    return 0;
  });
}

void parse_study(std::optional<Section> s, ExperimentConfig& cfg) {
  StudyConfig& st = cfg.study;
  std::optional<std::uint64_t> seed;
  if (s) {
    assign(st.n_list, s->int_list("n_list"));
    if (auto v = s->integer("replicates", 1, kIntMax)) st.replicates = static_cast<int>(*v);
    st.s_threshold = s->number("s_threshold");
    st.rho = s->number("rho");
    seed = s->seed("seed");
    if (auto n = s->string("noise")) {
      if (*n == "sde") {
        st.noise = NoiseMode::kSde;
      } else if (*n == "ode_random_init") {
        st.noise = NoiseMode::kOdeRandomInit;
      } else {
        Section::fail(s->field("noise"), "expected 'sde' or 'ode_random_init'");
      }
    }
    if (auto k = s->string("kind")) {
      if (*k == "residual") {
        st.kind = GapStudy::kResidual;
      } else if (*k == "jacobian") {
        st.kind = GapStudy::kJacobian;
      } else if (*k == "control") {
        st.kind = GapStudy::kControl;
      } else {
        Section::fail(s->field("kind"), "expected 'residual', 'jacobian' or 'control'");
      }
    }
    if (auto v = s->integer("n_probe", 1, kIntMax)) st.n_probe = static_cast<int>(*v);
    if (auto v = s->integer("n_particles", 1, kIntMax)) st.n_particles = static_cast<int>(*v);
    if (auto v = s->integer("m_ref", 1, kIntMax)) st.m_ref = static_cast<int>(*v);
    assign(st.common_random_numbers, s->boolean("common_random_numbers"));
    s->finish();
  }
  st.seed = seed.value_or(cfg.seed);
  if (st.n_list.empty()) Section::fail("study.n_list", "must be nonempty");
  for (std::size_t i = 1; i < st.n_list.size(); ++i) {
    if (st.n_list[i] <= st.n_list[i - 1]) Section::fail("study.n_list", "must be strictly increasing");
  }
  if (st.s_threshold && !(*st.s_threshold > 0.0)) Section::fail("study.s_threshold", "must be > 0");
  if (st.rho && !(*st.rho > 0.0)) Section::fail("study.rho", "must be > 0");
}

void parse_output(std::optional<Section> s, ExperimentConfig& cfg) {
  if (!s) return;
  assign(cfg.output.directory, s->string("directory"));
  if (auto formats = s->string_list("formats")) {
    cfg.output.csv = cfg.output.gnuplot = cfg.output.binary = false;
    for (const auto& f : *formats) {
      if (f == "csv") {
        cfg.output.csv = true;
      } else if (f == "gnuplot") {
        cfg.output.gnuplot = true;
      } else if (f == "binary") {
        cfg.output.binary = true;
      } else {
        Section::fail(s->field("formats"), "unknown format '" + f + "' (csv, gnuplot, binary)");
      }
    }
  }
  s->finish();
}

}  // namespace

void ExperimentConfig::override_seed(std::uint64_t s) {
  seed = s;
  sim.seed = s;
  study.seed = s;
}

ExperimentConfig parse_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  Section root(doc, "");
  ExperimentConfig cfg;
  cfg.hash = io::fnv1a64(doc.dump());
  if (auto s = root.seed("seed")) cfg.seed = *s;

  auto model = root.child("model");
  if (!model) Section::fail("model", "required section missing");
  parse_model(*model, cfg);
  if (auto g = root.child("grid")) parse_grid(*g, cfg);
  if (auto s = root.child("solver")) parse_solver(*s, cfg);
  rethrow_as_config([&] {
    cfg.solver.options.validate();
    return 0;
  });
  parse_sim(root.child("sim"), cfg);
  parse_study(root.child("study"), cfg);
  parse_output(root.child("output"), cfg);
  root.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace mptp
