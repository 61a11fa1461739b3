#include "invdist/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "invdist/errors.hpp"

namespace invdist {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

template <class T>
T get(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(join(path, key), "has the wrong type");
  }
}

template <class T>
std::optional<T> get_optional(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, path, T{});
}

const json& object(const json& j, const std::string& key, const std::string& path) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(join(path, key), "must be an object");
  return j.at(key);
}

/// Same parameter and message, without the "<parameter>: " prefix doubling up.
ConfigError as_config_error(const ParameterError& e) {
  const std::string what = e.what();
  const std::string prefix = e.parameter() + ": ";
  return ConfigError(e.parameter(), what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what);
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& path) {
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError(join(path, k), "unknown field");
  }
}

Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

ModelConfig parse_model(const json& j) {
  const std::string path = "model";
  reject_unknown(j, {"type", "dim", "a", "sigma", "sigma0", "c", "Q"}, path);
  ModelConfig m;
  m.type = get<std::string>(j, "type", path, "");
  m.dim = get<int>(j, "dim", path, 1);
  if (m.dim < 1) throw ConfigError("model.dim", "must be >= 1");
  if (m.type == "ou") {
    m.a = get<double>(j, "a", path, 1.0);
    m.sigma = get<double>(j, "sigma", path, m.sigma);
  } else if (m.type == "milstein1d") {
    if (m.dim != 1) throw ConfigError("model.dim", "milstein1d is one-dimensional");
    m.a = get<double>(j, "a", path, 1.0);
    m.sigma0 = get<double>(j, "sigma0", path, 1.0);
    m.c = get<double>(j, "c", path, 0.0);
    if (m.c < 0.0) throw ConfigError("model.c", "must be >= 0");
  } else if (m.type == "switching-ou") {
    m.rates = get<std::vector<double>>(j, "a", path, {});
    m.diffusions = get<std::vector<double>>(j, "sigma", path, {});
    const auto rows = get<std::vector<std::vector<double>>>(j, "Q", path, {});
    if (rows.empty()) throw ConfigError("model.Q", "is required for switching-ou");
    m.Q.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw ConfigError("model.Q", "must be square");
      for (std::size_t c = 0; c < rows.size(); ++c) {
        m.Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    if (m.rates.size() != rows.size()) throw ConfigError("model.a", "needs one rate per regime");
    if (m.diffusions.size() != rows.size()) throw ConfigError("model.sigma", "needs one value per regime");
    try {
      validate_generator(m.Q);
    } catch (const ModelError& e) {
      throw ConfigError("model.Q", e.what());
    }
  } else {
    throw ConfigError("model.type", "unknown model '" + m.type + "' (ou, milstein1d, switching-ou)");
  }
  return m;
}

ScheduleConfig parse_schedule(const json& j) {
  const std::string path = "schedule";
  reject_unknown(j, {"kind", "gamma1", "theta", "weights", "gammas"}, path);
  ScheduleConfig s;
  const auto kind = get<std::string>(j, "kind", path, "power");
  if (kind != "power" && kind != "table") throw ConfigError("schedule.kind", "expected \"power\" or \"table\"");
  s.gamma1 = get<double>(j, "gamma1", path, 1.0);
  s.theta = get<double>(j, "theta", path, 1.0 / 3.0);
  s.gammas = get<std::vector<double>>(j, "gammas", path, {});
  if (kind == "table" && s.gammas.empty()) throw ConfigError("schedule.gammas", "required for a table schedule");
  if (kind == "power" && !s.gammas.empty()) throw ConfigError("schedule.gammas", "only allowed with kind \"table\"");
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    if (w.is_string()) {
      if (w.get<std::string>() != "gamma") throw ConfigError("schedule.weights", "expected \"gamma\"");
    } else if (w.is_object()) {
      const std::string wpath = "schedule.weights";
      reject_unknown(w, {"kind", "kappa"}, wpath);
      const auto wkind = get<std::string>(w, "kind", wpath, w.contains("kappa") ? "power" : "gamma");
      if (wkind == "power") {
        s.kappa = get_optional<double>(w, "kappa", wpath);
        if (!s.kappa) throw ConfigError("schedule.weights.kappa", "required for power weights");
      } else if (wkind != "gamma") {
        throw ConfigError("schedule.weights.kind", "expected \"gamma\" or \"power\"");
      }
    } else if (w.is_array()) {
      s.etas = get<std::vector<double>>(j, "weights", path, {});
    } else {
      throw ConfigError("schedule.weights", "expected \"gamma\", {\"kappa\": k} or a table");
    }
  }
  build_schedule(s);
  return s;
}

FunctionalConfig parse_functional(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "must be an object");
  reject_unknown(j, {"type", "name", "order", "coordinate", "lo", "hi", "center", "radius", "coefficients", "regime"},
                 path);
  FunctionalConfig f;
  f.type = get<std::string>(j, "type", path, "");
  f.name = get<std::string>(j, "name", path, "");
  f.coordinate = get<int>(j, "coordinate", path, 0);
  if (f.coordinate < 0) throw ConfigError(join(path, "coordinate"), "must be >= 0");
  if (f.type == "moment") {
    f.order = get<int>(j, "order", path, 1);
    if (f.order < 0) throw ConfigError(join(path, "order"), "must be >= 0");
  } else if (f.type == "box") {
    f.lo = get<double>(j, "lo", path, 0.0);
    f.hi = get<double>(j, "hi", path, 0.0);
    if (!(f.hi > f.lo)) throw ConfigError(join(path, "hi"), "must exceed lo");
  } else if (f.type == "bump") {
    f.center = to_vector(get<std::vector<double>>(j, "center", path, {}));
    f.radius = get<double>(j, "radius", path, 1.0);
    if (f.center.size() == 0) throw ConfigError(join(path, "center"), "is required");
    if (!(f.radius > 0.0)) throw ConfigError(join(path, "radius"), "must be > 0");
  } else if (f.type == "polynomial") {
    f.coefficients = get<std::vector<double>>(j, "coefficients", path, {});
    if (f.coefficients.empty()) throw ConfigError(join(path, "coefficients"), "is required");
  } else if (f.type == "regime") {
    f.regime = get<int>(j, "regime", path, 0);
  } else {
    throw ConfigError(join(path, "type"), "unknown functional '" + f.type + "'");
  }
  return f;
}

LyapunovConfig parse_lyapunov(const json& j) {
  const std::string path = "lyapunov";
  reject_unknown(j, {"V", "p", "a", "lambda", "s", "rho", "alpha", "beta", "epsilon0", "growth_C", "C_sigma"}, path);
  LyapunovConfig l;
  l.V = get<std::string>(j, "V", path, "quadratic");
  l.p = get<double>(j, "p", path, l.p);
  l.a = get<double>(j, "a", path, l.a);
  l.lambda = get<double>(j, "lambda", path, l.lambda);
  l.s = get<double>(j, "s", path, l.s);
  l.rho = get<double>(j, "rho", path, l.rho);
  l.alpha = get<double>(j, "alpha", path, l.alpha);
  l.beta = get<double>(j, "beta", path, l.beta);
  l.epsilon0 = get<double>(j, "epsilon0", path, l.epsilon0);
  l.growth_C = get_optional<double>(j, "growth_C", path);
  l.C_sigma = get_optional<double>(j, "C_sigma", path);
  if (!(l.alpha > 0.0)) throw ConfigError("lyapunov.alpha", "must be > 0");
  if (!(l.epsilon0 > 0.0)) throw ConfigError("lyapunov.epsilon0", "must be > 0");
  if (l.C_sigma && !(*l.C_sigma > 0.0)) throw ConfigError("lyapunov.C_sigma", "must be > 0");
  build_lyapunov(l);
  return l;
}

RunConfig parse_run(const json& j, int dim, int regimes) {
  const std::string path = "run";
  reject_unknown(j, {"n_steps", "seed", "replicas", "x0", "z0", "per_decade", "reservoir"}, path);
  RunConfig r;
  const auto n = get<long long>(j, "n_steps", path, 1000);
  if (n < 1) throw ConfigError("run.n_steps", "must be >= 1");
  r.n_steps = static_cast<std::size_t>(n);
  r.seed = get<std::uint64_t>(j, "seed", path, 1);
  r.replicas = get<int>(j, "replicas", path, 1);
  if (r.replicas < 1) throw ConfigError("run.replicas", "must be >= 1");
  const auto x0 = get<std::vector<double>>(j, "x0", path, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  if (static_cast<int>(x0.size()) != dim) throw ConfigError("run.x0", "must have model.dim entries");
  r.x0 = to_vector(x0);
  r.z0 = get<int>(j, "z0", path, 0);
  if (r.z0 < 0 || r.z0 >= regimes) throw ConfigError("run.z0", "regime out of range");
  r.per_decade = get<int>(j, "per_decade", path, 10);
  if (r.per_decade < 1) throw ConfigError("run.per_decade", "must be >= 1");
  const auto cap = get<long long>(j, "reservoir", path, static_cast<long long>(r.reservoir));
  if (cap < 0) throw ConfigError("run.reservoir", "must be >= 0");
  r.reservoir = static_cast<std::size_t>(cap);
  return r;
}

OracleConfig parse_oracle(const json& j) {
  const std::string path = "oracle";
  reject_unknown(j, {"kind", "x_lo", "x_hi", "M", "gamma_ref", "burn_in", "n_keep", "thin"}, path);
  OracleConfig o;
  o.kind = get<std::string>(j, "kind", path, "none");
  static const std::set<std::string> kinds{"ou", "fokker-planck", "switching-moments", "longrun", "none"};
  if (!kinds.count(o.kind)) throw ConfigError("oracle.kind", "unknown reference '" + o.kind + "'");
  o.x_lo = get<double>(j, "x_lo", path, o.x_lo);
  o.x_hi = get<double>(j, "x_hi", path, o.x_hi);
  o.M = get<std::size_t>(j, "M", path, o.M);
  o.longrun.gamma_ref = get<double>(j, "gamma_ref", path, o.longrun.gamma_ref);
  o.longrun.burn_in = get<std::size_t>(j, "burn_in", path, o.longrun.burn_in);
  o.longrun.n_keep = get<std::size_t>(j, "n_keep", path, o.longrun.n_keep);
  o.longrun.thin = get<std::size_t>(j, "thin", path, o.longrun.thin);
  return o;
}

AcceptanceConfig parse_acceptance(const json& j) {
  const std::string path = "acceptance";
  reject_unknown(j,
                 {"second_moment", "mean", "w1", "occupation", "tightness", "ew_residual", "ew_bumps",
                  "ew_min_decreasing", "ew_radius_factor", "ew_trend_from", "w1_grid"},
                 path);
  AcceptanceConfig a;
  a.second_moment = get_optional<double>(j, "second_moment", path);
  a.mean = get_optional<double>(j, "mean", path);
  a.w1 = get_optional<double>(j, "w1", path);
  a.occupation = get_optional<double>(j, "occupation", path);
  a.tightness = get_optional<double>(j, "tightness", path);
  a.ew_residual = get_optional<double>(j, "ew_residual", path);
  a.ew_bumps = get<int>(j, "ew_bumps", path, a.ew_bumps);
  a.ew_min_decreasing = get<int>(j, "ew_min_decreasing", path, a.ew_min_decreasing);
  a.ew_radius_factor = get<double>(j, "ew_radius_factor", path, a.ew_radius_factor);
  a.ew_trend_from = get<std::size_t>(j, "ew_trend_from", path, a.ew_trend_from);
  a.w1_grid = get<std::size_t>(j, "w1_grid", path, a.w1_grid);
  if (a.ew_bumps < 1) throw ConfigError("acceptance.ew_bumps", "must be >= 1");
  if (a.w1_grid < 100) throw ConfigError("acceptance.w1_grid", "must be >= 100");
  return a;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

ojson state_json(const State& s) {
  ojson j;
  j["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
  j["regime"] = s.regime;
  return j;
}

ojson summability_json(const SummabilityReport& r) {
  ojson j;
  j["verdict"] = to_string(r.verdict);
  j["monotone"] = r.monotone;
  j["horizon"] = r.horizon;
  j["rule"] = r.rule;
  ojson trace = ojson::array();
  for (const auto& p : r.trace) trace.push_back({{"n", p.n}, {"partial_sum", p.value}});
  j["trace"] = trace;
  return j;
}

double merged_value(double ha, double va, double hb, double vb) {
  if (hb == 0.0) return va;
  if (ha == 0.0) return vb;
  return (ha * va + hb * vb) / (ha + hb);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<root>", "must be an object");
  reject_unknown(j,
                 {"name", "model", "scheme", "innovations", "schedule", "functionals", "lyapunov", "run", "oracle",
                  "acceptance", "required_checks", "output"},
                 "");
  ExperimentConfig c;
  c.name = get<std::string>(j, "name", "", c.name);
  if (!j.contains("model")) throw ConfigError("model", "is required");
  c.model = parse_model(object(j, "model", ""));
  c.scheme = parse_scheme(get<std::string>(j, "scheme", "", "euler"));
  const auto innov = get<std::string>(j, "innovations", "", "gaussian");
  if (innov == "gaussian") {
    c.innovations = InnovationKind::Gaussian;
  } else if (innov == "three-point") {
    c.innovations = InnovationKind::ThreePoint;
  } else {
    throw ConfigError("innovations", "unknown innovation law '" + innov + "'");
  }
  c.schedule = parse_schedule(object(j, "schedule", ""));
  if (j.contains("functionals")) {
    if (!j.at("functionals").is_array()) throw ConfigError("functionals", "must be an array");
    for (std::size_t i = 0; i < j.at("functionals").size(); ++i) {
      c.functionals.push_back(parse_functional(j.at("functionals")[i], "functionals[" + std::to_string(i) + "]"));
    }
  }
  c.lyapunov = parse_lyapunov(object(j, "lyapunov", ""));
  const int regimes = c.model.type == "switching-ou" ? static_cast<int>(c.model.Q.rows()) : 1;
  c.run = parse_run(object(j, "run", ""), c.model.dim, regimes);
  c.oracle = parse_oracle(object(j, "oracle", ""));
  c.acceptance = parse_acceptance(object(j, "acceptance", ""));
  static const std::set<std::string> checks{"sw1", "sw2", "ratio_variation", "shape", "growth", "recursive_control"};
  c.required_checks = get<std::vector<std::string>>(j, "required_checks", "", {});
  for (const auto& name : c.required_checks) {
    if (!checks.count(name)) throw ConfigError("required_checks", "unknown check '" + name + "'");
  }
  const json& out = object(j, "output", "");
  reject_unknown(out, {"dir"}, "output");
  c.out_dir = get<std::string>(out, "dir", "output", "out");

  for (const auto& f : c.functionals) {
    if (f.coordinate >= c.model.dim) throw ConfigError("functionals", "coordinate beyond model.dim");
    if (f.type == "bump" && f.center.size() != c.model.dim) throw ConfigError("functionals", "bump center dimension");
    if (f.type == "regime" && (f.regime < 0 || f.regime >= regimes)) throw ConfigError("functionals", "regime out of range");
  }
  try {
    build_scheme(c);
  } catch (const ModelError& e) {
    throw ConfigError("scheme", e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Model build_model(const ModelConfig& c) {
  if (c.type == "ou") return ou_model(c.a, c.sigma, c.dim);
  if (c.type == "milstein1d") return milstein1d_model(c.a, c.sigma0, c.c);
  if (c.type == "switching-ou") return switching_ou_model(c.rates, c.diffusions, c.Q, c.dim);
  throw ConfigError("model.type", "unknown model '" + c.type + "'");
}

StepSchedule build_schedule(const ScheduleConfig& c) {
  try {
    if (!c.gammas.empty()) return StepSchedule::table(c.gammas, c.etas);
    if (c.kappa) return StepSchedule::power(c.gamma1, c.theta, *c.kappa);
    return StepSchedule::power(c.gamma1, c.theta);
  } catch (const ConfigError&) {
    throw;
  } catch (const ParameterError& e) {
    throw as_config_error(e);
  }
}

Scheme build_scheme(const ExperimentConfig& c) { return Scheme(build_model(c.model), c.scheme, c.innovations); }

LyapunovSpec build_lyapunov(const LyapunovConfig& c) {
  if (c.V != "quadratic") throw ConfigError("lyapunov.V", "only \"quadratic\" (1 + |x|^2) is built in");
  try {
    return quadratic_lyapunov(c.p, c.a, c.s, c.lambda, c.rho);
  } catch (const ParameterError& e) {
    throw as_config_error(e);
  }
}

StationaryReference build_reference(const ExperimentConfig& c) {
  const auto& m = c.model;
  const auto& o = c.oracle;
  if (o.kind == "ou") {
    if (m.type != "ou") throw ConfigError("oracle.kind", "the ou reference needs model.type = ou");
    return ou_stationary(m.a, m.sigma, m.dim);
  }
  if (o.kind == "fokker-planck") {
    if (m.type == "switching-ou" || m.dim != 1) {
      throw ConfigError("oracle.kind", "fokker-planck needs a one-dimensional diffusion model");
    }
    const auto model = std::get<DiffusionModel>(build_model(m));
    auto b = [&model](double x) { return model.drift(Vector::Constant(1, x))[0]; };
    auto s2 = [&model](double x) {
      const double s = model.diffusion(Vector::Constant(1, x))(0, 0);
      return s * s;
    };
    return fokker_planck_1d(b, s2, o.x_lo, o.x_hi, o.M);
  }
  if (o.kind == "switching-moments") {
    if (m.type != "switching-ou") throw ConfigError("oracle.kind", "switching-moments needs model.type = switching-ou");
    return StationaryReference::moments(switching_moments(m.rates, m.diffusions, m.Q, 2));
  }
  if (o.kind == "longrun") {
    return longrun_reference(build_scheme(c), State{c.run.x0, c.run.z0}, o.longrun,
                             derive_seed(c.run.seed, std::uint64_t{1} << 32));
  }
  throw ConfigError("oracle.kind", "no reference configured");
}

void register_functionals(WeightedEmpiricalMeasure& m, const ExperimentConfig& c) {
  m.add_functional("m1", moment_functional(1, 0));
  m.add_functional("m2", moment_functional(2, 0));
  const LyapunovSpec spec = build_lyapunov(c.lyapunov);
  const double e = spec.tightness_exponent();
  m.add_functional("lyapunov", [spec, e](const State& s) { return std::pow(spec.value(s), e); });
  const int regimes = c.model.type == "switching-ou" ? static_cast<int>(c.model.Q.rows()) : 1;
  if (regimes > 1) {
    for (int z = 0; z < regimes; ++z) m.add_functional("pi:" + std::to_string(z), regime_indicator(z));
  }
  for (const auto& f : c.functionals) {
    std::string name = f.name;
    Functional fn;
    if (f.type == "moment") {
      if (name.empty()) name = "m" + std::to_string(f.order) + (f.coordinate ? "_" + std::to_string(f.coordinate) : "");
      fn = moment_functional(f.order, f.coordinate);
    } else if (f.type == "box") {
      if (name.empty()) name = "box[" + format_number(f.lo) + "," + format_number(f.hi) + ")";
      fn = [lo = f.lo, hi = f.hi, k = f.coordinate](const State& s) {
        return s.x[k] >= lo && s.x[k] < hi ? 1.0 : 0.0;
      };
    } else if (f.type == "bump") {
      const TestFunction t = TestFunction::bump(f.center, f.radius);
      if (name.empty()) name = t.id();
      fn = [t](const State& s) { return t(s); };
    } else if (f.type == "polynomial") {
      const TestFunction t = TestFunction::polynomial(f.coefficients, f.coordinate);
      if (name.empty()) name = t.id();
      fn = [t](const State& s) { return t(s); };
    } else {
      if (name.empty()) name = "pi:" + std::to_string(f.regime);
      fn = regime_indicator(f.regime);
    }
    const auto& names = m.names();
    if (std::find(names.begin(), names.end(), name) != names.end()) continue;
    m.add_functional(name, fn);
  }
}

CheckResults run_checks(const ExperimentConfig& c) {
  CheckResults r;
  const StepSchedule schedule = build_schedule(c.schedule);
  const Model model = build_model(c.model);
  const LyapunovSpec spec = build_lyapunov(c.lyapunov);
  std::size_t horizon = std::max<std::size_t>(c.run.n_steps, 100);
  if (auto len = schedule.length()) horizon = std::min(horizon, *len);

  ojson j;
  if (horizon >= 100) {
    r.sw1 = check_sw1(schedule, spec.rho, spec.rho / 2.0, horizon);
    r.ratio = check_ratio_conditions(schedule, horizon);
  } else {
    r.sw1.rule = r.ratio.sw2.rule = r.ratio.ratio_variation.rule = "table shorter than 100 terms";
  }
  if (r.sw1.verdict != Verdict::Admissible) r.failed.push_back("sw1");
  if (r.ratio.sw2.verdict != Verdict::Admissible) r.failed.push_back("sw2");
  if (r.ratio.ratio_variation.verdict != Verdict::Admissible) r.failed.push_back("ratio_variation");
  j["schedule"]["sw1"] = summability_json(r.sw1);
  j["schedule"]["sw1"]["rho"] = spec.rho;
  j["schedule"]["sw1"]["eps_exponent"] = spec.rho / 2.0;
  j["schedule"]["sw2"] = summability_json(r.ratio.sw2);
  j["schedule"]["ratio_variation"] = summability_json(r.ratio.ratio_variation);

  const auto grid = default_probe_grid(c.model.dim, regime_count(model));
  const std::string grid_spec = "radii {0,1,2,5,10,20} x 10 directions x " + std::to_string(regime_count(model)) +
                                " regime(s), seed 20240601";

  r.shape = check_lyapunov_shape(spec, grid);
  if (!r.shape.holds()) r.failed.push_back("shape");
  j["lyapunov"]["shape"] = {{"verdict", r.shape.holds() ? "holds" : "violated"},
                            {"min_V", r.shape.min_V},
                            {"v_star", spec.v_star},
                            {"radial_growth", r.shape.radial_growth},
                            {"sphere_min", r.shape.sphere_min},
                            {"C_V_estimate", r.shape.gradient_ratio},
                            {"hessian_sup", r.shape.hessian_sup},
                            {"grid_spec", grid_spec}};

  const double C = c.lyapunov.growth_C.value_or(std::numeric_limits<double>::infinity());
  r.growth = check_growth_bound(model, spec, grid, C);
  if (!r.growth.holds) r.failed.push_back("growth");
  j["lyapunov"]["growth"] = {{"verdict", r.growth.holds ? "holds" : "violated"},
                             {"max_ratio", r.growth.max_ratio},
                             {"argmax", state_json(r.growth.argmax)},
                             {"C", c.lyapunov.growth_C ? ojson(C) : ojson("unset (reported only)")},
                             {"grid_spec", grid_spec}};

  ojson rc;
  try {
    if (spec.exponential()) {
      const double cs = c.lyapunov.C_sigma.value_or(default_c_sigma(spec, schedule.gamma_max()));
      r.recursive_control = check_rp_exponential(model, spec, c.lyapunov.alpha, c.lyapunov.beta,
                                                 [cs](const State&) { return cs; }, grid);
      rc["C_sigma"] = cs;
      rc["C_sigma_source"] = c.lyapunov.C_sigma ? "config" : "default 2 lambda p gamma_max";
      rc["sigma_min_eigenvalue"] = r.recursive_control.sigma_min_eigenvalue;
      rc["hessian_sup"] = r.recursive_control.hessian_sup;
      rc["dom_max_ratio"] = r.recursive_control.dom_max_ratio;
      rc["dom_bounded"] = r.recursive_control.dom_bounded;
    } else {
      r.recursive_control = check_rp_polynomial(model, spec, c.lyapunov.alpha, c.lyapunov.beta,
                                                c.lyapunov.epsilon0, grid);
      rc["lambda_sup"] = r.recursive_control.lambda_sup;
      rc["epsilon0"] = c.lyapunov.epsilon0;
    }
    rc["condition"] = r.recursive_control.condition;
    rc["verdict"] = r.recursive_control.holds ? "holds" : "violated";
    rc["min_slack"] = r.recursive_control.min_slack;
    rc["argmin"] = state_json(r.recursive_control.argmin);
    rc["side_condition"] = r.recursive_control.side_condition;
    rc["phi_at_largest_radius"] = r.recursive_control.phi_at_largest_radius;
    rc["degenerate"] = r.recursive_control.degenerate;
    if (!r.recursive_control.holds) r.failed.push_back("recursive_control");
  } catch (const PositiveDefiniteError& e) {
    r.recursive_control_error = e.what();
    rc["verdict"] = "error";
    rc["error"] = e.what();
    rc["min_eigenvalue"] = e.min_eigenvalue();
    r.failed.push_back("recursive_control");
  }
  rc["alpha"] = c.lyapunov.alpha;
  rc["beta"] = c.lyapunov.beta;
  rc["grid_spec"] = grid_spec;
  rc["semantics"] = "suprema are grid maxima times 1.1";
  j["lyapunov"]["recursive_control"] = rc;
  j["failed"] = r.failed;
  r.json = j.dump(2) + "\n";
  return r;
}

SimulationResult simulate(const ExperimentConfig& c) {
  const Scheme scheme = build_scheme(c);
  const StepSchedule schedule = build_schedule(c.schedule);
  const State x0{c.run.x0, c.run.z0};
  TrajectoryOptions options;
  options.snapshot_at = geometric_snapshots(c.run.n_steps, c.run.per_decade);

  const auto R = static_cast<std::size_t>(c.run.replicas);
  std::vector<std::optional<WeightedEmpiricalMeasure>> measures(R);
  std::vector<std::vector<MeasureSnapshot>> traces(R);
  std::vector<std::exception_ptr> errors(R);
  auto work = [&](std::size_t r) {
    try {
      WeightedEmpiricalMeasure m(derive_seed(c.run.seed, 2 * r + 1), c.run.reservoir);
      register_functionals(m, c);
      WeightedEmpiricalMeasure* sinks[] = {&m};
      auto result = run_trajectory(scheme, schedule, x0, c.run.n_steps, sinks, derive_seed(c.run.seed, 2 * r), options);
      traces[r] = std::move(result.snapshots[0]);
      measures[r] = std::move(m);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  };
  if (R == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t r = 0; r < R; ++r) threads.emplace_back(work, r);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  SimulationResult out{*measures[0], traces[0], options.snapshot_at};
  for (std::size_t r = 1; r < R; ++r) {
    out.measure = merge(out.measure, *measures[r]);
    for (std::size_t i = 0; i < out.trace.size(); ++i) {
      auto& a = out.trace[i];
      const auto& b = traces[r][i];
      for (std::size_t k = 0; k < a.values.size(); ++k) a.values[k] = merged_value(a.H, a.values[k], b.H, b.values[k]);
      a.n += b.n;
      a.H += b.H;
    }
  }
  return out;
}

bool DiagnosticsResult::pass() const {
  return std::all_of(clauses.begin(), clauses.end(), [](const Clause& c) { return c.pass; });
}

DiagnosticsResult diagnose(const ExperimentConfig& c, const SimulationResult& sim, const CheckResults* checks) {
  DiagnosticsResult d;
  const auto& acc = c.acceptance;
  const auto& m = sim.measure;
  ojson summary;
  summary["name"] = c.name;
  summary["model"] = c.model.type;
  summary["scheme"] = to_string(c.scheme);
  summary["n_steps"] = c.run.n_steps;
  summary["replicas"] = c.run.replicas;
  summary["seed"] = c.run.seed;
  summary["H_n"] = m.mass();
  ojson values;
  for (std::size_t i = 0; i < m.functional_count(); ++i) values[m.names()[i]] = m.value(i);
  summary["functionals"] = values;

  std::optional<StationaryReference> ref;
  if (c.oracle.kind != "none") ref = build_reference(c);
  if (ref) {
    summary["reference"] = {{"kind", to_string(ref->kind())}, {"mean", ref->mean()}, {"second_moment", ref->moment(2)}};
    if (acc.second_moment) {
      const double t = ref->moment(2);
      const double o = m.value("m2");
      d.clauses.push_back({"second_moment_relative", t, o, *acc.second_moment,
                           std::abs(o - t) <= *acc.second_moment * std::abs(t)});
    }
    if (acc.mean) {
      const double t = ref->mean();
      const double o = m.value("m1");
      d.clauses.push_back({"mean", t, o, *acc.mean, std::abs(o - t) <= *acc.mean});
    }
    if (acc.w1 && ref->has_quantile() && m.reservoir_size() > 0) {
      const double w = wasserstein1_vs_quantile(m, ref->quantile_function(), acc.w1_grid);
      d.clauses.push_back({"w1", 0.0, w, *acc.w1, w <= *acc.w1});
    }
    if (acc.occupation && ref->kind() == ReferenceKind::MomentTable) {
      const auto& pi = ref->table().pi;
      for (Eigen::Index z = 0; z < pi.size(); ++z) {
        const double o = m.value("pi:" + std::to_string(z));
        d.clauses.push_back(
            {"occupation:" + std::to_string(z), pi[z], o, *acc.occupation, std::abs(o - pi[z]) <= *acc.occupation});
      }
    }
  }

  if (acc.tightness) {
    const std::size_t col = m.index_of("lyapunov");
    const std::size_t cut = c.run.n_steps / 10;
    double early = -std::numeric_limits<double>::infinity();
    double late = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sim.trace.size(); ++i) {
      const double v = sim.trace[i].values[col];
      if (sim.snapshot_at[i] <= cut) {
        early = std::max(early, v);
      } else {
        late = std::max(late, v);
      }
    }
    const double ratio = late / early;
    d.clauses.push_back({"tightness_last_decade_ratio", 1.0, ratio, *acc.tightness,
                         std::isfinite(ratio) && ratio <= 1.0 + *acc.tightness});
  }

  if (acc.ew_residual && m.reservoir_size() > 0) {
    const EmpiricalQuantile q(m.weighted_sample(0));
    const double m1 = m.value("m1");
    const double spread = std::sqrt(std::max(m.value("m2") - m1 * m1, 1e-12));
    const auto fs = default_bump_family([&q](double u) { return q(u); }, spread, c.model.dim, acc.ew_bumps,
                                        acc.ew_radius_factor);
    const Scheme scheme = build_scheme(c);
    WeightedEmpiricalMeasure ew_measure(0, 0);
    register_generator_functionals(ew_measure, scheme.model(), fs);
    WeightedEmpiricalMeasure* sinks[] = {&ew_measure};
    TrajectoryOptions options;
    options.snapshot_at = sim.snapshot_at;
    auto rerun = run_trajectory(scheme, build_schedule(c.schedule), State{c.run.x0, c.run.z0}, c.run.n_steps, sinks,
                                derive_seed(c.run.seed, 0), options);
    d.ew = ew_residual(rerun.snapshots[0], ew_measure.names(), scheme.model(), fs, acc.ew_trend_from);

    double worst = 0.0;
    int decreasing = 0;
    ojson ew = ojson::array();
    for (const auto& r : d.ew) {
      const double rel = r.sup_Af > 0.0 ? r.terminal / r.sup_Af : 0.0;
      worst = std::max(worst, rel);
      if (r.decreasing) ++decreasing;
      ew.push_back({{"id", r.id},
                    {"terminal", r.terminal},
                    {"sup_Af", r.sup_Af},
                    {"relative", rel},
                    {"reference", r.reference},
                    {"decreasing", r.decreasing}});
    }
    summary["ew_residual"] = ew;
    d.clauses.push_back({"ew_residual_relative", 0.0, worst, *acc.ew_residual, worst <= *acc.ew_residual});
    d.clauses.push_back({"ew_decreasing_count", static_cast<double>(acc.ew_bumps), static_cast<double>(decreasing),
                         static_cast<double>(acc.ew_bumps - acc.ew_min_decreasing),
                         decreasing >= acc.ew_min_decreasing});
  }

  if (checks) summary["checks_failed"] = checks->failed;
  ojson clauses = ojson::array();
  for (const auto& cl : d.clauses) {
    clauses.push_back(
        {{"id", cl.id}, {"target", cl.target}, {"observed", cl.observed}, {"tolerance", cl.tolerance}, {"pass", cl.pass}});
  }
  summary["clauses"] = clauses;
  summary["pass"] = d.pass();
  d.summary_json = summary.dump(2) + "\n";
  return d;
}

void write_functionals_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                           const std::vector<MeasureSnapshot>& trace) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os.precision(17);
  os << "n,H_n";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (const auto& s : trace) {
    os << s.n << ',' << s.H;
    for (double v : s.values) os << ',' << v;
    os << '\n';
  }
}

void write_reservoir_csv(const std::filesystem::path& path, const WeightedEmpiricalMeasure& m) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os.precision(17);
  os << "value,weight\n";
  if (m.reservoir_size() == 0) return;
  for (const auto& [v, w] : m.weighted_sample(0)) os << v << ',' << w << '\n';
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

}  // namespace

int run_experiment(const ExperimentConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  const CheckResults checks = run_checks(c);
  write_text(c.out_dir / "checks.json", checks.json);
  for (const auto& f : checks.failed) std::cerr << "warning: check '" << f << "' failed\n";

  SimulationResult sim;
  try {
    sim = simulate(c);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  write_functionals_csv(c.out_dir / "functionals.csv", sim.measure.names(), sim.trace);
  write_reservoir_csv(c.out_dir / "reservoir.csv", sim.measure);

  const DiagnosticsResult diag = diagnose(c, sim, &checks);
  write_text(c.out_dir / "summary.json", diag.summary_json);
  for (const auto& cl : diag.clauses) {
    std::cout << (cl.pass ? "PASS " : "FAIL ") << cl.id << ": observed " << cl.observed << ", target " << cl.target
              << ", tolerance " << cl.tolerance << '\n';
  }
  for (const auto& f : c.required_checks) {
    if (std::find(checks.failed.begin(), checks.failed.end(), f) != checks.failed.end()) {
      std::cerr << "error: required check '" << f << "' failed\n";
      return kRequiredCheckFailed;
    }
  }
  return kOk;
}

}  // namespace invdist
