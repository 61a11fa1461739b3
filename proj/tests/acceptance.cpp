// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "invdist/errors.hpp"
#include "invdist/experiment.hpp"

using namespace invdist;

namespace {

const std::filesystem::path kConfigDir = INVDIST_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Baseline runs are shared between criteria.
struct Run {
  ExperimentConfig config;
  SimulationResult sim;
  DiagnosticsResult diag;
  double seconds = 0.0;
};

std::map<std::string, Run>& runs() {
  static std::map<std::string, Run> r;
  return r;
}

Run& baseline(const std::string& name) {
  auto it = runs().find(name);
  if (it != runs().end()) return it->second;
  Run r;
  r.config = load_config(kConfigDir / (name + ".json"));
  r.config.run.replicas = 1;
  const auto t0 = std::chrono::steady_clock::now();
  r.sim = simulate(r.config);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.diag = diagnose(r.config, r.sim);
  return runs().emplace(name, std::move(r)).first->second;
}

State at(double x, int z = 0) { return State{Vector::Constant(1, x), z}; }

// 1. OU invariant law.
Outcome check_ou_invariant_law() {
  Run& r = baseline("ou_baseline");
  const double m2 = r.sim.measure.value("m2");
  const double m1 = r.sim.measure.value("m1");
  const bool pass = std::abs(m2 - 1.0) <= 0.05 && std::abs(m1) <= 0.05 && r.seconds <= 30.0;
  return {pass, fmt("nu_n(x^2) = %.5f, nu_n(x) = %.5f, %.2f s single-threaded", m2, m1, r.seconds)};
}

// 2. Wasserstein convergence.
Outcome check_wasserstein() {
  Run& r = baseline("ou_baseline");
  const auto ref = ou_stationary(1.0, std::sqrt(2.0));
  const double w = wasserstein1_vs_quantile(r.sim.measure, ref.quantile_function(), 1000);

  auto w1_at = [&](std::uint64_t seed, std::size_t n) {
    ExperimentConfig c = r.config;
    c.run.seed = seed;
    c.run.n_steps = n;
    const auto sim = simulate(c);
    return wasserstein1_vs_quantile(sim.measure, ref.quantile_function(), 1000);
  };
  std::vector<std::future<std::pair<double, double>>> jobs;
  for (std::uint64_t k = 1; k <= 10; ++k) {
    jobs.push_back(std::async(std::launch::async, [&, k] {
      const std::uint64_t seed = r.config.run.seed + k;
      return std::pair{w1_at(seed, 10000), w1_at(seed, 1000000)};
    }));
  }
  int improved = 0;
  std::string per_seed;
  for (auto& j : jobs) {
    const auto [early, late] = j.get();
    if (late < early) ++improved;
    per_seed += fmt(" %.4f->%.4f", early, late);
  }
  return {w <= 0.05 && improved >= 9,
          fmt("W1 = %.4f; W1(1e6) < W1(1e4) for %d/10 seeds (1e4->1e6):", w, improved) + per_seed};
}

// 3. Milstein.
Outcome check_milstein() {
  Run& r = baseline("milstein_baseline");
  const auto ref = build_reference(r.config);
  const double target = ref.moment(2);
  const double m2 = r.sim.measure.value("m2");
  const double rel = std::abs(m2 - target) / target;

  // sigma' = 0: the two schemes must agree bit for bit on shared innovations.
  const Scheme euler(Model{ou_model(1.0, std::sqrt(2.0))}, SchemeKind::Euler);
  const Scheme mil(Model{ou_model(1.0, std::sqrt(2.0))}, SchemeKind::Milstein);
  const auto schedule = StepSchedule::power(1.0, 1.0 / 3.0);
  RandomStream rng(derive_seed(r.config.run.seed, 7));
  State a = at(0.5);
  State b = a;
  std::size_t mismatches = 0;
  Vector U;
  for (std::size_t k = 1; k <= 10000; ++k) {
    euler.innovations().draw_into(rng, U);
    a = euler.step(a, schedule.gamma(k), U, rng);
    b = mil.step(b, schedule.gamma(k), U, rng);
    if (a.x[0] != b.x[0]) ++mismatches;
  }
  return {rel <= 0.07 && mismatches == 0,
          fmt("nu_n(x^2) = %.5f vs quadrature %.5f (rel %.4f); %zu bitwise mismatches in 10^4 steps", m2, target,
              rel, mismatches)};
}

// 4. Markov-switching convergence.
Outcome check_switching() {
  Run& r = baseline("switching_baseline");
  const auto ref = build_reference(r.config);
  const double target = ref.moment(2);
  const double m2 = r.sim.measure.value("m2");
  const double rel = std::abs(m2 - target) / target;
  bool occ = true;
  std::string detail = fmt("nu_n(x^2) = %.5f vs %.5f (rel %.4f); occupation", m2, target, rel);
  for (Eigen::Index z = 0; z < ref.table().pi.size(); ++z) {
    const double o = r.sim.measure.value("pi:" + std::to_string(z));
    occ = occ && std::abs(o - ref.table().pi[z]) <= 0.03;
    detail += fmt(" %.4f/%.4f", o, ref.table().pi[z]);
  }
  return {rel <= 0.07 && occ, detail};
}

// 5. Tightness proxy.
Outcome check_tightness() {
  bool pass = true;
  std::string detail;
  for (const char* name : {"ou_baseline", "switching_baseline"}) {
    Run& r = baseline(name);
    const std::size_t col = r.sim.measure.index_of("lyapunov");
    const std::size_t cut = r.config.run.n_steps / 10;
    double early = 0.0;
    double late = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < r.sim.trace.size(); ++i) {
      const double v = r.sim.trace[i].values[col];
      finite = finite && std::isfinite(v);
      double& slot = r.sim.snapshot_at[i] <= cut ? early : late;
      slot = std::max(slot, v);
    }
    const double ratio = late / early;
    pass = pass && finite && ratio <= 1.1;
    detail += fmt("%s: sup %.4f, last-decade/earlier max %.4f; ", name, std::max(early, late), ratio);
  }
  return {pass, detail};
}

// 6. Echeverria-Weiss residual.
Outcome check_ew_residual() {
  Run& r = baseline("ou_baseline");
  int decreasing = 0;
  bool small = true;
  std::string detail;
  for (const auto& e : r.diag.ew) {
    const double rel = e.terminal / e.sup_Af;
    small = small && rel <= 0.05;
    if (e.decreasing) ++decreasing;
    detail += fmt("%s %.4f%s; ", e.id.c_str(), rel, e.decreasing ? "" : " (not decreasing)");
  }
  return {r.diag.ew.size() == 5 && small && decreasing >= 4,
          detail + fmt("%d/5 decreasing from n = 10^3", decreasing)};
}

// 7. Generator approximation.
Outcome check_generator_approximation() {
  RandomStream rng(derive_seed(20241015, 70));
  const Scheme euler(Model{ou_model(1.0, std::sqrt(2.0))}, SchemeKind::Euler);
  const auto square = TestFunction::polynomial({0.0, 0.0, 1.0});
  const std::vector<double> gammas = {0.4, 0.2, 0.1, 0.05};
  const auto rows = generator_error_scan(euler, square, {at(-1.5), at(0.5), at(2.0)}, gammas, 1000000, rng);
  int inside = 0;
  int total = 0;
  for (const auto& row : rows) {
    const double b = -row.point.x[0];
    for (const auto& cell : row.cells) {
      ++total;
      if (std::abs(cell.error - cell.gamma * b * b) <= cell.estimate.half_width) ++inside;
    }
  }

  Matrix Q(2, 2);
  Q << -1.0, 1.0, 1.0, -1.0;
  const Scheme sw(Model{switching_ou_model({1.0, 2.0}, {std::sqrt(2.0), std::sqrt(2.0)}, Q)},
                  SchemeKind::SwitchingEuler);
  const auto bump = TestFunction::bump(Vector::Constant(1, 0.0), 2.0);
  const auto brows = generator_error_scan(sw, bump, {at(-0.8, 0), at(0.3, 1), at(1.0, 0)}, gammas, 1000000, rng);
  int monotone = 0;
  for (const auto& row : brows) monotone += row.non_increasing ? 1 : 0;
  return {inside == total && monotone == 3,
          fmt("x^2: %d/%d cells within the 99%% CI of gamma b^2; bump: %d/3 points non-increasing", inside, total,
              monotone)};
}

// 8. Recursive-control checkers.
Outcome check_recursive_control() {
  const auto c = load_config(kConfigDir / "ou_baseline.json");
  const Scheme s = build_scheme(c);
  const auto spec = quadratic_lyapunov(2.0);
  RandomStream rng(derive_seed(c.run.seed, 80));
  const auto probes = default_probe_grid(1);
  const auto rc = empirical_recursive_control(s, spec, c.lyapunov.alpha, c.lyapunov.beta, {1.0, 0.5, 0.1, 0.01},
                                              probes, 100000, rng);

  int held = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 20; ++t) {
    const int d = 1 + t % 3;
    Matrix L(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) L(i, j) = rng.normal();
    }
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = 0.5 * rng.normal();
    const double h = 0.1 + 0.8 * rng.uniform();
    // 2 Lambda^T Lambda scaled to top eigenvalue in [0.1, 0.7]; 4h Lambda^T Lambda < I keeps the variance finite.
    Eigen::SelfAdjointEigenSolver<Matrix> es(L.transpose() * L, Eigen::EigenvaluesOnly);
    const double mu = std::min((0.05 + 0.3 * rng.uniform()), 0.125 / h);
    L *= std::sqrt(mu / es.eigenvalues().maxCoeff());
    const auto lr = laplace_bound_check(L, v, h, 1000000, rng);
    if (lr.holds) ++held;
    worst = std::min(worst, (lr.rhs - lr.lhs.mean) / lr.lhs.half_width);
  }
  std::size_t violated = 0;
  for (const auto& cell : rc.cells) violated += (cell.violated || cell.overflow) ? 1 : 0;
  return {rc.confirmed && held == 20,
          fmt("RC bound confirmed at %zu/%zu (gamma, probe) cells; Laplace bound %d/20 (smallest margin %.1f "
              "half-widths)",
              rc.cells.size() - violated, rc.cells.size(), held, worst)};
}

// 9. Exactness and determinism.
Outcome check_exactness() {
  const Scheme s(Model{ou_model(1.0, std::sqrt(2.0))}, SchemeKind::Euler);
  const auto schedule = StepSchedule::power(1.0, 1.0 / 3.0);
  std::vector<double> xs;
  WeightedEmpiricalMeasure m(1);
  m.add_functional("x2", [&xs](const State& st) {
    xs.push_back(st.x[0]);
    return st.x[0] * st.x[0];
  });
  WeightedEmpiricalMeasure* sinks[] = {&m};
  run_trajectory(s, schedule, at(0.3), 1000, sinks, 99);
  long double num = 0.0L;
  long double den = 0.0L;
  for (std::size_t k = 1; k <= xs.size(); ++k) {
    num += static_cast<long double>(schedule.eta(k)) * xs[k - 1] * xs[k - 1];
    den += schedule.eta(k);
  }
  const double batch = static_cast<double>(num / den);
  const double rec_err = std::abs(m.value("x2") - batch) / std::abs(batch);

  auto piece = [&](std::uint64_t seed) {
    WeightedEmpiricalMeasure p(seed, 200);
    p.add_functional("x2", moment_functional(2));
    WeightedEmpiricalMeasure* ps[] = {&p};
    run_trajectory(s, schedule, at(0.0), 3000, ps, seed);
    return p;
  };
  const auto a = piece(1);
  const auto b = piece(2);
  const auto c = piece(3);
  const double left = merge(merge(a, b), c).value("x2");
  const double right = merge(a, merge(b, c)).value("x2");
  const double swapped = merge(merge(c, b), a).value("x2");
  const double merge_err = std::max(std::abs(left - right), std::abs(left - swapped)) / std::abs(left);

  auto summary = [](const std::filesystem::path& dir) {
    auto cfg = load_config(kConfigDir / "ou_baseline.json");
    cfg.run.n_steps = 100000;
    cfg.run.replicas = 3;
    cfg.out_dir = dir;
    std::filesystem::remove_all(dir);
    std::ostringstream quiet;
    auto* saved = std::cout.rdbuf(quiet.rdbuf());
    run_experiment(cfg);
    std::cout.rdbuf(saved);
    std::ifstream in(dir / "summary.json", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string s1 = summary(tmp / "invdist_acceptance_a");
  const std::string s2 = summary(tmp / "invdist_acceptance_b");
  std::filesystem::remove_all(tmp / "invdist_acceptance_a");
  std::filesystem::remove_all(tmp / "invdist_acceptance_b");
  const bool identical = !s1.empty() && s1 == s2;
  return {rec_err <= 1e-12 && merge_err <= 1e-12 && identical,
          fmt("recursive vs batch %.2e; merge assoc/comm %.2e; summary.json %s", rec_err, merge_err,
              identical ? "byte-identical" : "differs")};
}

// 10. Schedule gate.
Outcome check_schedule_gate() {
  const auto good = check_sw1(StepSchedule::power(1.0, 1.0 / 3.0), 2.0, 1.0, 1000000);
  const auto bad = check_sw1(StepSchedule::power(1.0, 1.0, 0.0), 2.0, 1.0, 1000000);
  bool constant_rejected = false;
  try {
    StepSchedule::table(std::vector<double>(1000, 0.01));
  } catch (const ScheduleError&) {
    constant_rejected = true;
  }
  bool zero_theta_rejected = false;
  try {
    StepSchedule::power(0.01, 0.0);
  } catch (const ParameterError&) {
    zero_theta_rejected = true;
  }
  return {good.verdict == Verdict::Admissible && bad.verdict == Verdict::Inadmissible && constant_rejected &&
              zero_theta_rejected,
          "theta = 1/3: " + to_string(good.verdict) + "; gamma = 1/n, eta = 1: " + to_string(bad.verdict) +
              "; constant steps " + (constant_rejected && zero_theta_rejected ? "rejected" : "accepted")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 ou-invariant-law", check_ou_invariant_law},
      {"2 wasserstein", check_wasserstein},
      {"3 milstein", check_milstein},
      {"4 markov-switching", check_switching},
      {"5 tightness", check_tightness},
      {"6 ew-residual", check_ew_residual},
      {"7 generator-approximation", check_generator_approximation},
      {"8 recursive-control", check_recursive_control},
      {"9 exactness-determinism", check_exactness},
      {"10 schedule-gate", check_schedule_gate},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << "criterion " << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
