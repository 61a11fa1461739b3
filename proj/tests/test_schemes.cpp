#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "invdist/schemes.hpp"

using namespace invdist;

namespace {

Matrix two_state(double q12, double q21) {
  Matrix Q(2, 2);
  Q << -q12, q12, q21, -q21;
  return Q;
}

DiffusionModel frozen(int d) {
  DiffusionModel m;
  m.dim = d;
  m.noise_dim = d;
  m.drift = [d](const Vector&) -> Vector { return Vector::Zero(d); };
  m.diffusion = [d](const Vector&) -> Matrix { return Matrix::Zero(d, d); };
  return m;
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_SUITE("schemes") {
  TEST_CASE("euler step arithmetic") {
    Vector x(2);
    x << 1.0, 2.0;
    CHECK(euler_step(frozen(2), x, 0.3, Vector::Ones(2)) == x);
    const auto ou = ou_model(1.0, std::sqrt(2.0));
    CHECK(euler_step(ou, Vector::Zero(1), 0.01, Vector::Ones(1))[0] == doctest::Approx(0.1414213562373095));
  }

  TEST_CASE("euler conditional mean and covariance") {
    const auto ou = ou_model(1.0, std::sqrt(2.0));
    const double gamma = 0.1;
    RandomStream rng(3);
    const int n = 1000000;
    for (double x0 : {-2.0, 0.0, 1.5}) {
      double s1 = 0.0;
      double s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double y = euler_step(ou, Vector::Constant(1, x0), gamma, Vector::Constant(1, rng.normal()))[0];
        s1 += y;
        s2 += y * y;
      }
      const double mean = (1.0 - gamma) * x0;
      const double var = 2.0 * gamma;
      CHECK(std::abs(s1 / n - mean) < 3.0 * std::sqrt(var / n));
      // E[x'^2 | x] = (1 - gamma)^2 x^2 + 2 gamma; Var(x'^2) = 2 var^2 + 4 mean^2 var
      const double m2 = mean * mean + var;
      CHECK(std::abs(s2 / n - m2) < 3.0 * std::sqrt((2 * var * var + 4 * mean * mean * var) / n));
    }
  }

  TEST_CASE("divergence carries context") {
    DiffusionModel m = frozen(1);
    m.drift = [](const Vector& x) -> Vector { return 1e13 * (x + Vector::Ones(1)); };
    try {
      euler_step(m, Vector::Constant(1, 2.0), 1.0, Vector::Zero(1));
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.last_valid().x[0] == 2.0);
      CHECK(e.gamma() == 1.0);
    }
  }

  TEST_CASE("milstein arithmetic and reduction to euler") {
    DiffusionModel m;
    m.drift = [](const Vector& x) -> Vector { return Vector::Zero(x.size()); };
    m.diffusion = [](const Vector& x) -> Matrix { return Matrix::Constant(1, 1, x[0]); };
    m.diffusion_derivative = [](double) { return 1.0; };
    CHECK(milstein_step(m, 1.0, 0.04, 2.0) == doctest::Approx(1.52));

    const auto ou = ou_model(0.7, 1.3);
    RandomStream rng(5);
    bool identical = true;
    for (int i = 0; i < 10000; ++i) {
      const double x = 10.0 * (rng.uniform() - 0.5);
      const double g = rng.uniform();
      const double u = rng.normal();
      if (milstein_step(ou, x, g, u) != euler_step(ou, Vector::Constant(1, x), g, Vector::Constant(1, u))[0]) {
        identical = false;
      }
    }
    CHECK(identical);
  }

  TEST_CASE("milstein correction is centred") {
    const auto m = milstein1d_model(1.0, 1.0, 1.0);
    const auto ou_part = [&](double x, double g, double u) {
      return x + g * m.drift(Vector::Constant(1, x))[0] + std::sqrt(g) * m.diffusion(Vector::Constant(1, x))(0, 0) * u;
    };
    RandomStream rng(9);
    const int n = 1000000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = rng.normal();
      const double c = milstein_step(m, 2.0, 0.1, u) - ou_part(2.0, 0.1, u);
      s += c;
      s2 += c * c;
    }
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    CHECK(std::abs(s / n) < 3.0 * sd / std::sqrt(1.0 * n));
  }

  TEST_CASE("ctmc") {
    RandomStream rng(1);
    const auto absorbing = simulate_ctmc_segment(Matrix::Zero(2, 2), 1, 0.0, 100.0, rng);
    CHECK(absorbing.jump_times.empty());
    CHECK(absorbing.final_regime == 1);

    for (auto [q12, q21, pi0] : {std::tuple{1.0, 1.0, 0.5}, std::tuple{2.0, 1.0, 1.0 / 3.0}}) {
      const Matrix Q = two_state(q12, q21);
      const double T = 1e4;
      const auto path = simulate_ctmc_segment(Q, 0, 0.0, T, rng);
      double t = 0.0;
      int z = 0;
      double occ = 0.0;
      for (std::size_t i = 0; i < path.jump_times.size(); ++i) {
        if (z == 0) occ += path.jump_times[i] - t;
        t = path.jump_times[i];
        z = path.states[i];
      }
      if (z == 0) occ += T - t;
      // Occupation-time variance of a two-state chain: 2 pi0 pi1 / ((q12 + q21) T).
      const double sd = std::sqrt(2.0 * pi0 * (1.0 - pi0) / ((q12 + q21) * T));
      CHECK(std::abs(occ / T - pi0) < 3.0 * sd);
    }
  }

  TEST_CASE("switching step: regime change probability") {
    const auto m = switching_ou_model({1.0, 1.0}, {1.0, 1.0}, two_state(1.0, 0.0));
    RandomStream rng(13);
    const int n = 1000000;
    int changed = 0;
    for (int i = 0; i < n; ++i) {
      if (switching_euler_step(m, State{Vector::Zero(1), 0}, 0.01, Vector::Zero(1), rng).regime == 1) ++changed;
    }
    const double p = 1.0 - std::exp(-0.01);
    CHECK(std::abs(changed / double(n) - p) < 3.0 * std::sqrt(p * (1 - p) / n));
  }

  TEST_CASE("switching step: frozen coefficients") {
    const auto m = switching_ou_model({1.0, 3.0}, {1.0, 2.0}, two_state(50.0, 0.0));
    RandomStream r1(1);
    RandomStream r2(2);
    const Vector U = Vector::Constant(1, 0.37);
    const State s{Vector::Constant(1, 1.2), 0};
    const State a = switching_euler_step(m, s, 0.5, U, r1);
    const State b = switching_euler_step(m, s, 0.5, U, r2);
    CHECK(a.x[0] == b.x[0]);
    CHECK(a.x[0] == doctest::Approx(1.2 - 0.5 * 1.2 + std::sqrt(0.5) * 0.37));
  }

  TEST_CASE("switching with Q = 0 matches euler") {
    const auto sw = switching_ou_model({1.0}, {std::sqrt(2.0)}, Matrix::Zero(1, 1));
    const Scheme a(Model{sw}, SchemeKind::SwitchingEuler);
    const Scheme b(Model{ou_model(1.0, std::sqrt(2.0))}, SchemeKind::Euler);
    const auto schedule = StepSchedule::power(0.5, 0.5);
    std::vector<WeightedEmpiricalMeasure*> none;
    const auto ra = run_trajectory(a, schedule, State{Vector::Constant(1, 1.0), 0}, 1000, none, 99);
    const auto rb = run_trajectory(b, schedule, State{Vector::Constant(1, 1.0), 0}, 1000, none, 99);
    CHECK(ra.final.state.x[0] == rb.final.state.x[0]);

    std::vector<double> ea;
    std::vector<double> eb;
    for (int i = 0; i < 100000; ++i) {
      RandomStream s1(derive_seed(1, i));
      RandomStream s2(derive_seed(2, i));
      State x{Vector::Constant(1, 1.0), 0};
      State y = x;
      for (int k = 0; k < 5; ++k) {
        x = a.step(x, 0.2, s1);
        y = b.step(y, 0.2, s2);
      }
      ea.push_back(x.x[0]);
      eb.push_back(y.x[0]);
    }
    // Critical value at level 0.01 for two samples of size 1e5: 1.628 sqrt(2 / 1e5).
    CHECK(ks_statistic(ea, eb) < 1.628 * std::sqrt(2.0 / 100000));
  }

  TEST_CASE("scheme and model compatibility") {
    CHECK_THROWS_AS(Scheme(Model{ou_model(1.0, 1.0, 2)}, SchemeKind::Milstein), ModelError);
    CHECK_THROWS_AS(Scheme(Model{ou_model(1.0, 1.0)}, SchemeKind::SwitchingEuler), ModelError);
    CHECK_THROWS_AS(Scheme(Model{switching_ou_model({1.0}, {1.0}, Matrix::Zero(1, 1))}, SchemeKind::Euler),
                    ModelError);
    CHECK_NOTHROW(Scheme(Model{milstein1d_model(1.0, 1.0, 0.1)}, SchemeKind::Milstein));
  }

  TEST_CASE("trajectory feeds pre-step states") {
    const Scheme s(Model{ou_model(1.0, 1.0)}, SchemeKind::Euler);
    const auto schedule = StepSchedule::power(1.0, 0.5);
    WeightedEmpiricalMeasure m(1);
    m.add_functional("x", moment_functional(1));
    WeightedEmpiricalMeasure* sinks[] = {&m};
    run_trajectory(s, schedule, State{Vector::Constant(1, 3.0), 0}, 1, sinks, 4);
    CHECK(m.value("x") == 3.0);
    CHECK(m.count() == 1);
  }

  TEST_CASE("trajectory determinism, clock and trace") {
    const Scheme s(Model{ou_model(1.0, 1.0)}, SchemeKind::Euler);
    const auto schedule = StepSchedule::power(1.0, 1.0 / 3.0);
    WeightedEmpiricalMeasure m1(5);
    WeightedEmpiricalMeasure m2(5);
    WeightedEmpiricalMeasure* s1[] = {&m1};
    WeightedEmpiricalMeasure* s2[] = {&m2};
    std::ostringstream trace;
    TrajectoryOptions opt;
    opt.trace = &trace;
    opt.trace_every = 100;
    const auto a = run_trajectory(s, schedule, State{Vector::Zero(1), 0}, 1000, s1, 17, opt);
    const auto b = run_trajectory(s, schedule, State{Vector::Zero(1), 0}, 1000, s2, 17);
    CHECK(a.final.state.x[0] == b.final.state.x[0]);
    CHECK(m1.values() == m2.values());
    CHECK(a.final.clock == doctest::Approx(schedule.Gamma(1000)).epsilon(1e-12));
    CHECK(m1.mass() == doctest::Approx(schedule.H(1000)).epsilon(1e-12));
    std::string line;
    int rows = 0;
    std::istringstream in(trace.str());
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 11);
  }

  TEST_CASE("parse scheme tags") {
    CHECK(parse_scheme("switching-euler") == SchemeKind::SwitchingEuler);
    CHECK(to_string(SchemeKind::Milstein) == "milstein");
    CHECK_THROWS_AS(parse_scheme("rk4"), ConfigError);
  }
}
