#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>

#include "invdist/errors.hpp"
#include "invdist/measures.hpp"

using namespace invdist;

namespace {

State point(double x) { return State{Vector::Constant(1, x), 0}; }

double normal_quantile(double u) {
  static const boost::math::normal_distribution<double> n(0.0, 1.0);
  if (u <= 0.0) return -std::numeric_limits<double>::infinity();
  if (u >= 1.0) return std::numeric_limits<double>::infinity();
  return boost::math::quantile(n, u);
}

}  // namespace

TEST_SUITE("measures") {
  TEST_CASE("recursive mean equals the batch weighted mean") {
    WeightedEmpiricalMeasure m(1);
    m.add_functional("x", moment_functional(1));
    m.add_functional("x2", moment_functional(2));
    RandomStream rng(2);
    long double num1 = 0.0L;
    long double num2 = 0.0L;
    long double den = 0.0L;
    for (int k = 1; k <= 100000; ++k) {
      const double x = rng.normal() * 3.0 + 1.0;
      const double eta = std::pow(k, -1.0 / 3.0);
      m.update(point(x), eta);
      num1 += (long double)eta * x;
      num2 += (long double)eta * x * x;
      den += eta;
    }
    CHECK(m.value("x") == doctest::Approx(double(num1 / den)).epsilon(1e-12));
    CHECK(m.value("x2") == doctest::Approx(double(num2 / den)).epsilon(1e-12));
    CHECK(m.mass() == doctest::Approx(double(den)).epsilon(1e-14));
    CHECK(m.value("one") == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("uniform weights on 1..10000") {
    WeightedEmpiricalMeasure m(1);
    m.add_functional("x", moment_functional(1));
    for (int k = 1; k <= 10000; ++k) m.update(point(k), 1.0);
    CHECK(m.value("x") == doctest::Approx(5000.5).epsilon(1e-14));
    CHECK(m.count() == 10000);
  }

  TEST_CASE("zero weights leave values unchanged") {
    WeightedEmpiricalMeasure m(1);
    m.add_functional("x", moment_functional(1));
    m.update(point(2.0), 1.0);
    m.update(point(100.0), 0.0);
    CHECK(m.value("x") == 2.0);
    CHECK_THROWS_AS(m.update(point(1.0), -1.0), ParameterError);
  }

  TEST_CASE("registration is closed after the first update") {
    WeightedEmpiricalMeasure m(1);
    m.update(point(0.0), 1.0);
    CHECK_THROWS(m.add_functional("x", moment_functional(1)));
  }

  TEST_CASE("tainted functionals") {
    WeightedEmpiricalMeasure m(1);
    const auto i = m.add_functional("log", [](const State& s) { return std::log(s.x[0]); });
    const auto j = m.add_functional("x", moment_functional(1));
    m.update(point(1.0), 1.0);
    m.update(point(-1.0), 1.0);
    m.update(point(2.0), 1.0);
    CHECK(m.tainted(i));
    CHECK(!std::isfinite(m.value(i)));
    CHECK(!m.tainted(j));
    CHECK(m.value(j) == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("merge") {
    auto make = [](std::uint64_t seed) {
      WeightedEmpiricalMeasure m(seed, 1000);
      m.add_functional("x", moment_functional(1));
      return m;
    };
    WeightedEmpiricalMeasure whole = make(1);
    WeightedEmpiricalMeasure first = make(2);
    WeightedEmpiricalMeasure second = make(3);
    RandomStream rng(5);
    for (int k = 1; k <= 20000; ++k) {
      const double x = rng.normal();
      const double eta = 1.0 / std::sqrt(k);
      whole.update(point(x), eta);
      (k <= 10000 ? first : second).update(point(x), eta);
    }
    const auto ab = merge(first, second);
    const auto ba = merge(second, first);
    CHECK(ab.value("x") == doctest::Approx(whole.value("x")).epsilon(1e-12));
    CHECK(ab.mass() == doctest::Approx(whole.mass()).epsilon(1e-14));
    CHECK(ab.count() == 20000);
    CHECK(ab.value("x") == doctest::Approx(ba.value("x")).epsilon(1e-15));
    CHECK(ab.reservoir_size() == 1000);

    // (H_a nu_a + H_b nu_b) / (H_a + H_b)
    const double expected =
        (first.mass() * first.value("x") + second.mass() * second.value("x")) / (first.mass() + second.mass());
    CHECK(ab.value("x") == doctest::Approx(expected).epsilon(1e-14));

    WeightedEmpiricalMeasure other(4);
    other.add_functional("y", moment_functional(1));
    CHECK_THROWS_AS(merge(first, other), MergeError);
  }

  TEST_CASE("bottom-k reservoir with inverse-inclusion weights") {
    WeightedEmpiricalMeasure m(9, 5000);
    RandomStream rng(10);
    double exact = 0.0;
    double H = 0.0;
    for (int k = 1; k <= 200000; ++k) {
      const double x = rng.uniform();
      const double eta = std::pow(k, -0.5);
      m.update(point(x), eta);
      exact += eta * x;
      H += eta;
    }
    CHECK(m.reservoir_size() == 5000);
    CHECK(std::isfinite(m.reservoir_threshold()));
    double s = 0.0;
    double w = 0.0;
    for (const auto& [x, weight] : m.weighted_sample()) {
      s += weight * x;
      w += weight;
    }
    // Uniform(0,1) atoms: sd 0.29, effective sample >= 2500.
    CHECK(std::abs(s / w - exact / H) < 3.0 * 0.29 / std::sqrt(2500.0));
    CHECK(std::abs(w / H - 1.0) < 0.1);
  }

  TEST_CASE("weighted quantile is left-continuous") {
    EmpiricalQuantile q({{1.0, 1.0}, {2.0, 1.0}, {3.0, 2.0}});
    CHECK(q(0.0) == 1.0);
    CHECK(q(0.25) == 1.0);
    CHECK(q(0.2500001) == 2.0);
    CHECK(q(0.5) == 2.0);
    CHECK(q(0.51) == 3.0);
    CHECK(q(1.0) == 3.0);
  }

  TEST_CASE("W1 on small examples") {
    const auto dirac0 = [](double) { return 0.0; };
    CHECK(wasserstein1_vs_quantile(EmpiricalQuantile({{0.0, 1.0}, {1.0, 1.0}}), dirac0, 100) ==
          doctest::Approx(0.5));
    CHECK(wasserstein1_vs_quantile(EmpiricalQuantile({{3.0, 1.0}}), dirac0, 100) == doctest::Approx(3.0));
    // Uniform sample on {0.5/G, ..., (G-0.5)/G} against the uniform law on [0,1].
    std::vector<std::pair<double, double>> u;
    for (int j = 0; j < 1000; ++j) u.emplace_back((j + 0.5) / 1000.0, 1.0);
    CHECK(wasserstein1_vs_quantile(EmpiricalQuantile(u), [](double v) { return v; }, 1000) < 1e-12);
    CHECK_THROWS_AS(wasserstein1_vs_quantile(EmpiricalQuantile(u), dirac0, 10), ParameterError);
  }

  TEST_CASE("W1 of normal draws against the normal law") {
    WeightedEmpiricalMeasure m(3);
    RandomStream rng(4);
    for (int k = 0; k < 100000; ++k) m.update(point(rng.normal()), 1.0);
    const double w100 = wasserstein1_vs_quantile(m, normal_quantile, 100);
    const double w10k = wasserstein1_vs_quantile(m, normal_quantile, 10000);
    CHECK(w10k < 0.02);
    CHECK(std::abs(w100 - w10k) < 0.02);
  }

  TEST_CASE("empty reservoir") {
    WeightedEmpiricalMeasure m(3);
    CHECK_THROWS_AS(wasserstein1_vs_quantile(m, normal_quantile, 100), StateError);
  }

  TEST_CASE("geometric snapshots") {
    const auto s = geometric_snapshots(1000, 10);
    CHECK(s.front() == 1);
    CHECK(s.back() == 1000);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    CHECK(std::find(s.begin(), s.end(), 100) != s.end());
    CHECK(geometric_snapshots(1234).back() == 1234);
  }

  TEST_CASE("regime indicator") {
    const auto f = regime_indicator(1);
    CHECK(f(State{Vector::Zero(1), 1}) == 1.0);
    CHECK(f(State{Vector::Zero(1), 0}) == 0.0);
  }
}
