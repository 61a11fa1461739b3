#include <doctest.h>

#include <cmath>

#include "invdist/errors.hpp"
#include "invdist/generators.hpp"

using namespace invdist;

namespace {

State at(double x, int z = 0) { return State{Vector::Constant(1, x), z}; }

}  // namespace

TEST_SUITE("generators") {
  TEST_CASE("polynomial test functions") {
    const auto p = TestFunction::polynomial({1.0, -2.0, 0.0, 3.0});
    for (double x : {-1.5, 0.0, 2.0}) {
      CHECK(p(at(x)) == doctest::Approx(1.0 - 2.0 * x + 3.0 * x * x * x));
      CHECK(p.smooth().gradient(Vector::Constant(1, x), 0)[0] == doctest::Approx(-2.0 + 9.0 * x * x));
      CHECK(p.smooth().hessian(Vector::Constant(1, x), 0)(0, 0) == doctest::Approx(18.0 * x));
    }
    CHECK(p.kind() == TestFunctionKind::Polynomial);
    CHECK_THROWS_AS(p.center(), StateError);
  }

  TEST_CASE("f = 0 gives a zero estimate") {
    const Scheme s(Model{ou_model(1.0, 1.0)}, SchemeKind::Euler);
    RandomStream rng(1);
    const auto e = estimate_pseudo_generator(s, TestFunction::polynomial({0.0}), at(1.3), 0.1, 2000, rng);
    CHECK(e.mean == 0.0);
    CHECK(e.half_width == 0.0);
    CHECK(e.samples == 1000);
    CHECK_THROWS_AS(estimate_pseudo_generator(s, TestFunction::polynomial({0.0}), at(0.0), 0.1, 10, rng),
                    ParameterError);
  }

  TEST_CASE("x^2 under euler: error gamma b(x)^2") {
    // A~_gamma x^2 = 2 x b + sigma^2 + gamma b^2, A x^2 = 2 x b + sigma^2.
    const Scheme s(Model{milstein1d_model(1.0, 1.0, 0.1)}, SchemeKind::Euler);
    const auto f = TestFunction::polynomial({0.0, 0.0, 1.0});
    RandomStream rng(2);
    const std::vector<double> gammas = {0.4, 0.2, 0.1};
    const std::vector<State> points = {at(-1.0), at(0.5), at(2.0)};
    const auto rows = generator_error_scan(s, f, points, gammas, 200000, rng);
    for (const auto& row : rows) {
      const double x = row.point.x[0];
      const double b = -x;
      const double sigma2 = 1.0 + 0.1 * x * x;
      CHECK(row.cells.front().generator == doctest::Approx(2.0 * x * b + sigma2));
      for (const auto& c : row.cells) {
        CHECK(std::abs(c.estimate.mean - (2.0 * x * b + sigma2 + c.gamma * b * b)) <= 4.5 * c.estimate.std_error);
      }
      CHECK(row.non_increasing);
    }
    CHECK_THROWS_AS(generator_error_scan(s, f, points, {0.1, 0.2}, 2000, rng), ParameterError);
  }

  TEST_CASE("bump support and values") {
    const auto b = TestFunction::bump(Vector::Constant(1, 1.0), 2.0);
    CHECK(b.kind() == TestFunctionKind::Bump);
    CHECK(b.id() == "bump@1");
    CHECK(b(at(1.0)) == doctest::Approx(std::exp(-1.0)));
    CHECK(b(at(2.0)) == doctest::Approx(std::exp(-1.0 / 0.75)));
    for (double x : {-1.0, 3.0, 3.5, -10.0}) {
      CHECK(b(at(x)) == 0.0);
      CHECK(b.smooth().gradient(Vector::Constant(1, x), 0)[0] == 0.0);
      CHECK(apply_generator(ou_model(1.0, 1.0), b.smooth(), at(x)) == 0.0);
    }
    CHECK(b(at(2.9999)) < 1e-100);
    CHECK_THROWS_AS(TestFunction::bump(Vector::Zero(1), 0.0), ParameterError);
  }

  TEST_CASE("bump derivatives against finite differences") {
    const double R = 1.5;
    Vector c(2);
    c << 0.3, -0.2;
    const auto b = TestFunction::bump(c, R);
    SmoothFunction fd;
    fd.value = b.smooth().value;
    for (double t : {0.0, 0.2, 0.5, 0.8}) {
      Vector x(2);
      x << c[0] + t * R * 0.6, c[1] - t * R * 0.8;
      const Vector g = b.smooth().gradient(x, 0);
      const Matrix H = b.smooth().hessian(x, 0);
      const double scale = std::max(1e-3, H.cwiseAbs().maxCoeff());
      CHECK((g - gradient_of(fd, x, 0)).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1e-3, g.norm()) + 1e-10);
      CHECK((H - hessian_of(fd, x, 0)).cwiseAbs().maxCoeff() <= 1e-4 * scale);
    }
  }

  TEST_CASE("per-regime bumps") {
    const auto b = TestFunction::bump({Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)}, {0.5, 2.0});
    CHECK(b(at(-1.0, 0)) == doctest::Approx(std::exp(-1.0)));
    CHECK(b(at(-1.0, 1)) == 0.0);
    CHECK(b.radius(1) == 2.0);
    CHECK(bump_grid(b, 1).size() == 2001);
    CHECK(bump_grid(b, 1).front()[0] == doctest::Approx(-1.0));
    CHECK(bump_grid(b, 1).back()[0] == doctest::Approx(3.0));
  }

  TEST_CASE("bump family at quantiles") {
    const auto fam = default_bump_family([](double u) { return 10.0 * u; }, 0.5, 2);
    REQUIRE(fam.size() == 5);
    CHECK(fam[0].center()[0] == doctest::Approx(1.0));
    CHECK(fam[4].center()[0] == doctest::Approx(9.0));
    CHECK(fam[2].radius() == doctest::Approx(1.0));
    CHECK(fam[2].center()[1] == 0.0);
  }

  TEST_CASE("generator functionals are registered under Af:<id>") {
    WeightedEmpiricalMeasure m(1);
    const Model model{ou_model(1.0, 1.0)};
    const auto fs = std::vector<TestFunction>{TestFunction::polynomial({0.0, 0.0, 1.0})};
    const auto idx = register_generator_functionals(m, model, fs);
    CHECK(m.names()[idx[0]] == "Af:poly:0:0:1");
    m.update(at(2.0), 1.0);
    // 2 x (-x) + 1
    CHECK(m.value(idx[0]) == doctest::Approx(-7.0));
  }

  TEST_CASE("ew residual on synthetic traces") {
    const Model model{ou_model(1.0, 1.0)};
    const auto b = TestFunction::bump(Vector::Zero(1), 1.0);
    const std::vector<std::string> names = {"one", "Af:" + b.id()};
    std::vector<MeasureSnapshot> trace;
    for (std::size_t n : {1, 10, 100, 1000, 10000}) trace.push_back({n, 1.0 * n, {1.0, 1.0 / std::sqrt(1.0 * n)}});
    auto r = ew_residual(trace, names, model, {b}, 100);
    REQUIRE(r.size() == 1);
    CHECK(r[0].reference == doctest::Approx(0.1));
    CHECK(r[0].terminal == doctest::Approx(0.01));
    CHECK(r[0].decreasing);
    CHECK(r[0].n.size() == 5);
    CHECK(r[0].sup_Af > 0.0);
    CHECK(r[0].sup_Af == doctest::Approx(sup_abs_generator(model, b, bump_grid(b))));

    // constant residual is not decreasing
    for (auto& s : trace) s.values[1] = 0.3;
    CHECK(!ew_residual(trace, names, model, {b}, 100)[0].decreasing);
    // reference past the end of the trace
    CHECK(!ew_residual(trace, names, model, {b}, 100000)[0].decreasing);

    CHECK_THROWS_AS(ew_residual(trace, names, model, {TestFunction::polynomial({1.0})}), PreconditionError);
    const auto other = TestFunction::bump(Vector::Constant(1, 5.0), 1.0);
    CHECK_THROWS_AS(ew_residual(trace, names, model, {other}), StateError);
  }

  TEST_CASE("antithetic estimate uses both signs") {
    // odd f: (f(x + s U) + f(x - s U)) / 2 - f(x) = 0 exactly for b = 0 at x = 0
    DiffusionModel d;
    d.drift = [](const Vector& x) -> Vector { return Vector::Zero(x.size()); };
    d.diffusion = [](const Vector&) -> Matrix { return Matrix::Identity(1, 1); };
    const Scheme s(Model{d}, SchemeKind::Euler);
    RandomStream rng(3);
    const auto e = estimate_increment(s, at(0.0), 0.5, [](const State& y) { return std::pow(y.x[0], 3); }, 500, rng);
    CHECK(std::abs(e.mean) < 1e-12);
  }
}
