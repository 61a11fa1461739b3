#include "invdist/generators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "invdist/errors.hpp"

namespace invdist {

IncrementEstimate estimate_increment(const Scheme& scheme, const State& s, double gamma,
                                     const std::function<double(const State&)>& g, std::size_t pairs,
                                     RandomStream& rng) {
  if (!(gamma > 0.0)) throw ParameterError("gamma", "must be > 0");
  IncrementEstimate est;
  const double g0 = g(s);
  Vector U;
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    scheme.innovations().draw_into(rng, U);
    const State up = scheme.step(s, gamma, U, rng);
    const State down = scheme.step(s, gamma, Vector(-U), rng);
    const double v = 0.5 * (g(up) + g(down)) - g0;
    if (!std::isfinite(v)) {
      ++est.rejected;
      continue;
    }
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  est.samples = n;
  if (n == 0) {
    est.mean = std::numeric_limits<double>::quiet_NaN();
    est.half_width = std::numeric_limits<double>::infinity();
    est.std_error = std::numeric_limits<double>::infinity();
    return est;
  }
  const double var = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  est.mean = mean / gamma;
  est.std_error = std::sqrt(var / static_cast<double>(n)) / gamma;
  est.half_width = kZ99 * est.std_error;
  return est;
}

namespace {

std::string format_id(const char* prefix, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%.4g", prefix, v);
  return buf;
}

struct BumpEval {
  double value = 0.0;
  double d1 = 0.0;  // d/du of exp(-1/(1-u))
  double d2 = 0.0;  // d2/du2
  bool inside = false;
};

BumpEval bump_profile(double u) {
  BumpEval e;
  if (u >= 1.0) return e;
  const double w = 1.0 - u;
  e.inside = true;
  e.value = std::exp(-1.0 / w);
  e.d1 = -e.value / (w * w);
  e.d2 = e.value * (2.0 * u - 1.0) / (w * w * w * w);
  return e;
}

}  // namespace

TestFunction TestFunction::bump(Vector center, double radius) {
  return bump(std::vector<Vector>{std::move(center)}, std::vector<double>{radius});
}

TestFunction TestFunction::bump(std::vector<Vector> centers, std::vector<double> radii) {
  if (centers.empty() || centers.size() != radii.size()) {
    throw ParameterError("bump", "need one radius per center");
  }
  for (double r : radii) {
    if (!(r > 0.0)) throw ParameterError("bump.radius", "must be > 0");
  }
  TestFunction t;
  t.kind_ = TestFunctionKind::Bump;
  t.id_ = format_id("bump@", centers.front()[0]);
  t.centers_ = std::move(centers);
  t.radii_ = std::move(radii);
  auto pick = [c = t.centers_, r = t.radii_](int z) {
    const std::size_t i = c.size() == 1 ? 0 : static_cast<std::size_t>(z);
    return std::pair<const Vector&, double>(c.at(i), r.at(i));
  };
  // Copies of the tables live inside each closure so TestFunction stays a value type.
  t.f_.value = [pick](const Vector& x, int z) {
    auto [c, R] = pick(z);
    return bump_profile((x - c).squaredNorm() / (R * R)).value;
  };
  t.f_.gradient = [pick](const Vector& x, int z) -> Vector {
    auto [c, R] = pick(z);
    const BumpEval e = bump_profile((x - c).squaredNorm() / (R * R));
    if (!e.inside) return Vector::Zero(x.size());
    return e.d1 * 2.0 * (x - c) / (R * R);
  };
  t.f_.hessian = [pick](const Vector& x, int z) -> Matrix {
    auto [c, R] = pick(z);
    const BumpEval e = bump_profile((x - c).squaredNorm() / (R * R));
    if (!e.inside) return Matrix::Zero(x.size(), x.size());
    const Vector du = 2.0 * (x - c) / (R * R);
    return e.d2 * du * du.transpose() + e.d1 * (2.0 / (R * R)) * Matrix::Identity(x.size(), x.size());
  };
  return t;
}

TestFunction TestFunction::polynomial(std::vector<double> coefficients, int coordinate) {
  TestFunction t;
  t.kind_ = TestFunctionKind::Polynomial;
  std::string id = "poly";
  for (double c : coefficients) id += format_id(":", c);
  t.id_ = id;
  auto eval = [coefficients, coordinate](const Vector& x, int order) {
    // order-th derivative of sum_i c_i y^i at y = x_k (Horner on the derived coefficients).
    const double y = x[coordinate];
    double acc = 0.0;
    for (std::size_t i = coefficients.size(); i-- > static_cast<std::size_t>(order);) {
      double c = coefficients[i];
      for (int j = 0; j < order; ++j) c *= static_cast<double>(i - static_cast<std::size_t>(j));
      acc = acc * y + c;
    }
    return acc;
  };
  t.f_.value = [eval](const Vector& x, int) { return eval(x, 0); };
  t.f_.gradient = [eval, coordinate](const Vector& x, int) -> Vector {
    Vector g = Vector::Zero(x.size());
    g[coordinate] = eval(x, 1);
    return g;
  };
  t.f_.hessian = [eval, coordinate](const Vector& x, int) -> Matrix {
    Matrix H = Matrix::Zero(x.size(), x.size());
    H(coordinate, coordinate) = eval(x, 2);
    return H;
  };
  return t;
}

TestFunction TestFunction::user(std::string id, SmoothFunction f) {
  if (!f.value) throw ParameterError("test_function", "a value function is required");
  TestFunction t;
  t.kind_ = TestFunctionKind::User;
  t.id_ = std::move(id);
  t.f_ = std::move(f);
  return t;
}

const Vector& TestFunction::center(int regime) const {
  if (kind_ != TestFunctionKind::Bump) throw StateError("not a bump");
  return centers_.size() == 1 ? centers_.front() : centers_.at(static_cast<std::size_t>(regime));
}

double TestFunction::radius(int regime) const {
  if (kind_ != TestFunctionKind::Bump) throw StateError("not a bump");
  return radii_.size() == 1 ? radii_.front() : radii_.at(static_cast<std::size_t>(regime));
}

IncrementEstimate estimate_pseudo_generator(const Scheme& scheme, const TestFunction& f, const State& s,
                                            double gamma, std::size_t mc_samples, RandomStream& rng) {
  if (mc_samples < 1000) throw ParameterError("mc_samples", "must be >= 1000");
  return estimate_increment(scheme, s, gamma, [&f](const State& y) { return f(y); }, mc_samples / 2, rng);
}

std::vector<ErrorScanRow> generator_error_scan(const Scheme& scheme, const TestFunction& f,
                                               const std::vector<State>& points,
                                               const std::vector<double>& gammas, std::size_t mc_samples,
                                               RandomStream& rng) {
  for (std::size_t k = 1; k < gammas.size(); ++k) {
    if (!(gammas[k] < gammas[k - 1])) throw ParameterError("gammas", "must be strictly decreasing");
  }
  std::vector<ErrorScanRow> rows;
  rows.reserve(points.size());
  for (const State& p : points) {
    ErrorScanRow row;
    row.point = p;
    const double Af = apply_generator(scheme.model(), f.smooth(), p);
    for (double g : gammas) {
      ErrorCell cell;
      cell.gamma = g;
      cell.estimate = estimate_pseudo_generator(scheme, f, p, g, mc_samples, rng);
      cell.generator = Af;
      cell.error = std::abs(cell.estimate.mean - Af);
      row.cells.push_back(cell);
    }
    for (std::size_t k = 1; k < row.cells.size(); ++k) {
      const auto& prev = row.cells[k - 1];
      const auto& cur = row.cells[k];
      if (cur.error > prev.error + prev.estimate.half_width + cur.estimate.half_width) {
        row.non_increasing = false;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Functional generator_functional(const Model& model, const TestFunction& f) {
  return [model, f](const State& s) { return apply_generator(model, f.smooth(), s); };
}

std::vector<std::size_t> register_generator_functionals(WeightedEmpiricalMeasure& m, const Model& model,
                                                        const std::vector<TestFunction>& fs) {
  std::vector<std::size_t> idx;
  for (const auto& f : fs) idx.push_back(m.add_functional("Af:" + f.id(), generator_functional(model, f)));
  return idx;
}

std::vector<TestFunction> default_bump_family(const std::function<double(double)>& quantile,
                                              double spread, int dim, int count, double radius_factor) {
  if (count < 1) throw ParameterError("count", "must be >= 1");
  if (!(spread > 0.0)) throw ParameterError("spread", "must be > 0");
  std::vector<TestFunction> out;
  for (int i = 0; i < count; ++i) {
    Vector c = Vector::Zero(dim);
    c[0] = quantile((i + 0.5) / count);
    out.push_back(TestFunction::bump(c, radius_factor * spread));
  }
  return out;
}

std::vector<Vector> bump_grid(const TestFunction& f, int regime, std::size_t points) {
  const Vector& c = f.center(regime);
  const double R = f.radius(regime);
  std::vector<Vector> grid;
  grid.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    Vector x = c;
    x[0] += -R + 2.0 * R * static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(x);
  }
  return grid;
}

double sup_abs_generator(const Model& model, const TestFunction& f, const std::vector<Vector>& points) {
  double sup = 0.0;
  for (int z = 0; z < regime_count(model); ++z) {
    for (const auto& x : points) sup = std::max(sup, std::abs(apply_generator(model, f.smooth(), State{x, z})));
  }
  return sup;
}

std::vector<EwResidual> ew_residual(const std::vector<MeasureSnapshot>& trace,
                                    const std::vector<std::string>& names, const Model& model,
                                    const std::vector<TestFunction>& fs, std::size_t trend_from) {
  std::vector<EwResidual> out;
  for (const auto& f : fs) {
    if (f.kind() != TestFunctionKind::Bump) {
      throw PreconditionError("ew_residual needs compactly supported bumps, got " + f.id());
    }
    const std::string col = "Af:" + f.id();
    auto it = std::find(names.begin(), names.end(), col);
    if (it == names.end()) throw StateError("trace has no column " + col);
    const auto idx = static_cast<std::size_t>(it - names.begin());

    EwResidual r;
    r.id = f.id();
    bool have_reference = false;
    for (const auto& snap : trace) {
      r.n.push_back(snap.n);
      r.nu_Af.push_back(snap.values.at(idx));
      if (!have_reference && snap.n >= trend_from) {
        r.reference = std::abs(snap.values.at(idx));
        have_reference = true;
      }
    }
    if (!r.nu_Af.empty()) r.terminal = std::abs(r.nu_Af.back());
    r.decreasing = have_reference && r.terminal < r.reference;
    for (int z = 0; z < regime_count(model); ++z) {
      r.sup_Af = std::max(r.sup_Af, sup_abs_generator(model, f, bump_grid(f, z)));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace invdist
