#include "invdist/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <ostream>

#include "invdist/errors.hpp"
#include "invdist/schedules.hpp"

namespace invdist {

std::string to_string(ReferenceKind k) {
  switch (k) {
    case ReferenceKind::AnalyticNormal:
      return "analytic-normal";
    case ReferenceKind::QuadratureDensity:
      return "quadrature-density";
    case ReferenceKind::MomentTable:
      return "moment-table";
    case ReferenceKind::Empirical:
      return "empirical";
  }
  return "analytic-normal";
}

StationaryReference StationaryReference::normal(double mean, double variance) {
  if (!(variance >= 0.0)) throw ParameterError("variance", "must be >= 0");
  StationaryReference r;
  r.kind_ = ReferenceKind::AnalyticNormal;
  r.mean_ = mean;
  r.variance_ = variance;
  return r;
}

StationaryReference StationaryReference::density(std::vector<double> grid, std::vector<double> values) {
  if (grid.size() < 2 || grid.size() != values.size()) {
    throw ParameterError("grid", "need at least two points and one value per point");
  }
  StationaryReference r;
  r.kind_ = ReferenceKind::QuadratureDensity;
  const std::size_t M = grid.size();
  r.cdf_.assign(M, 0.0);
  CompensatedSum acc;
  for (std::size_t i = 1; i < M; ++i) {
    acc.add(0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]));
    r.cdf_[i] = acc.value();
  }
  const double Z = acc.value();
  if (!(Z > 0.0) || !std::isfinite(Z)) throw PreconditionError("density does not normalize");
  for (double& v : values) v /= Z;
  for (double& c : r.cdf_) c /= Z;
  r.cdf_.back() = 1.0;

  CompensatedSum m1;
  CompensatedSum m2;
  for (std::size_t i = 1; i < M; ++i) {
    const double dx = grid[i] - grid[i - 1];
    m1.add(0.5 * dx * (grid[i] * values[i] + grid[i - 1] * values[i - 1]));
    m2.add(0.5 * dx * (grid[i] * grid[i] * values[i] + grid[i - 1] * grid[i - 1] * values[i - 1]));
  }
  r.mean_ = m1.value();
  r.variance_ = m2.value() - r.mean_ * r.mean_;
  r.grid_ = std::move(grid);
  r.density_ = std::move(values);
  return r;
}

StationaryReference StationaryReference::moments(MomentTable table) {
  StationaryReference r;
  r.kind_ = ReferenceKind::MomentTable;
  r.mean_ = table.total_first;
  r.variance_ = table.total_second - table.total_first * table.total_first;
  r.table_ = std::move(table);
  return r;
}

StationaryReference StationaryReference::empirical(std::vector<State> sample) {
  if (sample.empty()) throw StateError("empty sample");
  StationaryReference r;
  r.kind_ = ReferenceKind::Empirical;
  r.sorted_.reserve(sample.size());
  CompensatedSum m1;
  CompensatedSum m2;
  for (const auto& s : sample) {
    const double x = s.x[0];
    r.sorted_.push_back(x);
    m1.add(x);
    m2.add(x * x);
  }
  std::sort(r.sorted_.begin(), r.sorted_.end());
  const double n = static_cast<double>(sample.size());
  r.mean_ = m1.value() / n;
  r.variance_ = m2.value() / n - r.mean_ * r.mean_;
  r.sample_ = std::move(sample);
  return r;
}

double StationaryReference::mean() const { return mean_; }
double StationaryReference::variance() const { return variance_; }

double StationaryReference::moment(int k) const {
  if (k < 0) throw ParameterError("order", "must be >= 0");
  if (k == 0) return 1.0;
  switch (kind_) {
    case ReferenceKind::AnalyticNormal: {
      // E[(m + sZ)^k] = sum_j C(k, j) m^(k-j) s^j E[Z^j], E[Z^j] = (j-1)!! for even j.
      const double sd = std::sqrt(variance_);
      double total = 0.0;
      double binom = 1.0;
      double double_factorial = 1.0;
      for (int j = 0; j <= k; ++j) {
        if (j > 0) binom = binom * (k - j + 1) / j;
        if (j % 2 == 0) {
          if (j >= 2) double_factorial *= (j - 1);
          total += binom * std::pow(mean_, k - j) * std::pow(sd, j) * double_factorial;
        }
      }
      return total;
    }
    case ReferenceKind::QuadratureDensity: {
      CompensatedSum m;
      for (std::size_t i = 1; i < grid_.size(); ++i) {
        const double dx = grid_[i] - grid_[i - 1];
        m.add(0.5 * dx * (std::pow(grid_[i], k) * density_[i] + std::pow(grid_[i - 1], k) * density_[i - 1]));
      }
      return m.value();
    }
    case ReferenceKind::MomentTable:
      if (k == 1) return table_.total_first;
      if (k == 2) return table_.total_second;
      throw StateError("the moment table holds orders 1 and 2 only");
    case ReferenceKind::Empirical: {
      CompensatedSum m;
      for (double x : sorted_) m.add(std::pow(x, k));
      return m.value() / static_cast<double>(sorted_.size());
    }
  }
  return 0.0;
}

double StationaryReference::quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw ParameterError("u", "must be in [0, 1]");
  switch (kind_) {
    case ReferenceKind::AnalyticNormal: {
      if (variance_ == 0.0) return mean_;
      if (u == 0.0) return -std::numeric_limits<double>::infinity();
      if (u == 1.0) return std::numeric_limits<double>::infinity();
      return boost::math::quantile(boost::math::normal(mean_, std::sqrt(variance_)), u);
    }
    case ReferenceKind::QuadratureDensity: {
      auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
      if (it == cdf_.begin()) return grid_.front();
      if (it == cdf_.end()) return grid_.back();
      const auto i = static_cast<std::size_t>(it - cdf_.begin());
      const double c0 = cdf_[i - 1];
      const double c1 = cdf_[i];
      const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 1.0;
      return grid_[i - 1] + t * (grid_[i] - grid_[i - 1]);
    }
    case ReferenceKind::MomentTable:
      throw StateError("a moment table has no quantile function");
    case ReferenceKind::Empirical: {
      const double n = static_cast<double>(sorted_.size());
      const auto idx = static_cast<std::size_t>(std::max(0.0, std::ceil(u * n) - 1.0));
      return sorted_[std::min(idx, sorted_.size() - 1)];
    }
  }
  return 0.0;
}

std::function<double(double)> StationaryReference::quantile_function() const {
  if (!has_quantile()) throw StateError("a moment table has no quantile function");
  return [self = *this](double u) { return self.quantile(u); };
}

void StationaryReference::write_csv(std::ostream& os) const {
  os.precision(17);
  switch (kind_) {
    case ReferenceKind::QuadratureDensity:
      os << "x,density\n";
      for (std::size_t i = 0; i < grid_.size(); ++i) os << grid_[i] << ',' << density_[i] << '\n';
      break;
    case ReferenceKind::Empirical:
      os << "x,weight\n";
      for (double x : sorted_) os << x << ",1\n";
      break;
    case ReferenceKind::AnalyticNormal:
      os << "mean,variance\n" << mean_ << ',' << variance_ << '\n';
      break;
    case ReferenceKind::MomentTable:
      os << "regime,pi,first,second\n";
      for (Eigen::Index z = 0; z < table_.pi.size(); ++z) {
        os << z << ',' << table_.pi[z] << ',' << table_.first[z] << ',' << table_.second[z] << '\n';
      }
      break;
  }
}

StationaryReference ou_stationary(double a, double sigma, int d) {
  if (!(a > 0.0)) throw NoStationaryLawError("OU rate a must be > 0 for a stationary law");
  if (d < 1) throw ParameterError("d", "must be >= 1");
  return StationaryReference::normal(0.0, sigma * sigma / (2.0 * a));
}

StationaryReference fokker_planck_1d(const std::function<double(double)>& b,
                                     const std::function<double(double)>& sigma2, double x_lo, double x_hi,
                                     std::size_t M) {
  if (!(x_hi > x_lo)) throw ParameterError("grid", "x_hi must exceed x_lo");
  if (M < 3) throw ParameterError("M", "must be >= 3");
  std::vector<double> grid(M);
  std::vector<double> log_p(M);
  std::vector<double> ratio(M);
  const double dx = (x_hi - x_lo) / static_cast<double>(M - 1);
  for (std::size_t i = 0; i < M; ++i) {
    grid[i] = x_lo + dx * static_cast<double>(i);
    const double s2 = sigma2(grid[i]);
    if (!(s2 > 0.0)) throw ParameterError("sigma2", "must be > 0 on the grid");
    ratio[i] = 2.0 * b(grid[i]) / s2;
    log_p[i] = -std::log(s2);
  }
  CompensatedSum integral;
  for (std::size_t i = 1; i < M; ++i) {
    integral.add(0.5 * dx * (ratio[i] + ratio[i - 1]));
    log_p[i] += integral.value();
  }
  const double peak = *std::max_element(log_p.begin(), log_p.end());
  std::vector<double> values(M);
  for (std::size_t i = 0; i < M; ++i) values[i] = std::exp(log_p[i] - peak);
  if (!(values.front() < 1e-10) || !(values.back() < 1e-10)) {
    throw GridTooSmallError("stationary density is not negligible at the grid boundary");
  }
  return StationaryReference::density(std::move(grid), std::move(values));
}

bool is_irreducible(const Matrix& Q) {
  const auto n = Q.rows();
  for (Eigen::Index start = 0; start < n; ++start) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> stack{start};
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const auto z = stack.back();
      stack.pop_back();
      for (Eigen::Index w = 0; w < n; ++w) {
        if (w != z && Q(z, w) > 0.0 && !seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          stack.push_back(w);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) return false;
  }
  return true;
}

MomentTable switching_moments(const std::vector<double>& a, const std::vector<double>& sigma, const Matrix& Q,
                              int order) {
  validate_generator(Q);
  const auto M = Q.rows();
  if (static_cast<Eigen::Index>(a.size()) != M || static_cast<Eigen::Index>(sigma.size()) != M) {
    throw ParameterError("a", "need one rate and one diffusion per regime");
  }
  if (order < 1 || order > 2) throw ParameterError("order", "must be 1 or 2");
  if (!is_irreducible(Q)) throw NoStationaryLawError("regime generator is reducible");

  Matrix A = Q.transpose();
  Vector rhs = Vector::Zero(M);
  A.row(M - 1).setOnes();
  rhs[M - 1] = 1.0;
  MomentTable t;
  t.pi = A.fullPivLu().solve(rhs);

  auto solve = [&](const Matrix& L, const Vector& r) -> Vector {
    Eigen::FullPivLU<Matrix> lu(L);
    if (!lu.isInvertible()) throw NoStationaryLawError("moment system is singular (no finite moment)");
    return lu.solve(r);
  };
  Vector av(M);
  Vector s2(M);
  for (Eigen::Index z = 0; z < M; ++z) {
    av[z] = a[static_cast<std::size_t>(z)];
    s2[z] = sigma[static_cast<std::size_t>(z)] * sigma[static_cast<std::size_t>(z)];
  }
  // 0 = -a(z) m(z) + sum_w q_wz m(w) is homogeneous, so its solution is 0 when it is unique.
  t.first = solve(Matrix(Q.transpose()) - Matrix(av.asDiagonal()), Vector::Zero(M));
  t.total_first = t.first.sum();
  t.second = Vector::Zero(M);
  if (order == 2) {
    t.second = solve(Matrix(Q.transpose()) - 2.0 * Matrix(av.asDiagonal()), -s2.cwiseProduct(t.pi));
    if (!(t.second.array() >= 0.0).all()) throw NoStationaryLawError("no finite stationary second moment");
  }
  t.total_second = t.second.sum();
  return t;
}

StationaryReference longrun_reference(const Scheme& scheme, const State& x0, const LongRunOptions& options,
                                      std::uint64_t seed) {
  if (!(options.gamma_ref > 0.0 && options.gamma_ref <= 0.01)) {
    throw ParameterError("oracle.gamma_ref", "must be in (0, 0.01]");
  }
  if (options.burn_in < 100000) throw ParameterError("oracle.burn_in", "must be >= 10^5");
  if (options.n_keep < 1) throw ParameterError("oracle.n_keep", "must be >= 1");
  if (options.thin < 1) throw ParameterError("oracle.thin", "must be >= 1");

  RandomStream rng(seed);
  State s = x0;
  Vector U;
  auto advance = [&](std::size_t k) {
    scheme.innovations().draw_into(rng, U);
    try {
      s = scheme.step(s, options.gamma_ref, U, rng);
    } catch (const DivergenceError& e) {
      throw DivergenceError(k, s, options.gamma_ref);
    }
  };
  std::size_t k = 0;
  for (; k < options.burn_in; ++k) advance(k + 1);
  std::vector<State> kept;
  kept.reserve(options.n_keep);
  while (kept.size() < options.n_keep) {
    for (std::size_t j = 0; j < options.thin; ++j) advance(++k);
    kept.push_back(s);
  }
  return StationaryReference::empirical(std::move(kept));
}

}  // namespace invdist
