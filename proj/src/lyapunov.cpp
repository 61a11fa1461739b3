#include "invdist/lyapunov.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "invdist/errors.hpp"

namespace invdist {

namespace {

constexpr double kSafety = 1.1;

Matrix symmetrized(const Matrix& M) {
  static std::atomic<bool> warned{false};
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-8 && !warned.exchange(true)) {
    std::cerr << "warning: asymmetric Hessian, using (M + M^T)/2\n";
  }
  return 0.5 * (M + M.transpose());
}

double top_eigenvalue(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double spectral_norm(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void require_grid(const std::vector<State>& grid) {
  if (grid.empty()) throw ParameterError("grid", "must not be empty");
}

double largest_radius(const std::vector<State>& grid) {
  double r = 0.0;
  for (const auto& s : grid) r = std::max(r, s.x.norm());
  return r;
}

/// min phi(V) over the points at the largest radius.
double phi_at_outer_shell(const LyapunovSpec& spec, const std::vector<State>& grid) {
  const double R = largest_radius(grid);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& s : grid) {
    if (s.x.norm() >= R * (1.0 - 1e-9)) m = std::min(m, spec.phi(spec.value(s)));
  }
  return m;
}

void finish_slack(RecursiveControlReport& r, const std::vector<State>& grid) {
  r.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (r.slack[i] < r.min_slack) {
      r.min_slack = r.slack[i];
      r.argmin = grid[i];
    }
  }
  r.holds = r.min_slack >= 0.0 && r.side_condition;
}

}  // namespace

double LyapunovSpec::phi(double y) const { return std::pow(y, a); }

double LyapunovSpec::log_psi(const State& st) const {
  const double v = value(st);
  return exponential() ? lambda * std::pow(v, p) : p * std::log(v);
}

double LyapunovSpec::psi(const State& st) const { return std::exp(log_psi(st)); }

void LyapunovSpec::validate() const {
  if (!V.value) throw ParameterError("lyapunov.V", "a value function is required");
  if (!(v_star > 0.0)) throw ParameterError("lyapunov.v_star", "must be > 0");
  if (!(p >= 0.0)) throw ParameterError("lyapunov.p", "must be >= 0");
  if (!(a > 0.0 && a <= 1.0)) throw ParameterError("lyapunov.a", "must be in (0, 1]");
  if (!(lambda >= 0.0)) throw ParameterError("lyapunov.lambda", "must be >= 0");
  if (!(s >= 1.0)) throw ParameterError("lyapunov.s", "must be >= 1");
  if (!(rho >= 1.0 && rho <= 2.0)) throw ParameterError("lyapunov.rho", "must be in [1, 2]");
}

LyapunovSpec quadratic_lyapunov(double p, double a, double s, double lambda, double rho) {
  LyapunovSpec spec;
  spec.V.value = [](const Vector& x, int) { return 1.0 + x.squaredNorm(); };
  spec.V.gradient = [](const Vector& x, int) -> Vector { return 2.0 * x; };
  spec.V.hessian = [](const Vector& x, int) -> Matrix {
    return 2.0 * Matrix::Identity(x.size(), x.size());
  };
  spec.v_star = 1.0;
  spec.p = p;
  spec.a = a;
  spec.s = s;
  spec.lambda = lambda;
  spec.rho = rho;
  spec.name = "quadratic";
  spec.validate();
  return spec;
}

std::vector<State> default_probe_grid(int dim, int regimes, std::uint64_t seed, std::vector<double> radii,
                                      int directions) {
  if (dim < 1) throw ParameterError("dim", "must be >= 1");
  if (regimes < 1) throw ParameterError("regimes", "must be >= 1");
  RandomStream rng(seed);
  std::vector<Vector> points;
  for (double r : radii) {
    if (r == 0.0) {
      points.push_back(Vector::Zero(dim));
      continue;
    }
    for (int k = 0; k < directions; ++k) {
      Vector u(dim);
      for (int i = 0; i < dim; ++i) u[i] = rng.normal();
      points.push_back(r * u / u.norm());
    }
  }
  std::vector<State> grid;
  for (int z = 0; z < regimes; ++z) {
    for (const auto& x : points) grid.push_back(State{x, z});
  }
  return grid;
}

double lambda_psi(const LyapunovSpec& spec, const State& s, double p) {
  if (!(p >= 1.0)) throw ParameterError("p", "must be >= 1 for psi(y) = y^p");
  const double v = spec.value(s);
  const Vector g = gradient_of(spec.V, s.x, s.regime);
  const Matrix M = hessian_of(spec.V, s.x, s.regime) + 2.0 * (p - 1.0) * g * g.transpose() / v;
  return std::max(top_eigenvalue(M), 0.0);
}

double lambda_psi_exponential(const LyapunovSpec& spec, const State& s, double lambda, double p) {
  const double v = spec.value(s);
  const Vector g = gradient_of(spec.V, s.x, s.regime);
  const double ratio = lambda * p * std::pow(v, p - 1.0) + (p - 1.0) / v;
  const Matrix M = hessian_of(spec.V, s.x, s.regime) + 2.0 * ratio * g * g.transpose();
  return std::max(top_eigenvalue(M), 0.0);
}

ShapeReport check_lyapunov_shape(const LyapunovSpec& spec, const std::vector<State>& grid) {
  require_grid(grid);
  ShapeReport r;
  r.min_V = std::numeric_limits<double>::infinity();
  std::map<double, double> shells;
  for (const auto& s : grid) {
    const double v = spec.value(s);
    r.min_V = std::min(r.min_V, v);
    const double radius = std::round(s.x.norm() * 1e9) / 1e9;
    auto [it, inserted] = shells.emplace(radius, v);
    if (!inserted) it->second = std::min(it->second, v);
    const Vector g = gradient_of(spec.V, s.x, s.regime);
    r.gradient_ratio = std::max(r.gradient_ratio, g.squaredNorm() / v);
    r.hessian_sup = std::max(r.hessian_sup, spectral_norm(hessian_of(spec.V, s.x, s.regime)));
  }
  r.floor_holds = r.min_V >= spec.v_star;
  for (const auto& [radius, m] : shells) {
    if (!r.sphere_min.empty() && !(m > r.sphere_min.back())) r.radial_growth = false;
    r.radii.push_back(radius);
    r.sphere_min.push_back(m);
  }
  return r;
}

GrowthReport check_growth_bound(const Model& model, const LyapunovSpec& spec, const std::vector<State>& grid,
                                double C) {
  require_grid(grid);
  GrowthReport r;
  r.C = C;
  r.argmax = grid.front();
  for (const auto& s : grid) {
    const Vector b = drift_at(model, s);
    const Matrix sig = diffusion_at(model, s);
    const double ratio = (b.squaredNorm() + sig.squaredNorm()) / spec.phi(spec.value(s));
    if (ratio > r.max_ratio) {
      r.max_ratio = ratio;
      r.argmax = s;
    }
  }
  r.holds = r.max_ratio <= C;
  return r;
}

RecursiveControlReport check_rp_polynomial(const Model& model, const LyapunovSpec& spec, double alpha,
                                           double beta, double epsilon0, const std::vector<State>& grid,
                                           std::optional<double> lambda_sup) {
  require_grid(grid);
  const double p = spec.p;
  if (!(p >= 1.0)) throw ParameterError("lyapunov.p", "must be >= 1");
  if (!(alpha > 0.0)) throw ParameterError("lyapunov.alpha", "must be > 0");
  if (!(epsilon0 > 0.0)) throw ParameterError("lyapunov.epsilon0", "must be > 0");

  RecursiveControlReport r;
  r.condition = "R_p";
  if (lambda_sup) {
    r.lambda_sup = *lambda_sup;
  } else {
    for (const auto& s : grid) r.lambda_sup = std::max(r.lambda_sup, lambda_psi(spec, s, p));
    r.lambda_sup *= kSafety;
  }
  const double lift = std::pow(2.0, std::max(2.0 * p - 3.0, 0.0));
  const auto* sw = std::get_if<SwitchingModel>(&model);

  r.degenerate = true;
  for (const auto& s : grid) {
    const double v = spec.value(s);
    const Vector b = drift_at(model, s);
    const Matrix sig = diffusion_at(model, s);
    if (b.squaredNorm() > 0.0 || sig.squaredNorm() > 0.0) r.degenerate = false;
    double chi = r.lambda_sup * lift * sig.squaredNorm();
    if (sw) {
      double sum = 0.0;
      for (int w = 0; w < sw->regimes(); ++w) {
        sum += (sw->generator(s.regime, w) + epsilon0) * std::pow(spec.V.value(s.x, w), p);
      }
      chi += std::pow(v, 1.0 - p) * sum;
    }
    const double lhs = gradient_of(spec.V, s.x, s.regime).dot(b) + 0.5 * chi;
    r.slack.push_back(beta - alpha * spec.phi(v) - lhs);
  }
  r.phi_at_largest_radius = phi_at_outer_shell(spec, grid);
  r.side_condition = r.phi_at_largest_radius > beta / alpha;
  finish_slack(r, grid);
  return r;
}

double default_c_sigma(const LyapunovSpec& spec, double gamma_max) {
  const double c = 2.0 * spec.lambda * spec.p * gamma_max;
  if (!(c > 0.0)) throw ParameterError("lyapunov.C_sigma", "default needs lambda p gamma_max > 0");
  return c;
}

RecursiveControlReport check_rp_exponential(const Model& model, const LyapunovSpec& spec, double alpha,
                                            double beta,
                                            const std::function<double(const State&)>& C_sigma,
                                            const std::vector<State>& grid) {
  require_grid(grid);
  const double p = spec.p;
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("lyapunov.p", "must be in [0, 1]");
  if (!(alpha > 0.0)) throw ParameterError("lyapunov.alpha", "must be > 0");

  for (const auto& s : grid) {
    const double v0 = spec.V.value(s.x, 0);
    for (int w = 1; w < regime_count(model); ++w) {
      if (spec.V.value(s.x, w) != v0) throw PreconditionError("V must not depend on the regime");
    }
  }

  RecursiveControlReport r;
  r.condition = "R_p,lambda";
  for (const auto& s : grid) r.hessian_sup = std::max(r.hessian_sup, spectral_norm(hessian_of(spec.V, s.x, s.regime)));
  r.hessian_sup *= kSafety;
  r.sigma_min_eigenvalue = std::numeric_limits<double>::infinity();

  std::map<double, double> dom_shells;
  r.degenerate = true;
  for (const auto& s : grid) {
    const double v = spec.value(s);
    const double phi = spec.phi(v);
    const Vector b = drift_at(model, s);
    const Matrix sig = diffusion_at(model, s);
    const Vector g = gradient_of(spec.V, s.x, s.regime);
    if (b.squaredNorm() > 0.0 || sig.squaredNorm() > 0.0) r.degenerate = false;

    const double c = C_sigma(s);
    if (!(c > 0.0)) throw ParameterError("lyapunov.C_sigma", "must be > 0");
    const Matrix Sigma = Matrix::Identity(sig.cols(), sig.cols()) -
                         r.hessian_sup * c * std::pow(v, p - 1.0) * (sig.transpose() * sig);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Sigma, Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    r.sigma_min_eigenvalue = std::min(r.sigma_min_eigenvalue, min_eig);
    if (!(min_eig > 0.0)) {
      std::string where = "(";
      for (Eigen::Index i = 0; i < s.x.size(); ++i) where += (i ? ", " : "") + std::to_string(s.x[i]);
      where += "), regime " + std::to_string(s.regime);
      throw PositiveDefiniteError("Sigma is not positive definite at x = " + where +
                                      ", min eigenvalue " + std::to_string(min_eig),
                                  min_eig);
    }
    const double log_det = es.eigenvalues().array().log().sum();
    const Vector kappa = spec.lambda * p * std::pow(v, p - 1.0) / phi * (sig * sig.transpose()) * g;
    const double chi = -std::pow(v, 1.0 - p) / (phi * c) * log_det;
    const double lhs = g.dot(b + kappa) + 0.5 * chi;
    r.slack.push_back(beta - alpha * phi - lhs);

    const double trace = sig.squaredNorm();
    const double dom = trace * b.norm() * (g.norm() + b.norm()) / (std::pow(v, 1.0 - p) * phi);
    r.dom_max_ratio = std::max(r.dom_max_ratio, dom);
    const double radius = std::round(s.x.norm() * 1e9) / 1e9;
    auto [it, inserted] = dom_shells.emplace(radius, dom);
    if (!inserted) it->second = std::max(it->second, dom);
  }
  if (dom_shells.size() >= 2) {
    const double outer = std::prev(dom_shells.end())->second;
    const double inner = std::prev(dom_shells.end(), 2)->second;
    r.dom_bounded = outer <= kSafety * inner;
  }
  r.phi_at_largest_radius = phi_at_outer_shell(spec, grid);
  r.side_condition = r.phi_at_largest_radius > std::max(beta, 0.0) / alpha;
  finish_slack(r, grid);
  return r;
}

LaplaceReport laplace_bound_check(const Matrix& Lambda, const Vector& v, double h, std::size_t n_samples,
                                  RandomStream& rng) {
  if (!(h > 0.0 && h < 1.0)) throw PreconditionError("h must be in (0, 1)");
  if (Lambda.rows() != Lambda.cols() || Lambda.rows() != v.size()) {
    throw ParameterError("Lambda", "must be d x d with d = dim(v)");
  }
  if (n_samples < 2) throw ParameterError("n_samples", "must be >= 2");
  const auto d = Lambda.rows();
  const Matrix Sigma = Matrix::Identity(d, d) - 2.0 * Lambda.transpose() * Lambda;
  Eigen::SelfAdjointEigenSolver<Matrix> es(Sigma, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    throw PositiveDefiniteError("I - 2 Lambda^T Lambda is not positive definite", es.eigenvalues().minCoeff());
  }
  const double log_det = es.eigenvalues().array().log().sum();

  LaplaceReport r;
  r.rhs = std::exp(h * v.squaredNorm() / (2.0 * (1.0 - h)) - 0.5 * h * log_det);

  const double sh = std::sqrt(h);
  Vector U(d);
  double mean = 0.0;
  double m2 = 0.0;
  const std::size_t pairs = n_samples / 2;
  for (std::size_t i = 0; i < pairs; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) U[j] = rng.normal();
    const double quad = h * (Lambda * U).squaredNorm();
    const double lin = sh * v.dot(U);
    const double y = 0.5 * (std::exp(lin + quad) + std::exp(-lin + quad));
    const double delta = y - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (y - mean);
  }
  r.lhs.mean = mean;
  r.lhs.samples = pairs;
  r.lhs.std_error = std::sqrt(m2 / static_cast<double>(pairs - 1) / static_cast<double>(pairs));
  r.lhs.half_width = kZ99 * r.lhs.std_error;
  r.holds = r.lhs.upper() <= r.rhs;
  return r;
}

EmpiricalControlReport empirical_recursive_control(const Scheme& scheme, const LyapunovSpec& spec,
                                                   double alpha, double beta,
                                                   const std::vector<double>& gammas,
                                                   const std::vector<State>& probes, std::size_t mc_samples,
                                                   RandomStream& rng) {
  if (mc_samples < 10000) throw ParameterError("mc_samples", "must be >= 10^4");
  if (probes.empty()) throw ParameterError("probes", "must not be empty");
  EmpiricalControlReport r;
  r.gammas = gammas;
  const auto psi = [&spec](const State& s) { return spec.psi(s); };
  for (double gamma : gammas) {
    if (!(gamma > 0.0)) throw ParameterError("gamma", "must be > 0");
    std::size_t ok = 0;
    for (const auto& x : probes) {
      RecursiveControlCell cell;
      cell.gamma = gamma;
      cell.point = x;
      const double v = spec.value(x);
      const double psi_x = spec.psi(x);
      cell.bound = psi_x / v * (beta - alpha * spec.phi(v));
      if (!std::isfinite(psi_x)) {
        cell.overflow = true;
      } else {
        cell.estimate = estimate_increment(scheme, x, gamma, psi, mc_samples / 2, rng);
        cell.overflow = cell.estimate.rejected > 0 || !std::isfinite(cell.estimate.mean);
        cell.violated = !cell.overflow && cell.estimate.lower() > cell.bound;
      }
      if (!cell.violated && !cell.overflow) ++ok;
      r.cells.push_back(cell);
    }
    r.satisfied_fraction.push_back(static_cast<double>(ok) / static_cast<double>(probes.size()));
    if (ok != probes.size()) r.confirmed = false;
  }
  return r;
}

}  // namespace invdist
