#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "invdist/generators.hpp"
#include "invdist/models.hpp"
#include "invdist/random.hpp"
#include "invdist/schemes.hpp"

namespace invdist {

/// Lyapunov function V >= v_star with its shape parameters.
///
/// psi(y) = y^p when lambda == 0, psi(y) = exp(lambda y^p) otherwise;
/// phi(y) = y^a. `s` and `rho` are carried for the tightness functional
/// V^(p/s + a - 1) and the step-weight checks.
struct LyapunovSpec {
  SmoothFunction V;
  double v_star = 1.0;
  double p = 1.0;
  double a = 1.0;
  double lambda = 0.0;
  double s = 1.0;
  double rho = 2.0;
  std::string name;

  bool exponential() const noexcept { return lambda > 0.0; }
  double phi(double y) const;
  double value(const State& st) const { return V.value(st.x, st.regime); }
  /// ln psi(V(x)).
  double log_psi(const State& st) const;
  /// psi(V(x)); +inf on overflow.
  double psi(const State& st) const;
  /// Exponent p/s + a - 1 of the tightness functional.
  double tightness_exponent() const noexcept { return p / s + a - 1.0; }

  /// Throws ParameterError on out-of-range shape parameters.
  void validate() const;
};

/// V(x) = 1 + |x|^2 with exact derivatives (v_star = 1).
LyapunovSpec quadratic_lyapunov(double p = 1.0, double a = 1.0, double s = 1.0, double lambda = 0.0,
                                double rho = 2.0);

/// Radii {0, 1, 2, 5, 10, 20} times `directions` random unit directions per
/// radius (one point at the origin), repeated for every regime.
std::vector<State> default_probe_grid(int dim, int regimes = 1, std::uint64_t seed = 20240601,
                                      std::vector<double> radii = {0, 1, 2, 5, 10, 20},
                                      int directions = 10);

/// Top eigenvalue, floored at 0, of D^2V + 2 (p - 1) grad V grad V^T / V
/// (psi(y) = y^p). Asymmetric Hessians beyond 1e-8 are symmetrized with a
/// warning on stderr.
double lambda_psi(const LyapunovSpec& spec, const State& s, double p);

/// Same with psi(y) = exp(lambda y^p): psi''/psi' = lambda p y^(p-1) + (p-1)/y.
double lambda_psi_exponential(const LyapunovSpec& spec, const State& s, double lambda, double p);

struct ShapeReport {
  bool floor_holds = true;       ///< V >= v_star on the grid
  double min_V = 0.0;
  bool radial_growth = true;     ///< min of V per radius increases with the radius
  std::vector<double> radii;
  std::vector<double> sphere_min;
  double gradient_ratio = 0.0;   ///< max |grad V|^2 / V (estimate of C_V)
  double hessian_sup = 0.0;      ///< max spectral norm of D^2 V
  bool holds() const noexcept { return floor_holds && radial_growth; }
};

ShapeReport check_lyapunov_shape(const LyapunovSpec& spec, const std::vector<State>& grid);

struct GrowthReport {
  bool holds = true;
  double max_ratio = 0.0;  ///< max (|b|^2 + Tr sigma sigma^T) / phi(V)
  State argmax;
  double C = 0.0;
};

/// (|b|^2 + Tr[sigma sigma^T]) / phi(V) over the grid against C.
GrowthReport check_growth_bound(const Model& model, const LyapunovSpec& spec, const std::vector<State>& grid,
                                double C);

/// Per-point slack beta - alpha phi(V) - LHS of a mean-reversion condition.
struct RecursiveControlReport {
  std::string condition;
  bool holds = true;             ///< min slack >= 0 and the side condition holds
  double min_slack = 0.0;
  State argmin;
  std::vector<double> slack;     ///< in grid order
  double lambda_sup = 0.0;       ///< ||lambda_p||_inf (1.1 x grid max unless given)
  bool side_condition = true;    ///< phi(V) > beta/alpha at the largest radius
  double phi_at_largest_radius = 0.0;
  bool degenerate = false;       ///< drift and diffusion vanish on the whole grid

  // Exponential form only.
  double sigma_min_eigenvalue = 0.0;
  double hessian_sup = 0.0;      ///< ||D^2 V||_inf (1.1 x grid max)
  double dom_max_ratio = 0.0;
  bool dom_bounded = true;       ///< outer-shell ratio <= 1.1 x the previous shell
};

/// <grad V, b> + chi_p / 2 <= beta - alpha phi(V) with
/// chi_p = ||lambda_p||_inf 2^((2p-3)+) Tr[sigma sigma^T]
///         + V^(1-p)(x,z) sum_w (q_zw + eps0) V^p(x,w)   (switching models).
RecursiveControlReport check_rp_polynomial(const Model& model, const LyapunovSpec& spec, double alpha,
                                           double beta, double epsilon0, const std::vector<State>& grid,
                                           std::optional<double> lambda_sup = std::nullopt);

/// <grad V, b + kappa_p> + chi_p / 2 <= beta - alpha phi(V) with
/// kappa_p = lambda p V^(p-1) / phi(V) sigma sigma^T grad V,
/// chi_p = -V^(1-p) / (phi(V) C_sigma) ln det Sigma,
/// Sigma = I - ||D^2V||_inf C_sigma V^(p-1) sigma^T sigma.
/// Also evaluates Tr[sigma sigma^T] |b| (|grad V| + |b|) / (V^(1-p) phi(V)).
/// Throws PositiveDefiniteError when Sigma is not positive definite at a
/// grid point.
RecursiveControlReport check_rp_exponential(const Model& model, const LyapunovSpec& spec, double alpha,
                                            double beta,
                                            const std::function<double(const State&)>& C_sigma,
                                            const std::vector<State>& grid);

/// Smallest admissible constant C_sigma = 2 lambda p gamma_max.
double default_c_sigma(const LyapunovSpec& spec, double gamma_max);

struct LaplaceReport {
  IncrementEstimate lhs;  ///< mean and 99% half-width of the Monte Carlo LHS
  double rhs = 0.0;
  bool holds = false;     ///< lhs.upper() <= rhs
};

/// E[exp(sqrt(h) <v, U> + h |Lambda U|^2)] <= exp(h |v|^2 / (2(1-h))) det(I - 2 Lambda^T Lambda)^(-h/2)
/// with U ~ N(0, I), by antithetic Monte Carlo. Throws PreconditionError
/// unless I - 2 Lambda^T Lambda is positive definite and h in (0, 1).
LaplaceReport laplace_bound_check(const Matrix& Lambda, const Vector& v, double h, std::size_t n_samples,
                                  RandomStream& rng);

struct RecursiveControlCell {
  double gamma = 0.0;
  State point;
  IncrementEstimate estimate;  ///< A~_gamma (psi o V)(x)
  double bound = 0.0;          ///< (psi o V / V)(beta - alpha phi(V))
  bool violated = false;       ///< estimate lower bound > bound
  bool overflow = false;       ///< psi o V not finite at some draw
};

struct EmpiricalControlReport {
  std::vector<RecursiveControlCell> cells;  ///< gamma-major
  std::vector<double> gammas;
  std::vector<double> satisfied_fraction;   ///< per gamma
  bool confirmed = true;                    ///< no violation and no overflow anywhere
};

/// Monte Carlo check of A~_gamma (psi o V)(x) <= (psi o V(x) / V(x)) (beta - alpha phi(V(x))).
EmpiricalControlReport empirical_recursive_control(const Scheme& scheme, const LyapunovSpec& spec,
                                                   double alpha, double beta,
                                                   const std::vector<double>& gammas,
                                                   const std::vector<State>& probes, std::size_t mc_samples,
                                                   RandomStream& rng);

}  // namespace invdist
