#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "invdist/schemes.hpp"
#include "invdist/types.hpp"

namespace invdist {

enum class ReferenceKind { AnalyticNormal, QuadratureDensity, MomentTable, Empirical };

std::string to_string(ReferenceKind k);

/// Stationary moments of a switching OU model, per coordinate.
struct MomentTable {
  Vector pi;            ///< stationary law of the regime chain
  Vector first;         ///< E[X 1_{zeta = z}]
  Vector second;        ///< E[X^2 1_{zeta = z}]
  double total_first = 0.0;
  double total_second = 0.0;
};

/// A reference law for the first coordinate (all coordinates for the
/// analytic normal, which is isotropic).
class StationaryReference {
 public:
  static StationaryReference normal(double mean, double variance);
  /// Density values on a uniform grid; normalized by trapezoid quadrature.
  static StationaryReference density(std::vector<double> grid, std::vector<double> values);
  static StationaryReference moments(MomentTable table);
  static StationaryReference empirical(std::vector<State> sample);

  ReferenceKind kind() const noexcept { return kind_; }
  double mean() const;
  double variance() const;
  /// E[X^k] of the first coordinate; the moment table only knows k <= 2.
  double moment(int k) const;
  bool has_quantile() const noexcept { return kind_ != ReferenceKind::MomentTable; }
  /// Left-continuous quantile of the first coordinate, u in [0, 1].
  double quantile(double u) const;
  std::function<double(double)> quantile_function() const;

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& density_values() const noexcept { return density_; }
  const std::vector<double>& cdf() const noexcept { return cdf_; }
  const MomentTable& table() const noexcept { return table_; }
  const std::vector<State>& sample() const noexcept { return sample_; }

  /// Quadrature kind: "x,density"; empirical: "x,weight"; others: header only.
  void write_csv(std::ostream& os) const;

 private:
  ReferenceKind kind_ = ReferenceKind::AnalyticNormal;
  double mean_ = 0.0;
  double variance_ = 0.0;
  std::vector<double> grid_;
  std::vector<double> density_;
  std::vector<double> cdf_;
  MomentTable table_;
  std::vector<State> sample_;
  std::vector<double> sorted_;
};

/// N(0, sigma^2 / (2a)) per coordinate. Throws NoStationaryLawError if a <= 0.
StationaryReference ou_stationary(double a, double sigma, int d = 1);

/// Stationary density p(x) proportional to exp(int 2b/sigma^2) / sigma^2 on
/// [x_lo, x_hi] with M points (trapezoid rule). Throws GridTooSmallError when
/// the density at either end is not below 1e-10 times its peak.
StationaryReference fokker_planck_1d(const std::function<double(double)>& b,
                                     const std::function<double(double)>& sigma2, double x_lo, double x_hi,
                                     std::size_t M = 100001);

/// Solves pi Q = 0 and, for order 2,
///   0 = -2 a(z) u(z) + sigma(z)^2 pi(z) + sum_w q_wz u(w).
/// Throws NoStationaryLawError for a reducible Q or a singular system.
MomentTable switching_moments(const std::vector<double>& a, const std::vector<double>& sigma, const Matrix& Q,
                              int order = 2);

/// True when every regime reaches every other through positive rates.
bool is_irreducible(const Matrix& Q);

struct LongRunOptions {
  double gamma_ref = 0.005;
  std::size_t burn_in = 100000;
  std::size_t n_keep = 100000;
  std::size_t thin = 100;
};

/// Constant-step run of `scheme` from x0: after burn_in steps, keeps one state
/// every `thin` steps until n_keep are stored. Requires gamma_ref in (0, 0.01]
/// and burn_in >= 10^5.
StationaryReference longrun_reference(const Scheme& scheme, const State& x0, const LongRunOptions& options,
                                      std::uint64_t seed);

}  // namespace invdist
