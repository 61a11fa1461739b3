#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "invdist/measures.hpp"
#include "invdist/models.hpp"
#include "invdist/schemes.hpp"

namespace invdist {

/// Two-sided 99% normal quantile used for every Monte Carlo interval.
inline constexpr double kZ99 = 2.5758293035489004;

/// Monte Carlo estimate of (E[g(X') | X = x] - g(x)) / gamma with its 99%
/// half-width.
struct IncrementEstimate {
  double mean = 0.0;
  double half_width = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;   ///< accepted antithetic pairs
  std::size_t rejected = 0;  ///< pairs dropped for non-finite g
  double lower() const noexcept { return mean - half_width; }
  double upper() const noexcept { return mean + half_width; }
};

/// Averages (g(X'_U) + g(X'_-U))/2 - g(x) over `pairs` antithetic innovation
/// pairs, scaled by 1/gamma. Pairs with a non-finite g are rejected and
/// counted.
IncrementEstimate estimate_increment(const Scheme& scheme, const State& s, double gamma,
                                     const std::function<double(const State&)>& g, std::size_t pairs,
                                     RandomStream& rng);

enum class TestFunctionKind { Bump, Polynomial, User };

/// Test function with exact derivatives where the kind admits them.
///
/// Bump: exp(-1 / (1 - |(x - c)/R|^2)) inside the ball B(c, R), 0 outside;
/// a switching model may use one (c, R) per regime. Polynomial: sum_i c_i x_k^i
/// on one coordinate, regime independent.
class TestFunction {
 public:
  static TestFunction bump(Vector center, double radius);
  static TestFunction bump(std::vector<Vector> centers, std::vector<double> radii);
  static TestFunction polynomial(std::vector<double> coefficients, int coordinate = 0);
  static TestFunction user(std::string id, SmoothFunction f);

  TestFunctionKind kind() const noexcept { return kind_; }
  const std::string& id() const noexcept { return id_; }
  const SmoothFunction& smooth() const noexcept { return f_; }
  double operator()(const State& s) const { return f_.value(s.x, s.regime); }

  /// Bump only: center and radius used in regime z.
  const Vector& center(int regime = 0) const;
  double radius(int regime = 0) const;

 private:
  TestFunctionKind kind_ = TestFunctionKind::User;
  std::string id_;
  SmoothFunction f_;
  std::vector<Vector> centers_;
  std::vector<double> radii_;
};

IncrementEstimate estimate_pseudo_generator(const Scheme& scheme, const TestFunction& f, const State& s,
                                            double gamma, std::size_t mc_samples, RandomStream& rng);

struct ErrorCell {
  double gamma = 0.0;
  IncrementEstimate estimate;
  double generator = 0.0;  ///< Af(x)
  double error = 0.0;      ///< |estimate - Af(x)|
};

struct ErrorScanRow {
  State point;
  std::vector<ErrorCell> cells;  ///< one per gamma, in scan order
  /// error(gamma_{k+1}) <= error(gamma_k) + both half-widths for every k.
  bool non_increasing = true;
};

/// |A~_gamma f - A f| at each point for a strictly decreasing list of gammas.
std::vector<ErrorScanRow> generator_error_scan(const Scheme& scheme, const TestFunction& f,
                                               const std::vector<State>& points,
                                               const std::vector<double>& gammas, std::size_t mc_samples,
                                               RandomStream& rng);

/// x -> Af(x) as a measure functional.
Functional generator_functional(const Model& model, const TestFunction& f);

/// Registers "Af:<id>" for every f and returns the indices.
std::vector<std::size_t> register_generator_functionals(WeightedEmpiricalMeasure& m, const Model& model,
                                                        const std::vector<TestFunction>& fs);

/// Five bumps (or `count`) centred at the quantiles (i + 1/2)/count of the
/// first coordinate, radius `radius_factor * spread`.
std::vector<TestFunction> default_bump_family(const std::function<double(double)>& quantile,
                                              double spread, int dim, int count = 5,
                                              double radius_factor = 2.0);

/// max |Af| over `points` per regime of the model.
double sup_abs_generator(const Model& model, const TestFunction& f, const std::vector<Vector>& points);

/// Uniform 1-d grid on the support of a bump (2001 points along coordinate 0).
std::vector<Vector> bump_grid(const TestFunction& f, int regime = 0, std::size_t points = 2001);

struct EwResidual {
  std::string id;
  std::vector<std::size_t> n;
  std::vector<double> nu_Af;
  double terminal = 0.0;   ///< |nu_N(Af)|
  double sup_Af = 0.0;     ///< max |Af| over the bump grid
  double reference = 0.0;  ///< |nu_n(Af)| at the first snapshot with n >= trend_from
  bool decreasing = false; ///< terminal < reference
};

/// Reads the "Af:<id>" columns of a snapshot trace.
std::vector<EwResidual> ew_residual(const std::vector<MeasureSnapshot>& trace,
                                    const std::vector<std::string>& names, const Model& model,
                                    const std::vector<TestFunction>& fs, std::size_t trend_from = 1);

}  // namespace invdist
