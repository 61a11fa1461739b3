#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace invdist {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) noexcept;
  double value() const noexcept { return sum_ + compensation_; }
  /// Adds another compensated sum (both parts).
  void merge(const CompensatedSum& other) noexcept;

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

enum class StepKind { Power, Table };
enum class WeightKind { Gamma, Power, Table };

/// The step sequence (gamma_n) and weight sequence (eta_n), n >= 1, together
/// with their partial sums Gamma_n and H_n.
///
/// Power family: gamma_n = gamma1 * n^-theta, with eta_n = gamma_n or
/// eta_n = n^-kappa. Table schedules hold explicit values and are only
/// defined on their stored range.
///
/// Immutable after construction.
class StepSchedule {
 public:
  /// gamma1 > 0, theta in (0, 1]. Weights equal to the steps.
  static StepSchedule power(double gamma1, double theta);
  /// gamma1 > 0, theta in (0, 1], kappa in [0, 1] (kappa > 1 leaves H_n
  /// bounded and is rejected).
  static StepSchedule power(double gamma1, double theta, double kappa);
  /// Explicit tables. An empty `etas` means eta_n = gamma_n.
  static StepSchedule table(std::vector<double> gammas, std::vector<double> etas = {});

  StepKind step_kind() const noexcept { return step_kind_; }
  WeightKind weight_kind() const noexcept { return weight_kind_; }
  double gamma1() const noexcept { return gamma1_; }
  double theta() const noexcept { return theta_; }
  double kappa() const noexcept { return kappa_; }

  /// Number of defined terms; nullopt for infinite (power) schedules.
  std::optional<std::size_t> length() const noexcept;

  double gamma(std::size_t n) const;
  double eta(std::size_t n) const;
  /// Gamma_n and H_n by compensated summation from k = 1 (O(n)).
  double Gamma(std::size_t n) const;
  double H(std::size_t n) const;
  /// sup_n gamma_n.
  double gamma_max() const noexcept { return gamma_max_; }

  /// Power-family exponents of eta_n ~ c * n^-kappa, including the
  /// eta = gamma case (kappa = theta).
  double weight_exponent() const noexcept;

 private:
  StepSchedule() = default;

  StepKind step_kind_ = StepKind::Power;
  WeightKind weight_kind_ = WeightKind::Gamma;
  double gamma1_ = 1.0;
  double theta_ = 1.0;
  double kappa_ = 0.0;
  double gamma_max_ = 1.0;
  std::vector<double> gammas_;
  std::vector<double> etas_;
};

/// Streams (gamma_n, eta_n, Gamma_n, H_n) for n = 1, 2, ... with compensated
/// running sums.
class ScheduleCursor {
 public:
  explicit ScheduleCursor(const StepSchedule& schedule) : schedule_(&schedule) {}

  /// Moves to n + 1.
  void advance();
  std::size_t n() const noexcept { return n_; }
  double gamma() const noexcept { return gamma_; }
  double eta() const noexcept { return eta_; }
  double Gamma() const noexcept { return Gamma_.value(); }
  double H() const noexcept { return H_.value(); }

 private:
  const StepSchedule* schedule_;
  std::size_t n_ = 0;
  double gamma_ = 0.0;
  double eta_ = 0.0;
  CompensatedSum Gamma_;
  CompensatedSum H_;
};

enum class Verdict { Admissible, Inadmissible, Undecided };

std::string to_string(Verdict v);

struct PartialSumPoint {
  std::size_t n;
  double value;
};

/// Result of a summability check: verdict plus partial-sum trace at
/// geometrically spaced n.
struct SummabilityReport {
  Verdict verdict = Verdict::Undecided;
  bool monotone = true;  ///< required monotonicity held on [1, N]
  std::size_t horizon = 0;
  std::vector<PartialSumPoint> trace;
  std::string rule;  ///< how the verdict was reached
};

/// Step-weight condition I: (eta_n / (H_n gamma_n))^rho * eps(gamma_n) with
/// eps(gamma) = gamma^eps_exponent must be summable, and
/// gamma_n^-1 eps(gamma_n) (eta_n / (H_n gamma_n))^rho non-increasing.
SummabilityReport check_sw1(const StepSchedule& s, double rho, double eps_exponent,
                            std::size_t horizon);

struct RatioConditionsReport {
  /// sum_n (eta_{n+1}/gamma_{n+1} - eta_n/gamma_n)_+ / H_n < inf, with
  /// eta_0/gamma_0 = 1 and the monotonicity side condition.
  SummabilityReport sw2;
  /// (1/H_n) sum_{k<=n} |eta_{k+1}/gamma_{k+1} - eta_k/gamma_k| -> 0.
  SummabilityReport ratio_variation;
};

RatioConditionsReport check_ratio_conditions(const StepSchedule& s, std::size_t horizon);

}  // namespace invdist
