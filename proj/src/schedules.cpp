#include "invdist/schedules.hpp"

#include <algorithm>
#include <cmath>

#include "invdist/errors.hpp"

namespace invdist {

void CompensatedSum::add(double v) noexcept {
  const double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v)) {
    compensation_ += (sum_ - t) + v;
  } else {
    compensation_ += (v - t) + sum_;
  }
  sum_ = t;
}

void CompensatedSum::merge(const CompensatedSum& other) noexcept {
  add(other.sum_);
  add(other.compensation_);
}

namespace {

void check_power_params(double gamma1, double theta) {
  if (!(gamma1 > 0.0) || !std::isfinite(gamma1)) {
    throw ScheduleError("schedule.gamma1", "must be > 0");
  }
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw ScheduleError("schedule.theta",
                        "must lie in (0, 1]; theta = 0 is a constant step and gamma_n -> 0 fails");
  }
}

constexpr double kRelTol = 1e-12;

std::vector<std::size_t> geometric_points(std::size_t last) {
  std::vector<std::size_t> pts;
  for (std::size_t n = 1; n < last; n *= 2) pts.push_back(n);
  pts.push_back(last);
  return pts;
}

}  // namespace

StepSchedule StepSchedule::power(double gamma1, double theta) {
  check_power_params(gamma1, theta);
  StepSchedule s;
  s.step_kind_ = StepKind::Power;
  s.weight_kind_ = WeightKind::Gamma;
  s.gamma1_ = gamma1;
  s.theta_ = theta;
  s.kappa_ = theta;
  s.gamma_max_ = gamma1;
  return s;
}

StepSchedule StepSchedule::power(double gamma1, double theta, double kappa) {
  check_power_params(gamma1, theta);
  if (!(kappa >= 0.0)) {
    throw ScheduleError("schedule.weights.kappa", "must be >= 0");
  }
  if (kappa > 1.0) {
    throw ScheduleError("schedule.weights.kappa", "must be <= 1, otherwise H_n stays bounded");
  }
  StepSchedule s;
  s.step_kind_ = StepKind::Power;
  s.weight_kind_ = WeightKind::Power;
  s.gamma1_ = gamma1;
  s.theta_ = theta;
  s.kappa_ = kappa;
  s.gamma_max_ = gamma1;
  return s;
}

StepSchedule StepSchedule::table(std::vector<double> gammas, std::vector<double> etas) {
  if (gammas.empty()) throw ScheduleError("schedule.gammas", "table is empty");
  for (double g : gammas) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ScheduleError("schedule.gammas", "entries must be > 0");
  }
  if (gammas.size() >= 2) {
    const bool constant = std::all_of(gammas.begin(), gammas.end(),
                                      [&](double g) { return g == gammas.front(); });
    if (constant) throw ScheduleError("schedule.gammas", "constant step: gamma_n -> 0 fails");
    if (gammas.back() > gammas.front()) {
      throw ScheduleError("schedule.gammas", "steps grow over the table: gamma_n -> 0 fails");
    }
  }
  StepSchedule s;
  s.step_kind_ = StepKind::Table;
  if (etas.empty()) {
    s.weight_kind_ = WeightKind::Gamma;
  } else {
    if (etas.size() != gammas.size()) {
      throw ScheduleError("schedule.weights", "table length differs from the step table");
    }
    for (double e : etas) {
      if (!(e >= 0.0) || !std::isfinite(e)) throw ScheduleError("schedule.weights", "entries must be >= 0");
    }
    if (etas.size() >= 2) {
      const bool stalled = std::all_of(etas.begin() + static_cast<std::ptrdiff_t>(etas.size() / 2),
                                       etas.end(), [](double e) { return e == 0.0; });
      if (stalled) throw ScheduleError("schedule.weights", "weights vanish: H_n -> inf fails");
    }
    if (etas.front() == 0.0 && etas.size() == 1) {
      throw ScheduleError("schedule.weights", "weights vanish: H_n -> inf fails");
    }
    s.weight_kind_ = WeightKind::Table;
  }
  s.gamma_max_ = *std::max_element(gammas.begin(), gammas.end());
  s.gamma1_ = gammas.front();
  s.gammas_ = std::move(gammas);
  s.etas_ = std::move(etas);
  return s;
}

std::optional<std::size_t> StepSchedule::length() const noexcept {
  if (step_kind_ == StepKind::Table) return gammas_.size();
  return std::nullopt;
}

double StepSchedule::gamma(std::size_t n) const {
  if (n == 0) throw ParameterError("n", "steps are indexed from 1");
  if (step_kind_ == StepKind::Power) {
    return gamma1_ * std::pow(static_cast<double>(n), -theta_);
  }
  if (n > gammas_.size()) throw ParameterError("n", "beyond the end of the step table");
  return gammas_[n - 1];
}

double StepSchedule::eta(std::size_t n) const {
  switch (weight_kind_) {
    case WeightKind::Gamma:
      return gamma(n);
    case WeightKind::Power:
      if (n == 0) throw ParameterError("n", "weights are indexed from 1");
      return std::pow(static_cast<double>(n), -kappa_);
    case WeightKind::Table:
      if (n == 0) throw ParameterError("n", "weights are indexed from 1");
      if (n > etas_.size()) throw ParameterError("n", "beyond the end of the weight table");
      return etas_[n - 1];
  }
  return 0.0;
}

double StepSchedule::Gamma(std::size_t n) const {
  CompensatedSum sum;
  for (std::size_t k = 1; k <= n; ++k) sum.add(gamma(k));
  return sum.value();
}

double StepSchedule::H(std::size_t n) const {
  CompensatedSum sum;
  for (std::size_t k = 1; k <= n; ++k) sum.add(eta(k));
  return sum.value();
}

double StepSchedule::weight_exponent() const noexcept {
  return weight_kind_ == WeightKind::Gamma ? theta_ : kappa_;
}

void ScheduleCursor::advance() {
  ++n_;
  gamma_ = schedule_->gamma(n_);
  eta_ = schedule_->eta(n_);
  Gamma_.add(gamma_);
  H_.add(eta_);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Admissible:
      return "admissible";
    case Verdict::Inadmissible:
      return "inadmissible";
    case Verdict::Undecided:
      return "undecided";
  }
  return "undecided";
}

namespace {

void require_horizon(std::size_t horizon) {
  if (horizon < 100) throw ParameterError("horizon", "must be >= 100");
}

std::size_t effective_horizon(const StepSchedule& s, std::size_t horizon, std::size_t lookahead) {
  if (auto len = s.length()) {
    return *len > lookahead ? std::min(horizon, *len - lookahead) : 0;
  }
  return horizon;
}

// Verdict for sum_n n^-e (log n)^-l.
Verdict power_series_verdict(double e, double l) {
  if (e > 1.0 + kRelTol) return Verdict::Admissible;
  if (e < 1.0 - kRelTol) return Verdict::Inadmissible;
  return l > 1.0 ? Verdict::Admissible : Verdict::Inadmissible;
}

}  // namespace

SummabilityReport check_sw1(const StepSchedule& s, double rho, double eps_exponent,
                            std::size_t horizon) {
  require_horizon(horizon);
  if (!(rho >= 1.0 && rho <= 2.0)) throw ParameterError("rho", "must lie in [1, 2]");
  if (!(eps_exponent > 0.0)) throw ParameterError("eps_exponent", "must be > 0");

  SummabilityReport report;
  const std::size_t n_max = effective_horizon(s, horizon, 0);
  report.horizon = n_max;

  ScheduleCursor cur(s);
  CompensatedSum partial;
  double prev_mono = 0.0;
  const auto pts = geometric_points(std::max<std::size_t>(n_max, 1));
  std::size_t next_pt = 0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    cur.advance();
    const double ratio = cur.H() > 0.0 ? cur.eta() / (cur.H() * cur.gamma()) : 0.0;
    const double eps = std::pow(cur.gamma(), eps_exponent);
    const double term = std::pow(ratio, rho) * eps;
    const double mono = term / cur.gamma();
    if (n > 1 && mono > prev_mono * (1.0 + kRelTol)) report.monotone = false;
    prev_mono = mono;
    partial.add(term);
    if (next_pt < pts.size() && pts[next_pt] == n) {
      report.trace.push_back({n, partial.value()});
      ++next_pt;
    }
  }

  if (s.step_kind() == StepKind::Power && s.weight_kind() != WeightKind::Table) {
    // eta_n / (H_n gamma_n) ~ n^(theta - 1), with an extra 1/log n when the
    // weights decay like 1/n.
    const double theta = s.theta();
    const double kappa = s.weight_exponent();
    const double e = rho * (1.0 - theta) + theta * eps_exponent;
    const double l = std::abs(kappa - 1.0) < kRelTol ? rho : 0.0;
    const Verdict series = power_series_verdict(e, l);
    report.verdict = (series == Verdict::Admissible && !report.monotone) ? Verdict::Inadmissible : series;
    report.rule = "power family: terms ~ n^-" + std::to_string(e) +
                  (l > 0.0 ? " (log n)^-" + std::to_string(l) : std::string()) +
                  (report.monotone ? "" : "; monotonicity fails on [1, N]");
    return report;
  }

  if (n_max < 2) {
    report.verdict = Verdict::Undecided;
    report.rule = "table: insufficient horizon";
  } else if (!report.monotone) {
    report.verdict = Verdict::Inadmissible;
    report.rule = "table: monotonicity fails on [1, N]";
  } else {
    report.verdict = Verdict::Undecided;
    report.rule = "table: summability is a tail property; partial sums only";
  }
  return report;
}

namespace {

struct RatioTraces {
  SummabilityReport sw2;
  SummabilityReport variation;
};

// Walks n = 1..n_max and fills both traces. r_0 = 1 by convention.
RatioTraces ratio_traces(const StepSchedule& s, std::size_t n_max, std::size_t extra_point) {
  RatioTraces out;
  out.sw2.horizon = n_max;
  out.variation.horizon = n_max;
  if (n_max == 0) return out;

  ScheduleCursor cur(s);
  cur.advance();
  double r_prev = 1.0;  // eta_0 / gamma_0
  double r = cur.eta() / cur.gamma();
  double gamma_n = cur.gamma();
  double H_n = cur.H();

  CompensatedSum sw2;
  CompensatedSum variation;
  if (H_n > 0.0) sw2.add(std::max(r - r_prev, 0.0) / H_n);  // n = 0 term, H_{0+1} = H_1

  double prev_mono = 0.0;
  auto pts = geometric_points(n_max);
  if (extra_point < n_max) {
    pts.insert(std::upper_bound(pts.begin(), pts.end(), extra_point), extra_point);
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  }
  std::size_t next_pt = 0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    cur.advance();
    const double r_next = cur.eta() / cur.gamma();
    const double pos = std::max(r_next - r, 0.0);
    if (cur.H() > 0.0) sw2.add(pos / cur.H());
    const double mono = H_n > 0.0 ? pos / (gamma_n * H_n) : 0.0;
    if (n > 1 && mono > prev_mono * (1.0 + kRelTol) + 1e-300) out.sw2.monotone = false;
    prev_mono = mono;
    variation.add(std::abs(r_next - r));
    if (next_pt < pts.size() && pts[next_pt] == n) {
      out.sw2.trace.push_back({n, sw2.value()});
      out.variation.trace.push_back({n, H_n > 0.0 ? variation.value() / H_n : 0.0});
      ++next_pt;
    }
    r = r_next;
    gamma_n = cur.gamma();
    H_n = cur.H();
  }
  return out;
}

}  // namespace

RatioConditionsReport check_ratio_conditions(const StepSchedule& s, std::size_t horizon) {
  require_horizon(horizon);
  const bool power = s.step_kind() == StepKind::Power && s.weight_kind() != WeightKind::Table;
  // Power families are also traced to 10N so the trend can be read off.
  const std::size_t n_max = power ? 10 * horizon : effective_horizon(s, horizon, 1);
  RatioTraces t = ratio_traces(s, n_max, horizon);

  RatioConditionsReport out;
  out.sw2 = std::move(t.sw2);
  out.ratio_variation = std::move(t.variation);

  if (power) {
    const double theta = s.theta();
    const double kappa = s.weight_exponent();
    if (kappa >= theta - kRelTol) {
      // eta_n / gamma_n non-increasing (constant when kappa == theta).
      out.sw2.verdict = Verdict::Admissible;
      out.sw2.rule = "power family: eta_n/gamma_n non-increasing";
      out.ratio_variation.verdict = Verdict::Admissible;
      out.ratio_variation.rule = "power family: bounded total variation of eta_n/gamma_n";
    } else {
      // Increasing ratio ~ n^(theta - kappa): SW_II terms ~ n^(theta - 2),
      // Cesaro variation ~ n^(theta - 1).
      const bool ok = theta < 1.0 - kRelTol;
      out.sw2.verdict = (ok && out.sw2.monotone) ? Verdict::Admissible : Verdict::Inadmissible;
      out.sw2.rule = "power family: increasing ratio, terms ~ n^-" + std::to_string(2.0 - theta);
      out.ratio_variation.verdict = ok ? Verdict::Admissible : Verdict::Inadmissible;
      out.ratio_variation.rule =
          "power family: Cesaro variation ~ n^-" + std::to_string(1.0 - theta);
    }
    return out;
  }

  for (SummabilityReport* r : {&out.sw2, &out.ratio_variation}) {
    if (n_max < 2) {
      r->verdict = Verdict::Undecided;
      r->rule = "table: insufficient horizon";
    } else {
      r->verdict = Verdict::Undecided;
      r->rule = "table: tail property; traces only";
    }
  }
  if (n_max >= 2 && !out.sw2.monotone) {
    out.sw2.verdict = Verdict::Inadmissible;
    out.sw2.rule = "table: monotonicity fails on [1, N]";
  }
  return out;
}

}  // namespace invdist
