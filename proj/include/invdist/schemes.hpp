#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "invdist/errors.hpp"
#include "invdist/measures.hpp"
#include "invdist/models.hpp"
#include "invdist/random.hpp"
#include "invdist/schedules.hpp"

namespace invdist {

/// |X| above this bound, or any non-finite coordinate, aborts a trajectory.
inline constexpr double kDivergenceBound = 1e12;

/// A step produced a non-finite or exploding point. Carries the last valid
/// point, the step index that failed and its step size.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, State last_valid, double gamma);
  std::size_t step() const noexcept { return step_; }
  const State& last_valid() const noexcept { return last_valid_; }
  double gamma() const noexcept { return gamma_; }

 private:
  std::size_t step_;
  State last_valid_;
  double gamma_;
};

enum class SchemeKind { Euler, Milstein, SwitchingEuler };

std::string to_string(SchemeKind k);
/// "euler", "milstein", "switching-euler".
SchemeKind parse_scheme(const std::string& tag);

/// x + gamma b(x) + sqrt(gamma) sigma(x) U.
Vector euler_step(const DiffusionModel& model, const Vector& x, double gamma, const Vector& U);

/// x + gamma b(x) + sqrt(gamma) sigma(x) U + gamma sigma(x) sigma'(x) (U^2 - 1).
double milstein_step(const DiffusionModel& model, double x, double gamma, double U);

struct CtmcPath {
  std::vector<double> jump_times;
  std::vector<int> states;  ///< regime entered at each jump time
  int final_regime = 0;
};

/// Exact simulation of the regime chain on [t0, t1]: exponential holding
/// times with rate -q_zz, jump to w != z with probability q_zw / -q_zz.
CtmcPath simulate_ctmc_segment(const Matrix& Q, int z0, double t0, double t1, RandomStream& rng);

/// Regime after `duration` (same law as simulate_ctmc_segment, no path kept).
int advance_regime(const Matrix& Q, int z0, double duration, RandomStream& rng);

/// Frozen-coefficient Euler step for (x, z) followed by the exact regime
/// evolution over the same interval.
State switching_euler_step(const SwitchingModel& model, const State& s, double gamma, const Vector& U,
                           RandomStream& rng);

/// A model paired with its one-step kernel Q_gamma.
class Scheme {
 public:
  /// Throws ModelError when the model does not fit the scheme: Milstein needs
  /// a one-dimensional model with sigma', switching-euler a SwitchingModel,
  /// euler a DiffusionModel.
  Scheme(Model model, SchemeKind kind, InnovationKind innovations = InnovationKind::Gaussian);

  const Model& model() const noexcept { return model_; }
  SchemeKind kind() const noexcept { return kind_; }
  const Innovations& innovations() const noexcept { return innovations_; }

  /// One transition with an explicit innovation draw; `rng` drives the
  /// regime chain only. Throws DivergenceError (step 0) on blow-up.
  State step(const State& s, double gamma, const Vector& U, RandomStream& rng) const;
  /// One transition drawing U from `rng`.
  State step(const State& s, double gamma, RandomStream& rng) const;

 private:
  Model model_;
  SchemeKind kind_;
  Innovations innovations_;
};

/// The chain at index n: clock Gamma_n, point, regime and stream position.
struct SchemeState {
  std::size_t n = 0;
  double clock = 0.0;
  State state;
  RandomStream rng;
};

struct TrajectoryOptions {
  /// Indices n at which every sink is snapshotted (after feeding atom n).
  std::vector<std::size_t> snapshot_at;
  /// Write "n,Gamma_n,X_1..X_d,zeta" every `trace_every` steps when > 0.
  std::size_t trace_every = 0;
  std::ostream* trace = nullptr;
};

struct TrajectoryResult {
  SchemeState final;
  /// snapshots[i] holds the snapshots of sinks[i].
  std::vector<std::vector<MeasureSnapshot>> snapshots;
};

/// Runs n_steps transitions of the decreasing-step chain started at x0.
/// Step k feeds the pre-step point X_{Gamma_{k-1}} with weight eta_k to every
/// sink, then moves with gamma_k. Fully determined by the seed.
TrajectoryResult run_trajectory(const Scheme& scheme, const StepSchedule& schedule, const State& x0,
                                std::size_t n_steps, std::span<WeightedEmpiricalMeasure* const> sinks,
                                std::uint64_t seed, const TrajectoryOptions& options = {});

void write_trace_header(std::ostream& os, int dim);

}  // namespace invdist
