#include "invdist/schemes.hpp"

#include <cmath>
#include <ostream>

namespace invdist {

namespace {

bool diverged(const Vector& x) { return !x.allFinite() || x.norm() > kDivergenceBound; }

std::string divergence_message(std::size_t step, const State& s, double gamma) {
  std::string msg = "trajectory diverged at step " + std::to_string(step) + " (gamma = " +
                    std::to_string(gamma) + ", last x = (";
  for (Eigen::Index i = 0; i < s.x.size(); ++i) {
    msg += (i ? ", " : "") + std::to_string(s.x[i]);
  }
  return msg + "))";
}

void guard(const Vector& next, const Vector& x, double gamma, int regime) {
  if (diverged(next)) throw DivergenceError(0, State{x, regime}, gamma);
}

}  // namespace

DivergenceError::DivergenceError(std::size_t step, State last_valid, double gamma)
    : Error(divergence_message(step, last_valid, gamma)),
      step_(step),
      last_valid_(std::move(last_valid)),
      gamma_(gamma) {}

std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Euler:
      return "euler";
    case SchemeKind::Milstein:
      return "milstein";
    case SchemeKind::SwitchingEuler:
      return "switching-euler";
  }
  return "euler";
}

SchemeKind parse_scheme(const std::string& tag) {
  if (tag == "euler") return SchemeKind::Euler;
  if (tag == "milstein") return SchemeKind::Milstein;
  if (tag == "switching-euler") return SchemeKind::SwitchingEuler;
  throw ConfigError("scheme", "unknown scheme '" + tag + "'");
}

Vector euler_step(const DiffusionModel& model, const Vector& x, double gamma, const Vector& U) {
  const Vector noise = model.diffusion(x) * U;
  Vector next = x + gamma * model.drift(x) + std::sqrt(gamma) * noise;
  guard(next, x, gamma, 0);
  return next;
}

double milstein_step(const DiffusionModel& model, double x, double gamma, double U) {
  Vector xv(1);
  xv[0] = x;
  const double b = model.drift(xv)[0];
  const double sigma = model.diffusion(xv)(0, 0);
  const double dsigma = model.diffusion_derivative(x);
  const double next = x + gamma * b + std::sqrt(gamma) * (sigma * U) + gamma * sigma * dsigma * (U * U - 1.0);
  if (!std::isfinite(next) || std::abs(next) > kDivergenceBound) {
    throw DivergenceError(0, State{xv, 0}, gamma);
  }
  return next;
}

CtmcPath simulate_ctmc_segment(const Matrix& Q, int z0, double t0, double t1, RandomStream& rng) {
  if (t1 < t0) throw ParameterError("t1", "must be >= t0");
  validate_generator(Q);
  if (z0 < 0 || z0 >= Q.rows()) throw ModelError("initial regime out of range");
  CtmcPath path;
  int z = z0;
  double t = t0;
  for (;;) {
    const double rate = -Q(z, z);
    if (rate <= 0.0) break;
    t += rng.exponential(rate);
    if (t >= t1) break;
    double u = rng.uniform() * rate;
    int next = z;
    for (int w = 0; w < Q.cols(); ++w) {
      if (w == z) continue;
      next = w;
      u -= Q(z, w);
      if (u < 0.0) break;
    }
    z = next;
    path.jump_times.push_back(t);
    path.states.push_back(z);
  }
  path.final_regime = z;
  return path;
}

int advance_regime(const Matrix& Q, int z0, double duration, RandomStream& rng) {
  int z = z0;
  double t = 0.0;
  for (;;) {
    const double rate = -Q(z, z);
    if (rate <= 0.0) return z;
    t += rng.exponential(rate);
    if (t >= duration) return z;
    double u = rng.uniform() * rate;
    int next = z;
    for (int w = 0; w < Q.cols(); ++w) {
      if (w == z) continue;
      next = w;
      u -= Q(z, w);
      if (u < 0.0) break;
    }
    z = next;
  }
}

State switching_euler_step(const SwitchingModel& model, const State& s, double gamma, const Vector& U,
                           RandomStream& rng) {
  State next;
  const Vector noise = model.diffusion(s.x, s.regime) * U;
  next.x = s.x + gamma * model.drift(s.x, s.regime) + std::sqrt(gamma) * noise;
  guard(next.x, s.x, gamma, s.regime);
  next.regime = advance_regime(model.generator, s.regime, gamma, rng);
  return next;
}

Scheme::Scheme(Model model, SchemeKind kind, InnovationKind innovations)
    : model_(std::move(model)), kind_(kind), innovations_(innovations, noise_dim(model_)) {
  std::visit([](const auto& m) { m.validate(); }, model_);
  switch (kind_) {
    case SchemeKind::Euler:
      if (!std::holds_alternative<DiffusionModel>(model_)) {
        throw ModelError("euler scheme needs a diffusion model; use switching-euler for switching models");
      }
      break;
    case SchemeKind::Milstein: {
      const auto* m = std::get_if<DiffusionModel>(&model_);
      if (!m || !m->supports_milstein()) {
        throw ModelError("milstein scheme needs a one-dimensional diffusion model with sigma'");
      }
      break;
    }
    case SchemeKind::SwitchingEuler:
      if (!std::holds_alternative<SwitchingModel>(model_)) {
        throw ModelError("switching-euler scheme needs a switching model");
      }
      break;
  }
}

State Scheme::step(const State& s, double gamma, const Vector& U, RandomStream& rng) const {
  switch (kind_) {
    case SchemeKind::Euler:
      return State{euler_step(std::get<DiffusionModel>(model_), s.x, gamma, U), s.regime};
    case SchemeKind::Milstein: {
      State next{Vector(1), s.regime};
      next.x[0] = milstein_step(std::get<DiffusionModel>(model_), s.x[0], gamma, U[0]);
      return next;
    }
    case SchemeKind::SwitchingEuler:
      return switching_euler_step(std::get<SwitchingModel>(model_), s, gamma, U, rng);
  }
  return s;
}

State Scheme::step(const State& s, double gamma, RandomStream& rng) const {
  Vector U;
  innovations_.draw_into(rng, U);
  return step(s, gamma, U, rng);
}

void write_trace_header(std::ostream& os, int dim) {
  os << "n,Gamma_n";
  for (int i = 1; i <= dim; ++i) os << ",X_" << i;
  os << ",zeta\n";
}

namespace {

void write_trace_row(std::ostream& os, const SchemeState& st) {
  os << st.n << ',' << st.clock;
  for (Eigen::Index i = 0; i < st.state.x.size(); ++i) os << ',' << st.state.x[i];
  os << ',' << st.state.regime << '\n';
}

}  // namespace

TrajectoryResult run_trajectory(const Scheme& scheme, const StepSchedule& schedule, const State& x0,
                                std::size_t n_steps, std::span<WeightedEmpiricalMeasure* const> sinks,
                                std::uint64_t seed, const TrajectoryOptions& options) {
  if (n_steps < 1) throw ParameterError("n_steps", "must be >= 1");
  if (x0.x.size() != state_dim(scheme.model())) throw ParameterError("x0", "dimension mismatch");
  if (x0.regime < 0 || x0.regime >= regime_count(scheme.model())) {
    throw ParameterError("z0", "regime out of range");
  }

  TrajectoryResult result;
  result.snapshots.resize(sinks.size());
  SchemeState& st = result.final;
  st.state = x0;
  st.rng = RandomStream(seed);

  ScheduleCursor cursor(schedule);
  std::size_t next_snapshot = 0;
  const auto& snaps = options.snapshot_at;
  const bool tracing = options.trace != nullptr && options.trace_every > 0;
  if (tracing) write_trace_row(*options.trace, st);

  Vector U;
  for (std::size_t k = 1; k <= n_steps; ++k) {
    cursor.advance();
    for (auto* sink : sinks) sink->update(st.state, cursor.eta());
    while (next_snapshot < snaps.size() && snaps[next_snapshot] < k) ++next_snapshot;
    if (next_snapshot < snaps.size() && snaps[next_snapshot] == k) {
      for (std::size_t i = 0; i < sinks.size(); ++i) result.snapshots[i].push_back(sinks[i]->snapshot());
      ++next_snapshot;
    }

    scheme.innovations().draw_into(st.rng, U);
    try {
      st.state = scheme.step(st.state, cursor.gamma(), U, st.rng);
    } catch (const DivergenceError& e) {
      throw DivergenceError(k, st.state, e.gamma());
    }
    st.n = k;
    st.clock = cursor.Gamma();
    if (tracing && k % options.trace_every == 0) write_trace_row(*options.trace, st);
  }
  return result;
}

}  // namespace invdist
