#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "invdist/generators.hpp"
#include "invdist/lyapunov.hpp"
#include "invdist/measures.hpp"
#include "invdist/models.hpp"
#include "invdist/oracles.hpp"
#include "invdist/schedules.hpp"
#include "invdist/schemes.hpp"

namespace invdist {

struct ModelConfig {
  std::string type = "ou";  ///< "ou", "milstein1d", "switching-ou"
  int dim = 1;
  double a = 1.0;
  double sigma = 1.4142135623730951;
  double sigma0 = 1.0;  ///< milstein1d
  double c = 0.0;       ///< milstein1d
  std::vector<double> rates;       ///< switching-ou a(z)
  std::vector<double> diffusions;  ///< switching-ou sigma(z)
  Matrix Q;
};

struct ScheduleConfig {
  double gamma1 = 1.0;
  double theta = 1.0 / 3.0;
  std::optional<double> kappa;  ///< eta_n = n^-kappa; eta = gamma when unset
  std::vector<double> gammas;   ///< table schedule when non-empty
  std::vector<double> etas;
};

struct FunctionalConfig {
  std::string type;  ///< "moment", "box", "bump", "polynomial", "regime"
  std::string name;
  int order = 1;
  int coordinate = 0;
  double lo = 0.0;
  double hi = 0.0;
  Vector center;
  double radius = 1.0;
  std::vector<double> coefficients;
  int regime = 0;
};

struct LyapunovConfig {
  std::string V = "quadratic";
  double p = 2.0;
  double a = 1.0;
  double lambda = 0.0;
  double s = 2.0;
  double rho = 2.0;
  double alpha = 1.0;
  double beta = 1.0;
  double epsilon0 = 1e-3;
  std::optional<double> growth_C;
  std::optional<double> C_sigma;
};

struct RunConfig {
  std::size_t n_steps = 1000;
  std::uint64_t seed = 1;
  int replicas = 1;
  Vector x0;
  int z0 = 0;
  int per_decade = 10;
  std::size_t reservoir = WeightedEmpiricalMeasure::kDefaultCapacity;
};

struct OracleConfig {
  std::string kind = "none";  ///< "ou", "fokker-planck", "switching-moments", "longrun", "none"
  double x_lo = -30.0;
  double x_hi = 30.0;
  std::size_t M = 100001;
  LongRunOptions longrun;
};

/// Tolerances of the acceptance clauses; a clause is evaluated only when its
/// tolerance is set.
struct AcceptanceConfig {
  std::optional<double> second_moment;  ///< relative
  std::optional<double> mean;           ///< absolute
  std::optional<double> w1;
  std::optional<double> occupation;     ///< absolute, per regime
  std::optional<double> tightness;      ///< last-decade max <= (1 + tol) x earlier max
  std::optional<double> ew_residual;    ///< |nu_N(Af)| <= tol x max|Af|
  int ew_bumps = 5;
  int ew_min_decreasing = 4;
  double ew_radius_factor = 2.0;
  std::size_t ew_trend_from = 1000;
  std::size_t w1_grid = 1000;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelConfig model;
  SchemeKind scheme = SchemeKind::Euler;
  InnovationKind innovations = InnovationKind::Gaussian;
  ScheduleConfig schedule;
  std::vector<FunctionalConfig> functionals;
  LyapunovConfig lyapunov;
  RunConfig run;
  OracleConfig oracle;
  AcceptanceConfig acceptance;
  /// Check names ("sw1", "sw2", "ratio_variation", "shape", "growth", "recursive_control")
  /// whose failure makes `run` exit non-zero.
  std::vector<std::string> required_checks;
  std::filesystem::path out_dir = "out";
};

/// Parses and validates a JSON config. Errors are ConfigError naming the
/// offending field path (e.g. "schedule.theta").
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

Model build_model(const ModelConfig& c);
StepSchedule build_schedule(const ScheduleConfig& c);
Scheme build_scheme(const ExperimentConfig& c);
LyapunovSpec build_lyapunov(const LyapunovConfig& c);
/// Throws ConfigError("oracle.kind") when the kind does not fit the model.
StationaryReference build_reference(const ExperimentConfig& c);

/// Registers the built-in functionals ("m1", "m2", "lyapunov", "pi:<z>" for
/// switching models) followed by the configured ones.
void register_functionals(WeightedEmpiricalMeasure& m, const ExperimentConfig& c);

struct CheckResults {
  SummabilityReport sw1;
  RatioConditionsReport ratio;
  ShapeReport shape;
  GrowthReport growth;
  RecursiveControlReport recursive_control;
  std::string recursive_control_error;  ///< set when the checker threw
  std::vector<std::string> failed;      ///< names of failed checks
  std::string json;                     ///< checks.json contents
};

CheckResults run_checks(const ExperimentConfig& c);

struct SimulationResult {
  WeightedEmpiricalMeasure measure;        ///< merged over replicas
  std::vector<MeasureSnapshot> trace;      ///< merged snapshots
  std::vector<std::size_t> snapshot_at;
};

/// Runs every replica (concurrently) and merges them in replica order.
/// Replica r uses stream derive_seed(seed, 2r) for the chain and
/// derive_seed(seed, 2r + 1) for its reservoir.
SimulationResult simulate(const ExperimentConfig& c);

struct Clause {
  std::string id;
  double target = 0.0;
  double observed = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct DiagnosticsResult {
  std::vector<Clause> clauses;
  std::vector<EwResidual> ew;
  std::string summary_json;
  bool pass() const;
};

/// Compares the simulation with the configured reference and evaluates the
/// acceptance clauses. The EW residual reruns replica 0 with the bump
/// generators registered.
DiagnosticsResult diagnose(const ExperimentConfig& c, const SimulationResult& sim,
                           const CheckResults* checks = nullptr);

void write_functionals_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                           const std::vector<MeasureSnapshot>& trace);
void write_reservoir_csv(const std::filesystem::path& path, const WeightedEmpiricalMeasure& m);

/// Exit codes of the full pipeline.
enum ExitCode : int { kOk = 0, kConfigFailure = 1, kRuntimeFailure = 2, kRequiredCheckFailed = 3 };

/// checks, simulation, diagnostics; writes summary.json, functionals.csv,
/// reservoir.csv and checks.json to c.out_dir.
int run_experiment(const ExperimentConfig& c);

}  // namespace invdist
