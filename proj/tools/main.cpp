#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "invdist/errors.hpp"
#include "invdist/experiment.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> replicas;
};

void add_common(CLI::App* cmd, std::string& config, Overrides& o) {
  cmd->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--replicas", o.replicas, "number of replicas");
}

invdist::ExperimentConfig load(const std::string& path, const Overrides& o) {
  auto c = invdist::load_config(path);
  if (o.seed) c.run.seed = *o.seed;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.replicas) {
    if (*o.replicas < 1) throw invdist::ConfigError("run.replicas", "must be >= 1");
    c.run.replicas = *o.replicas;
  }
  return c;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw invdist::Error("cannot write " + p.string());
  os << text;
}

int cmd_simulate(const invdist::ExperimentConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  const auto sim = invdist::simulate(c);
  invdist::write_functionals_csv(c.out_dir / "functionals.csv", sim.measure.names(), sim.trace);
  invdist::write_reservoir_csv(c.out_dir / "reservoir.csv", sim.measure);
  std::cout << "n = " << sim.measure.count() << ", H_n = " << sim.measure.mass() << '\n';
  for (std::size_t i = 0; i < sim.measure.functional_count(); ++i) {
    std::cout << "  " << sim.measure.names()[i] << " = " << sim.measure.value(i) << '\n';
  }
  return invdist::kOk;
}

int cmd_check(const invdist::ExperimentConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  const auto checks = invdist::run_checks(c);
  write(c.out_dir / "checks.json", checks.json);
  std::cout << checks.json;
  for (const auto& f : c.required_checks) {
    if (std::find(checks.failed.begin(), checks.failed.end(), f) != checks.failed.end()) {
      return invdist::kRequiredCheckFailed;
    }
  }
  return invdist::kOk;
}

int cmd_diagnose(const invdist::ExperimentConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  const auto sim = invdist::simulate(c);
  invdist::write_functionals_csv(c.out_dir / "functionals.csv", sim.measure.names(), sim.trace);
  invdist::write_reservoir_csv(c.out_dir / "reservoir.csv", sim.measure);
  const auto diag = invdist::diagnose(c, sim);
  write(c.out_dir / "summary.json", diag.summary_json);
  std::cout << diag.summary_json;
  return invdist::kOk;
}

int cmd_oracle(const invdist::ExperimentConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  const auto ref = invdist::build_reference(c);
  std::ofstream os(c.out_dir / "reference.csv");
  ref.write_csv(os);
  std::cout << "kind = " << invdist::to_string(ref.kind()) << "\nmean = " << ref.mean()
            << "\nsecond_moment = " << ref.moment(2) << '\n';
  return invdist::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-run averages of decreasing-step diffusion schemes"};
  app.require_subcommand(1);

  std::string config;
  Overrides o;
  auto* simulate = app.add_subcommand("simulate", "run the replicas and write functionals.csv, reservoir.csv");
  auto* check = app.add_subcommand("check", "schedule and Lyapunov hypothesis checks (checks.json)");
  auto* diagnose = app.add_subcommand("diagnose", "simulate, then compare with the reference (summary.json)");
  auto* run = app.add_subcommand("run", "checks, simulation and diagnostics");
  auto* oracle = app.add_subcommand("oracle", "compute the configured reference law (reference.csv)");
  for (auto* cmd : {simulate, check, diagnose, run, oracle}) add_common(cmd, config, o);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto c = load(config, o);
    if (simulate->parsed()) return cmd_simulate(c);
    if (check->parsed()) return cmd_check(c);
    if (diagnose->parsed()) return cmd_diagnose(c);
    if (oracle->parsed()) return cmd_oracle(c);
    return invdist::run_experiment(c);
  } catch (const invdist::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return invdist::kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return invdist::kRuntimeFailure;
  }
}
