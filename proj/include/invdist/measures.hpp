#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "invdist/random.hpp"
#include "invdist/schedules.hpp"
#include "invdist/types.hpp"

namespace invdist {

using Functional = std::function<double(const State&)>;

struct ReservoirItem {
  State state;
  double weight = 0.0;  ///< the eta_k the state was fed with
  double key = 0.0;     ///< exponential rank E / weight, E ~ Exp(1)
};

/// Values of every registered functional at one n.
struct MeasureSnapshot {
  std::size_t n = 0;
  double H = 0.0;
  std::vector<double> values;
};

/// Streaming weighted empirical measure
///
///   nu_n = (1 / H_n) sum_{k <= n} eta_k delta_{x_k}
///
/// evaluated on a registry of functionals, updated with the incremental-mean
/// recursion nu_n(f) = nu_{n-1}(f) + (eta_n / H_n)(f(x_n) - nu_{n-1}(f)).
///
/// A bounded reservoir keeps a weighted sample of the atoms for quantile and
/// Wasserstein diagnostics. Items are ranked by exponential keys E_k / eta_k
/// and the `capacity` smallest keys are kept (bottom-k sampling). Once atoms
/// have been discarded, kept items carry the inverse-inclusion weight
/// eta / (1 - exp(-eta * tau)), tau being the smallest discarded key.
///
/// The constant functional "one" is always registered at index 0.
/// Single-writer; combine replicas with `merge`.
class WeightedEmpiricalMeasure {
 public:
  static constexpr std::size_t kDefaultCapacity = 100000;

  explicit WeightedEmpiricalMeasure(std::uint64_t seed = 0,
                                    std::size_t reservoir_capacity = kDefaultCapacity);

  /// Registers f under `name` and returns its index. Only allowed before the
  /// first update.
  std::size_t add_functional(std::string name, Functional f);

  /// Feeds atom s with weight eta >= 0.
  void update(const State& s, double eta);

  std::size_t count() const noexcept { return count_; }
  /// H_n.
  double mass() const noexcept { return mass_.value(); }
  std::size_t functional_count() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t index_of(const std::string& name) const;

  double value(std::size_t i) const { return values_.at(i); }
  double value(const std::string& name) const { return values_.at(index_of(name)); }
  /// f_i returned a non-finite value at some atom; its value stays non-finite.
  bool tainted(std::size_t i) const { return tainted_.at(i) != 0; }
  const std::vector<double>& values() const noexcept { return values_; }
  MeasureSnapshot snapshot() const { return {count_, mass(), values_}; }

  std::size_t reservoir_capacity() const noexcept { return capacity_; }
  std::size_t reservoir_size() const noexcept { return reservoir_.size(); }
  /// Smallest discarded key; +inf while nothing has been discarded.
  double reservoir_threshold() const noexcept { return threshold_; }
  /// Kept atoms with their weights replaced by the inverse-inclusion weights.
  std::vector<ReservoirItem> reservoir() const;
  /// (coordinate value, inverse-inclusion weight) pairs sorted by value.
  std::vector<std::pair<double, double>> weighted_sample(int coordinate = 0) const;

  /// nu_a and nu_b combined as (H_a nu_a + H_b nu_b) / (H_a + H_b); reservoirs
  /// merged by their keys. Throws MergeError on registry mismatch.
  friend WeightedEmpiricalMeasure merge(const WeightedEmpiricalMeasure& a,
                                        const WeightedEmpiricalMeasure& b);

 private:
  void offer(const State& s, double eta);

  std::vector<std::string> names_;
  std::vector<Functional> functionals_;
  std::vector<double> values_;
  std::vector<char> tainted_;
  CompensatedSum mass_;
  std::size_t count_ = 0;

  std::uint64_t seed_;
  RandomStream rng_;
  std::size_t capacity_;
  std::vector<ReservoirItem> reservoir_;  // max-heap on key
  double threshold_;
};

WeightedEmpiricalMeasure merge(const WeightedEmpiricalMeasure& a, const WeightedEmpiricalMeasure& b);

/// Left-continuous inverse u -> inf{x : F(x) >= u} of a weighted sample.
class EmpiricalQuantile {
 public:
  /// `sample` holds (value, weight) pairs, weights >= 0 with positive total.
  explicit EmpiricalQuantile(std::vector<std::pair<double, double>> sample);

  double operator()(double u) const;
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
  std::vector<double> cumulative_;  // normalized, last == 1
};

/// W1 between the reservoir's weighted quantile function and a reference
/// quantile function: (1/G) sum_j |F_m^-1(u_j) - F_ref^-1(u_j)| at the
/// midpoints u_j = (j - 1/2)/G. Requires G >= 100 and a non-empty reservoir.
double wasserstein1_vs_quantile(const WeightedEmpiricalMeasure& m,
                                const std::function<double(double)>& reference_quantile,
                                std::size_t grid, int coordinate = 0);

/// Same distance for an explicit weighted sample.
double wasserstein1_vs_quantile(const EmpiricalQuantile& q,
                                const std::function<double(double)>& reference_quantile,
                                std::size_t grid);

/// Geometric snapshot indices: round(10^(j/per_decade)) for j = 0, 1, ...,
/// deduplicated, capped at and always including n_max.
std::vector<std::size_t> geometric_snapshots(std::size_t n_max, int per_decade = 10);

/// Built-in functionals.
Functional moment_functional(int order, int coordinate = 0);
Functional regime_indicator(int regime);

}  // namespace invdist
