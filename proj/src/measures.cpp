#include "invdist/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "invdist/errors.hpp"

namespace invdist {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool key_less(const ReservoirItem& a, const ReservoirItem& b) { return a.key < b.key; }

double inclusion_weight(double w, double tau) {
  if (!std::isfinite(tau)) return w;
  return w / -std::expm1(-w * tau);
}

}  // namespace

WeightedEmpiricalMeasure::WeightedEmpiricalMeasure(std::uint64_t seed, std::size_t reservoir_capacity)
    : seed_(seed), rng_(seed), capacity_(reservoir_capacity), threshold_(kInf) {
  add_functional("one", [](const State&) { return 1.0; });
}

std::size_t WeightedEmpiricalMeasure::add_functional(std::string name, Functional f) {
  if (count_ != 0) throw StateError("functionals must be registered before the first update");
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw StateError("functional '" + name + "' is already registered");
  }
  names_.push_back(std::move(name));
  functionals_.push_back(std::move(f));
  values_.push_back(0.0);
  tainted_.push_back(0);
  return names_.size() - 1;
}

std::size_t WeightedEmpiricalMeasure::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw StateError("no functional named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

void WeightedEmpiricalMeasure::update(const State& s, double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ParameterError("eta", "weights must be finite and >= 0");
  ++count_;
  mass_.add(eta);
  const double H = mass_.value();
  if (eta > 0.0 && H > 0.0) {
    const double step = eta / H;
    for (std::size_t i = 0; i < functionals_.size(); ++i) {
      if (tainted_[i]) continue;
      const double fx = functionals_[i](s);
      if (!std::isfinite(fx)) {
        tainted_[i] = 1;
        values_[i] = fx;
        continue;
      }
      values_[i] += step * (fx - values_[i]);
    }
    values_[0] = 1.0;
  }
  if (capacity_ > 0) offer(s, eta);
}

void WeightedEmpiricalMeasure::offer(const State& s, double eta) {
  const double e = rng_.exponential(1.0);
  if (eta <= 0.0) return;
  const double key = e / eta;
  if (reservoir_.size() < capacity_) {
    reservoir_.push_back({s, eta, key});
    std::push_heap(reservoir_.begin(), reservoir_.end(), key_less);
    return;
  }
  if (key >= reservoir_.front().key) {
    threshold_ = std::min(threshold_, key);
    return;
  }
  std::pop_heap(reservoir_.begin(), reservoir_.end(), key_less);
  threshold_ = std::min(threshold_, reservoir_.back().key);
  reservoir_.back() = {s, eta, key};
  std::push_heap(reservoir_.begin(), reservoir_.end(), key_less);
}

std::vector<ReservoirItem> WeightedEmpiricalMeasure::reservoir() const {
  std::vector<ReservoirItem> out = reservoir_;
  std::sort(out.begin(), out.end(), key_less);
  for (auto& item : out) item.weight = inclusion_weight(item.weight, threshold_);
  return out;
}

std::vector<std::pair<double, double>> WeightedEmpiricalMeasure::weighted_sample(int coordinate) const {
  std::vector<std::pair<double, double>> out;
  out.reserve(reservoir_.size());
  for (const auto& item : reservoir_) {
    if (coordinate < 0 || coordinate >= item.state.x.size()) {
      throw ParameterError("coordinate", "out of range for the stored states");
    }
    out.emplace_back(item.state.x[coordinate], inclusion_weight(item.weight, threshold_));
  }
  std::sort(out.begin(), out.end());
  return out;
}

WeightedEmpiricalMeasure merge(const WeightedEmpiricalMeasure& a, const WeightedEmpiricalMeasure& b) {
  if (a.names_ != b.names_) throw MergeError("functional registries differ");
  if (b.count_ == 0) return a;
  if (a.count_ == 0) return b;

  WeightedEmpiricalMeasure out = a;
  out.count_ = a.count_ + b.count_;
  out.mass_.merge(b.mass_);
  const double Ha = a.mass();
  const double Hb = b.mass();
  const double H = Ha + Hb;
  for (std::size_t i = 0; i < a.values_.size(); ++i) {
    out.tainted_[i] = static_cast<char>(a.tainted_[i] | b.tainted_[i]);
    if (Hb == 0.0) {
      out.values_[i] = a.values_[i];
    } else if (Ha == 0.0) {
      out.values_[i] = b.values_[i];
    } else {
      out.values_[i] = (Ha * a.values_[i] + Hb * b.values_[i]) / H;
    }
  }

  out.seed_ = splitmix64(a.seed_ ^ b.seed_);
  out.rng_ = RandomStream(out.seed_);
  out.capacity_ = std::min(a.capacity_, b.capacity_);
  std::vector<ReservoirItem> pool;
  pool.reserve(a.reservoir_.size() + b.reservoir_.size());
  pool.insert(pool.end(), a.reservoir_.begin(), a.reservoir_.end());
  pool.insert(pool.end(), b.reservoir_.begin(), b.reservoir_.end());
  std::sort(pool.begin(), pool.end(), [](const ReservoirItem& l, const ReservoirItem& r) {
    if (l.key != r.key) return l.key < r.key;
    return std::lexicographical_compare(l.state.x.data(), l.state.x.data() + l.state.x.size(),
                                        r.state.x.data(), r.state.x.data() + r.state.x.size());
  });
  out.threshold_ = std::min(a.threshold_, b.threshold_);
  if (pool.size() > out.capacity_) {
    out.threshold_ = std::min(out.threshold_, pool[out.capacity_].key);
    pool.resize(out.capacity_);
  }
  std::make_heap(pool.begin(), pool.end(), key_less);
  out.reservoir_ = std::move(pool);
  return out;
}

EmpiricalQuantile::EmpiricalQuantile(std::vector<std::pair<double, double>> sample) {
  std::sort(sample.begin(), sample.end());
  values_.reserve(sample.size());
  cumulative_.reserve(sample.size());
  CompensatedSum total;
  for (const auto& [v, w] : sample) {
    if (!(w >= 0.0)) throw ParameterError("weight", "quantile weights must be >= 0");
    total.add(w);
    values_.push_back(v);
    cumulative_.push_back(total.value());
  }
  if (values_.empty() || !(total.value() > 0.0)) throw StateError("empty weighted sample");
  const double t = total.value();
  for (double& c : cumulative_) c /= t;
  cumulative_.back() = 1.0;
}

double EmpiricalQuantile::operator()(double u) const {
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) return values_.back();
  return values_[static_cast<std::size_t>(it - cumulative_.begin())];
}

double wasserstein1_vs_quantile(const EmpiricalQuantile& q,
                                const std::function<double(double)>& reference_quantile,
                                std::size_t grid) {
  if (grid < 100) throw ParameterError("grid", "must be >= 100");
  CompensatedSum sum;
  const double G = static_cast<double>(grid);
  for (std::size_t j = 0; j < grid; ++j) {
    const double u = (static_cast<double>(j) + 0.5) / G;
    sum.add(std::abs(q(u) - reference_quantile(u)));
  }
  return sum.value() / G;
}

double wasserstein1_vs_quantile(const WeightedEmpiricalMeasure& m,
                                const std::function<double(double)>& reference_quantile,
                                std::size_t grid, int coordinate) {
  if (m.reservoir_size() == 0) throw StateError("reservoir is empty");
  return wasserstein1_vs_quantile(EmpiricalQuantile(m.weighted_sample(coordinate)), reference_quantile,
                                  grid);
}

std::vector<std::size_t> geometric_snapshots(std::size_t n_max, int per_decade) {
  std::vector<std::size_t> out;
  if (n_max == 0) return out;
  for (int j = 0;; ++j) {
    const double v = std::round(std::pow(10.0, static_cast<double>(j) / per_decade));
    const auto n = static_cast<std::size_t>(v);
    if (n >= n_max) break;
    if (out.empty() || out.back() != n) out.push_back(n);
  }
  out.push_back(n_max);
  return out;
}

Functional moment_functional(int order, int coordinate) {
  return [order, coordinate](const State& s) { return std::pow(s.x[coordinate], order); };
}

Functional regime_indicator(int regime) {
  return [regime](const State& s) { return s.regime == regime ? 1.0 : 0.0; };
}

}  // namespace invdist
