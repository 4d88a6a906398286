#include "pav/scores.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace pav {

namespace {
std::atomic<std::uint64_t> g_clamps{0};
}

MetricId::MetricId(Core core)
    : rank_(static_cast<std::size_t>(core)), name_(kCoreNames[static_cast<std::size_t>(core)]) {}

MetricId MetricId::parse(std::string_view name) {
  for (std::size_t i = 0; i < kCoreCount; ++i) {
    if (kCoreNames[i] == name) return MetricId(static_cast<Core>(i));
  }
  return extension(std::string(name));
}

MetricId MetricId::extension(std::string name) {
  if (name.empty()) throw ScoreError("metric name must be nonempty");
  for (auto core : kCoreNames) {
    if (core == name) throw ScoreError("extension metric '" + name + "' collides with a core metric");
  }
  return MetricId(kCoreCount, std::move(name));
}

std::vector<MetricId> MetricId::core_set() {
  return {kVQ, kTC, kDD, kTVA, kFC, kAES, kMPS};
}

std::vector<MetricId> canonical_metric_set(std::vector<MetricId> metrics) {
  std::sort(metrics.begin(), metrics.end());
  metrics.erase(std::unique(metrics.begin(), metrics.end()), metrics.end());
  return metrics;
}

void MetricScale::validate() const {
  if (!(raw_min < raw_max)) {
    throw ScoreError("scale for " + metric.name() + ": raw_min must be < raw_max");
  }
  if (!(target_min < target_max)) {
    throw ScoreError("scale for " + metric.name() + ": target_min must be < target_max");
  }
}

MetricScale default_scale(const MetricId& metric) {
  if (metric == kAES) return {metric, 0.0, 10.0};
  if (metric == kMPS) return {metric, 0.0, 15.0};
  if (metric.is_core()) return {metric, 1.0, 4.0};
  return {metric, 0.0, 1.0};
}

double normalize(double raw, const MetricScale& scale) {
  if (raw == scale.raw_min) return scale.target_min;
  if (raw == scale.raw_max) return scale.target_max;
  if (std::isnan(raw) || raw < scale.raw_min) {
    g_clamps.fetch_add(1, std::memory_order_relaxed);
    return scale.target_min;
  }
  if (raw > scale.raw_max) {
    g_clamps.fetch_add(1, std::memory_order_relaxed);
    return scale.target_max;
  }
  const double slope = (scale.target_max - scale.target_min) / (scale.raw_max - scale.raw_min);
  // Rounding can push an interior point a hair past the target bounds.
  return std::clamp(scale.target_min + (raw - scale.raw_min) * slope, scale.target_min,
                    scale.target_max);
}

std::uint64_t normalize_clamp_count() { return g_clamps.load(std::memory_order_relaxed); }

ScoreVector ScoreVector::from_raw(const MetricValues& raw, std::span<const MetricScale> scales) {
  ScoreVector sv;
  for (const auto& [metric, value] : raw) {
    auto it = std::find_if(scales.begin(), scales.end(),
                           [&](const MetricScale& s) { return s.metric == metric; });
    if (it == scales.end()) throw ScoreError("no scale configured for metric " + metric.name());
    sv.raw_.emplace(metric, value);
    sv.norm_.emplace(metric, normalize(value, *it));
  }
  return sv;
}

ScoreVector ScoreVector::from_parts(MetricValues raw, MetricValues norm) {
  if (raw.size() != norm.size() ||
      !std::equal(raw.begin(), raw.end(), norm.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw ScoreError("raw and normalized metric sets differ");
  }
  ScoreVector sv;
  sv.raw_ = std::move(raw);
  sv.norm_ = std::move(norm);
  return sv;
}

std::vector<MetricId> ScoreVector::metric_set() const {
  std::vector<MetricId> out;
  out.reserve(norm_.size());
  for (const auto& kv : norm_) out.push_back(kv.first);
  return out;
}

std::optional<double> ScoreVector::norm(const MetricId& m) const {
  auto it = norm_.find(m);
  if (it == norm_.end()) return std::nullopt;
  return it->second;
}

double overall(const ScoreVector& sv) {
  if (sv.empty()) throw ScoreError("no metrics configured");
  double sum = 0.0;
  for (const auto& kv : sv.normalized()) sum += kv.second;
  return sum;
}

namespace {

bool same_metric_set(const ScoreVector& a, const ScoreVector& b) {
  const auto& x = a.normalized();
  const auto& y = b.normalized();
  return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), [](const auto& p, const auto& q) {
           return p.first == q.first;
         });
}

void check_homogeneous(std::span<const ScoredId> candidates) {
  for (const auto& c : candidates) {
    if (!same_metric_set(c.scores, candidates.front().scores)) {
      throw ScoreError("candidates have heterogeneous metric sets");
    }
  }
}

// Pairs overall with the candidate so the sum is computed once.
struct Keyed {
  double total;
  double tva;
  const ScoredId* item;
};

bool keyed_before(const Keyed& a, const Keyed& b) {
  if (a.total != b.total) return a.total > b.total;
  if (a.tva != b.tva) return a.tva > b.tva;
  return a.item->id < b.item->id;
}

Keyed key_of(const ScoredId& c) {
  return {overall(c.scores), c.scores.norm(kTVA).value_or(0.0), &c};
}

bool dominates(const ScoreVector& a, const ScoreVector& b) {
  bool strictly = false;
  auto ib = b.normalized().begin();
  for (const auto& [metric, va] : a.normalized()) {
    const double vb = (ib++)->second;
    if (va < vb) return false;
    if (va > vb) strictly = true;
  }
  return strictly;
}

}  // namespace

bool ranks_before(const ScoredId& a, const ScoredId& b) { return keyed_before(key_of(a), key_of(b)); }

std::vector<int> rank(std::span<const ScoredId> candidates) {
  if (candidates.empty()) return {};
  check_homogeneous(candidates);
  std::vector<Keyed> keyed;
  keyed.reserve(candidates.size());
  for (const auto& c : candidates) keyed.push_back(key_of(c));
  std::sort(keyed.begin(), keyed.end(), keyed_before);
  std::vector<int> ids;
  ids.reserve(keyed.size());
  for (const auto& k : keyed) ids.push_back(k.item->id);
  return ids;
}

std::vector<int> rank_pareto(std::span<const ScoredId> candidates) {
  if (candidates.empty()) return {};
  check_homogeneous(candidates);
  const std::size_t n = candidates.size();
  std::vector<int> front(n, -1);
  std::size_t assigned = 0;
  for (int level = 0; assigned < n; ++level) {
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
      if (front[i] >= 0) continue;
      bool dominated = false;
      for (std::size_t j = 0; j < n && !dominated; ++j) {
        if (j != i && front[j] < 0 && dominates(candidates[j].scores, candidates[i].scores)) {
          dominated = true;
        }
      }
      if (!dominated) current.push_back(i);
    }
    for (auto i : current) front[i] = level;
    assigned += current.size();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Keyed> keys;
  keys.reserve(n);
  for (const auto& c : candidates) keys.push_back(key_of(c));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (front[a] != front[b]) return front[a] < front[b];
    return keyed_before(keys[a], keys[b]);
  });
  std::vector<int> ids;
  ids.reserve(n);
  for (auto i : order) ids.push_back(candidates[i].id);
  return ids;
}

std::vector<int> select_top_n(std::span<const ScoredId> population, int n, SelectionRule rule) {
  if (n < 1) throw ScoreError("select_top_n requires n >= 1");
  auto ids = rule == SelectionRule::Sum ? rank(population) : rank_pareto(population);
  if (ids.size() > static_cast<std::size_t>(n)) ids.resize(static_cast<std::size_t>(n));
  return ids;
}

ThresholdPolicy ThresholdPolicy::defaults() {
  ThresholdPolicy p;
  for (const auto& m : MetricId::core_set()) p.per_metric_min.emplace(m, 2.5);
  return p;
}

ThresholdPolicy ThresholdPolicy::none() { return {}; }

void ThresholdPolicy::validate(std::span<const MetricScale> scales) const {
  for (const auto& [metric, min] : per_metric_min) {
    auto it = std::find_if(scales.begin(), scales.end(),
                           [&](const MetricScale& s) { return s.metric == metric; });
    if (it == scales.end()) throw ScoreError("threshold on unconfigured metric " + metric.name());
    if (min < it->target_min || min > it->target_max) {
      throw ScoreError("threshold for " + metric.name() + " lies outside its target interval");
    }
  }
}

bool passes_thresholds(const ScoreVector& sv, const ThresholdPolicy& policy) {
  for (const auto& [metric, min] : policy.per_metric_min) {
    auto v = sv.norm(metric);
    if (!v) continue;
    if (*v < min) return false;
  }
  return true;
}

nlohmann::ordered_json to_json(const ScoreVector& sv) {
  nlohmann::ordered_json raw = nlohmann::ordered_json::object();
  nlohmann::ordered_json norm = nlohmann::ordered_json::object();
  for (const auto& [m, v] : sv.raw()) raw[m.name()] = v;
  for (const auto& [m, v] : sv.normalized()) norm[m.name()] = v;
  nlohmann::ordered_json j;
  j["raw"] = std::move(raw);
  j["norm"] = std::move(norm);
  return j;
}

ScoreVector score_vector_from_json(const nlohmann::json& j) {
  MetricValues raw;
  MetricValues norm;
  for (const auto& [k, v] : j.at("raw").items()) raw.emplace(MetricId::parse(k), v.get<double>());
  for (const auto& [k, v] : j.at("norm").items()) norm.emplace(MetricId::parse(k), v.get<double>());
  return ScoreVector::from_parts(std::move(raw), std::move(norm));
}

std::string to_string(ThresholdFallback f) {
  return f == ThresholdFallback::HighestOverall ? "highest_overall" : "reject";
}

ThresholdFallback threshold_fallback_from_string(std::string_view s) {
  if (s == "highest_overall") return ThresholdFallback::HighestOverall;
  if (s == "reject") return ThresholdFallback::Reject;
  throw ScoreError("unknown threshold fallback '" + std::string(s) + "'");
}

}  // namespace pav
