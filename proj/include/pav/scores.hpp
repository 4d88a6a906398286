#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pav {

class ScoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reward dimension identifier. The seven core metrics are fixed and ordered;
/// configured extra metrics (e.g. a CLIP alignment score) sort after them by name.
class MetricId {
 public:
  enum class Core : std::uint8_t { VQ, TC, DD, TVA, FC, AES, MPS };
  static constexpr std::size_t kCoreCount = 7;
  static constexpr std::array<std::string_view, kCoreCount> kCoreNames = {
      "VQ", "TC", "DD", "TVA", "FC", "AES", "MPS"};

  MetricId(Core core);  // NOLINT(google-explicit-constructor)

  /// Core name or extension name. Throws ScoreError on an empty name.
  static MetricId parse(std::string_view name);
  static MetricId extension(std::string name);

  static std::vector<MetricId> core_set();

  [[nodiscard]] bool is_core() const { return rank_ < kCoreCount; }
  [[nodiscard]] const std::string& name() const { return name_; }

  friend bool operator==(const MetricId& a, const MetricId& b) {
    return a.rank_ == b.rank_ && a.name_ == b.name_;
  }
  friend bool operator<(const MetricId& a, const MetricId& b) {
    if (a.rank_ != b.rank_) return a.rank_ < b.rank_;
    return a.name_ < b.name_;
  }

 private:
  MetricId(std::size_t rank, std::string name) : rank_(rank), name_(std::move(name)) {}

  std::size_t rank_;  // core index, or kCoreCount for every extension
  std::string name_;
};

inline const MetricId kVQ{MetricId::Core::VQ};
inline const MetricId kTC{MetricId::Core::TC};
inline const MetricId kDD{MetricId::Core::DD};
inline const MetricId kTVA{MetricId::Core::TVA};
inline const MetricId kFC{MetricId::Core::FC};
inline const MetricId kAES{MetricId::Core::AES};
inline const MetricId kMPS{MetricId::Core::MPS};

/// Canonical metric list: sorted, unique.
std::vector<MetricId> canonical_metric_set(std::vector<MetricId> metrics);

struct MetricScale {
  MetricId metric;
  double raw_min;
  double raw_max;
  double target_min = 0.0;
  double target_max = 5.0;

  /// Throws ScoreError unless raw_min < raw_max and target_min < target_max.
  void validate() const;
};

/// Default raw ranges: VideoScore dimensions [1,4], AES [0,10], MPS [0,15], all onto [0,5].
/// Extensions default to [0,1].
MetricScale default_scale(const MetricId& metric);

using MetricValues = std::map<MetricId, double>;

/// Affine map of `raw` onto the target interval, clamped. Endpoints are exact.
double normalize(double raw, const MetricScale& scale);

/// Number of clamped normalize() calls since process start.
std::uint64_t normalize_clamp_count();

class ScoreVector {
 public:
  ScoreVector() = default;

  /// Normalizes every raw value with its scale. Throws ScoreError when a scale is missing.
  static ScoreVector from_raw(const MetricValues& raw, std::span<const MetricScale> scales);
  /// Trusts the caller; used when reloading persisted vectors. Throws on key mismatch.
  static ScoreVector from_parts(MetricValues raw, MetricValues norm);

  [[nodiscard]] const MetricValues& raw() const { return raw_; }
  [[nodiscard]] const MetricValues& normalized() const { return norm_; }
  [[nodiscard]] std::vector<MetricId> metric_set() const;
  [[nodiscard]] bool empty() const { return norm_.empty(); }
  [[nodiscard]] std::optional<double> norm(const MetricId& m) const;

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;

 private:
  MetricValues raw_;
  MetricValues norm_;
};

/// Sum of normalized values. Throws ScoreError on an empty metric set.
double overall(const ScoreVector& sv);

struct ScoredId {
  int id;
  ScoreVector scores;
};

enum class SelectionRule { Sum, Pareto };

/// Descending overall; ties by higher TVA, then lower id.
/// Throws ScoreError when candidates disagree on the metric set.
std::vector<int> rank(std::span<const ScoredId> candidates);

/// Pareto variant: non-dominated front index first, then the `rank` order inside a front.
std::vector<int> rank_pareto(std::span<const ScoredId> candidates);

std::vector<int> select_top_n(std::span<const ScoredId> population, int n,
                              SelectionRule rule = SelectionRule::Sum);

/// Strict "a ranks before b" under the Sum rule.
bool ranks_before(const ScoredId& a, const ScoredId& b);

enum class ThresholdFallback { HighestOverall, Reject };

struct ThresholdPolicy {
  MetricValues per_metric_min;
  ThresholdFallback fallback = ThresholdFallback::HighestOverall;

  /// 2.5 on every core metric, highest_overall fallback.
  static ThresholdPolicy defaults();
  static ThresholdPolicy none();

  /// Throws ScoreError when a threshold lies outside its metric's target interval.
  void validate(std::span<const MetricScale> scales) const;
};

/// Every metric the policy covers must reach its minimum (inclusive).
bool passes_thresholds(const ScoreVector& sv, const ThresholdPolicy& policy);

// JSON: {"raw": {...}, "norm": {...}} in canonical metric order.
nlohmann::ordered_json to_json(const ScoreVector& sv);
ScoreVector score_vector_from_json(const nlohmann::json& j);

std::string to_string(ThresholdFallback f);
ThresholdFallback threshold_fallback_from_string(std::string_view s);

}  // namespace pav
