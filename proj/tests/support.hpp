#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pav/config.hpp"
#include "pav/scores.hpp"

namespace pav::testing {

// First-iteration spa example (normalized 0-5 scores).
inline const std::string kSpaOriginal = "Attractive blonde woman doing hand massage in a spa center";
inline const std::string kSpaRefined1 =
    "A serene scene in a spa center where an attractive blonde woman is performing a hand massage. The woman has a "
    "focused expression and is working gently. The surroundings are tranquil, with soft lighting and calming decor. "
    "The environment suggests a soothing and relaxing experience. The video does not contain any text or drastic "
    "actions.";
inline const std::string kSpaRefined2 =
    "A close-up of a blonde woman giving a hand massage in a quiet spa center. The woman's hands are applying gentle "
    "pressure, with a serene and focused expression on her face. The spa environment features soft lighting, adding "
    "to the calm and relaxing atmosphere. The scene is peaceful and intimate, designed to convey comfort and care. No "
    "text or significant movements are present in the video.";
inline const std::string kSpaRefined3 =
    "An intimate view of a serene spa center with a blonde woman performing a hand massage. The woman appears "
    "focused and gentle, with the peaceful surroundings enhancing the calming effect. Soft, ambient lighting "
    "highlights the tranquility of the spa. The overall ambiance is relaxing, aiming to provide a sense of comfort "
    "and well-being. The video maintains a focus on the woman and her actions without any text";

using Row = std::array<double, 7>;  // VQ, TC, DD, TVA, FC, AES, MPS
inline constexpr Row kRowOriginal{2.47, 2.66, 2.84, 2.77, 2.48, 3.34, 2.7};
inline constexpr Row kRowRefined1{2.63, 2.73, 2.92, 2.95, 2.42, 3.49, 3.67};
inline constexpr Row kRowRefined2{2.58, 2.77, 2.88, 2.98, 2.56, 3.47, 3.04};
inline constexpr Row kRowRefined3{2.58, 2.69, 2.77, 2.88, 2.47, 3.61, 3.43};

// Sums of the printed values, added by hand.
inline constexpr double kSumOriginal = 19.26;
inline constexpr double kSumRefined1 = 20.81;
inline constexpr double kSumRefined2 = 20.28;
inline constexpr double kSumRefined3 = 20.43;

inline std::vector<MetricScale> identity_scales() {
  std::vector<MetricScale> out;
  for (const auto& m : MetricId::core_set()) out.push_back({m, 0.0, 5.0, 0.0, 5.0});
  return out;
}

inline MetricValues row_values(const Row& row) {
  MetricValues v;
  const auto core = MetricId::core_set();
  for (std::size_t i = 0; i < core.size(); ++i) v.emplace(core[i], row[i]);
  return v;
}

inline ScoreVector row_vector(const Row& row) {
  const auto scales = identity_scales();
  return ScoreVector::from_raw(row_values(row), scales);
}

inline nlohmann::json row_json(const Row& row) {
  nlohmann::json j;
  const auto core = MetricId::core_set();
  for (std::size_t i = 0; i < core.size(); ++i) j[core[i].name()] = row[i];
  return j;
}

inline std::string prompt_tags(const std::vector<std::string>& prompts) {
  std::string out = "Here are three improved prompts.\n";
  for (const auto& p : prompts) out += "<PROMPT>" + p + "</PROMPT>\n";
  return out;
}

/// Config that replays the spa example: canned operator output and identity-scaled fixture scores.
inline nlohmann::json spa_config_json(double threshold = 0.0, int max_iterations = 1) {
  nlohmann::json scorer;
  scorer["name"] = "fixture";
  scorer["metrics"] = {"VQ", "TC", "DD", "TVA", "FC", "AES", "MPS"};
  scorer["fixture"][kSpaOriginal] = row_json(kRowOriginal);
  scorer["fixture"][kSpaRefined1] = row_json(kRowRefined1);
  scorer["fixture"][kSpaRefined2] = row_json(kRowRefined2);
  scorer["fixture"][kSpaRefined3] = row_json(kRowRefined3);

  nlohmann::json j;
  j["seed"] = 7;
  for (const auto& m : MetricId::core_set()) {
    j["metrics"]["scales"][m.name()] = {{"raw_min", 0.0}, {"raw_max", 5.0}};
    j["evolution"]["thresholds"]["per_metric_min"][m.name()] = threshold;
  }
  j["backends"]["chat"] = {{"kind", "mock"},
                           {"mode", "canned"},
                           {"canned", prompt_tags({kSpaRefined1, kSpaRefined2, kSpaRefined3})}};
  j["backends"]["scorers"] = nlohmann::json::array({scorer});
  j["evolution"]["max_iterations"] = max_iterations;
  return j;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pav-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

}  // namespace pav::testing
