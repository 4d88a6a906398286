#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pav/backends.hpp"
#include "pav/datasets.hpp"
#include "pav/evolution.hpp"
#include "pav/mock_backends.hpp"

namespace pav {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChatBackendConfig {
  std::string kind = "mock";  // mock | http
  std::string mode = "operator";  // mock only: operator | refiner | canned | scripted
  std::string endpoint;
  std::string api_key_env = "PAV_CHAT_API_KEY";
  std::string model = "gpt-4o";
  double temperature = 1.0;
  int max_tokens = 2048;
  std::string canned;
  std::vector<backends::ScriptRule> script;
  backends::RetryPolicy retry;
  bool cache = true;
  int concurrency = 8;
  int timeout_seconds = 120;
};

struct GenerationBackendConfig {
  std::string kind = "mock";
  std::string endpoint;
  std::string api_key_env = "PAV_GEN_API_KEY";
  std::string profile = "default";
  std::optional<std::string> negative_prompt;
  backends::RetryPolicy retry;
  bool cache = true;
  int concurrency = 8;
  int timeout_seconds = 600;
};

struct ScorerConfig {
  std::string name;
  std::string kind = "synthetic";  // synthetic | http
  std::vector<MetricId> metrics;
  std::string endpoint;
  std::string api_key_env = "PAV_SCORER_API_KEY";
  std::size_t vocabulary_size = 16;
  std::map<std::string, MetricValues> fixture;
  backends::RetryPolicy retry;
  bool cache = true;
  int concurrency = 8;
  int timeout_seconds = 300;
};

struct NegativeConfig {
  ChatBackendConfig llm;
  std::vector<FewShot> few_shots = default_negative_few_shots();
};

struct DatasetConfig {
  int k = 5;
  double margin = 0.05;
  int rounds = 2;
  bool require_threshold = false;
  double sample_temperature = 0.9;
  int resample_budget = 5;
  double beta = 0.1;
  /// Sampling endpoints by name: "sft", "dpo-1", ...
  std::map<std::string, ChatBackendConfig> models;
  NegativeConfig negatives;
};

struct AppConfig {
  std::uint64_t seed = 0;
  std::vector<MetricId> metric_set = MetricId::core_set();
  std::vector<MetricScale> scales;
  ChatBackendConfig chat;
  GenerationBackendConfig generation;
  std::vector<ScorerConfig> scorers;
  EvolutionConfig evolution;
  DatasetConfig datasets;
  std::string cache_dir = "cache";  // relative paths resolve against the output directory
  int run_workers = 4;
  int evaluation_parallelism = 4;

  /// SHA-256 of the canonical form of the configuration document.
  std::string hash;
};

/// Defaults fill every missing key. Throws ConfigError on any inconsistency,
/// including incomplete scorer coverage and unknown template ids.
AppConfig config_from_json(const nlohmann::json& doc);
AppConfig load_config(const std::filesystem::path& path);
AppConfig default_config();

[[nodiscard]] const MetricScale& scale_for(const AppConfig& cfg, const MetricId& m);

struct BackendSet {
  std::shared_ptr<backends::CallCounters> counters;
  std::shared_ptr<backends::ContentCache> cache;
  std::shared_ptr<backends::ChatClient> operator_chat;
  std::shared_ptr<const Evaluator> evaluator;
};

/// Clients wrapped with caching, retry and concurrency limits. `cache_root` may be empty to disable caching.
BackendSet build_backends(const AppConfig& cfg, const std::filesystem::path& cache_root,
                          backends::Sleeper sleeper = backends::real_sleeper());

std::shared_ptr<backends::ChatClient> build_chat_client(const ChatBackendConfig& cfg, std::uint64_t seed,
                                                        std::shared_ptr<backends::ContentCache> cache,
                                                        std::shared_ptr<backends::CallCounters> counters,
                                                        backends::Sleeper sleeper = backends::real_sleeper());

}  // namespace pav
