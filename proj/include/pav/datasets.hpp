#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pav/backends.hpp"
#include "pav/evolution.hpp"
#include "pav/scores.hpp"

namespace pav {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Fine-tuning pairs

struct SftPair {
  std::string source;
  std::string target;
  std::string instruction = "sft-v1";
  bool threshold_met = false;
  std::string run_id;
  double target_overall = 0.0;
};

struct SftFilter {
  bool require_threshold_met = false;
};

struct SftBuild {
  std::vector<SftPair> pairs;
  int total = 0;
  int excluded_threshold = 0;
  int excluded_unchanged = 0;  // final prompt equals the source
};

/// One pair per finalized run that passes `filter`, in input order.
/// Throws DatasetError naming every run that is not finalized.
SftBuild build_sft_dataset(std::span<const EvolutionRun> runs, const SftFilter& filter);

/// Fine-tuning template wrapped around a source prompt.
std::string sft_user_content(std::string_view source);
/// Inverse of sft_user_content; nullopt when the template does not match.
std::optional<std::string> source_from_user_content(std::string_view content);

/// `{"dialog": [{"role":"user","content":...}, {"role":"assistant","content":...}]}`
std::string sft_jsonl_line(const SftPair& pair);

struct TrainerHints {
  std::string method;
  int epochs;
  int batch_size;
  double learning_rate;
};

TrainerHints sft_trainer_hints();  // LoRA, 14 epochs, batch 16, lr 1e-4
TrainerHints dpo_trainer_hints();  // 3 epochs, batch 32, lr 5e-5

/// Writes the JSONL plus `<path>.meta.json`. Atomic.
void emit_sft_jsonl(std::span<const SftPair> pairs, const std::filesystem::path& path,
                    const nlohmann::ordered_json& summary = nlohmann::ordered_json::object());
std::vector<SftPair> read_sft_jsonl(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Preference triplets

struct DpoTriplet {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double chosen_overall = 0.0;
  double rejected_overall = 0.0;
  int round = 1;
  ScoreVector chosen_scores;
  ScoreVector rejected_scores;
};

struct DpoRoundOptions {
  int k = 5;
  double margin = 0.05;
  int round = 1;
  std::string model = "sft";
  double temperature = 0.9;
  int max_tokens = 1024;
  /// Extra sampling attempts allowed to replace duplicate or empty samples.
  int resample_budget = 5;
  std::uint64_t seed = 0;
  int max_parallel = 4;

  void validate() const;
};

struct SkippedSource {
  std::string prompt;
  std::string reason;
};

struct DpoBuild {
  std::vector<DpoTriplet> triplets;
  std::vector<SkippedSource> skipped;
  int backend_failures = 0;
};

struct ScoredSample {
  std::string text;
  ScoreVector scores;
};

/// Indices of (chosen, rejected): first maximal and first minimal overall.
/// nullopt when fewer than two samples or the gap is below `margin`.
std::optional<std::pair<std::size_t, std::size_t>> choose_preference_pair(std::span<const ScoredSample> samples,
                                                                          double margin);

/// Sample k distinct refinements per source, score them, keep best and worst.
DpoBuild build_dpo_round(std::span<const std::string> sources, backends::ChatClient& model,
                         const Evaluator& evaluator, const DpoRoundOptions& opts);

struct DpoRoundPlan {
  int round;
  std::string sample_from;  // "sft" for round 1, then "dpo-<r-1>"
};

/// Throws DatasetError for rounds < 1.
std::vector<DpoRoundPlan> plan_dpo_iterations(int rounds);
nlohmann::ordered_json to_json(std::span<const DpoRoundPlan> plan);

/// `{"prompt":..., "chosen":..., "rejected":...}` per line plus `<path>.meta.json`.
void emit_dpo_jsonl(std::span<const DpoTriplet> triplets, const std::filesystem::path& path,
                    const nlohmann::ordered_json& summary = nlohmann::ordered_json::object());

struct DpoRecord {
  std::string prompt;
  std::string chosen;
  std::string rejected;
};
std::vector<DpoRecord> read_dpo_jsonl(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Negative prompts

enum class NegativeStrategy { Fixed, Icl, TunedPair };
std::string to_string(NegativeStrategy s);
NegativeStrategy negative_strategy_from_string(std::string_view s);

struct NegativePromptRecord {
  std::string positive;
  std::string negative;
  NegativeStrategy strategy = NegativeStrategy::Fixed;
};

struct FewShot {
  std::string positive;
  std::string negative;
};

/// The curated adaptive example (makeup routine).
std::vector<FewShot> default_negative_few_shots();

std::string render_negative_request(std::string_view positive, std::span<const FewShot> few_shots);

/// Reason the negative is unusable: no commas, empty, or a sentence restating the
/// positive's subject clause. nullopt when valid.
std::optional<std::string> negative_violation(std::string_view negative, std::string_view positive);

struct NegativeOptions {
  std::string model = "gpt-4o";
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

/// Throws DatasetError when the model's output is invalid twice, or when an
/// LLM-backed strategy has no client.
NegativePromptRecord make_negative(std::string_view positive, NegativeStrategy strategy,
                                   backends::ChatClient* llm, std::span<const FewShot> few_shots,
                                   const NegativeOptions& opts = {});

/// Fixed/ICL: `{"positive","negative","strategy"}` lines. Tuned pairs: fine-tuning dialog lines.
void emit_negative_jsonl(std::span<const NegativePromptRecord> records, const std::filesystem::path& path);
std::string negative_pair_jsonl_line(const NegativePromptRecord& record);

}  // namespace pav
