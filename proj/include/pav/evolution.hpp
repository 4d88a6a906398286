#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pav/backends.hpp"
#include "pav/scores.hpp"

namespace pav {

class EvolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Candidates and runs

enum class ProvenanceKind { Original, Evolved, Sampled };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::Original;
  int iteration = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct PromptCandidate {
  int id = 0;  // 0 is the source prompt
  std::string text;
  Provenance provenance;
  std::string artifact_ref;
  std::optional<ScoreVector> scores;
  std::optional<std::string> failure;  // set when generation or scoring gave up

  [[nodiscard]] bool scored() const { return scores.has_value(); }
  friend bool operator==(const PromptCandidate&, const PromptCandidate&) = default;
};

nlohmann::ordered_json to_json(const PromptCandidate& c);
PromptCandidate candidate_from_json(const nlohmann::json& j);

struct EvolutionConfig {
  int max_iterations = 4;
  int offspring_per_iteration = 3;
  int top_n = 3;
  ThresholdPolicy thresholds = ThresholdPolicy::defaults();
  std::string operator_instruction = "evolve-v1";
  int parse_retries = 2;
  SelectionRule selection = SelectionRule::Sum;
  std::string operator_model = "gpt-4o";
  double operator_temperature = 1.0;
  int operator_max_tokens = 2048;
  std::uint64_t seed = 0;

  /// Throws EvolutionError on counts < 1 or an unknown instruction template.
  void validate() const;
};

nlohmann::ordered_json to_json(const EvolutionConfig& cfg);
EvolutionConfig evolution_config_from_json(const nlohmann::json& j);

struct OperatorExchange {
  std::string rendered_prompt;
  std::vector<std::string> raw_responses;  // one per attempt
  std::vector<std::string> parsed;
};

struct IterationRecord {
  int iteration = 0;  // 0 holds the evaluated source prompt
  std::vector<PromptCandidate> candidates;
  std::vector<int> population_after;
  std::optional<OperatorExchange> exchange;
  std::vector<std::string> warnings;
};

struct FinalSelection {
  int candidate_id = 0;
  bool threshold_met = false;
};

struct EvolutionRun {
  std::string run_id;
  EvolutionConfig config;
  std::vector<IterationRecord> history;
  std::vector<int> population;  // rank order
  std::optional<FinalSelection> final;
  int next_id = 1;

  [[nodiscard]] const PromptCandidate& source() const;
  [[nodiscard]] int completed_iterations() const { return history.empty() ? 0 : static_cast<int>(history.size()) - 1; }
  [[nodiscard]] const PromptCandidate* find(int id) const;
  /// Every scored candidate in history order.
  [[nodiscard]] std::vector<const PromptCandidate*> evaluated() const;
  [[nodiscard]] bool done() const { return final.has_value() || completed_iterations() >= config.max_iterations; }
};

// ---------------------------------------------------------------------------
// Operator prompt

struct OperatorPrompt {
  std::string system;  // instruction block with exemplars
  std::string user;    // indexed candidates with scores

  [[nodiscard]] std::string text() const { return system + "\n\n" + user; }
};

/// Index 0 is the source; selected candidates follow in the given (rank) order.
/// Each line reads `index. text (s1, s2, ...)` with normalized scores to two decimals.
/// Throws EvolutionError when any candidate is unscored.
OperatorPrompt render_operator_prompt(const PromptCandidate& source,
                                      std::span<const PromptCandidate> selected,
                                      const EvolutionConfig& cfg);

enum class ParseErrorKind { WrongCount, EmptyPrompt, Unclosed };

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, int found, const std::string& what)
      : std::runtime_error(what), kind_(kind), found_(found) {}
  [[nodiscard]] ParseErrorKind kind() const { return kind_; }
  [[nodiscard]] int found() const { return found_; }

 private:
  ParseErrorKind kind_;
  int found_;
};

/// Contents of every `<PROMPT>...</PROMPT>` span, trimmed.
/// Throws ParseError: Unclosed when an opening tag has no closing tag before the
/// next opening tag or the end; EmptyPrompt for a whitespace-only span;
/// WrongCount(found) when the span count differs from `expected`.
std::vector<std::string> parse_operator_response(std::string_view raw, int expected);

/// Nonempty well-formed spans, ignoring every error.
std::vector<std::string> extract_prompt_spans(std::string_view raw);

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationBackends {
  std::shared_ptr<backends::GenerationClient> generation;
  std::vector<std::shared_ptr<backends::ScorerClient>> scorers;
  std::vector<MetricScale> scales;
  std::shared_ptr<backends::ContentCache> cache;
  std::optional<std::string> negative_prompt;
  std::string profile = "default";
  int max_parallel = 4;
};

class Evaluator {
 public:
  /// Throws backends::BackendError(Config) when scorer coverage is inconsistent.
  explicit Evaluator(EvaluationBackends backends);

  struct Outcome {
    std::string artifact_ref;
    ScoreVector scores;
  };

  /// Generate then score one prompt. Cached by (prompt, backend fingerprint).
  Outcome evaluate_one(const std::string& prompt) const;

  [[nodiscard]] std::string fingerprint() const;
  [[nodiscard]] const std::vector<MetricId>& metric_set() const { return metric_set_; }
  [[nodiscard]] const std::vector<MetricScale>& scales() const { return b_.scales; }
  [[nodiscard]] int max_parallel() const { return b_.max_parallel; }

 private:
  EvaluationBackends b_;
  std::vector<MetricId> metric_set_;
};

/// Scores every candidate, fanning out up to the evaluator's parallelism.
/// Backend failures mark the candidate failed instead of throwing.
std::vector<PromptCandidate> evaluate(std::vector<PromptCandidate> candidates, const Evaluator& evaluator);

// ---------------------------------------------------------------------------
// Search loop

struct EvolutionBackends {
  std::shared_ptr<backends::ChatClient> operator_client;
  std::shared_ptr<const Evaluator> evaluator;
};

/// Evaluates the source prompt as iteration 0. Throws EvolutionError when it cannot be scored.
EvolutionRun start_run(std::string run_id, std::string source_text, EvolutionConfig cfg,
                       const EvolutionBackends& backends);

/// One evaluate -> select -> evolve round.
EvolutionRun step(EvolutionRun run, const EvolutionBackends& backends);

/// Top-N of the current population merged with the scored candidates.
std::vector<int> merge_and_select(const EvolutionRun& run, std::span<const PromptCandidate> offspring);

/// Rebuilds `population` and `next_id` from `history`, as after the last recorded step.
void rebuild_population(EvolutionRun& run);

struct FinalResult {
  PromptCandidate candidate;
  bool threshold_met = false;
};

/// Best threshold-passing candidate over the whole history, or the fallback.
FinalResult finalize(const EvolutionRun& run);

struct ReportRow {
  int iteration;
  MetricId metric;
  double mean;
};

/// Mean normalized score per metric of each iteration's scored offspring.
std::vector<ReportRow> iteration_report(const EvolutionRun& run);
std::string report_csv(std::span<const ReportRow> rows);

// ---------------------------------------------------------------------------
// Run directory: config.json, iterations/<k>.jsonl, final.json, report.csv

namespace run_store {

void write_config(const std::filesystem::path& dir, const EvolutionRun& run,
                  const std::string& config_hash);
void write_iteration(const std::filesystem::path& dir, const IterationRecord& record);
void write_final(const std::filesystem::path& dir, const EvolutionRun& run);
void write_report(const std::filesystem::path& dir, const EvolutionRun& run);

struct Loaded {
  EvolutionRun run;
  std::string config_hash;
};

/// Reads everything present; iterations must be contiguous from 0.
Loaded load(const std::filesystem::path& dir);
[[nodiscard]] bool is_finalized(const std::filesystem::path& dir);

}  // namespace run_store

}  // namespace pav
