#pragma once

// Deterministic offline backends. Every output is a pure function of the request
// and the configured seed, so two processes with the same seed agree byte-for-byte.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pav/backends.hpp"

namespace pav::backends {

/// Descriptive words the synthetic scorer draws its preferred vocabulary from and
/// the mock operator draws its edits from.
const std::vector<std::string>& descriptor_word_pool();

/// `size` distinct words of the pool chosen by `seed`, in pool order.
std::vector<std::string> preferred_vocabulary(std::uint64_t seed, std::size_t size);

/// Lowercased alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Raw scores from prompt features.
///
/// For each metric with raw range [lo, hi] and span = hi - lo:
///   base  = lo + span * (0.25 + 0.35 * u(seed, metric, non-preferred tokens))
///   bonus = sum over distinct preferred tokens w of span * (0.02 + 0.04 * u(seed, metric, w))
///   value = min(hi, base + bonus)
/// where u() is a uniform [0,1) draw from a SHA-256 derived seed. The base ignores
/// preferred tokens, so adding one never lowers a metric.
MetricValues synthetic_scores(std::string_view prompt, std::span<const MetricScale> scales,
                              std::uint64_t seed, const std::vector<std::string>& vocabulary);

class SyntheticScorer final : public ScorerClient {
 public:
  SyntheticScorer(ScorerDescriptor descriptor, std::uint64_t seed, std::size_t vocabulary_size = 16);

  /// Exact prompt text -> raw row; overrides the formula for that prompt.
  void set_fixture(std::map<std::string, MetricValues> fixture) { fixture_ = std::move(fixture); }

  nlohmann::json score_raw(const std::string& artifact_ref, const std::string& prompt) override;
  [[nodiscard]] const ScorerDescriptor& descriptor() const override { return descriptor_; }
  [[nodiscard]] std::string fingerprint() const override;
  [[nodiscard]] const std::vector<std::string>& vocabulary() const { return vocabulary_; }

 private:
  ScorerDescriptor descriptor_;
  std::uint64_t seed_;
  std::vector<std::string> vocabulary_;
  std::map<std::string, MetricValues> fixture_;
};

/// artifact_ref = "mock://artifact/" + sha256(prompt + '\0' + negative_prompt).
class MockGenerationClient final : public GenerationClient {
 public:
  explicit MockGenerationClient(std::string profile = "default") : profile_(std::move(profile)) {}
  GenerationResult generate(const GenerationRequest& req) override;
  [[nodiscard]] std::string fingerprint() const override { return "mock-generation|" + profile_; }

  static std::string artifact_ref_for(std::string_view prompt, std::string_view negative_prompt);

 private:
  std::string profile_;
};

enum class MockChatMode {
  /// Evolution operator: reads the indexed candidate list, extends the best one.
  Operator,
  /// Prompt refiner: extracts the source from the fine-tuning template and elaborates it.
  Refiner,
  /// Returns a configured string.
  Canned,
  /// First rule whose `match` occurs in the last user message wins; else `canned`.
  Scripted,
};

MockChatMode mock_chat_mode_from_string(std::string_view s);

struct ScriptRule {
  std::string match;
  std::string response;
};

class MockChatClient final : public ChatClient {
 public:
  MockChatClient(MockChatMode mode, std::uint64_t seed);

  void set_canned(std::string response) { canned_ = std::move(response); }
  void set_script(std::vector<ScriptRule> rules) { script_ = std::move(rules); }

  ChatResponse chat(const ChatRequest& req) override;
  [[nodiscard]] std::string fingerprint(const ChatRequest& req) const override;

 private:
  [[nodiscard]] std::string operator_response(const ChatRequest& req, std::uint64_t rng_seed) const;
  [[nodiscard]] std::string refiner_response(const ChatRequest& req, std::uint64_t rng_seed) const;

  MockChatMode mode_;
  std::uint64_t seed_;
  std::string canned_;
  std::vector<ScriptRule> script_;
};

/// Test double whose first `failures` calls throw `error`, then delegates.
class FlakyChatClient final : public ChatClient {
 public:
  FlakyChatClient(std::shared_ptr<ChatClient> inner, int failures, BackendError error)
      : inner_(std::move(inner)), remaining_(failures), error_(std::move(error)) {}

  ChatResponse chat(const ChatRequest& req) override;
  [[nodiscard]] std::string fingerprint(const ChatRequest& req) const override {
    return inner_->fingerprint(req);
  }

 private:
  std::shared_ptr<ChatClient> inner_;
  std::atomic<int> remaining_;
  BackendError error_;
};

}  // namespace pav::backends
