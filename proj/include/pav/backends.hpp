#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pav/scores.hpp"

namespace pav::backends {

enum class ErrorKind {
  InvalidRequest,
  Transport,
  Status,
  RetriesExhausted,
  MalformedResponse,
  MalformedScore,
  Config,
};

std::string to_string(ErrorKind kind);

class BackendError : public std::runtime_error {
 public:
  BackendError(ErrorKind kind, const std::string& what, int status = 0)
      : std::runtime_error(what), kind_(kind), status_(status) {}

  [[nodiscard]] ErrorKind kind() const { return kind_; }
  [[nodiscard]] int status() const { return status_; }

 private:
  ErrorKind kind_;
  int status_;
};

// ---------------------------------------------------------------------------
// Requests and responses

enum class Role { System, User, Assistant };
std::string to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  int max_tokens = 1024;
  /// Sampling seed. Sent on the wire when set and part of the cache key, so
  /// repeated samples of one prompt stay distinct.
  std::optional<std::uint64_t> seed;

  /// Throws BackendError(InvalidRequest) on an empty message list.
  void validate() const;
  /// `{model, messages:[{role, content}...], temperature, max_tokens[, seed]}`
  [[nodiscard]] nlohmann::ordered_json to_wire() const;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  Usage usage;
  int attempts = 1;
};

/// Reads `choices[0].message.content`, `choices[0].finish_reason` and `usage`.
ChatResponse chat_response_from_wire(const nlohmann::json& j);
nlohmann::json chat_response_to_wire(const ChatResponse& r);

struct GenerationRequest {
  std::string prompt;
  std::optional<std::string> negative_prompt;
  std::string profile = "default";

  void validate() const;
  [[nodiscard]] nlohmann::ordered_json to_wire() const;
};

struct GenerationResult {
  std::string artifact_ref;
  double latency_ms = 0.0;
  int attempts = 1;
};

struct ScorerDescriptor {
  std::string name;
  std::vector<MetricId> metrics;
  std::string endpoint;
  std::vector<MetricScale> scales;
};

/// Produced metrics must be pairwise disjoint across scorers and their union must
/// equal `metric_set`. Throws BackendError(Config) otherwise.
void validate_scorer_coverage(const std::vector<ScorerDescriptor>& scorers,
                              const std::vector<MetricId>& metric_set);

// ---------------------------------------------------------------------------
// Client interfaces

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse chat(const ChatRequest& req) = 0;
  /// Endpoint + model + temperature; part of every cache key.
  [[nodiscard]] virtual std::string fingerprint(const ChatRequest& req) const = 0;
};

class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual GenerationResult generate(const GenerationRequest& req) = 0;
  [[nodiscard]] virtual std::string fingerprint() const = 0;
};

class ScorerClient {
 public:
  virtual ~ScorerClient() = default;
  /// Raw values keyed by metric name, as returned by the service.
  virtual nlohmann::json score_raw(const std::string& artifact_ref, const std::string& prompt) = 0;
  [[nodiscard]] virtual const ScorerDescriptor& descriptor() const = 0;
  [[nodiscard]] virtual std::string fingerprint() const = 0;
};

/// Raw values for exactly the scorer's declared metrics.
/// Throws BackendError(MalformedScore) when one is missing or non-numeric.
MetricValues score(ScorerClient& scorer, const std::string& artifact_ref, const std::string& prompt);

/// Union over scorers, normalized with `scales`.
ScoreVector assemble_scores(std::span<const std::shared_ptr<ScorerClient>> scorers,
                            const std::string& artifact_ref, const std::string& prompt,
                            std::span<const MetricScale> scales);

// ---------------------------------------------------------------------------
// Retry, caching, concurrency limits

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};
  /// Status codes ("429"), status classes ("5xx") or "transport".
  std::set<std::string> retryable = {"429", "5xx", "transport"};

  void validate() const;
  [[nodiscard]] bool is_retryable(const BackendError& e) const;
  /// Delay before attempt `attempt + 1`, for attempt >= 1.
  [[nodiscard]] std::chrono::milliseconds delay_after(int attempt) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Content-addressed JSON store at `<root>/<first-2-hex>/<hash>.json`.
/// Concurrent writers on one key are last-write-wins.
class ContentCache {
 public:
  explicit ContentCache(std::filesystem::path root);

  /// SHA-256 of the canonical (sorted-key) serialization of `key`.
  static std::string key_hash(const nlohmann::json& key);

  [[nodiscard]] std::optional<nlohmann::json> get(const nlohmann::json& key) const;
  void put(const nlohmann::json& key, const nlohmann::json& value) const;
  [[nodiscard]] std::filesystem::path path_for(const std::string& hash) const;

 private:
  std::filesystem::path root_;
};

class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit);
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

/// Counts calls that reach the underlying client (cache misses, every attempt).
struct CallCounters {
  std::atomic<std::uint64_t> chat{0};
  std::atomic<std::uint64_t> generate{0};
  std::atomic<std::uint64_t> score{0};

  [[nodiscard]] std::uint64_t total() const { return chat + generate + score; }
};

/// Cache lookup, then bounded-concurrency retried invocation, then cache store.
class CallPipeline {
 public:
  CallPipeline(RetryPolicy retry, std::shared_ptr<ContentCache> cache,
               std::shared_ptr<ConcurrencyLimiter> limiter, Sleeper sleeper = real_sleeper());

  /// Returns the cached or freshly computed value; `attempts` receives 0 on a cache hit.
  nlohmann::json run(const nlohmann::json& key, const std::function<nlohmann::json()>& call,
                     std::atomic<std::uint64_t>& counter, int& attempts) const;

  [[nodiscard]] const RetryPolicy& retry() const { return retry_; }

 private:
  RetryPolicy retry_;
  std::shared_ptr<ContentCache> cache_;
  std::shared_ptr<ConcurrencyLimiter> limiter_;
  Sleeper sleeper_;
};

class ManagedChatClient final : public ChatClient {
 public:
  ManagedChatClient(std::shared_ptr<ChatClient> inner, CallPipeline pipeline,
                    std::shared_ptr<CallCounters> counters);
  ChatResponse chat(const ChatRequest& req) override;
  [[nodiscard]] std::string fingerprint(const ChatRequest& req) const override {
    return inner_->fingerprint(req);
  }

 private:
  std::shared_ptr<ChatClient> inner_;
  CallPipeline pipeline_;
  std::shared_ptr<CallCounters> counters_;
};

class ManagedGenerationClient final : public GenerationClient {
 public:
  ManagedGenerationClient(std::shared_ptr<GenerationClient> inner, CallPipeline pipeline,
                          std::shared_ptr<CallCounters> counters);
  GenerationResult generate(const GenerationRequest& req) override;
  [[nodiscard]] std::string fingerprint() const override { return inner_->fingerprint(); }

 private:
  std::shared_ptr<GenerationClient> inner_;
  CallPipeline pipeline_;
  std::shared_ptr<CallCounters> counters_;
};

class ManagedScorerClient final : public ScorerClient {
 public:
  ManagedScorerClient(std::shared_ptr<ScorerClient> inner, CallPipeline pipeline,
                      std::shared_ptr<CallCounters> counters);
  nlohmann::json score_raw(const std::string& artifact_ref, const std::string& prompt) override;
  [[nodiscard]] const ScorerDescriptor& descriptor() const override { return inner_->descriptor(); }
  [[nodiscard]] std::string fingerprint() const override { return inner_->fingerprint(); }

 private:
  std::shared_ptr<ScorerClient> inner_;
  CallPipeline pipeline_;
  std::shared_ptr<CallCounters> counters_;
};

}  // namespace pav::backends
