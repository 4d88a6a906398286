#include "pav/backends.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "pav/util.hpp"

namespace pav::backends {

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidRequest: return "InvalidRequest";
    case ErrorKind::Transport: return "Transport";
    case ErrorKind::Status: return "Status";
    case ErrorKind::RetriesExhausted: return "RetriesExhausted";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::MalformedScore: return "MalformedScore";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

std::string to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw BackendError(ErrorKind::InvalidRequest, "unknown chat role '" + std::string(s) + "'");
}

void ChatRequest::validate() const {
  if (messages.empty()) throw BackendError(ErrorKind::InvalidRequest, "chat request has no messages");
}

nlohmann::ordered_json ChatRequest::to_wire() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  auto& msgs = j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : messages) {
    nlohmann::ordered_json mj;
    mj["role"] = to_string(m.role);
    mj["content"] = m.content;
    msgs.push_back(std::move(mj));
  }
  j["temperature"] = temperature;
  j["max_tokens"] = max_tokens;
  if (seed) j["seed"] = *seed;
  return j;
}

ChatResponse chat_response_from_wire(const nlohmann::json& j) {
  try {
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    r.content = choice.at("message").at("content").get<std::string>();
    if (auto it = choice.find("finish_reason"); it != choice.end() && it->is_string()) {
      r.finish_reason = it->get<std::string>();
    }
    if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
      r.usage.prompt_tokens = it->value("prompt_tokens", 0);
      r.usage.completion_tokens = it->value("completion_tokens", 0);
      r.usage.total_tokens = it->value("total_tokens", 0);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(ErrorKind::MalformedResponse, std::string("malformed chat response: ") + e.what());
  }
}

nlohmann::json chat_response_to_wire(const ChatResponse& r) {
  nlohmann::json choice;
  choice["message"] = {{"role", "assistant"}, {"content", r.content}};
  choice["finish_reason"] = r.finish_reason;
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({choice});
  j["usage"] = {{"prompt_tokens", r.usage.prompt_tokens},
                {"completion_tokens", r.usage.completion_tokens},
                {"total_tokens", r.usage.total_tokens}};
  return j;
}

void GenerationRequest::validate() const {
  if (trim(prompt).empty()) throw BackendError(ErrorKind::InvalidRequest, "generation prompt is empty");
}

nlohmann::ordered_json GenerationRequest::to_wire() const {
  nlohmann::ordered_json j;
  j["prompt"] = prompt;
  j["negative_prompt"] = negative_prompt ? nlohmann::ordered_json(*negative_prompt) : nullptr;
  j["profile"] = profile;
  return j;
}

void validate_scorer_coverage(const std::vector<ScorerDescriptor>& scorers,
                              const std::vector<MetricId>& metric_set) {
  std::vector<MetricId> seen;
  for (const auto& s : scorers) {
    if (s.metrics.empty()) throw BackendError(ErrorKind::Config, "scorer '" + s.name + "' declares no metrics");
    for (const auto& m : s.metrics) {
      if (std::find(seen.begin(), seen.end(), m) != seen.end()) {
        throw BackendError(ErrorKind::Config, "metric " + m.name() + " is produced by more than one scorer");
      }
      seen.push_back(m);
    }
  }
  if (canonical_metric_set(seen) != canonical_metric_set(metric_set)) {
    throw BackendError(ErrorKind::Config, "configured scorers do not cover exactly the metric set");
  }
}

MetricValues score(ScorerClient& scorer, const std::string& artifact_ref, const std::string& prompt) {
  const auto raw = scorer.score_raw(artifact_ref, prompt);
  MetricValues out;
  for (const auto& m : scorer.descriptor().metrics) {
    auto it = raw.find(m.name());
    if (it == raw.end() || !it->is_number()) {
      throw BackendError(ErrorKind::MalformedScore,
                         "scorer '" + scorer.descriptor().name + "' returned no value for " + m.name());
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
      throw BackendError(ErrorKind::MalformedScore,
                         "scorer '" + scorer.descriptor().name + "' returned a non-finite " + m.name());
    }
    out.emplace(m, v);
  }
  return out;
}

ScoreVector assemble_scores(std::span<const std::shared_ptr<ScorerClient>> scorers,
                            const std::string& artifact_ref, const std::string& prompt,
                            std::span<const MetricScale> scales) {
  MetricValues raw;
  for (const auto& s : scorers) {
    for (auto& [m, v] : score(*s, artifact_ref, prompt)) raw.emplace(m, v);
  }
  return ScoreVector::from_raw(raw, scales);
}

// ---------------------------------------------------------------------------

void RetryPolicy::validate() const {
  if (max_attempts < 1) throw BackendError(ErrorKind::Config, "retry max_attempts must be >= 1");
  if (initial_delay.count() <= 0 || max_delay.count() <= 0 || multiplier <= 0.0) {
    throw BackendError(ErrorKind::Config, "retry delays must be positive");
  }
}

bool RetryPolicy::is_retryable(const BackendError& e) const {
  if (e.kind() == ErrorKind::Transport) return retryable.contains("transport");
  if (e.kind() != ErrorKind::Status) return false;
  const auto code = std::to_string(e.status());
  if (retryable.contains(code)) return true;
  return retryable.contains(std::string(1, code.front()) + "xx");
}

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const {
  const double ms = static_cast<double>(initial_delay.count()) * std::pow(multiplier, attempt - 1);
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(std::min(ms, static_cast<double>(max_delay.count()))));
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ContentCache::ContentCache(std::filesystem::path root) : root_(std::move(root)) {}

std::string ContentCache::key_hash(const nlohmann::json& key) { return sha256_hex(key.dump()); }

std::filesystem::path ContentCache::path_for(const std::string& hash) const {
  return root_ / hash.substr(0, 2) / (hash + ".json");
}

std::optional<nlohmann::json> ContentCache::get(const nlohmann::json& key) const {
  const auto path = path_for(key_hash(key));
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(read_file(path));
    return j.at("value");
  } catch (const std::exception&) {
    return std::nullopt;  // torn or foreign file: treat as a miss
  }
}

void ContentCache::put(const nlohmann::json& key, const nlohmann::json& value) const {
  nlohmann::json entry;
  entry["key"] = key;
  entry["value"] = value;
  atomic_write(path_for(key_hash(key)), entry.dump());
}

ConcurrencyLimiter::ConcurrencyLimiter(int limit) : available_(std::max(1, limit)) {}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

CallPipeline::CallPipeline(RetryPolicy retry, std::shared_ptr<ContentCache> cache,
                           std::shared_ptr<ConcurrencyLimiter> limiter, Sleeper sleeper)
    : retry_(std::move(retry)),
      cache_(std::move(cache)),
      limiter_(std::move(limiter)),
      sleeper_(std::move(sleeper)) {
  retry_.validate();
}

nlohmann::json CallPipeline::run(const nlohmann::json& key, const std::function<nlohmann::json()>& call,
                                 std::atomic<std::uint64_t>& counter, int& attempts) const {
  attempts = 0;
  if (cache_) {
    if (auto hit = cache_->get(key)) return *hit;
  }
  for (int attempt = 1;; ++attempt) {
    attempts = attempt;
    counter.fetch_add(1, std::memory_order_relaxed);
    try {
      nlohmann::json value;
      if (limiter_) {
        limiter_->acquire();
        try {
          value = call();
        } catch (...) {
          limiter_->release();
          throw;
        }
        limiter_->release();
      } else {
        value = call();
      }
      if (cache_) cache_->put(key, value);
      return value;
    } catch (const BackendError& e) {
      if (!retry_.is_retryable(e)) throw;
      if (attempt >= retry_.max_attempts) {
        throw BackendError(ErrorKind::RetriesExhausted,
                           "retries exhausted after " + std::to_string(attempt) +
                               " attempts; last error: " + e.what(),
                           e.status());
      }
      sleeper_(retry_.delay_after(attempt));
    }
  }
}

ManagedChatClient::ManagedChatClient(std::shared_ptr<ChatClient> inner, CallPipeline pipeline,
                                     std::shared_ptr<CallCounters> counters)
    : inner_(std::move(inner)), pipeline_(std::move(pipeline)), counters_(std::move(counters)) {}

ChatResponse ManagedChatClient::chat(const ChatRequest& req) {
  req.validate();
  nlohmann::json key;
  key["kind"] = "chat";
  key["fingerprint"] = inner_->fingerprint(req);
  key["request"] = nlohmann::json::parse(req.to_wire().dump());
  int attempts = 0;
  auto value = pipeline_.run(
      key, [&] { return chat_response_to_wire(inner_->chat(req)); }, counters_->chat, attempts);
  auto resp = chat_response_from_wire(value);
  resp.attempts = attempts;
  return resp;
}

ManagedGenerationClient::ManagedGenerationClient(std::shared_ptr<GenerationClient> inner,
                                                 CallPipeline pipeline,
                                                 std::shared_ptr<CallCounters> counters)
    : inner_(std::move(inner)), pipeline_(std::move(pipeline)), counters_(std::move(counters)) {}

GenerationResult ManagedGenerationClient::generate(const GenerationRequest& req) {
  req.validate();
  nlohmann::json key;
  key["kind"] = "generate";
  key["fingerprint"] = inner_->fingerprint();
  key["request"] = nlohmann::json::parse(req.to_wire().dump());
  int attempts = 0;
  auto value = pipeline_.run(
      key,
      [&] {
        auto r = inner_->generate(req);
        if (r.artifact_ref.empty()) {
          throw BackendError(ErrorKind::MalformedResponse, "generation returned an empty artifact_ref");
        }
        return nlohmann::json{{"artifact_ref", r.artifact_ref}, {"latency_ms", r.latency_ms}};
      },
      counters_->generate, attempts);
  GenerationResult out;
  out.artifact_ref = value.at("artifact_ref").get<std::string>();
  out.latency_ms = value.value("latency_ms", 0.0);
  out.attempts = attempts;
  return out;
}

ManagedScorerClient::ManagedScorerClient(std::shared_ptr<ScorerClient> inner, CallPipeline pipeline,
                                         std::shared_ptr<CallCounters> counters)
    : inner_(std::move(inner)), pipeline_(std::move(pipeline)), counters_(std::move(counters)) {}

nlohmann::json ManagedScorerClient::score_raw(const std::string& artifact_ref, const std::string& prompt) {
  nlohmann::json key;
  key["kind"] = "score";
  key["fingerprint"] = inner_->fingerprint();
  key["request"] = {{"artifact_ref", artifact_ref}, {"prompt", prompt}};
  int attempts = 0;
  return pipeline_.run(
      key, [&] { return inner_->score_raw(artifact_ref, prompt); }, counters_->score, attempts);
}

}  // namespace pav::backends
