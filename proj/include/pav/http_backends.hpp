#pragma once

#include <chrono>
#include <string>

#include "pav/backends.hpp"

namespace pav::backends {

struct HttpEndpoint {
  std::string url;  // scheme://host[:port]/path
  /// Environment variable holding a bearer token; empty or unset sends no auth header.
  std::string api_key_env;
  std::chrono::seconds timeout{120};
};

/// POST JSON to `endpoint`; maps transport failures and non-2xx statuses to BackendError.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::ordered_json& body);

/// Chat-completions client: POST {model, messages, temperature, max_tokens}.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  ChatResponse chat(const ChatRequest& req) override;
  [[nodiscard]] std::string fingerprint(const ChatRequest& req) const override;

 private:
  HttpEndpoint endpoint_;
};

/// POST {prompt, negative_prompt, profile} -> {artifact_ref}.
class HttpGenerationClient final : public GenerationClient {
 public:
  HttpGenerationClient(HttpEndpoint endpoint, std::string profile)
      : endpoint_(std::move(endpoint)), profile_(std::move(profile)) {}
  GenerationResult generate(const GenerationRequest& req) override;
  [[nodiscard]] std::string fingerprint() const override { return endpoint_.url + "|" + profile_; }

 private:
  HttpEndpoint endpoint_;
  std::string profile_;
};

/// POST {artifact_ref, prompt} -> {scores: {metric: value, ...}}.
class HttpScorerClient final : public ScorerClient {
 public:
  HttpScorerClient(ScorerDescriptor descriptor, HttpEndpoint endpoint)
      : descriptor_(std::move(descriptor)), endpoint_(std::move(endpoint)) {}
  nlohmann::json score_raw(const std::string& artifact_ref, const std::string& prompt) override;
  [[nodiscard]] const ScorerDescriptor& descriptor() const override { return descriptor_; }
  [[nodiscard]] std::string fingerprint() const override { return "http|" + descriptor_.name + "|" + endpoint_.url; }

 private:
  ScorerDescriptor descriptor_;
  HttpEndpoint endpoint_;
};

}  // namespace pav::backends
