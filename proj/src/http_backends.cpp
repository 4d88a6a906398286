#include "pav/http_backends.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>

#include "pav/util.hpp"

namespace pav::backends {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw BackendError(ErrorKind::Config, "endpoint '" + url + "' has no scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::ordered_json& body) {
  const auto [origin, path] = split_url(endpoint.url);
  httplib::Client client(origin);
  client.set_connection_timeout(endpoint.timeout);
  client.set_read_timeout(endpoint.timeout);
  client.set_write_timeout(endpoint.timeout);

  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw BackendError(ErrorKind::Transport,
                       "POST " + endpoint.url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendError(ErrorKind::Status,
                       "POST " + endpoint.url + " returned HTTP " + std::to_string(res->status),
                       res->status);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(ErrorKind::MalformedResponse,
                       "POST " + endpoint.url + " returned invalid JSON: " + e.what());
  }
}

ChatResponse HttpChatClient::chat(const ChatRequest& req) {
  req.validate();
  return chat_response_from_wire(post_json(endpoint_, req.to_wire()));
}

std::string HttpChatClient::fingerprint(const ChatRequest& req) const {
  return endpoint_.url + "|" + req.model + "|" + format_double(req.temperature);
}

GenerationResult HttpGenerationClient::generate(const GenerationRequest& req) {
  req.validate();
  auto wire = req.to_wire();
  wire["profile"] = profile_;
  const auto start = std::chrono::steady_clock::now();
  const auto j = post_json(endpoint_, wire);
  GenerationResult r;
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (auto it = j.find("status"); it != j.end() && it->is_string() && *it != "ok") {
    throw BackendError(ErrorKind::MalformedResponse, "generation status: " + it->get<std::string>());
  }
  auto it = j.find("artifact_ref");
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw BackendError(ErrorKind::MalformedResponse, "generation response lacks artifact_ref");
  }
  r.artifact_ref = it->get<std::string>();
  return r;
}

nlohmann::json HttpScorerClient::score_raw(const std::string& artifact_ref, const std::string& prompt) {
  nlohmann::ordered_json body;
  body["artifact_ref"] = artifact_ref;
  body["prompt"] = prompt;
  const auto j = post_json(endpoint_, body);
  auto it = j.find("scores");
  if (it == j.end() || !it->is_object()) {
    throw BackendError(ErrorKind::MalformedScore, "scorer '" + descriptor_.name + "' response lacks scores");
  }
  return *it;
}

}  // namespace pav::backends
