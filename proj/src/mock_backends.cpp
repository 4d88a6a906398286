#include "pav/mock_backends.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "pav/templates.hpp"
#include "pav/util.hpp"

namespace pav::backends {

namespace {

double unit_draw(std::uint64_t seed) {
  return static_cast<double>(seed >> 11) * 0x1.0p-53;
}

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.append(sep);
    out.append(words[i]);
  }
  return out;
}

std::vector<std::string> draw_words(std::mt19937_64& rng, std::size_t count) {
  const auto& pool = descriptor_word_pool();
  std::vector<std::string> out;
  while (out.size() < count) {
    const auto& w = pool[rng() % pool.size()];
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  }
  return out;
}

std::string strip_final_period(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
  return s;
}

int token_count(std::string_view s) {
  std::istringstream in{std::string(s)};
  return static_cast<int>(std::distance(std::istream_iterator<std::string>(in),
                                        std::istream_iterator<std::string>()));
}

const ChatMessage* last_user_message(const ChatRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == Role::User) return &*it;
  }
  return nullptr;
}

std::string all_text(const ChatRequest& req) {
  std::string out;
  for (const auto& m : req.messages) {
    out.append(m.content);
    out.push_back('\n');
  }
  return out;
}

}  // namespace

const std::vector<std::string>& descriptor_word_pool() {
  static const std::vector<std::string> pool = {
      "serene",     "cinematic", "soft",      "lighting",   "detailed",   "vibrant",
      "tranquil",   "golden",    "ambient",   "gentle",     "focused",    "shallow",
      "depth",      "smooth",    "steady",    "camera",     "closeup",    "warm",
      "natural",    "sunlight",  "calm",      "elegant",    "crisp",      "textured",
      "lush",       "glowing",   "misty",     "dramatic",   "panoramic",  "slow",
      "motion",     "balanced",  "composition", "colorful", "peaceful",   "intimate",
      "realistic",  "sharp",     "highlights", "shadows",   "breeze",     "sparkling",
      "atmosphere", "graceful",  "subtle",    "radiant",    "vivid",      "harmonious",
  };
  return pool;
}

std::vector<std::string> preferred_vocabulary(std::uint64_t seed, std::size_t size) {
  const auto& pool = descriptor_word_pool();
  size = std::min(size, pool.size());
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng() % (i + 1)]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  out.reserve(size);
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

MetricValues synthetic_scores(std::string_view prompt, std::span<const MetricScale> scales,
                              std::uint64_t seed, const std::vector<std::string>& vocabulary) {
  const std::set<std::string> preferred(vocabulary.begin(), vocabulary.end());
  std::vector<std::string> base_tokens;
  std::set<std::string> present;
  for (auto& tok : tokenize(prompt)) {
    if (preferred.contains(tok)) {
      present.insert(tok);
    } else {
      base_tokens.push_back(std::move(tok));
    }
  }
  const auto base_text = join(base_tokens, " ");
  const auto seed_text = std::to_string(seed);

  MetricValues out;
  for (const auto& scale : scales) {
    const double span = scale.raw_max - scale.raw_min;
    const auto& name = scale.metric.name();
    double value =
        scale.raw_min +
        span * (0.25 + 0.35 * unit_draw(derive_seed({"synthetic-base", seed_text, name, base_text})));
    for (const auto& w : present) {
      value += span * (0.02 + 0.04 * unit_draw(derive_seed({"synthetic-bonus", seed_text, name, w})));
    }
    out.emplace(scale.metric, std::min(value, scale.raw_max));
  }
  return out;
}

SyntheticScorer::SyntheticScorer(ScorerDescriptor descriptor, std::uint64_t seed,
                                 std::size_t vocabulary_size)
    : descriptor_(std::move(descriptor)),
      seed_(seed),
      vocabulary_(preferred_vocabulary(derive_seed({"vocabulary", std::to_string(seed)}),
                                       vocabulary_size)) {
  for (const auto& m : descriptor_.metrics) {
    if (std::none_of(descriptor_.scales.begin(), descriptor_.scales.end(),
                     [&](const MetricScale& s) { return s.metric == m; })) {
      descriptor_.scales.push_back(default_scale(m));
    }
  }
}

nlohmann::json SyntheticScorer::score_raw(const std::string& /*artifact_ref*/, const std::string& prompt) {
  nlohmann::json out = nlohmann::json::object();
  if (auto it = fixture_.find(prompt); it != fixture_.end()) {
    for (const auto& [m, v] : it->second) out[m.name()] = v;
    return out;
  }
  std::vector<MetricScale> declared;
  for (const auto& s : descriptor_.scales) {
    if (std::find(descriptor_.metrics.begin(), descriptor_.metrics.end(), s.metric) !=
        descriptor_.metrics.end()) {
      declared.push_back(s);
    }
  }
  for (const auto& [m, v] : synthetic_scores(prompt, declared, seed_, vocabulary_)) out[m.name()] = v;
  return out;
}

std::string SyntheticScorer::fingerprint() const {
  std::string fp = "synthetic|" + descriptor_.name + "|" + std::to_string(seed_) + "|";
  for (const auto& w : vocabulary_) fp += w + ",";
  if (!fixture_.empty()) {
    nlohmann::json fx;
    for (const auto& [p, row] : fixture_) {
      for (const auto& [m, v] : row) fx[p][m.name()] = v;
    }
    fp += "|fixture:" + sha256_hex(fx.dump());
  }
  return fp;
}

std::string MockGenerationClient::artifact_ref_for(std::string_view prompt, std::string_view negative_prompt) {
  std::string material(prompt);
  material.push_back('\0');
  material.append(negative_prompt);
  return "mock://artifact/" + sha256_hex(material);
}

GenerationResult MockGenerationClient::generate(const GenerationRequest& req) {
  req.validate();
  GenerationResult r;
  r.artifact_ref = artifact_ref_for(req.prompt, req.negative_prompt.value_or(""));
  return r;
}

MockChatMode mock_chat_mode_from_string(std::string_view s) {
  if (s == "operator") return MockChatMode::Operator;
  if (s == "refiner") return MockChatMode::Refiner;
  if (s == "canned") return MockChatMode::Canned;
  if (s == "scripted") return MockChatMode::Scripted;
  throw BackendError(ErrorKind::Config, "unknown mock chat mode '" + std::string(s) + "'");
}

MockChatClient::MockChatClient(MockChatMode mode, std::uint64_t seed) : mode_(mode), seed_(seed) {}

std::string MockChatClient::fingerprint(const ChatRequest& req) const {
  return "mock-chat|" + std::to_string(static_cast<int>(mode_)) + "|" + std::to_string(seed_) + "|" +
         req.model + "|" + format_double(req.temperature) + "|" +
         sha256_hex(canned_ + [&] {
           std::string s;
           for (const auto& r : script_) s += r.match + '\x1f' + r.response + '\x1e';
           return s;
         }());
}

ChatResponse MockChatClient::chat(const ChatRequest& req) {
  req.validate();
  const auto rng_seed = derive_seed({"mock-chat", std::to_string(seed_),
                                     std::to_string(req.seed.value_or(0)), all_text(req)});
  ChatResponse r;
  r.finish_reason = "stop";
  switch (mode_) {
    case MockChatMode::Operator: r.content = operator_response(req, rng_seed); break;
    case MockChatMode::Refiner: r.content = refiner_response(req, rng_seed); break;
    case MockChatMode::Canned: r.content = canned_; break;
    case MockChatMode::Scripted: {
      r.content = canned_;
      const auto* user = last_user_message(req);
      const std::string text = user ? user->content : all_text(req);
      for (const auto& rule : script_) {
        if (text.find(rule.match) != std::string::npos) {
          r.content = rule.response;
          break;
        }
      }
      break;
    }
  }
  r.usage.prompt_tokens = token_count(all_text(req));
  r.usage.completion_tokens = token_count(r.content);
  r.usage.total_tokens = r.usage.prompt_tokens + r.usage.completion_tokens;
  return r;
}

std::string MockChatClient::operator_response(const ChatRequest& req, std::uint64_t rng_seed) const {
  const auto text = all_text(req);
  std::size_t wanted = 3;
  static const std::regex generate_re(R"(Generate (\d+) paraphrases)");
  if (std::smatch m; std::regex_search(text, m, generate_re)) wanted = std::stoul(m[1].str());

  // "<index>. <prompt> (<s1>, <s2>, ...)"
  struct Parent {
    std::string text;
    double total;
  };
  std::vector<Parent> parents;
  static const std::regex line_re(R"(^\d+\. (.*) \(([-0-9., ]+)\)$)");
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) continue;
    double total = 0.0;
    std::istringstream nums(m[2].str());
    for (std::string tok; std::getline(nums, tok, ',');) total += std::stod(tok);
    parents.push_back({m[1].str(), total});
  }
  if (parents.empty()) return "I could not find any prompts to refine.";
  std::stable_sort(parents.begin(), parents.end(),
                   [](const Parent& a, const Parent& b) { return a.total > b.total; });

  std::mt19937_64 rng(rng_seed);
  std::string out;
  for (std::size_t j = 0; j < wanted; ++j) {
    const auto& parent = parents[j % parents.size()];
    const auto words = draw_words(rng, 1 + rng() % 3);
    out += std::string(templates::kPromptOpen) + strip_final_period(parent.text) + ", " +
           join(words, ", ") + "." + std::string(templates::kPromptClose) + "\n";
  }
  return out;
}

std::string MockChatClient::refiner_response(const ChatRequest& req, std::uint64_t rng_seed) const {
  const auto* user = last_user_message(req);
  std::string source = user ? user->content : all_text(req);
  if (auto b = source.find(templates::kSftPrefix); b != std::string::npos) {
    source = source.substr(b + templates::kSftPrefix.size());
  }
  if (auto e = source.rfind(templates::kSftSuffix); e != std::string::npos) source.resize(e);
  std::mt19937_64 rng(rng_seed);
  const auto words = draw_words(rng, 2 + rng() % 4);
  return strip_final_period(trim(source)) + ", " + join(words, ", ") + ".";
}

ChatResponse FlakyChatClient::chat(const ChatRequest& req) {
  if (remaining_.fetch_sub(1) > 0) throw error_;
  return inner_->chat(req);
}

}  // namespace pav::backends
