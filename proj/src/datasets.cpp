#include "pav/datasets.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <set>
#include <thread>

#include "pav/templates.hpp"
#include "pav/util.hpp"

namespace pav {

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  const auto content = read_file(path);
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    if (end > pos) lines.push_back(content.substr(pos, end - pos));
    pos = end + 1;
  }
  return lines;
}

nlohmann::ordered_json hints_json(const TrainerHints& h) {
  nlohmann::ordered_json j;
  j["method"] = h.method;
  j["epochs"] = h.epochs;
  j["batch_size"] = h.batch_size;
  j["learning_rate"] = h.learning_rate;
  return j;
}

nlohmann::ordered_json dialog(std::string user, std::string assistant) {
  nlohmann::ordered_json u;
  u["role"] = "user";
  u["content"] = std::move(user);
  nlohmann::ordered_json a;
  a["role"] = "assistant";
  a["content"] = std::move(assistant);
  nlohmann::ordered_json j;
  j["dialog"] = nlohmann::ordered_json::array({u, a});
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Fine-tuning pairs

SftBuild build_sft_dataset(std::span<const EvolutionRun> runs, const SftFilter& filter) {
  std::vector<std::string> unfinished;
  for (const auto& r : runs) {
    if (!r.final) unfinished.push_back(r.run_id);
  }
  if (!unfinished.empty()) {
    std::string names;
    for (const auto& n : unfinished) names += (names.empty() ? "" : ", ") + n;
    throw DatasetError("runs are not finalized: " + names);
  }
  SftBuild out;
  for (const auto& r : runs) {
    ++out.total;
    const auto* target = r.find(r.final->candidate_id);
    if (!target || !target->scored()) throw DatasetError("run " + r.run_id + ": final candidate missing");
    if (filter.require_threshold_met && !r.final->threshold_met) {
      ++out.excluded_threshold;
      continue;
    }
    if (trim(target->text) == trim(r.source().text) || trim(target->text).empty()) {
      ++out.excluded_unchanged;
      continue;
    }
    SftPair p;
    p.source = r.source().text;
    p.target = target->text;
    p.instruction = std::string(templates::kSftInstructionId);
    p.threshold_met = r.final->threshold_met;
    p.run_id = r.run_id;
    p.target_overall = overall(*target->scores);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

std::string sft_user_content(std::string_view source) {
  std::string s(templates::kSftPrefix);
  s.append(source);
  s.append(templates::kSftSuffix);
  return s;
}

std::optional<std::string> source_from_user_content(std::string_view content) {
  const auto prefix = templates::kSftPrefix;
  const auto suffix = templates::kSftSuffix;
  if (content.size() < prefix.size() + suffix.size()) return std::nullopt;
  if (content.substr(0, prefix.size()) != prefix) return std::nullopt;
  if (content.substr(content.size() - suffix.size()) != suffix) return std::nullopt;
  return std::string(content.substr(prefix.size(), content.size() - prefix.size() - suffix.size()));
}

std::string sft_jsonl_line(const SftPair& pair) {
  return dialog(sft_user_content(pair.source), pair.target).dump();
}

TrainerHints sft_trainer_hints() { return {"lora", 14, 16, 1e-4}; }
TrainerHints dpo_trainer_hints() { return {"dpo", 3, 32, 5e-5}; }

void emit_sft_jsonl(std::span<const SftPair> pairs, const std::filesystem::path& path,
                    const nlohmann::ordered_json& summary) {
  std::string body;
  for (const auto& p : pairs) {
    if (trim(p.target).empty() || trim(p.source) == trim(p.target)) {
      throw DatasetError("invalid pair for run " + p.run_id + ": target empty or equal to source");
    }
    body += sft_jsonl_line(p) + "\n";
  }
  nlohmann::ordered_json meta;
  meta["format"] = "sft-dialog";
  meta["instruction"] = std::string(templates::kSftInstructionId);
  meta["count"] = pairs.size();
  meta["summary"] = summary;
  meta["trainer"] = hints_json(sft_trainer_hints());
  auto& recs = meta["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    nlohmann::ordered_json r;
    r["run_id"] = p.run_id;
    r["threshold_met"] = p.threshold_met;
    r["target_overall"] = p.target_overall;
    recs.push_back(std::move(r));
  }
  atomic_write(path, body);
  auto meta_path = path;
  meta_path += ".meta.json";
  atomic_write(meta_path, meta.dump(2) + "\n");
}

std::vector<SftPair> read_sft_jsonl(const std::filesystem::path& path) {
  std::vector<SftPair> out;
  for (const auto& line : read_lines(path)) {
    const auto j = nlohmann::json::parse(line);
    const auto& d = j.at("dialog");
    auto source = source_from_user_content(d.at(0).at("content").get<std::string>());
    if (!source) throw DatasetError("dialog user content does not match the fine-tuning template");
    SftPair p;
    p.source = std::move(*source);
    p.target = d.at(1).at("content").get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preference triplets

void DpoRoundOptions::validate() const {
  if (k < 2) throw DatasetError("k must be >= 2");
  if (!(margin > 0.0)) throw DatasetError("margin must be > 0");
  if (round < 1) throw DatasetError("round must be >= 1");
  if (resample_budget < 0) throw DatasetError("resample_budget must be >= 0");
}

std::optional<std::pair<std::size_t, std::size_t>> choose_preference_pair(std::span<const ScoredSample> samples,
                                                                          double margin) {
  if (samples.size() < 2) return std::nullopt;
  std::size_t best = 0;
  std::size_t worst = 0;
  double best_v = overall(samples[0].scores);
  double worst_v = best_v;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double v = overall(samples[i].scores);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
    if (v < worst_v) {
      worst_v = v;
      worst = i;
    }
  }
  if (best == worst || best_v - worst_v < margin) return std::nullopt;
  return std::make_pair(best, worst);
}

namespace {

struct SourceOutcome {
  std::optional<DpoTriplet> triplet;
  std::string skip_reason;
  bool backend_failure = false;
};

SourceOutcome build_one(const std::string& source, std::size_t index, backends::ChatClient& model,
                        const Evaluator& evaluator, const DpoRoundOptions& opts) {
  SourceOutcome out;
  std::vector<std::string> samples;
  std::set<std::string> seen;
  const int max_attempts = opts.k + opts.resample_budget;
  try {
    for (int attempt = 0; attempt < max_attempts && static_cast<int>(samples.size()) < opts.k; ++attempt) {
      backends::ChatRequest req;
      req.model = opts.model;
      req.temperature = opts.temperature;
      req.max_tokens = opts.max_tokens;
      req.messages = {{backends::Role::User, sft_user_content(source)}};
      req.seed = derive_seed({"dpo-sample", std::to_string(opts.seed), std::to_string(opts.round),
                              std::to_string(index), source, std::to_string(attempt)});
      auto text = trim(model.chat(req).content);
      if (text.empty() || text == trim(source)) continue;
      if (seen.insert(text).second) samples.push_back(std::move(text));
    }
  } catch (const backends::BackendError& e) {
    out.skip_reason = std::string("sampling failed: ") + e.what();
    out.backend_failure = true;
    return out;
  }
  if (samples.size() < 2) {
    out.skip_reason = "fewer than 2 distinct candidates after resampling";
    return out;
  }

  std::vector<ScoredSample> scored;
  for (const auto& s : samples) {
    try {
      auto outcome = evaluator.evaluate_one(s);
      scored.push_back({s, std::move(outcome.scores)});
    } catch (const std::exception&) {
      out.backend_failure = true;  // excluded; the source may still yield a triplet
    }
  }
  if (scored.size() < 2) {
    out.skip_reason = "fewer than 2 candidates could be scored";
    return out;
  }
  auto pick = choose_preference_pair(scored, opts.margin);
  if (!pick) {
    out.skip_reason = "best and worst candidates differ by less than the margin";
    return out;
  }
  DpoTriplet t;
  t.prompt = source;
  t.chosen = scored[pick->first].text;
  t.rejected = scored[pick->second].text;
  t.chosen_scores = scored[pick->first].scores;
  t.rejected_scores = scored[pick->second].scores;
  t.chosen_overall = overall(t.chosen_scores);
  t.rejected_overall = overall(t.rejected_scores);
  t.round = opts.round;
  out.triplet = std::move(t);
  return out;
}

}  // namespace

DpoBuild build_dpo_round(std::span<const std::string> sources, backends::ChatClient& model,
                         const Evaluator& evaluator, const DpoRoundOptions& opts) {
  opts.validate();
  std::vector<SourceOutcome> outcomes(sources.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sources.size(); i = next++) {
      outcomes[i] = build_one(sources[i], i, model, evaluator, opts);
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opts.max_parallel)),
                                             sources.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }

  DpoBuild build;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto& o = outcomes[i];
    if (o.backend_failure) ++build.backend_failures;
    if (o.triplet) {
      build.triplets.push_back(std::move(*o.triplet));
    } else {
      build.skipped.push_back({sources[i], o.skip_reason});
    }
  }
  return build;
}

std::vector<DpoRoundPlan> plan_dpo_iterations(int rounds) {
  if (rounds < 1) throw DatasetError("rounds must be >= 1");
  std::vector<DpoRoundPlan> plan;
  for (int r = 1; r <= rounds; ++r) {
    plan.push_back({r, r == 1 ? std::string("sft") : "dpo-" + std::to_string(r - 1)});
  }
  return plan;
}

nlohmann::ordered_json to_json(std::span<const DpoRoundPlan> plan) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : plan) {
    nlohmann::ordered_json j;
    j["round"] = p.round;
    j["sample_from"] = p.sample_from;
    arr.push_back(std::move(j));
  }
  return arr;
}

void emit_dpo_jsonl(std::span<const DpoTriplet> triplets, const std::filesystem::path& path,
                    const nlohmann::ordered_json& summary) {
  std::string body;
  auto meta_triplets = nlohmann::ordered_json::array();
  for (const auto& t : triplets) {
    if (t.chosen == t.rejected) throw DatasetError("triplet with identical chosen and rejected");
    nlohmann::ordered_json j;
    j["prompt"] = t.prompt;
    j["chosen"] = t.chosen;
    j["rejected"] = t.rejected;
    body += j.dump() + "\n";

    nlohmann::ordered_json m;
    m["round"] = t.round;
    m["chosen_overall"] = t.chosen_overall;
    m["rejected_overall"] = t.rejected_overall;
    m["margin"] = t.chosen_overall - t.rejected_overall;
    m["chosen_scores"] = to_json(t.chosen_scores);
    m["rejected_scores"] = to_json(t.rejected_scores);
    meta_triplets.push_back(std::move(m));
  }
  nlohmann::ordered_json meta;
  meta["format"] = "dpo-triplets";
  meta["count"] = triplets.size();
  meta["summary"] = summary;
  meta["trainer"] = hints_json(dpo_trainer_hints());
  meta["triplets"] = std::move(meta_triplets);
  atomic_write(path, body);
  auto meta_path = path;
  meta_path += ".meta.json";
  atomic_write(meta_path, meta.dump(2) + "\n");
}

std::vector<DpoRecord> read_dpo_jsonl(const std::filesystem::path& path) {
  std::vector<DpoRecord> out;
  for (const auto& line : read_lines(path)) {
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("prompt").get<std::string>(), j.at("chosen").get<std::string>(),
                   j.at("rejected").get<std::string>()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Negative prompts

std::string to_string(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::Fixed: return "fixed";
    case NegativeStrategy::Icl: return "icl";
    case NegativeStrategy::TunedPair: return "tuned_pair";
  }
  return "fixed";
}

NegativeStrategy negative_strategy_from_string(std::string_view s) {
  if (s == "fixed") return NegativeStrategy::Fixed;
  if (s == "icl") return NegativeStrategy::Icl;
  if (s == "tuned_pair") return NegativeStrategy::TunedPair;
  throw DatasetError("unknown negative strategy '" + std::string(s) + "'");
}

std::vector<FewShot> default_negative_few_shots() {
  return {{std::string(templates::kAdaptiveExamplePositive), std::string(templates::kAdaptiveExampleNegative)}};
}

std::string render_negative_request(std::string_view positive, std::span<const FewShot> few_shots) {
  std::string out(templates::kNegativeInstruction);
  out += "\n\n";
  for (const auto& fs : few_shots) {
    out += templates::kNegativePositiveLabel;
    out += fs.positive;
    out += '\n';
    out += templates::kNegativeNegativeLabel;
    out += fs.negative;
    out += "\n\n";
  }
  out += templates::kNegativePositiveLabel;
  out.append(positive);
  out += '\n';
  out += trim(templates::kNegativeNegativeLabel);
  return out;
}

namespace {

// Lowercase words joined by single spaces.
std::string normalize_words(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '\'' || c == '-') {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::size_t word_count(std::string_view normalized) {
  if (normalized.empty()) return 0;
  return static_cast<std::size_t>(std::count(normalized.begin(), normalized.end(), ' ')) + 1;
}

std::vector<std::string> sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      if (auto t = trim(cur); !t.empty()) out.push_back(std::move(t));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (auto t = trim(cur); !t.empty()) out.push_back(std::move(t));
  return out;
}

}  // namespace

std::optional<std::string> negative_violation(std::string_view negative, std::string_view positive) {
  if (trim(negative).empty()) return "negative prompt is empty";
  if (negative.find(',') == std::string_view::npos) return "negative prompt is not a comma-separated descriptor list";

  // Subject clause: the positive's leading clause, when it has at least three words.
  const auto cut = positive.find_first_of(",.;:!?\n");
  const auto subject = normalize_words(positive.substr(0, cut));
  const auto positive_norm = " " + normalize_words(positive) + " ";
  for (const auto& sentence : sentences(negative)) {
    const auto s = normalize_words(sentence);
    if (word_count(subject) >= 3 && s.find(subject) != std::string::npos) {
      return "negative prompt restates the subject clause: \"" + sentence + "\"";
    }
    if (word_count(s) >= 5 && positive_norm.find(" " + s + " ") != std::string::npos) {
      return "negative prompt repeats a sentence of the positive prompt: \"" + sentence + "\"";
    }
  }
  return std::nullopt;
}

NegativePromptRecord make_negative(std::string_view positive, NegativeStrategy strategy,
                                   backends::ChatClient* llm, std::span<const FewShot> few_shots,
                                   const NegativeOptions& opts) {
  NegativePromptRecord rec;
  rec.positive = std::string(positive);
  rec.strategy = strategy;
  if (strategy == NegativeStrategy::Fixed) {
    rec.negative = std::string(templates::kFixedNegativePrompt);
    return rec;
  }
  if (!llm) throw DatasetError("strategy " + to_string(strategy) + " needs an LLM client");
  if (few_shots.empty()) throw DatasetError("strategy " + to_string(strategy) + " needs few-shot exemplars");

  const auto request_text = render_negative_request(positive, few_shots);
  std::string last_violation;
  for (int attempt = 0; attempt < 2; ++attempt) {
    backends::ChatRequest req;
    req.model = opts.model;
    req.temperature = opts.temperature;
    req.messages = {{backends::Role::User, request_text}};
    req.seed = derive_seed({"negative", std::to_string(opts.seed), std::string(positive), std::to_string(attempt)});
    auto text = trim(llm->chat(req).content);
    const auto label = trim(templates::kNegativeNegativeLabel);
    if (text.rfind(label, 0) == 0) text = trim(std::string_view(text).substr(label.size()));
    if (auto violation = negative_violation(text, positive)) {
      last_violation = *violation;
      continue;
    }
    rec.negative = std::move(text);
    return rec;
  }
  throw DatasetError("negative prompt rejected twice: " + last_violation);
}

std::string negative_pair_jsonl_line(const NegativePromptRecord& record) {
  std::string user(templates::kNegativeInstruction);
  user += "\n";
  user += templates::kNegativePositiveLabel;
  user += record.positive;
  user += "\n";
  user += trim(templates::kNegativeNegativeLabel);
  return dialog(std::move(user), record.negative).dump();
}

void emit_negative_jsonl(std::span<const NegativePromptRecord> records, const std::filesystem::path& path) {
  std::string body;
  for (const auto& r : records) {
    if (r.strategy == NegativeStrategy::TunedPair) {
      body += negative_pair_jsonl_line(r) + "\n";
    } else {
      nlohmann::ordered_json j;
      j["positive"] = r.positive;
      j["negative"] = r.negative;
      j["strategy"] = to_string(r.strategy);
      body += j.dump() + "\n";
    }
  }
  atomic_write(path, body);
}

}  // namespace pav
