#include "pav/evolution.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <set>
#include <thread>

#include "pav/templates.hpp"
#include "pav/util.hpp"

namespace pav {

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string provenance_name(ProvenanceKind k) {
  switch (k) {
    case ProvenanceKind::Original: return "original";
    case ProvenanceKind::Evolved: return "evolved";
    case ProvenanceKind::Sampled: return "sampled";
  }
  return "original";
}

ProvenanceKind provenance_from_name(std::string_view s) {
  if (s == "original") return ProvenanceKind::Original;
  if (s == "evolved") return ProvenanceKind::Evolved;
  if (s == "sampled") return ProvenanceKind::Sampled;
  throw EvolutionError("unknown provenance '" + std::string(s) + "'");
}

std::string selection_name(SelectionRule r) { return r == SelectionRule::Sum ? "sum" : "pareto"; }

SelectionRule selection_from_name(std::string_view s) {
  if (s == "sum") return SelectionRule::Sum;
  if (s == "pareto") return SelectionRule::Pareto;
  throw EvolutionError("unknown selection rule '" + std::string(s) + "'");
}

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

nlohmann::ordered_json to_json(const PromptCandidate& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["text"] = c.text;
  j["provenance"] = {{"kind", provenance_name(c.provenance.kind)}, {"iteration", c.provenance.iteration}};
  j["artifact_ref"] = c.artifact_ref;
  j["scores"] = c.scores ? to_json(*c.scores) : nlohmann::ordered_json(nullptr);
  j["failure"] = c.failure ? nlohmann::ordered_json(*c.failure) : nlohmann::ordered_json(nullptr);
  return j;
}

PromptCandidate candidate_from_json(const nlohmann::json& j) {
  PromptCandidate c;
  c.id = j.at("id").get<int>();
  c.text = j.at("text").get<std::string>();
  c.provenance.kind = provenance_from_name(j.at("provenance").at("kind").get<std::string>());
  c.provenance.iteration = j.at("provenance").at("iteration").get<int>();
  c.artifact_ref = j.value("artifact_ref", "");
  if (auto it = j.find("scores"); it != j.end() && !it->is_null()) c.scores = score_vector_from_json(*it);
  if (auto it = j.find("failure"); it != j.end() && !it->is_null()) c.failure = it->get<std::string>();
  return c;
}

void EvolutionConfig::validate() const {
  if (max_iterations < 1) throw EvolutionError("max_iterations must be >= 1");
  if (offspring_per_iteration < 1) throw EvolutionError("offspring_per_iteration must be >= 1");
  if (top_n < 1) throw EvolutionError("top_n must be >= 1");
  if (parse_retries < 0) throw EvolutionError("parse_retries must be >= 0");
  if (operator_instruction != templates::kEvolveInstructionId) {
    throw EvolutionError("unknown operator instruction template '" + operator_instruction + "'");
  }
}

nlohmann::ordered_json to_json(const EvolutionConfig& cfg) {
  nlohmann::ordered_json j;
  j["max_iterations"] = cfg.max_iterations;
  j["offspring_per_iteration"] = cfg.offspring_per_iteration;
  j["top_n"] = cfg.top_n;
  nlohmann::ordered_json per_metric = nlohmann::ordered_json::object();
  for (const auto& [m, v] : cfg.thresholds.per_metric_min) per_metric[m.name()] = v;
  j["thresholds"] = {{"per_metric_min", per_metric}, {"fallback", to_string(cfg.thresholds.fallback)}};
  j["operator_instruction"] = cfg.operator_instruction;
  j["parse_retries"] = cfg.parse_retries;
  j["selection"] = selection_name(cfg.selection);
  j["operator_model"] = cfg.operator_model;
  j["operator_temperature"] = cfg.operator_temperature;
  j["operator_max_tokens"] = cfg.operator_max_tokens;
  j["seed"] = cfg.seed;
  return j;
}

EvolutionConfig evolution_config_from_json(const nlohmann::json& j) {
  EvolutionConfig cfg;
  cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
  cfg.offspring_per_iteration = j.value("offspring_per_iteration", cfg.offspring_per_iteration);
  cfg.top_n = j.value("top_n", cfg.top_n);
  if (auto it = j.find("thresholds"); it != j.end()) {
    if (auto pm = it->find("per_metric_min"); pm != it->end()) {
      cfg.thresholds.per_metric_min.clear();
      for (const auto& [k, v] : pm->items()) cfg.thresholds.per_metric_min.emplace(MetricId::parse(k), v.get<double>());
    }
    if (auto fb = it->find("fallback"); fb != it->end()) {
      cfg.thresholds.fallback = threshold_fallback_from_string(fb->get<std::string>());
    }
  }
  cfg.operator_instruction = j.value("operator_instruction", cfg.operator_instruction);
  cfg.parse_retries = j.value("parse_retries", cfg.parse_retries);
  if (auto it = j.find("selection"); it != j.end()) cfg.selection = selection_from_name(it->get<std::string>());
  cfg.operator_model = j.value("operator_model", cfg.operator_model);
  cfg.operator_temperature = j.value("operator_temperature", cfg.operator_temperature);
  cfg.operator_max_tokens = j.value("operator_max_tokens", cfg.operator_max_tokens);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

// ---------------------------------------------------------------------------
// Run accessors

const PromptCandidate& EvolutionRun::source() const {
  if (history.empty() || history.front().candidates.empty()) throw EvolutionError("run has no source prompt");
  return history.front().candidates.front();
}

const PromptCandidate* EvolutionRun::find(int id) const {
  for (const auto& rec : history) {
    for (const auto& c : rec.candidates) {
      if (c.id == id) return &c;
    }
  }
  return nullptr;
}

std::vector<const PromptCandidate*> EvolutionRun::evaluated() const {
  std::vector<const PromptCandidate*> out;
  for (const auto& rec : history) {
    for (const auto& c : rec.candidates) {
      if (c.scored()) out.push_back(&c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operator prompt

OperatorPrompt render_operator_prompt(const PromptCandidate& source,
                                      std::span<const PromptCandidate> selected,
                                      const EvolutionConfig& cfg) {
  if (!source.scored()) throw EvolutionError("source prompt is unscored");
  for (const auto& c : selected) {
    if (!c.scored()) throw EvolutionError("candidate " + std::to_string(c.id) + " is unscored");
  }
  const auto metrics = source.scores->metric_set();
  std::string tuple = "(";
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (i) tuple += ", ";
    tuple += metrics[i].name();
  }
  tuple += ")";

  OperatorPrompt out;
  auto& sys = out.system;
  sys += templates::kEvolveIntro;
  sys += '\n';
  for (auto ex : templates::kEvolveExamples) {
    sys += ex;
    sys += '\n';
  }
  sys += '\n';
  sys += templates::kEvolveGuidance;
  sys += '\n';
  if (metrics == MetricId::core_set()) {
    sys += templates::kEvolveCoreMetricsSentence;
  } else {
    sys += "User will provide an original prompt and your revised prompts, with their generated "
           "videos' scores (" +
           std::to_string(metrics.size()) + " dimensions termed as " + tuple.substr(1, tuple.size() - 2) +
           "), and you need to give an improved prompt according to previous prompts and their scores "
           "on different dimensions.";
  }
  sys += '\n';
  sys += templates::kEvolveIndexSentence;
  sys += tuple;
  sys += templates::kEvolveLearnSentence;
  sys += '\n';
  sys += templates::kEvolveSemanticSentence;
  sys += '\n';
  sys += "Generate " + std::to_string(cfg.offspring_per_iteration);
  sys += templates::kEvolveGenerateTail;

  auto line = [&](int index, const PromptCandidate& c) {
    std::string l = std::to_string(index) + ". " + c.text + " (";
    bool first = true;
    for (const auto& m : metrics) {
      if (!first) l += ", ";
      first = false;
      l += two_decimals(c.scores->norm(m).value_or(0.0));
    }
    return l + ")";
  };
  out.user = line(0, source);
  int index = 1;
  for (const auto& c : selected) out.user += "\n" + line(index++, c);
  return out;
}

namespace {

struct SpanScan {
  std::vector<std::string> spans;  // trimmed, possibly empty
  bool unclosed = false;
};

SpanScan scan_spans(std::string_view raw) {
  constexpr auto open = templates::kPromptOpen;
  constexpr auto close = templates::kPromptClose;
  SpanScan scan;
  std::size_t pos = 0;
  while (true) {
    const auto b = raw.find(open, pos);
    if (b == std::string_view::npos) break;
    const auto content = b + open.size();
    const auto e = raw.find(close, content);
    const auto next_open = raw.find(open, content);
    if (e == std::string_view::npos || next_open < e) {
      scan.unclosed = true;
      pos = content;
      continue;
    }
    scan.spans.push_back(trim(raw.substr(content, e - content)));
    pos = e + close.size();
  }
  return scan;
}

}  // namespace

std::vector<std::string> parse_operator_response(std::string_view raw, int expected) {
  auto scan = scan_spans(raw);
  const int found = static_cast<int>(scan.spans.size());
  if (scan.unclosed) throw ParseError(ParseErrorKind::Unclosed, found, "opening <PROMPT> tag without a closing tag");
  for (const auto& s : scan.spans) {
    if (s.empty()) throw ParseError(ParseErrorKind::EmptyPrompt, found, "empty <PROMPT> span");
  }
  if (found != expected) {
    throw ParseError(ParseErrorKind::WrongCount, found,
                     "expected " + std::to_string(expected) + " prompts, found " + std::to_string(found));
  }
  return std::move(scan.spans);
}

std::vector<std::string> extract_prompt_spans(std::string_view raw) {
  auto scan = scan_spans(raw);
  std::vector<std::string> out;
  for (auto& s : scan.spans) {
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

Evaluator::Evaluator(EvaluationBackends backends) : b_(std::move(backends)) {
  if (!b_.generation) throw backends::BackendError(backends::ErrorKind::Config, "no generation backend");
  if (b_.scorers.empty()) throw backends::BackendError(backends::ErrorKind::Config, "no scorers configured");
  std::vector<backends::ScorerDescriptor> descriptors;
  std::vector<MetricId> metrics;
  for (const auto& s : b_.scorers) {
    descriptors.push_back(s->descriptor());
    for (const auto& m : s->descriptor().metrics) metrics.push_back(m);
  }
  metric_set_ = canonical_metric_set(metrics);
  backends::validate_scorer_coverage(descriptors, metric_set_);
  for (const auto& m : metric_set_) {
    if (std::none_of(b_.scales.begin(), b_.scales.end(), [&](const MetricScale& s) { return s.metric == m; })) {
      b_.scales.push_back(default_scale(m));
    }
  }
  for (const auto& s : b_.scales) s.validate();
}

std::string Evaluator::fingerprint() const {
  std::string fp = b_.generation->fingerprint() + "|neg:" + b_.negative_prompt.value_or("") + "|" + b_.profile;
  for (const auto& s : b_.scorers) fp += "|" + s->fingerprint();
  return fp;
}

Evaluator::Outcome Evaluator::evaluate_one(const std::string& prompt) const {
  nlohmann::json key;
  key["kind"] = "evaluation";
  key["prompt"] = prompt;
  key["fingerprint"] = fingerprint();
  if (b_.cache) {
    if (auto hit = b_.cache->get(key)) {
      MetricValues raw;
      for (const auto& [k, v] : hit->at("raw").items()) raw.emplace(MetricId::parse(k), v.get<double>());
      return {hit->at("artifact_ref").get<std::string>(), ScoreVector::from_raw(raw, b_.scales)};
    }
  }
  backends::GenerationRequest req;
  req.prompt = prompt;
  req.negative_prompt = b_.negative_prompt;
  req.profile = b_.profile;
  auto gen = b_.generation->generate(req);
  auto sv = backends::assemble_scores(b_.scorers, gen.artifact_ref, prompt, b_.scales);
  if (b_.cache) {
    nlohmann::json value;
    value["artifact_ref"] = gen.artifact_ref;
    for (const auto& [m, v] : sv.raw()) value["raw"][m.name()] = v;
    b_.cache->put(key, value);
  }
  return {gen.artifact_ref, std::move(sv)};
}

std::vector<PromptCandidate> evaluate(std::vector<PromptCandidate> candidates, const Evaluator& evaluator) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      auto& c = candidates[i];
      try {
        auto outcome = evaluator.evaluate_one(c.text);
        c.artifact_ref = std::move(outcome.artifact_ref);
        c.scores = std::move(outcome.scores);
        c.failure.reset();
      } catch (const std::exception& e) {
        c.scores.reset();
        c.failure = e.what();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, evaluator.max_parallel())),
                                             candidates.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  return candidates;
}

// ---------------------------------------------------------------------------
// Search loop

EvolutionRun start_run(std::string run_id, std::string source_text, EvolutionConfig cfg,
                       const EvolutionBackends& backends) {
  cfg.validate();
  source_text = trim(source_text);
  if (source_text.empty()) throw EvolutionError("source prompt is empty");
  EvolutionRun run;
  run.run_id = std::move(run_id);
  run.config = std::move(cfg);
  PromptCandidate source;
  source.id = 0;
  source.text = std::move(source_text);
  auto evaluated = evaluate({source}, *backends.evaluator);
  if (!evaluated.front().scored()) {
    throw EvolutionError("run " + run.run_id + " aborted: source prompt could not be evaluated: " +
                         evaluated.front().failure.value_or("unknown error"));
  }
  IterationRecord rec;
  rec.iteration = 0;
  rec.candidates = std::move(evaluated);
  rec.population_after = {0};
  run.history.push_back(std::move(rec));
  run.population = {0};
  run.next_id = 1;
  return run;
}

std::vector<int> merge_and_select(const EvolutionRun& run, std::span<const PromptCandidate> offspring) {
  std::vector<ScoredId> pool;
  for (int id : run.population) {
    if (const auto* c = run.find(id); c && c->scored()) pool.push_back({id, *c->scores});
  }
  for (const auto& c : offspring) {
    if (c.scored()) pool.push_back({c.id, *c.scores});
  }
  if (pool.empty()) return {};
  return select_top_n(pool, run.config.top_n, run.config.selection);
}

EvolutionRun step(EvolutionRun run, const EvolutionBackends& backends) {
  run.config.validate();
  if (run.history.empty()) throw EvolutionError("run was never started");
  if (run.final) throw EvolutionError("run " + run.run_id + " is already finalized");
  if (run.completed_iterations() >= run.config.max_iterations) {
    throw EvolutionError("run " + run.run_id + " reached max_iterations");
  }
  const int iteration = run.completed_iterations() + 1;
  const int expected = run.config.offspring_per_iteration;

  std::vector<PromptCandidate> selected;
  for (int id : run.population) {
    if (id == 0) continue;
    if (const auto* c = run.find(id)) selected.push_back(*c);
  }
  const auto prompt = render_operator_prompt(run.source(), selected, run.config);

  IterationRecord rec;
  rec.iteration = iteration;
  OperatorExchange exchange;
  exchange.rendered_prompt = prompt.text();

  std::vector<std::string> best;
  for (int attempt = 0; attempt <= run.config.parse_retries; ++attempt) {
    backends::ChatRequest req;
    req.model = run.config.operator_model;
    req.temperature = run.config.operator_temperature;
    req.max_tokens = run.config.operator_max_tokens;
    req.messages = {{backends::Role::System, prompt.system}, {backends::Role::User, prompt.user}};
    req.seed = derive_seed({"operator", std::to_string(run.config.seed), run.run_id,
                            std::to_string(iteration), std::to_string(attempt)});
    auto resp = backends.operator_client->chat(req);
    exchange.raw_responses.push_back(resp.content);
    try {
      best = parse_operator_response(resp.content, expected);
      break;
    } catch (const ParseError& e) {
      rec.warnings.push_back("attempt " + std::to_string(attempt + 1) + ": " + e.what());
      auto partial = extract_prompt_spans(resp.content);
      if (partial.size() > static_cast<std::size_t>(expected)) partial.resize(static_cast<std::size_t>(expected));
      if (partial.size() > best.size()) best = std::move(partial);
    }
  }
  exchange.parsed = best;

  // Drop offspring whose text was already produced in this run.
  std::set<std::string> seen;
  for (const auto& r : run.history) {
    for (const auto& c : r.candidates) seen.insert(c.text);
  }
  std::vector<PromptCandidate> offspring;
  for (const auto& text : best) {
    if (!seen.insert(text).second) continue;
    PromptCandidate c;
    c.id = run.next_id++;
    c.text = text;
    c.provenance = {ProvenanceKind::Evolved, iteration};
    offspring.push_back(std::move(c));
  }

  if (offspring.empty()) {
    rec.warnings.push_back(best.empty() ? "iteration skipped: operator produced no parsable prompts"
                                        : "iteration skipped: every offspring duplicated an earlier prompt");
  } else {
    offspring = evaluate(std::move(offspring), *backends.evaluator);
    if (std::none_of(offspring.begin(), offspring.end(), [](const auto& c) { return c.scored(); })) {
      throw EvolutionError("run " + run.run_id + " aborted: every candidate of iteration " +
                           std::to_string(iteration) + " failed evaluation (" +
                           offspring.front().failure.value_or("unknown error") + ")");
    }
    for (const auto& c : offspring) {
      if (c.failure) rec.warnings.push_back("candidate " + std::to_string(c.id) + " failed: " + *c.failure);
    }
    run.population = merge_and_select(run, offspring);
  }
  rec.candidates = std::move(offspring);
  rec.population_after = run.population;
  rec.exchange = std::move(exchange);
  run.history.push_back(std::move(rec));
  return run;
}

void rebuild_population(EvolutionRun& run) {
  run.population.clear();
  run.next_id = 1;
  for (const auto& rec : run.history) {
    for (const auto& c : rec.candidates) run.next_id = std::max(run.next_id, c.id + 1);
    if (rec.iteration == 0) {
      if (!rec.candidates.empty() && rec.candidates.front().scored()) run.population = {0};
      continue;
    }
    if (!rec.candidates.empty()) run.population = merge_and_select(run, rec.candidates);
  }
}

FinalResult finalize(const EvolutionRun& run) {
  const auto all = run.evaluated();
  if (all.empty()) throw EvolutionError("run " + run.run_id + " has no evaluated candidates");
  const PromptCandidate* best_passing = nullptr;
  const PromptCandidate* best_any = nullptr;
  auto better = [](const PromptCandidate* a, const PromptCandidate* b) {
    return ranks_before(ScoredId{a->id, *a->scores}, ScoredId{b->id, *b->scores});
  };
  for (const auto* c : all) {
    if (!best_any || better(c, best_any)) best_any = c;
    if (passes_thresholds(*c->scores, run.config.thresholds) && (!best_passing || better(c, best_passing))) {
      best_passing = c;
    }
  }
  if (best_passing) return {*best_passing, true};
  if (run.config.thresholds.fallback == ThresholdFallback::HighestOverall) return {*best_any, false};
  return {run.source(), false};
}

std::vector<ReportRow> iteration_report(const EvolutionRun& run) {
  std::vector<ReportRow> rows;
  for (const auto& rec : run.history) {
    if (rec.iteration == 0) continue;
    MetricValues sums;
    int count = 0;
    for (const auto& c : rec.candidates) {
      if (!c.scored()) continue;
      ++count;
      for (const auto& [m, v] : c.scores->normalized()) sums[m] += v;
    }
    if (count == 0) continue;
    for (const auto& [m, s] : sums) rows.push_back({rec.iteration, m, s / count});
  }
  return rows;
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = "iteration,metric,mean\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + "," + r.metric.name() + "," + format_double(r.mean) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace run_store {

namespace fs = std::filesystem;

void write_config(const fs::path& dir, const EvolutionRun& run, const std::string& config_hash) {
  nlohmann::ordered_json j;
  j["run_id"] = run.run_id;
  j["source"] = run.history.empty() ? std::string() : run.source().text;
  j["config_hash"] = config_hash;
  j["evolution"] = to_json(run.config);
  atomic_write(dir / "config.json", j.dump(2) + "\n");
}

void write_iteration(const fs::path& dir, const IterationRecord& record) {
  std::string lines;
  for (const auto& c : record.candidates) lines += to_json(c).dump() + "\n";
  const auto base = dir / "iterations";
  if (record.exchange || !record.warnings.empty() || record.iteration > 0) {
    nlohmann::ordered_json meta;
    meta["iteration"] = record.iteration;
    meta["population_after"] = record.population_after;
    meta["warnings"] = record.warnings;
    if (record.exchange) {
      meta["operator"] = {{"rendered_prompt", record.exchange->rendered_prompt},
                          {"raw_responses", record.exchange->raw_responses},
                          {"parsed", record.exchange->parsed}};
    }
    atomic_write(base / (std::to_string(record.iteration) + ".meta.json"), meta.dump(2) + "\n");
  }
  // The candidate file goes last: its presence marks the iteration complete.
  atomic_write(base / (std::to_string(record.iteration) + ".jsonl"), lines);
}

void write_final(const fs::path& dir, const EvolutionRun& run) {
  if (!run.final) throw EvolutionError("run " + run.run_id + " is not finalized");
  const auto* c = run.find(run.final->candidate_id);
  if (!c || !c->scored()) throw EvolutionError("final candidate missing from history");
  nlohmann::ordered_json j;
  j["run_id"] = run.run_id;
  j["source"] = run.source().text;
  j["candidate_id"] = c->id;
  j["text"] = c->text;
  j["threshold_met"] = run.final->threshold_met;
  j["overall"] = overall(*c->scores);
  j["scores"] = to_json(*c->scores);
  j["iterations"] = run.completed_iterations();
  j["evaluated"] = run.evaluated().size();
  atomic_write(dir / "final.json", j.dump(2) + "\n");
}

void write_report(const fs::path& dir, const EvolutionRun& run) {
  atomic_write(dir / "report.csv", report_csv(iteration_report(run)));
}

bool is_finalized(const fs::path& dir) { return fs::exists(dir / "final.json"); }

Loaded load(const fs::path& dir) {
  if (!fs::exists(dir / "config.json")) throw EvolutionError("no run at " + dir.string());
  const auto cfg = nlohmann::json::parse(read_file(dir / "config.json"));
  Loaded out;
  out.config_hash = cfg.value("config_hash", "");
  out.run.run_id = cfg.at("run_id").get<std::string>();
  out.run.config = evolution_config_from_json(cfg.at("evolution"));
  for (int k = 0;; ++k) {
    const auto path = dir / "iterations" / (std::to_string(k) + ".jsonl");
    if (!fs::exists(path)) break;
    IterationRecord rec;
    rec.iteration = k;
    const auto content = read_file(path);
    std::size_t pos = 0;
    while (pos < content.size()) {
      auto end = content.find('\n', pos);
      if (end == std::string::npos) end = content.size();
      if (end > pos) rec.candidates.push_back(candidate_from_json(nlohmann::json::parse(content.substr(pos, end - pos))));
      pos = end + 1;
    }
    const auto meta_path = dir / "iterations" / (std::to_string(k) + ".meta.json");
    if (fs::exists(meta_path)) {
      const auto meta = nlohmann::json::parse(read_file(meta_path));
      rec.population_after = meta.value("population_after", std::vector<int>{});
      rec.warnings = meta.value("warnings", std::vector<std::string>{});
      if (auto op = meta.find("operator"); op != meta.end()) {
        OperatorExchange ex;
        ex.rendered_prompt = op->value("rendered_prompt", "");
        ex.raw_responses = op->value("raw_responses", std::vector<std::string>{});
        ex.parsed = op->value("parsed", std::vector<std::string>{});
        rec.exchange = std::move(ex);
      }
    } else if (k == 0) {
      rec.population_after = {0};
    }
    out.run.history.push_back(std::move(rec));
  }
  rebuild_population(out.run);
  if (fs::exists(dir / "final.json")) {
    const auto fin = nlohmann::json::parse(read_file(dir / "final.json"));
    out.run.final = FinalSelection{fin.at("candidate_id").get<int>(), fin.at("threshold_met").get<bool>()};
  }
  return out;
}

}  // namespace run_store

}  // namespace pav
