#include "pav/config.hpp"

#include <algorithm>
#include <set>

#include "pav/http_backends.hpp"
#include "pav/templates.hpp"
#include "pav/util.hpp"

namespace pav {

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return empty;
  if (!it->is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return *it;
}

backends::RetryPolicy parse_retry(const json& j) {
  backends::RetryPolicy p;
  if (j.is_null()) return p;
  p.max_attempts = get_or(j, "max_attempts", p.max_attempts);
  p.initial_delay = std::chrono::milliseconds(get_or<long>(j, "initial_delay_ms", p.initial_delay.count()));
  p.multiplier = get_or(j, "multiplier", p.multiplier);
  p.max_delay = std::chrono::milliseconds(get_or<long>(j, "max_delay_ms", p.max_delay.count()));
  if (auto it = j.find("retryable"); it != j.end()) {
    p.retryable.clear();
    for (const auto& v : *it) p.retryable.insert(v.get<std::string>());
  }
  try {
    p.validate();
  } catch (const backends::BackendError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

void check_kind(const std::string& kind, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end()) {
    throw ConfigError(where + ": unknown kind '" + kind + "'");
  }
}

ChatBackendConfig parse_chat(const json& j, ChatBackendConfig c, const std::string& where) {
  c.kind = get_or(j, "kind", c.kind);
  c.mode = get_or(j, "mode", c.mode);
  c.endpoint = get_or(j, "endpoint", c.endpoint);
  c.api_key_env = get_or(j, "api_key_env", c.api_key_env);
  c.model = get_or(j, "model", c.model);
  c.temperature = get_or(j, "temperature", c.temperature);
  c.max_tokens = get_or(j, "max_tokens", c.max_tokens);
  c.canned = get_or(j, "canned", c.canned);
  if (auto it = j.find("script"); it != j.end()) {
    for (const auto& r : *it) c.script.push_back({r.at("match").get<std::string>(), r.at("response").get<std::string>()});
  }
  if (auto it = j.find("retry"); it != j.end()) c.retry = parse_retry(*it);
  c.cache = get_or(j, "cache", c.cache);
  c.concurrency = get_or(j, "concurrency", c.concurrency);
  c.timeout_seconds = get_or(j, "timeout_seconds", c.timeout_seconds);
  check_kind(c.kind, {"mock", "http"}, where);
  if (c.kind == "mock") {
    try {
      (void)backends::mock_chat_mode_from_string(c.mode);
    } catch (const backends::BackendError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (c.kind == "http" && c.endpoint.empty()) throw ConfigError(where + ": http backend needs an endpoint");
  if (c.concurrency < 1) throw ConfigError(where + ": concurrency must be >= 1");
  if (c.max_tokens < 1) throw ConfigError(where + ": max_tokens must be >= 1");
  return c;
}

MetricValues parse_metric_row(const json& j) {
  MetricValues out;
  for (const auto& [k, v] : j.items()) out.emplace(MetricId::parse(k), v.get<double>());
  return out;
}

std::vector<ScorerConfig> default_scorers() {
  ScorerConfig vs;
  vs.name = "videoscore";
  vs.metrics = {kVQ, kTC, kDD, kTVA, kFC};
  ScorerConfig aes;
  aes.name = "aesthetic";
  aes.metrics = {kAES};
  ScorerConfig mps;
  mps.name = "mps";
  mps.metrics = {kMPS};
  return {vs, aes, mps};
}

}  // namespace

AppConfig default_config() { return config_from_json(json::object()); }

AppConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  static const std::set<std::string> known = {"seed", "metrics", "backends", "evolution", "datasets",
                                              "paths", "concurrency"};
  for (const auto& [k, v] : doc.items()) {
    if (!known.contains(k)) throw ConfigError("unknown configuration section '" + k + "'");
  }
  AppConfig cfg;
  try {
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);

    // Metrics and scales.
    const auto& metrics = section(doc, "metrics");
    if (auto it = metrics.find("set"); it != metrics.end()) {
      std::vector<MetricId> set;
      for (const auto& m : *it) set.push_back(MetricId::parse(m.get<std::string>()));
      if (set.empty()) throw ConfigError("metrics.set must be nonempty");
      const auto canon = canonical_metric_set(set);
      if (canon.size() != set.size()) throw ConfigError("metrics.set has duplicates");
      cfg.metric_set = canon;
    }
    const auto& scales = section(metrics, "scales");
    for (const auto& m : cfg.metric_set) {
      auto s = default_scale(m);
      if (auto it = scales.find(m.name()); it != scales.end()) {
        s.raw_min = get_or(*it, "raw_min", s.raw_min);
        s.raw_max = get_or(*it, "raw_max", s.raw_max);
        s.target_min = get_or(*it, "target_min", s.target_min);
        s.target_max = get_or(*it, "target_max", s.target_max);
      }
      s.validate();
      cfg.scales.push_back(s);
    }
    for (const auto& [k, v] : scales.items()) {
      const auto id = MetricId::parse(k);
      if (std::find(cfg.metric_set.begin(), cfg.metric_set.end(), id) == cfg.metric_set.end()) {
        throw ConfigError("scale given for metric '" + k + "' outside metrics.set");
      }
    }

    // Backends.
    const auto& be = section(doc, "backends");
    cfg.chat = parse_chat(section(be, "chat"), cfg.chat, "backends.chat");
    {
      const auto& g = section(be, "generation");
      auto& gc = cfg.generation;
      gc.kind = get_or(g, "kind", gc.kind);
      gc.endpoint = get_or(g, "endpoint", gc.endpoint);
      gc.api_key_env = get_or(g, "api_key_env", gc.api_key_env);
      gc.profile = get_or(g, "profile", gc.profile);
      if (auto it = g.find("negative_prompt"); it != g.end() && !it->is_null()) {
        auto np = it->get<std::string>();
        gc.negative_prompt = np == "fixed" ? std::string(templates::kFixedNegativePrompt) : np;
      }
      if (auto it = g.find("retry"); it != g.end()) gc.retry = parse_retry(*it);
      gc.cache = get_or(g, "cache", gc.cache);
      gc.concurrency = get_or(g, "concurrency", gc.concurrency);
      gc.timeout_seconds = get_or(g, "timeout_seconds", gc.timeout_seconds);
      check_kind(gc.kind, {"mock", "http"}, "backends.generation");
      if (gc.kind == "http" && gc.endpoint.empty()) throw ConfigError("backends.generation: http backend needs an endpoint");
    }
    if (auto it = be.find("scorers"); it != be.end()) {
      for (const auto& sj : *it) {
        ScorerConfig sc;
        sc.name = get_or<std::string>(sj, "name", "");
        if (sc.name.empty()) throw ConfigError("every scorer needs a name");
        sc.kind = get_or(sj, "kind", sc.kind);
        for (const auto& m : sj.at("metrics")) sc.metrics.push_back(MetricId::parse(m.get<std::string>()));
        sc.endpoint = get_or(sj, "endpoint", sc.endpoint);
        sc.api_key_env = get_or(sj, "api_key_env", sc.api_key_env);
        sc.vocabulary_size = get_or(sj, "vocabulary_size", sc.vocabulary_size);
        if (auto fx = sj.find("fixture"); fx != sj.end()) {
          for (const auto& [prompt, row] : fx->items()) sc.fixture.emplace(prompt, parse_metric_row(row));
        }
        if (auto r = sj.find("retry"); r != sj.end()) sc.retry = parse_retry(*r);
        sc.cache = get_or(sj, "cache", sc.cache);
        sc.concurrency = get_or(sj, "concurrency", sc.concurrency);
        sc.timeout_seconds = get_or(sj, "timeout_seconds", sc.timeout_seconds);
        check_kind(sc.kind, {"synthetic", "http"}, "scorer " + sc.name);
        if (sc.kind == "http" && sc.endpoint.empty()) throw ConfigError("scorer " + sc.name + ": http scorer needs an endpoint");
        cfg.scorers.push_back(std::move(sc));
      }
    } else {
      cfg.scorers = default_scorers();
    }
    std::vector<backends::ScorerDescriptor> descriptors;
    for (const auto& s : cfg.scorers) descriptors.push_back({s.name, s.metrics, s.endpoint, {}});
    backends::validate_scorer_coverage(descriptors, cfg.metric_set);

    // Evolution.
    auto evo = section(doc, "evolution");
    cfg.evolution = evolution_config_from_json(evo);
    if (!evo.contains("thresholds") || !evo["thresholds"].contains("per_metric_min")) {
      cfg.evolution.thresholds.per_metric_min.clear();
      for (const auto& m : cfg.metric_set) cfg.evolution.thresholds.per_metric_min.emplace(m, 2.5);
    }
    cfg.evolution.seed = cfg.seed;
    cfg.evolution.operator_model = cfg.chat.model;
    cfg.evolution.operator_temperature = cfg.chat.temperature;
    cfg.evolution.operator_max_tokens = cfg.chat.max_tokens;
    cfg.evolution.validate();
    cfg.evolution.thresholds.validate(cfg.scales);

    // Datasets.
    const auto& ds = section(doc, "datasets");
    auto& d = cfg.datasets;
    d.k = get_or(ds, "k", d.k);
    d.margin = get_or(ds, "margin", d.margin);
    d.rounds = get_or(ds, "rounds", d.rounds);
    d.require_threshold = get_or(ds, "require_threshold", d.require_threshold);
    d.sample_temperature = get_or(ds, "sample_temperature", d.sample_temperature);
    d.resample_budget = get_or(ds, "resample_budget", d.resample_budget);
    d.beta = get_or(ds, "beta", d.beta);
    if (d.k < 2) throw ConfigError("datasets.k must be >= 2");
    if (!(d.margin > 0.0)) throw ConfigError("datasets.margin must be > 0");
    if (d.rounds < 1) throw ConfigError("datasets.rounds must be >= 1");
    if (!(d.beta > 0.0)) throw ConfigError("datasets.beta must be > 0");
    ChatBackendConfig refiner;
    refiner.mode = "refiner";
    refiner.model = "prompt-refiner";
    refiner.temperature = d.sample_temperature;
    refiner.max_tokens = 1024;
    const auto& models = section(ds, "models");
    for (const auto& plan : plan_dpo_iterations(d.rounds)) {
      auto it = models.find(plan.sample_from);
      d.models[plan.sample_from] =
          parse_chat(it == models.end() ? json::object() : *it, refiner, "datasets.models." + plan.sample_from);
    }
    const auto& neg = section(ds, "negatives");
    ChatBackendConfig neg_llm;
    neg_llm.mode = "canned";
    neg_llm.canned = std::string(templates::kAdaptiveExampleNegative);
    d.negatives.llm = parse_chat(section(neg, "llm"), neg_llm, "datasets.negatives.llm");
    if (auto it = neg.find("few_shots"); it != neg.end()) {
      d.negatives.few_shots.clear();
      for (const auto& fs : *it) {
        d.negatives.few_shots.push_back({fs.at("positive").get<std::string>(), fs.at("negative").get<std::string>()});
      }
    }

    const auto& paths = section(doc, "paths");
    cfg.cache_dir = get_or(paths, "cache", cfg.cache_dir);
    const auto& conc = section(doc, "concurrency");
    cfg.run_workers = get_or(conc, "runs", cfg.run_workers);
    cfg.evaluation_parallelism = get_or(conc, "evaluation", cfg.evaluation_parallelism);
    if (cfg.run_workers < 1 || cfg.evaluation_parallelism < 1) throw ConfigError("concurrency limits must be >= 1");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  cfg.hash = sha256_hex(doc.dump());
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

const MetricScale& scale_for(const AppConfig& cfg, const MetricId& m) {
  for (const auto& s : cfg.scales) {
    if (s.metric == m) return s;
  }
  throw ConfigError("no scale for metric " + m.name());
}

std::shared_ptr<backends::ChatClient> build_chat_client(const ChatBackendConfig& c, std::uint64_t seed,
                                                        std::shared_ptr<backends::ContentCache> cache,
                                                        std::shared_ptr<backends::CallCounters> counters,
                                                        backends::Sleeper sleeper) {
  std::shared_ptr<backends::ChatClient> inner;
  if (c.kind == "http") {
    inner = std::make_shared<backends::HttpChatClient>(
        backends::HttpEndpoint{c.endpoint, c.api_key_env, std::chrono::seconds(c.timeout_seconds)});
  } else {
    auto mock = std::make_shared<backends::MockChatClient>(backends::mock_chat_mode_from_string(c.mode), seed);
    mock->set_canned(c.canned);
    mock->set_script(c.script);
    inner = mock;
  }
  return std::make_shared<backends::ManagedChatClient>(
      inner,
      backends::CallPipeline(c.retry, c.cache ? cache : nullptr,
                             std::make_shared<backends::ConcurrencyLimiter>(c.concurrency), std::move(sleeper)),
      std::move(counters));
}

BackendSet build_backends(const AppConfig& cfg, const std::filesystem::path& cache_root, backends::Sleeper sleeper) {
  BackendSet set;
  set.counters = std::make_shared<backends::CallCounters>();
  if (!cache_root.empty()) set.cache = std::make_shared<backends::ContentCache>(cache_root);

  set.operator_chat = build_chat_client(cfg.chat, cfg.seed, set.cache, set.counters, sleeper);

  const auto& g = cfg.generation;
  std::shared_ptr<backends::GenerationClient> gen;
  if (g.kind == "http") {
    gen = std::make_shared<backends::HttpGenerationClient>(
        backends::HttpEndpoint{g.endpoint, g.api_key_env, std::chrono::seconds(g.timeout_seconds)}, g.profile);
  } else {
    gen = std::make_shared<backends::MockGenerationClient>(g.profile);
  }
  auto managed_gen = std::make_shared<backends::ManagedGenerationClient>(
      gen,
      backends::CallPipeline(g.retry, g.cache ? set.cache : nullptr,
                             std::make_shared<backends::ConcurrencyLimiter>(g.concurrency), sleeper),
      set.counters);

  std::vector<std::shared_ptr<backends::ScorerClient>> scorers;
  for (const auto& s : cfg.scorers) {
    backends::ScorerDescriptor desc{s.name, s.metrics, s.endpoint, {}};
    for (const auto& m : s.metrics) desc.scales.push_back(scale_for(cfg, m));
    std::shared_ptr<backends::ScorerClient> inner;
    if (s.kind == "http") {
      inner = std::make_shared<backends::HttpScorerClient>(
          desc, backends::HttpEndpoint{s.endpoint, s.api_key_env, std::chrono::seconds(s.timeout_seconds)});
    } else {
      auto synth = std::make_shared<backends::SyntheticScorer>(desc, cfg.seed, s.vocabulary_size);
      synth->set_fixture(s.fixture);
      inner = synth;
    }
    scorers.push_back(std::make_shared<backends::ManagedScorerClient>(
        inner,
        backends::CallPipeline(s.retry, s.cache ? set.cache : nullptr,
                               std::make_shared<backends::ConcurrencyLimiter>(s.concurrency), sleeper),
        set.counters));
  }

  EvaluationBackends eb;
  eb.generation = managed_gen;
  eb.scorers = std::move(scorers);
  eb.scales = cfg.scales;
  eb.cache = set.cache;
  eb.negative_prompt = g.negative_prompt;
  eb.profile = g.profile;
  eb.max_parallel = cfg.evaluation_parallelism;
  set.evaluator = std::make_shared<const Evaluator>(std::move(eb));
  return set;
}

}  // namespace pav
