#include "pav/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "pav/config.hpp"
#include "pav/datasets.hpp"
#include "pav/evolution.hpp"
#include "pav/objectives.hpp"
#include "pav/util.hpp"

namespace pav::cli {

namespace fs = std::filesystem;

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pending: return "pending";
    case RunStatus::InProgress: return "in-progress";
    case RunStatus::Finalized: return "finalized";
    case RunStatus::Failed: return "failed";
  }
  return "pending";
}

RunStatus run_status_from_string(const std::string& s) {
  if (s == "pending") return RunStatus::Pending;
  if (s == "in-progress") return RunStatus::InProgress;
  if (s == "finalized") return RunStatus::Finalized;
  if (s == "failed") return RunStatus::Failed;
  throw std::invalid_argument("unknown run status '" + s + "'");
}

RunStatus advance(RunStatus from, RunStatus to) {
  auto order = [](RunStatus s) {
    switch (s) {
      case RunStatus::Pending: return 0;
      case RunStatus::InProgress: return 1;
      case RunStatus::Finalized:
      case RunStatus::Failed: return 2;
    }
    return 0;
  };
  if (from == to) return to;
  if (order(to) <= order(from)) {
    throw std::logic_error("illegal run status transition " + to_string(from) + " -> " + to_string(to));
  }
  return to;
}

std::string run_id_for(std::size_t index, const std::string& prompt) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return std::string("run-") + buf + "-" + sha256_hex(prompt).substr(0, 8);
}

namespace {

// Typed failures mapped onto exit codes at the top level.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

AppConfig config_or_default(const std::string& path) {
  return path.empty() ? default_config() : load_config(path);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string counters_line(const backends::CallCounters& c) {
  return "backend calls: chat=" + std::to_string(c.chat.load()) + " generate=" + std::to_string(c.generate.load()) +
         " score=" + std::to_string(c.score.load());
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::string run_id;
  std::string prompt;
  RunStatus status = RunStatus::Pending;
  std::string error;
};

class Manifest {
 public:
  Manifest(fs::path path, std::string config_hash, std::vector<ManifestEntry> entries)
      : path_(std::move(path)), config_hash_(std::move(config_hash)), entries_(std::move(entries)) {}

  static std::optional<std::pair<std::string, std::vector<ManifestEntry>>> read(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    const auto j = nlohmann::json::parse(read_file(path));
    std::vector<ManifestEntry> entries;
    for (const auto& r : j.at("runs")) {
      entries.push_back({r.at("run_id").get<std::string>(), r.at("prompt").get<std::string>(),
                         run_status_from_string(r.at("status").get<std::string>()), r.value("error", "")});
    }
    return std::make_pair(j.value("config_hash", ""), std::move(entries));
  }

  void set(std::size_t i, RunStatus status, std::string error = {}) {
    std::lock_guard lock(mu_);
    entries_[i].status = advance(entries_[i].status, status);
    entries_[i].error = std::move(error);
    write_locked();
  }

  void write() {
    std::lock_guard lock(mu_);
    write_locked();
  }

  [[nodiscard]] const std::vector<ManifestEntry>& entries() const { return entries_; }

 private:
  void write_locked() const {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash_;
    auto& runs = j["runs"] = nlohmann::ordered_json::array();
    for (const auto& e : entries_) {
      nlohmann::ordered_json r;
      r["run_id"] = e.run_id;
      r["prompt"] = e.prompt;
      r["status"] = to_string(e.status);
      if (!e.error.empty()) r["error"] = e.error;
      runs.push_back(std::move(r));
    }
    atomic_write(path_, j.dump(2) + "\n");
  }

  fs::path path_;
  std::string config_hash_;
  std::vector<ManifestEntry> entries_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// evolve

struct EvolveArgs {
  std::string config;
  std::string prompts;
  std::string out;
  bool resume = false;
};

int cmd_evolve(const EvolveArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = config_or_default(a.config);
  std::vector<std::string> prompts;
  try {
    prompts = read_prompt_lines(a.prompts);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (prompts.empty()) throw InputError("no prompts in " + a.prompts);

  const fs::path out_dir(a.out);
  const auto manifest_path = out_dir / "manifest.json";
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < prompts.size(); ++i) entries.push_back({run_id_for(i, prompts[i]), prompts[i], RunStatus::Pending, {}});

  if (auto existing = Manifest::read(manifest_path)) {
    if (!a.resume) throw InputError(out_dir.string() + " already holds runs; pass --resume to continue them");
    if (existing->first != cfg.hash) {
      throw ConfigError("configuration changed since these runs started; refusing to resume");
    }
    for (auto& e : entries) {
      for (const auto& old : existing->second) {
        if (old.run_id == e.run_id) {
          e.status = old.status;
          e.error = old.error;
        }
      }
    }
  }

  const auto runs_dir = out_dir / "runs";
  // Per-run drift check happens before any backend call.
  for (const auto& e : entries) {
    const auto dir = runs_dir / e.run_id;
    if (!fs::exists(dir / "config.json")) continue;
    const auto j = nlohmann::json::parse(read_file(dir / "config.json"));
    if (j.value("config_hash", "") != cfg.hash) {
      throw ConfigError("run " + e.run_id + " was started with a different configuration; refusing to resume");
    }
  }

  Manifest manifest(manifest_path, cfg.hash, std::move(entries));
  manifest.write();

  const auto backends = build_backends(cfg, resolve(out_dir, cfg.cache_dir));
  const EvolutionBackends eb{backends.operator_chat, backends.evaluator};

  std::atomic<std::size_t> next{0};
  std::atomic<int> skipped{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.entries().size(); i = next++) {
      const auto entry = manifest.entries()[i];
      if (entry.status == RunStatus::Finalized || entry.status == RunStatus::Failed) {
        ++skipped;
        continue;
      }
      const auto dir = runs_dir / entry.run_id;
      try {
        manifest.set(i, RunStatus::InProgress);
        EvolutionRun run;
        bool loaded = false;
        if (fs::exists(dir / "iterations" / "0.jsonl")) {
          run = run_store::load(dir).run;
          loaded = !run.history.empty();
        }
        if (!loaded) {
          run = start_run(entry.run_id, entry.prompt, cfg.evolution, eb);
          run_store::write_config(dir, run, cfg.hash);
          run_store::write_iteration(dir, run.history.back());
        }
        while (!run.done()) {
          run = step(std::move(run), eb);
          run_store::write_iteration(dir, run.history.back());
        }
        if (!run.final) {
          const auto result = finalize(run);
          run.final = FinalSelection{result.candidate.id, result.threshold_met};
        }
        run_store::write_final(dir, run);
        run_store::write_report(dir, run);
        manifest.set(i, RunStatus::Finalized);
      } catch (const std::exception& e) {
        manifest.set(i, RunStatus::Failed, e.what());
        std::lock_guard lock(log_mu);
        err << "run " << entry.run_id << " failed: " << e.what() << "\n";
      }
    }
  };
  {
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.run_workers), manifest.entries().size());
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }

  int finalized = 0;
  int failed = 0;
  for (const auto& e : manifest.entries()) {
    if (e.status == RunStatus::Finalized) ++finalized;
    if (e.status == RunStatus::Failed) ++failed;
  }
  out << "runs: " << manifest.entries().size() << " total, " << finalized << " finalized, " << failed
      << " failed, " << skipped.load() << " already complete\n";
  out << counters_line(*backends.counters) << "\n";
  return failed == 0 ? kExitOk : kExitBackend;
}

// ---------------------------------------------------------------------------
// build-sft

std::vector<fs::path> run_dirs(const fs::path& root) {
  fs::path base = fs::exists(root / "runs") ? root / "runs" : root;
  if (!fs::is_directory(base)) throw InputError("no runs under " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(base)) {
    if (e.is_directory() && fs::exists(e.path() / "config.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw InputError("no runs under " + root.string());
  return dirs;
}

int cmd_build_sft(const std::string& runs, const std::string& out_path, bool require_threshold,
                  std::ostream& out) {
  std::vector<EvolutionRun> loaded;
  std::vector<std::string> unfinished;
  for (const auto& dir : run_dirs(runs)) {
    auto l = run_store::load(dir);
    if (!l.run.final) unfinished.push_back(l.run.run_id);
    loaded.push_back(std::move(l.run));
  }
  if (!unfinished.empty()) {
    std::string names;
    for (const auto& n : unfinished) names += (names.empty() ? "" : ", ") + n;
    throw InputError("runs are not finalized: " + names);
  }
  const auto build = build_sft_dataset(loaded, SftFilter{require_threshold});
  nlohmann::ordered_json summary;
  summary["runs"] = build.total;
  summary["pairs"] = build.pairs.size();
  summary["excluded_threshold"] = build.excluded_threshold;
  summary["excluded_unchanged"] = build.excluded_unchanged;
  summary["require_threshold"] = require_threshold;
  emit_sft_jsonl(build.pairs, out_path, summary);
  out << "sft pairs: " << build.pairs.size() << " of " << build.total << " runs (excluded: "
      << build.excluded_threshold << " below threshold, " << build.excluded_unchanged << " unchanged)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// build-dpo

int cmd_build_dpo(const std::string& config, const std::string& sources_path, int round, const std::string& out_path,
                  std::ostream& out) {
  const auto cfg = config_or_default(config);
  const auto plan = plan_dpo_iterations(cfg.datasets.rounds);
  if (round < 1 || round > static_cast<int>(plan.size())) {
    throw UsageError("round " + std::to_string(round) + " is outside the configured " +
                     std::to_string(plan.size()) + " DPO rounds");
  }
  std::vector<std::string> sources;
  try {
    sources = read_prompt_lines(sources_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  const auto& step = plan[static_cast<std::size_t>(round - 1)];
  const auto& model_cfg = cfg.datasets.models.at(step.sample_from);

  const fs::path out_file(out_path);
  const auto base = out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
  auto backends = build_backends(cfg, resolve(base, cfg.cache_dir));
  auto model = build_chat_client(model_cfg, cfg.seed, backends.cache, backends.counters);

  DpoRoundOptions opts;
  opts.k = cfg.datasets.k;
  opts.margin = cfg.datasets.margin;
  opts.round = round;
  opts.model = model_cfg.model;
  opts.temperature = model_cfg.temperature;
  opts.max_tokens = model_cfg.max_tokens;
  opts.resample_budget = cfg.datasets.resample_budget;
  opts.seed = cfg.seed;
  opts.max_parallel = cfg.run_workers;
  const auto build = build_dpo_round(sources, *model, *backends.evaluator, opts);

  nlohmann::ordered_json summary;
  summary["round"] = round;
  summary["sample_from"] = step.sample_from;
  summary["plan"] = to_json(plan);
  summary["k"] = opts.k;
  summary["margin"] = opts.margin;
  summary["beta"] = cfg.datasets.beta;
  summary["sources"] = sources.size();
  summary["triplets"] = build.triplets.size();
  summary["skipped"] = build.skipped.size();
  auto& skipped = summary["skipped_sources"] = nlohmann::ordered_json::array();
  for (const auto& s : build.skipped) skipped.push_back({{"prompt", s.prompt}, {"reason", s.reason}});
  emit_dpo_jsonl(build.triplets, out_file, summary);

  out << "dpo round " << round << " (sample from " << step.sample_from << "): " << build.triplets.size()
      << " triplets from " << sources.size() << " sources, " << build.skipped.size() << " skipped\n";
  out << counters_line(*backends.counters) << "\n";
  return build.backend_failures == 0 ? kExitOk : kExitBackend;
}

// ---------------------------------------------------------------------------
// report, dpo-loss, make-negatives

int cmd_report(const std::string& run_dir, const std::string& out_path, std::ostream& out) {
  if (!fs::exists(fs::path(run_dir) / "config.json")) throw InputError("no run at " + run_dir);
  const auto loaded = run_store::load(run_dir);
  if (loaded.run.completed_iterations() < 1) throw InputError("run " + run_dir + " has no completed iterations");
  const auto csv = report_csv(iteration_report(loaded.run));
  atomic_write(out_path.empty() ? fs::path(run_dir) / "report.csv" : fs::path(out_path), csv);
  out << csv;
  return kExitOk;
}

int cmd_dpo_loss(const std::string& fixtures, double beta, const std::string& out_path, std::ostream& out) {
  std::vector<objectives::LogprobRow> rows;
  try {
    rows = objectives::read_logprob_fixture(fixtures);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (rows.empty()) throw InputError("no rows in " + fixtures);
  const auto report = objectives::dataset_dpo_report(rows, beta);
  nlohmann::ordered_json j;
  j["count"] = report.count;
  j["beta"] = report.beta;
  j["mean_loss"] = report.mean_loss;
  j["mean_implicit_margin"] = report.mean_implicit_margin;
  if (!out_path.empty()) atomic_write(out_path, j.dump(2) + "\n");
  out << "count=" << report.count << " beta=" << format_double(report.beta)
      << " mean_loss=" << format_double(report.mean_loss)
      << " mean_implicit_margin=" << format_double(report.mean_implicit_margin) << "\n";
  return kExitOk;
}

int cmd_make_negatives(const std::string& config, const std::string& prompts_path, const std::string& strategy_name,
                       const std::string& out_path, std::ostream& out, std::ostream& err) {
  const auto cfg = config_or_default(config);
  NegativeStrategy strategy;
  try {
    strategy = negative_strategy_from_string(strategy_name);
  } catch (const DatasetError& e) {
    throw UsageError(e.what());
  }
  std::vector<std::string> prompts;
  try {
    prompts = read_prompt_lines(prompts_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  std::shared_ptr<backends::CallCounters> counters = std::make_shared<backends::CallCounters>();
  std::shared_ptr<backends::ChatClient> llm;
  if (strategy != NegativeStrategy::Fixed) {
    const fs::path out_file(out_path);
    const auto base = out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
    llm = build_chat_client(cfg.datasets.negatives.llm, cfg.seed,
                            std::make_shared<backends::ContentCache>(resolve(base, cfg.cache_dir)), counters);
  }
  std::vector<NegativePromptRecord> records;
  int failures = 0;
  NegativeOptions opts{cfg.datasets.negatives.llm.model, cfg.datasets.negatives.llm.temperature, cfg.seed};
  for (const auto& p : prompts) {
    try {
      records.push_back(make_negative(p, strategy, llm.get(), cfg.datasets.negatives.few_shots, opts));
    } catch (const std::exception& e) {
      ++failures;
      err << "negative prompt for \"" << p.substr(0, 60) << "\" failed: " << e.what() << "\n";
    }
  }
  emit_negative_jsonl(records, out_path);
  out << "negative prompts: " << records.size() << " written, " << failures << " failed (strategy "
      << to_string(strategy) << ")\n";
  return failures == 0 ? kExitOk : kExitBackend;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reward-guided prompt evolution and preference dataset tooling"};
  app.require_subcommand(1);

  EvolveArgs evolve;
  auto* evolve_cmd = app.add_subcommand("evolve", "Evolve each source prompt against the reward backends");
  evolve_cmd->add_option("--config", evolve.config, "Configuration file (JSON); defaults to mock backends");
  evolve_cmd->add_option("--prompts", evolve.prompts, "Source prompts, one per line")->required();
  evolve_cmd->add_option("--out", evolve.out, "Output directory for the manifest, runs and cache")->required();
  evolve_cmd->add_flag("--resume", evolve.resume, "Continue runs recorded in --out");

  std::string sft_runs, sft_out;
  bool sft_require = false;
  auto* sft_cmd = app.add_subcommand("build-sft", "Write fine-tuning pairs from finalized runs");
  sft_cmd->add_option("--runs", sft_runs, "Output directory of `evolve` (or a directory of run directories)")->required();
  sft_cmd->add_option("--out", sft_out, "Destination JSONL")->required();
  sft_cmd->add_flag("--require-threshold", sft_require, "Keep only runs whose final prompt met every threshold");

  std::string dpo_config, dpo_sources, dpo_out;
  int dpo_round = 1;
  auto* dpo_cmd = app.add_subcommand("build-dpo", "Sample, score and write one round of preference triplets");
  dpo_cmd->add_option("--config", dpo_config, "Configuration file (JSON)");
  dpo_cmd->add_option("--sources", dpo_sources, "Source prompts, one per line")->required();
  dpo_cmd->add_option("--round", dpo_round, "1-based DPO round; selects the sampling model")->default_val(1);
  dpo_cmd->add_option("--out", dpo_out, "Destination JSONL (sidecar written to <out>.meta.json)")->required();

  std::string report_run, report_out;
  auto* report_cmd = app.add_subcommand("report", "Per-iteration mean of each metric over new offspring");
  report_cmd->add_option("--run", report_run, "Run directory")->required();
  report_cmd->add_option("--out", report_out, "CSV destination (default <run>/report.csv)");

  std::string loss_fixtures, loss_out;
  double loss_beta = 0.1;
  auto* loss_cmd = app.add_subcommand("dpo-loss", "Mean DPO loss over a log-probability fixture file");
  loss_cmd->add_option("--fixtures", loss_fixtures, "JSONL of chosen/rejected policy and reference log-probs")->required();
  loss_cmd->add_option("--beta", loss_beta, "DPO temperature")->default_val(0.1)->check(CLI::PositiveNumber);
  loss_cmd->add_option("--out", loss_out, "Optional JSON summary destination");

  std::string neg_config, neg_prompts, neg_strategy = "fixed", neg_out;
  auto* neg_cmd = app.add_subcommand("make-negatives", "Negative prompts for refined prompts");
  neg_cmd->add_option("--config", neg_config, "Configuration file (JSON)");
  neg_cmd->add_option("--prompts", neg_prompts, "Refined prompts, one per line")->required();
  neg_cmd->add_option("--strategy", neg_strategy, "fixed | icl | tuned_pair")->default_val("fixed");
  neg_cmd->add_option("--out", neg_out, "Destination JSONL")->required();

  std::vector<std::string> argv_store{"pav"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*evolve_cmd) return cmd_evolve(evolve, out, err);
    if (*sft_cmd) return cmd_build_sft(sft_runs, sft_out, sft_require, out);
    if (*dpo_cmd) return cmd_build_dpo(dpo_config, dpo_sources, dpo_round, dpo_out, out);
    if (*report_cmd) return cmd_report(report_run, report_out, out);
    if (*loss_cmd) return cmd_dpo_loss(loss_fixtures, loss_beta, loss_out, out);
    if (*neg_cmd) return cmd_make_negatives(neg_config, neg_prompts, neg_strategy, neg_out, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const backends::BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace pav::cli
