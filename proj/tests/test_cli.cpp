#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "pav/cli.hpp"
#include "pav/config.hpp"
#include "pav/datasets.hpp"
#include "pav/util.hpp"
#include "support.hpp"

using namespace pav;
using namespace pav::testing;
namespace cli = pav::cli;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << content;
}

std::string prompts_file(const TempDir& dir, const std::vector<std::string>& prompts) {
  std::string body;
  for (const auto& p : prompts) body += p + "\n";
  write(dir / "prompts.txt", body);
  return (dir / "prompts.txt").string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsMatchExperimentalSetup) {
  const auto cfg = default_config();
  EXPECT_EQ(cfg.evolution.max_iterations, 4);
  EXPECT_EQ(cfg.evolution.offspring_per_iteration, 3);
  EXPECT_EQ(cfg.evolution.top_n, 3);
  EXPECT_EQ(cfg.datasets.k, 5);
  EXPECT_EQ(cfg.datasets.rounds, 2);
  EXPECT_EQ(cfg.metric_set, MetricId::core_set());
  EXPECT_EQ(cfg.scorers.size(), 3u);
}

TEST(Config, Rejections) {
  auto bad = [](const char* text) {
    EXPECT_THROW((void)config_from_json(nlohmann::json::parse(text)), ConfigError) << text;
  };
  bad(R"({"nonsense": {}})");
  bad(R"({"evolution": {"operator_instruction": "missing"}})");
  bad(R"({"evolution": {"max_iterations": 0}})");
  bad(R"({"backends": {"scorers": [{"name": "a", "metrics": ["VQ","TC"]}, {"name": "b", "metrics": ["TC","DD","TVA","FC","AES","MPS"]}]}})");
  bad(R"({"backends": {"scorers": [{"name": "a", "metrics": ["VQ"]}]}})");
  bad(R"({"backends": {"chat": {"kind": "http"}}})");
  bad(R"({"evolution": {"thresholds": {"per_metric_min": {"VQ": 9.0}}}})");
  bad(R"({"datasets": {"rounds": 0}})");
}

TEST(Config, HashTracksContent) {
  const auto a = config_from_json(nlohmann::json::parse(R"({"seed": 1})"));
  const auto b = config_from_json(nlohmann::json::parse(R"({"seed": 2})"));
  EXPECT_NE(a.hash, b.hash);
  EXPECT_EQ(a.hash, config_from_json(nlohmann::json::parse(R"({"seed": 1})")).hash);
}

TEST(Config, ExtensionMetricSetForImages) {
  const auto cfg = config_from_json(nlohmann::json::parse(
      R"({"metrics": {"set": ["MPS", "CLIP"]},
          "backends": {"scorers": [{"name": "mps", "metrics": ["MPS"]}, {"name": "clip", "metrics": ["CLIP"]}]}})"));
  EXPECT_EQ(cfg.metric_set.size(), 2u);
  const auto set = build_backends(cfg, {});
  EXPECT_EQ(set.evaluator->evaluate_one("a teapot").scores.metric_set().size(), 2u);
}

// ---------------------------------------------------------------------------
// Manifest status

TEST(RunStatusTest, MonotoneTransitions) {
  using cli::RunStatus;
  EXPECT_EQ(cli::advance(RunStatus::Pending, RunStatus::InProgress), RunStatus::InProgress);
  EXPECT_EQ(cli::advance(RunStatus::InProgress, RunStatus::Finalized), RunStatus::Finalized);
  EXPECT_THROW((void)cli::advance(RunStatus::Finalized, RunStatus::Pending), std::logic_error);
  EXPECT_THROW((void)cli::advance(RunStatus::Failed, RunStatus::InProgress), std::logic_error);
  EXPECT_EQ(cli::run_status_from_string(cli::to_string(RunStatus::Failed)), RunStatus::Failed);
}

TEST(RunIdTest, StableAndIndexed) {
  EXPECT_EQ(cli::run_id_for(3, "x"), "run-0003-" + sha256_hex("x").substr(0, 8));
}

// ---------------------------------------------------------------------------
// Commands

TEST(CliEvolve, SpaFixtureFinalNamesRefined1) {
  TempDir dir;
  write(dir / "cfg.json", spa_config_json(0.0, 1).dump());
  const auto prompts = prompts_file(dir, {kSpaOriginal});
  const auto r = run({"evolve", "--config", (dir / "cfg.json").string(), "--prompts", prompts, "--out",
                      (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto run_dir = dir / "out" / "runs" / cli::run_id_for(0, kSpaOriginal);
  const auto final = nlohmann::json::parse(read_file(run_dir / "final.json"));
  EXPECT_EQ(final["text"], kSpaRefined1);
  EXPECT_TRUE(final["threshold_met"].get<bool>());
  EXPECT_NEAR(final["overall"].get<double>(), 20.81, 1e-9);

  const auto rep = run({"report", "--run", run_dir.string()});
  ASSERT_EQ(rep.code, 0) << rep.err;
  const auto pos = rep.out.find("1,VQ,");
  ASSERT_NE(pos, std::string::npos);
  const double mean = std::stod(rep.out.substr(pos + 5));
  EXPECT_NEAR(mean, (2.63 + 2.58 + 2.58) / 3.0, 1e-12);
}

TEST(CliEvolve, ResumeRefusesChangedConfig) {
  TempDir dir;
  const auto prompts = prompts_file(dir, {"a boat on a river"});
  write(dir / "a.json", R"({"seed": 1, "evolution": {"max_iterations": 1}})");
  write(dir / "b.json", R"({"seed": 2, "evolution": {"max_iterations": 1}})");
  const auto out = (dir / "out").string();
  ASSERT_EQ(run({"evolve", "--config", (dir / "a.json").string(), "--prompts", prompts, "--out", out}).code, 0);
  EXPECT_EQ(run({"evolve", "--config", (dir / "a.json").string(), "--prompts", prompts, "--out", out}).code, 3);
  const auto drift = run({"evolve", "--config", (dir / "b.json").string(), "--prompts", prompts, "--out", out, "--resume"});
  EXPECT_EQ(drift.code, 2);
  EXPECT_NE(drift.err.find("configuration changed"), std::string::npos);
}

TEST(CliEvolve, ResumeContinuesInterruptedRun) {
  TempDir dir;
  const auto prompts = prompts_file(dir, {"a boat on a river", "a child flying a kite"});
  const auto out = dir / "out";
  ASSERT_EQ(run({"evolve", "--prompts", prompts, "--out", out.string()}).code, 0);
  const auto reference = read_file(out / "runs" / cli::run_id_for(1, "a child flying a kite") / "final.json");

  // Simulate an interruption: drop the last iteration and the final selection of one run.
  const auto run_dir = out / "runs" / cli::run_id_for(1, "a child flying a kite");
  std::filesystem::remove(run_dir / "final.json");
  std::filesystem::remove(run_dir / "iterations" / "4.jsonl");
  std::filesystem::remove(run_dir / "iterations" / "4.meta.json");
  auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
  manifest["runs"][1]["status"] = "in-progress";
  write(out / "manifest.json", manifest.dump(2));

  const auto r = run({"evolve", "--prompts", prompts, "--out", out.string(), "--resume"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(run_dir / "final.json"), reference);
  EXPECT_NE(r.out.find("backend calls: chat=0 generate=0 score=0"), std::string::npos) << r.out;
}

TEST(CliBuildSft, UnfinalizedRunsAreListed) {
  TempDir dir;
  const auto prompts = prompts_file(dir, {"a boat on a river"});
  ASSERT_EQ(run({"evolve", "--prompts", prompts, "--out", (dir / "out").string()}).code, 0);
  const auto id = cli::run_id_for(0, "a boat on a river");
  std::filesystem::remove(dir / "out" / "runs" / id / "final.json");
  const auto r = run({"build-sft", "--runs", (dir / "out").string(), "--out", (dir / "sft.jsonl").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find(id), std::string::npos);
}

TEST(CliBuildDpo, RoundOutsidePlanIsError) {
  TempDir dir;
  const auto sources = prompts_file(dir, {"a"});
  EXPECT_EQ(run({"build-dpo", "--sources", sources, "--round", "3", "--out", (dir / "d.jsonl").string()}).code, 2);
}

TEST(CliBuildDpo, DeterministicFiles) {
  TempDir dir;
  const auto sources = prompts_file(dir, {"a lantern in the fog", "a dancer on a rooftop", "rain on a window"});
  ASSERT_EQ(run({"build-dpo", "--sources", sources, "--round", "2", "--out", (dir / "a" / "d.jsonl").string()}).code, 0);
  ASSERT_EQ(run({"build-dpo", "--sources", sources, "--round", "2", "--out", (dir / "b" / "d.jsonl").string()}).code, 0);
  EXPECT_EQ(read_file(dir / "a" / "d.jsonl"), read_file(dir / "b" / "d.jsonl"));
  EXPECT_EQ(read_file(dir / "a" / "d.jsonl.meta.json"), read_file(dir / "b" / "d.jsonl.meta.json"));
  const auto meta = nlohmann::json::parse(read_file(dir / "a" / "d.jsonl.meta.json"));
  EXPECT_EQ(meta["summary"]["sample_from"], "dpo-1");
}

TEST(CliReport, EmptyRunDirIsError) {
  TempDir dir;
  std::filesystem::create_directories(dir / "empty");
  EXPECT_EQ(run({"report", "--run", (dir / "empty").string()}).code, 3);
}

TEST(CliDpoLoss, ZeroMarginFixtureIsLn2) {
  TempDir dir;
  write(dir / "lp.jsonl",
        R"({"prompt":"a","chosen_lp":-1,"rejected_lp":-2,"ref_chosen_lp":-1,"ref_rejected_lp":-2})"
        "\n"
        R"({"prompt":"b","chosen_lp":-3,"rejected_lp":-3,"ref_chosen_lp":-3,"ref_rejected_lp":-3})"
        "\n");
  const auto r = run({"dpo-loss", "--fixtures", (dir / "lp.jsonl").string(), "--beta", "0.1", "--out",
                      (dir / "loss.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_file(dir / "loss.json"));
  EXPECT_NEAR(j["mean_loss"].get<double>(), std::log(2.0), 1e-12);
  EXPECT_EQ(j["beta"].get<double>(), 0.1);
}

TEST(CliMakeNegatives, FixedAndIcl) {
  TempDir dir;
  const auto prompts = prompts_file(dir, {"a fox in the snow"});
  ASSERT_EQ(run({"make-negatives", "--prompts", prompts, "--out", (dir / "n.jsonl").string()}).code, 0);
  const auto j = nlohmann::json::parse(read_file(dir / "n.jsonl"));
  EXPECT_EQ(j["strategy"], "fixed");
  EXPECT_EQ(run({"make-negatives", "--prompts", prompts, "--strategy", "icl", "--out",
                 (dir / "i.jsonl").string()}).code,
            0);
  EXPECT_EQ(run({"make-negatives", "--prompts", prompts, "--strategy", "bogus", "--out",
                 (dir / "x.jsonl").string()}).code,
            2);
}

TEST(CliUsage, ExitCodes) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"evolve"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
  TempDir dir;
  write(dir / "bad.json", "{not json");
  const auto prompts = prompts_file(dir, {"x"});
  EXPECT_EQ(run({"evolve", "--config", (dir / "bad.json").string(), "--prompts", prompts, "--out",
                 (dir / "o").string()}).code,
            2);
  EXPECT_EQ(run({"evolve", "--prompts", (dir / "missing.txt").string(), "--out", (dir / "o").string()}).code, 3);
}

TEST(CliEvolve, BackendExhaustionExitCode) {
  TempDir dir;
  write(dir / "cfg.json",
        R"({"backends": {"generation": {"kind": "http", "endpoint": "http://127.0.0.1:1/gen",
            "retry": {"max_attempts": 1}}}})");
  const auto prompts = prompts_file(dir, {"a kite"});
  const auto r = run({"evolve", "--config", (dir / "cfg.json").string(), "--prompts", prompts, "--out",
                      (dir / "o").string()});
  EXPECT_EQ(r.code, 4);
  const auto manifest = nlohmann::json::parse(read_file(dir / "o" / "manifest.json"));
  EXPECT_EQ(manifest["runs"][0]["status"], "failed");
}
