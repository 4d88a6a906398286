#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

#include "pav/config.hpp"
#include "pav/datasets.hpp"
#include "pav/mock_backends.hpp"
#include "pav/templates.hpp"
#include "pav/util.hpp"
#include "support.hpp"

using namespace pav;
using namespace pav::backends;
using namespace pav::testing;

namespace {

EvolutionRun finished_run(const std::string& id, const std::string& source, const std::string& target, bool met) {
  EvolutionRun run;
  run.run_id = id;
  PromptCandidate src;
  src.text = source;
  src.scores = row_vector(kRowOriginal);
  IterationRecord r0;
  r0.candidates = {src};
  run.history.push_back(r0);
  int final_id = 0;
  if (target != source) {
    PromptCandidate c;
    c.id = 1;
    c.text = target;
    c.provenance = {ProvenanceKind::Evolved, 1};
    c.scores = row_vector(kRowRefined1);
    IterationRecord r1;
    r1.iteration = 1;
    r1.candidates = {c};
    run.history.push_back(r1);
    final_id = 1;
  }
  run.final = FinalSelection{final_id, met};
  return run;
}

// Chat double that answers each sample with a text chosen by the request seed.
class SeededTexts final : public ChatClient {
 public:
  explicit SeededTexts(std::vector<std::string> texts) : texts_(std::move(texts)) {}
  ChatResponse chat(const ChatRequest& req) override {
    return {texts_[*req.seed % texts_.size()], "stop", {}, 1};
  }
  [[nodiscard]] std::string fingerprint(const ChatRequest&) const override { return "seeded"; }

 private:
  std::vector<std::string> texts_;
};

class ConstantScorer final : public ScorerClient {
 public:
  nlohmann::json score_raw(const std::string&, const std::string&) override {
    nlohmann::json j;
    for (const auto& m : MetricId::core_set()) j[m.name()] = 2.0;
    return j;
  }
  [[nodiscard]] const ScorerDescriptor& descriptor() const override { return d_; }
  [[nodiscard]] std::string fingerprint() const override { return "constant"; }

 private:
  ScorerDescriptor d_{"constant", MetricId::core_set(), "", identity_scales()};
};

std::string golden_path(const std::string& name) { return std::string(PAV_GOLDEN_DIR) + "/" + name; }

void expect_golden(const std::string& name, const std::string& actual) {
  const auto path = golden_path(name);
  if (std::getenv("PAV_UPDATE_GOLDEN")) atomic_write(path, actual);
  ASSERT_TRUE(std::filesystem::exists(path)) << "missing golden file " << path;
  EXPECT_EQ(read_file(path), actual);
}

}  // namespace

// ---------------------------------------------------------------------------
// SFT

TEST(BuildSft, ThreeThousandRunsGiveThreeThousandPairs) {
  std::vector<EvolutionRun> runs;
  for (int i = 0; i < 3000; ++i) {
    runs.push_back(finished_run("r" + std::to_string(i), "source " + std::to_string(i),
                                "refined " + std::to_string(i), i % 2 == 0));
  }
  const auto build = build_sft_dataset(runs, {});
  EXPECT_EQ(build.pairs.size(), 3000u);
  EXPECT_EQ(build.total, 3000);
  EXPECT_EQ(build_sft_dataset(runs, {true}).pairs.size(), 1500u);
}

TEST(BuildSft, UnchangedAndBelowThresholdExcluded) {
  const std::vector<EvolutionRun> runs{finished_run("same", "a b c", "a b c", true),
                                       finished_run("miss", "x", "x y", false),
                                       finished_run("ok", "p", "p q", true)};
  const auto build = build_sft_dataset(runs, {true});
  ASSERT_EQ(build.pairs.size(), 1u);
  EXPECT_EQ(build.pairs[0].run_id, "ok");
  EXPECT_EQ(build.excluded_unchanged, 1);
  EXPECT_EQ(build.excluded_threshold, 1);
}

TEST(BuildSft, UnfinalizedRunsListed) {
  auto a = finished_run("a", "x", "y", true);
  auto b = finished_run("b", "x", "y", true);
  a.final.reset();
  b.final.reset();
  const std::vector<EvolutionRun> runs{a, b};
  try {
    (void)build_sft_dataset(runs, {});
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("a, b"), std::string::npos);
  }
}

TEST(SftTemplate, UserContentShape) {
  const auto c = sft_user_content("a dog");
  EXPECT_EQ(c.rfind(std::string(templates::kSftPrefix), 0), 0u);
  EXPECT_TRUE(c.ends_with("Original prompt:\na dog\n New prompt:\n"));
  EXPECT_EQ(source_from_user_content(c), "a dog");
  EXPECT_FALSE(source_from_user_content("something else").has_value());
}

TEST(EmitSft, GoldenLine) {
  SftPair p;
  p.source = kSpaOriginal;
  p.target = kSpaRefined1;
  expect_golden("sft_pair.jsonl", sft_jsonl_line(p) + "\n");
  expect_golden("sft_user_content.txt", sft_user_content(kSpaOriginal));
}

TEST(EmitSft, RoundTripAndDeterminism) {
  TempDir dir;
  std::vector<SftPair> pairs;
  for (int i = 0; i < 5; ++i) {
    SftPair p;
    p.source = "source \"quoted\" " + std::to_string(i);
    p.target = "target\nwith newline " + std::to_string(i);
    pairs.push_back(p);
  }
  emit_sft_jsonl(pairs, dir / "a.jsonl");
  emit_sft_jsonl(pairs, dir / "b.jsonl");
  EXPECT_EQ(read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));
  EXPECT_EQ(read_file(dir / "a.jsonl.meta.json"), read_file(dir / "b.jsonl.meta.json"));
  const auto back = read_sft_jsonl(dir / "a.jsonl");
  ASSERT_EQ(back.size(), pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(back[i].source, pairs[i].source);
    EXPECT_EQ(back[i].target, pairs[i].target);
  }
  const auto meta = nlohmann::json::parse(read_file(dir / "a.jsonl.meta.json"));
  EXPECT_EQ(meta["trainer"]["epochs"], 14);
  EXPECT_EQ(meta["trainer"]["batch_size"], 16);
}

TEST(EmitSft, EmptyListGivesEmptyFile) {
  TempDir dir;
  emit_sft_jsonl({}, dir / "empty.jsonl");
  EXPECT_TRUE(std::filesystem::exists(dir / "empty.jsonl"));
  EXPECT_EQ(read_file(dir / "empty.jsonl"), "");
}

// ---------------------------------------------------------------------------
// Preference triplets

TEST(ChoosePair, ExhaustiveOracle) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> q(0, 4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + rng() % 7;
    std::vector<ScoredSample> samples;
    for (std::size_t i = 0; i < k; ++i) {
      Row row{};
      for (auto& v : row) v = q(rng);
      samples.push_back({"s" + std::to_string(i), row_vector(row)});
    }
    std::size_t best = 0, worst = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (overall(samples[i].scores) > overall(samples[best].scores)) best = i;
      if (overall(samples[i].scores) < overall(samples[worst].scores)) worst = i;
    }
    const auto pick = choose_preference_pair(samples, 0.05);
    if (overall(samples[best].scores) - overall(samples[worst].scores) < 0.05) {
      EXPECT_FALSE(pick.has_value());
    } else {
      ASSERT_TRUE(pick.has_value());
      EXPECT_EQ(pick->first, best);
      EXPECT_EQ(pick->second, worst);
    }
  }
}

TEST(BuildDpoRound, MatchesBruteForceWithSyntheticScorer) {
  auto j = nlohmann::json::object();
  j["seed"] = 12;
  const auto cfg = config_from_json(j);
  const auto set = build_backends(cfg, {});
  MockChatClient refiner(MockChatMode::Refiner, 12);
  const std::vector<std::string> sources{"a kite over a beach", "a bakery at dawn", "a robot in a garden"};
  DpoRoundOptions opts;
  opts.seed = 12;
  const auto build = build_dpo_round(sources, refiner, *set.evaluator, opts);
  EXPECT_EQ(build.triplets.size() + build.skipped.size(), sources.size());
  for (const auto& t : build.triplets) {
    EXPECT_GE(t.chosen_overall - t.rejected_overall, opts.margin);
    EXPECT_NE(t.chosen, t.rejected);
    EXPECT_EQ(t.chosen_overall, overall(set.evaluator->evaluate_one(t.chosen).scores));
    EXPECT_EQ(t.rejected_overall, overall(set.evaluator->evaluate_one(t.rejected).scores));
  }
}

TEST(BuildDpoRound, IdenticalScoresSkipped) {
  EvaluationBackends eb;
  eb.generation = std::make_shared<MockGenerationClient>();
  eb.scorers = {std::make_shared<ConstantScorer>()};
  eb.scales = identity_scales();
  const auto evaluator = std::make_shared<Evaluator>(eb);
  SeededTexts model({"one", "two", "three", "four", "five", "six", "seven"});
  const std::vector<std::string> sources{"source"};
  const auto build = build_dpo_round(sources, model, *evaluator, {});
  EXPECT_TRUE(build.triplets.empty());
  ASSERT_EQ(build.skipped.size(), 1u);
  EXPECT_NE(build.skipped[0].reason.find("margin"), std::string::npos);
}

TEST(BuildDpoRound, TooFewDistinctSamplesSkipped) {
  const auto set = build_backends(default_config(), {});
  MockChatClient canned(MockChatMode::Canned, 0);
  canned.set_canned("always the same");
  const std::vector<std::string> sources{"source"};
  const auto build = build_dpo_round(sources, canned, *set.evaluator, {});
  ASSERT_EQ(build.skipped.size(), 1u);
  EXPECT_NE(build.skipped[0].reason.find("distinct"), std::string::npos);
}

TEST(PlanDpo, Rounds) {
  const auto two = plan_dpo_iterations(2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].sample_from, "sft");
  EXPECT_EQ(two[1].sample_from, "dpo-1");
  EXPECT_EQ(plan_dpo_iterations(1).size(), 1u);
  EXPECT_THROW((void)plan_dpo_iterations(0), DatasetError);
}

TEST(EmitDpo, DeterministicAndReadable) {
  TempDir dir;
  DpoTriplet t;
  t.prompt = "p";
  t.chosen = "c";
  t.rejected = "r";
  t.chosen_scores = row_vector(kRowRefined1);
  t.rejected_scores = row_vector(kRowOriginal);
  const std::vector<DpoTriplet> ts{t};
  emit_dpo_jsonl(ts, dir / "a.jsonl");
  emit_dpo_jsonl(ts, dir / "b.jsonl");
  EXPECT_EQ(read_file(dir / "a.jsonl"), R"({"prompt":"p","chosen":"c","rejected":"r"})"
                                        "\n");
  EXPECT_EQ(read_file(dir / "a.jsonl.meta.json"), read_file(dir / "b.jsonl.meta.json"));
  EXPECT_EQ(read_dpo_jsonl(dir / "a.jsonl").size(), 1u);
}

// ---------------------------------------------------------------------------
// Negative prompts

TEST(Negatives, FixedIsVerbatim) {
  for (const auto* p : {"a cat", "a city at night"}) {
    const auto r = make_negative(p, NegativeStrategy::Fixed, nullptr, {});
    EXPECT_EQ(r.negative, templates::kFixedNegativePrompt);
  }
  EXPECT_TRUE(std::string(templates::kFixedNegativePrompt).starts_with("The video is not of a high quality"));
}

TEST(Negatives, IclReturnsValidatedModelOutput) {
  MockChatClient llm(MockChatMode::Canned, 0);
  llm.set_canned("blurry, low resolution, watermark, text");
  const auto shots = default_negative_few_shots();
  const auto r = make_negative("a red car on a wet road", NegativeStrategy::Icl, &llm, shots);
  EXPECT_EQ(r.negative, "blurry, low resolution, watermark, text");
}

TEST(Negatives, InvalidOutputRetriedThenSurfaced) {
  MockChatClient llm(MockChatMode::Canned, 0);
  llm.set_canned("no commas here at all");
  const auto shots = default_negative_few_shots();
  EXPECT_THROW((void)make_negative("a red car", NegativeStrategy::Icl, &llm, shots), DatasetError);
  EXPECT_THROW((void)make_negative("a red car", NegativeStrategy::Icl, nullptr, shots), DatasetError);
}

TEST(Negatives, AdaptiveExampleHasNoSubjectRestatement) {
  MockChatClient llm(MockChatMode::Canned, 0);
  llm.set_canned(std::string(templates::kAdaptiveExampleNegative));
  const auto shots = default_negative_few_shots();
  const auto r = make_negative(templates::kAdaptiveExamplePositive, NegativeStrategy::Icl, &llm, shots);
  EXPECT_FALSE(negative_violation(r.negative, templates::kAdaptiveExamplePositive).has_value());
  // Restating the opening clause is caught.
  const std::string restated = "ugly, blurry. As the sun gently peeks through the vibrant window curtains";
  EXPECT_TRUE(negative_violation(restated, templates::kAdaptiveExamplePositive).has_value());
}

TEST(Negatives, RequestContainsFewShots) {
  const auto shots = default_negative_few_shots();
  const auto req = render_negative_request("a lighthouse", shots);
  EXPECT_NE(req.find(std::string(templates::kAdaptiveExampleNegative)), std::string::npos);
  EXPECT_NE(req.find("a lighthouse"), std::string::npos);
}

TEST(Negatives, TunedPairLinesAreDialogs) {
  NegativePromptRecord r{"pos", "neg, more", NegativeStrategy::TunedPair};
  const auto j = nlohmann::json::parse(negative_pair_jsonl_line(r));
  EXPECT_EQ(j["dialog"][0]["role"], "user");
  EXPECT_EQ(j["dialog"][1]["content"], "neg, more");
}
