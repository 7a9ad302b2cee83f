#include <gtest/gtest.h>

#include "pipeline_run.hpp"
#include "support.hpp"

using namespace ctxprobe;
using pipeline_run::describe;
using pipeline_run::run;
using testing_support::fixture;
using testing_support::ScratchDir;
using testing_support::slurp;

TEST(Cli, NoSubcommandIsUsageError) {
    EXPECT_EQ(run({}).status, kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).status, kExitUsage);
}

TEST(Cli, HelpExitsZero) {
    auto s = run({"--help"});
    EXPECT_EQ(s.status, kExitOk);
    EXPECT_NE(s.out.find("train-bow"), std::string::npos);
}

TEST(Cli, KappaOnHandFixturePrintsPointSix) {
    auto s = run({"kappa", "--task", "nli", "--pairs", fixture("kappa_pairs.csv")});
    ASSERT_EQ(s.status, kExitOk) << describe(s);
    EXPECT_NE(s.out.find("kappa=0.6000"), std::string::npos) << s.out;
}

TEST(Cli, EvaluateReproducesHandCountedMatrix) {
    ScratchDir dir("cli-eval");
    auto s = run({"evaluate", "--task", "nli", "--edits", fixture("edits60.jsonl"), "--predictions",
                  fixture("edits60_predictions.jsonl"), "--out", dir / "eval"});
    ASSERT_EQ(s.status, kExitOk) << describe(s);
    EXPECT_EQ(slurp(dir / "eval/stratified_neural_full.csv"), slurp(fixture("edits60_expected.csv")));
    EXPECT_TRUE(std::filesystem::exists(dir / "eval.manifest.json"));
}

TEST(Cli, IngestRawSnliReportsSplitsAndMismatch) {
    ScratchDir dir("cli-ingest");
    std::vector<std::string> base{"ingest", "--task", "nli", "--format", "snli",
                                  "--train", fixture("snli_raw_train.jsonl"), "--valid", fixture("snli_raw_valid.jsonl"),
                                  "--test", fixture("snli_raw_test.jsonl"), "--expect", "snli",
                                  "--report", dir / "splits.csv"};
    auto s = run(base);
    ASSERT_EQ(s.status, kExitOk) << describe(s);
    EXPECT_EQ(slurp(dir / "splits.csv"),
              "split,expected,actual,no_consensus,pass\n"
              "train,550152,12,2,fail\n"
              "valid,10000,5,0,fail\n"
              "test,10000,5,0,fail\n");
    base.push_back("--require-match");
    EXPECT_EQ(run(base).status, kExitData);
}

TEST(Cli, IngestRawWithoutSplitIsUsageError) {
    auto s = run({"ingest", "--task", "nli", "--format", "snli", "--input", fixture("snli_raw_train.jsonl")});
    EXPECT_EQ(s.status, kExitUsage);
}

TEST(Cli, TrainWithoutSeedIsUsageError) {
    ScratchDir dir("cli-train");
    auto s = run({"train-bow", "--task", "nli", "--train", fixture("nli_small.jsonl"), "--out", dir / "m.bin"});
    EXPECT_EQ(s.status, kExitUsage);
    EXPECT_FALSE(std::filesystem::exists(dir / "m.bin"));
}

TEST(Cli, MissingInputFileIsUsageError) {
    EXPECT_EQ(run({"kappa", "--task", "nli", "--pairs", "/nonexistent/pairs.csv"}).status, kExitUsage);
}

TEST(Cli, MalformedPredictionsAreDataError) {
    ScratchDir dir("cli-bad");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << "{\"instance_id\":\"a\"}\n";
    }
    auto s = run({"calibrate", "--task", "nli", "--valid", dir / "bad.jsonl", "--out", dir / "t.json"});
    EXPECT_EQ(s.status, kExitData) << describe(s);
}

TEST(Cli, ConfigFileSuppliesOptions) {
    ScratchDir dir("cli-config");
    {
        std::ofstream cfg(dir / "kappa.toml");
        cfg << "[kappa]\ntask = \"nli\"\npairs = \"" << fixture("kappa_pairs.csv") << "\"\n";
    }
    auto s = run({"--config", dir / "kappa.toml", "kappa"});
    ASSERT_EQ(s.status, kExitOk) << describe(s);
    EXPECT_NE(s.out.find("kappa=0.6000"), std::string::npos);
}

TEST(Cli, RegistryFlowThroughSampleImportAndKappa) {
    ScratchDir dir("cli-registry");
    std::ifstream in(fixture("nli_small.jsonl"));
    Dataset ds = parse_dataset(in, Task::NLI).dataset;
    CandidateSet c{"nli_small", {}};
    for (const auto& i : ds.instances()) c.members[i.id] = {true, false};
    json members = json::array();
    for (const auto& [id, p] : c.members)
        members.push_back({{"id", id}, {"partial_neural_correct", true}, {"bow_full_correct", false}});
    {
        std::ofstream out(dir / "cand.json");
        out << json{{"dataset", "nli_small"}, {"members", members}}.dump();
    }
    auto s = run({"sample-edits", "--task", "nli", "--dataset", fixture("nli_small.jsonl"), "--candidates",
                  dir / "cand.json", "--quota", "1", "--seed", "3", "--registry", dir / "reg.jsonl", "--out",
                  dir / "assign.jsonl"});
    ASSERT_EQ(s.status, kExitOk) << describe(s);

    EditRegistry reg(dir / "reg.jsonl");
    ASSERT_EQ(reg.assignments().size(), 6u);
    for (const auto& a : reg.assignments()) {
        auto e = reg.register_edit(a.assignment_id, "Edited: " + a.instance.premise, "ed");
        reg.add_validation(e.edit_id, "v", a.target, "t");
    }
    auto k = run({"kappa", "--registry", dir / "reg.jsonl"});
    ASSERT_EQ(k.status, kExitOk) << describe(k);
    EXPECT_NE(k.out.find("nli: kappa=1.0000"), std::string::npos) << k.out;

    auto imp = run({"import-edits", "--registry", dir / "reg.jsonl", "--out", dir / "edited.jsonl"});
    ASSERT_EQ(imp.status, kExitOk) << describe(imp);
    std::ifstream ein(dir / "edited.jsonl");
    EXPECT_EQ(read_edited_set(ein).size(), 6u);
}

TEST(Cli, FullPipelineAndStaleArtifactDetection) {
    ScratchDir dir("cli-e2e");
    auto steps = pipeline_run::full_pipeline(CTXPROBE_FIXTURE_DIR, dir.path().string());
    ASSERT_EQ(steps.back().status, kExitOk) << describe(steps.back());
    ASSERT_EQ(steps.size(), 13u);
    const std::string report = slurp(dir / "report.md");
    EXPECT_NE(report.find("stratified_neural_full.csv"), std::string::npos);
    EXPECT_EQ(report.find(dir.path().string()), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "analysis/ternary_pre_entailment_to_neutral.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "analysis/post_edit_shift.svg"));

    {
        std::ofstream touch(dir / "calibration/temperatures.json", std::ios::app);
        touch << " ";
    }
    auto stale = run({"report", "--artifacts", dir.path().string(), "--out", dir / "report2.md"});
    EXPECT_EQ(stale.status, kExitData);
    EXPECT_NE(stale.err.find("temperatures.json"), std::string::npos);
    EXPECT_FALSE(std::filesystem::exists(dir / "report2.md"));
}
