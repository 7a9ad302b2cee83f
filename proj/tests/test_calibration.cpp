#include <gtest/gtest.h>

#include <sstream>

#include "ctxprobe/calibration.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "support.hpp"

using namespace ctxprobe;

namespace {

PredictionRecord rec(std::vector<double> z, Label gold, std::string id = "x") {
    return {std::move(id), "m", InputView::Full, std::move(z), gold};
}

}  // namespace

TEST(ApplyTemperature, UnitTemperatureIsPlainSoftmax) {
    auto p = apply_temperature(rec({2, 0, 0}, Label::entailment), Temperature(1.0));
    EXPECT_NEAR(p[0], 0.7870, 1e-3);
    EXPECT_NEAR(p[1], 0.1065, 1e-3);
    EXPECT_NEAR(p[2], 0.1065, 1e-3);
}

TEST(ApplyTemperature, LargeTemperatureApproachesUniform) {
    auto p = apply_temperature(rec({5, -3, 1}, Label::entailment), Temperature(1e6));
    for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-3);
}

TEST(ApplyTemperature, RejectsNonPositive) {
    EXPECT_THROW(Temperature(0.0), UsageError);
    EXPECT_THROW(Temperature(-1.0), UsageError);
    EXPECT_THROW(Temperature(std::numeric_limits<double>::infinity()), UsageError);
}

TEST(ConfidenceIn, PeakedLogits) {
    EXPECT_NEAR(confidence_in(rec({10, 0, 0}, Label::entailment), Temperature(1.0), Label::entailment), 0.99991,
                1e-5);
}

TEST(ConfidenceIn, UniformLogitsGiveOneOverK) {
    EXPECT_EQ(confidence_in(rec({0.5, 0.5, 0.5}, Label::neutral), Temperature(2.0), Label::neutral), 1.0 / 3.0);
    PredictionRecord d{"d", "m", InputView::Full, {1, 1}, Label::weakener};
    EXPECT_EQ(confidence_in(d, Temperature(1.0), Label::strengthener), 0.5);
}

TEST(ConfidenceIn, AgreesWithApplyTemperature) {
    for (const auto& r : synthetic::random_records(200, 3)) {
        auto p = apply_temperature(r, Temperature(1.0));
        EXPECT_DOUBLE_EQ(confidence_in(r, Temperature(1.0), r.gold), p[label_index(r.gold)]);
    }
}

TEST(ConfidenceIn, RejectsLabelOfOtherTask) {
    EXPECT_THROW(confidence_in(rec({1, 2, 3}, Label::neutral), Temperature(1.0), Label::weakener), UsageError);
}

TEST(ApplyTemperature, ArgmaxInvariantUnderAnyTemperature) {
    Rng rng(17);
    for (const auto& r : synthetic::random_records(2000, 5)) {
        Temperature t(rng.uniform(0.05, 10.0));
        auto p = apply_temperature(r, t);
        EXPECT_EQ(argmax(p), argmax(r.logits));
    }
}

TEST(FitTemperature, RecoversScaleOfSyntheticFamilies) {
    for (auto [scale, tol] : {std::pair{1.0, 0.05}, std::pair{2.0, 0.1}, std::pair{0.5, 0.05}}) {
        auto recs = synthetic::calibration_family(5000, scale, 100 + static_cast<std::uint64_t>(scale * 10));
        auto fit = fit_temperature(recs);
        const double grid = oracle::grid_search_tau(synthetic::logits_of(recs), synthetic::gold_of(recs), 0.25, 4.0,
                                                    0.01);
        EXPECT_NEAR(fit.tau.value(), grid, 0.01) << "scale " << scale;
        EXPECT_NEAR(fit.tau.value(), scale, tol) << "scale " << scale;
        EXPECT_LE(fit.nll, fit.nll_at_one + 1e-12);
        EXPECT_FALSE(fit.degenerate);
    }
}

TEST(FitTemperature, NeverWorseThanUnitTemperature) {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        Rng rng(seed);
        auto recs = synthetic::random_records(1 + rng.below(60), seed);
        auto fit = fit_temperature(recs);
        EXPECT_LE(fit.nll, mean_nll(recs, 1.0) + 1e-12) << "seed " << seed;
        EXPECT_GE(fit.tau.value(), 0.05);
        EXPECT_LE(fit.tau.value(), 10.0);
    }
}

TEST(FitTemperature, CorrectSingletonGoesToLowerBound) {
    std::vector<PredictionRecord> one{rec({3, 1, 0}, Label::entailment)};
    auto fit = fit_temperature(one);
    EXPECT_EQ(fit.tau.value(), 0.05);
    FitOptions opt;
    opt.bounds = {0.2, 5.0};
    EXPECT_EQ(fit_temperature(one, opt).tau.value(), 0.2);
}

TEST(FitTemperature, WrongSingletonGoesToUpperBound) {
    std::vector<PredictionRecord> one{rec({3, 1, 0}, Label::contradiction)};
    EXPECT_EQ(fit_temperature(one).tau.value(), 10.0);
}

TEST(FitTemperature, DegenerateInputReturnsUnitWithFlag) {
    std::vector<PredictionRecord> recs{rec({1, 1, 1}, Label::entailment), rec({0, 0, 0}, Label::neutral, "y")};
    auto fit = fit_temperature(recs);
    EXPECT_TRUE(fit.degenerate);
    EXPECT_EQ(fit.tau.value(), 1.0);
}

TEST(FitTemperature, ErrorsOnEmptyOrBadBounds) {
    std::vector<PredictionRecord> none;
    EXPECT_THROW(fit_temperature(none), UsageError);
    std::vector<PredictionRecord> one{rec({1, 0, 0}, Label::entailment)};
    FitOptions opt;
    opt.bounds = {2.0, 1.0};
    EXPECT_THROW(fit_temperature(one, opt), UsageError);
}

TEST(FitPerModelView, OneTemperaturePerGroup) {
    auto a = synthetic::calibration_family(3000, 2.0, 1, "sharp");
    auto b = synthetic::calibration_family(3000, 0.5, 2, "soft");
    for (auto& r : b) r.view = InputView::Partial;
    std::vector<PredictionRecord> all = a;
    all.insert(all.end(), b.begin(), b.end());
    auto fits = fit_per_model_view(all);
    ASSERT_EQ(fits.size(), 2u);
    EXPECT_NEAR(fits.at({"sharp", InputView::Full}).tau.value(), 2.0, 0.1);
    EXPECT_NEAR(fits.at({"soft", InputView::Partial}).tau.value(), 0.5, 0.05);
}

TEST(PredictionJsonl, RoundTripWithMetaHeader) {
    auto recs = synthetic::random_records(5, 9);
    std::stringstream ss;
    write_predictions(ss, recs, Task::NLI, json{{"model_id", "random"}});
    auto file = read_predictions(ss, Task::NLI);
    ASSERT_EQ(file.records.size(), 5u);
    EXPECT_EQ(file.meta.at("model_id"), "random");
    EXPECT_EQ(file.meta.at("label_order"), label_order_json(Task::NLI));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(file.records[i].instance_id, recs[i].instance_id);
        EXPECT_EQ(file.records[i].logits, recs[i].logits);
        EXPECT_EQ(file.records[i].gold, recs[i].gold);
    }
}

TEST(PredictionJsonl, RejectsWrongArityAndForeignOrder) {
    std::istringstream bad_arity(R"({"instance_id":"a","model_id":"m","view":"full","logits":[1,2],"gold":"neutral"})");
    EXPECT_THROW(read_predictions(bad_arity, Task::NLI), DataError);
    std::istringstream order(R"({"meta":{"label_order":["contradiction","neutral","entailment"]}})");
    EXPECT_THROW(read_predictions(order, Task::NLI), DataError);
}

TEST(PredictionJsonl, LenientModeCollectsIssues) {
    std::istringstream in(
        "{\"instance_id\":\"a\",\"model_id\":\"m\",\"view\":\"full\",\"logits\":[1,2,3],\"gold\":\"neutral\"}\n"
        "garbage\n"
        "{\"instance_id\":\"b\",\"model_id\":\"m\",\"view\":\"sideways\",\"logits\":[1,2,3],\"gold\":\"neutral\"}\n");
    auto f = read_predictions(in, Task::NLI, false);
    EXPECT_EQ(f.records.size(), 1u);
    ASSERT_EQ(f.issues.size(), 2u);
    EXPECT_EQ(f.issues[0].line, 2u);
}

TEST(PredictionJsonl, FixtureFilesParseWithoutSkips) {
    for (const char* name : {"nli_partial_valid.jsonl", "nli_partial_test.jsonl", "nli_full_valid.jsonl",
                             "nli_full_test.jsonl", "edits60_predictions.jsonl"}) {
        std::ifstream in(testing_support::fixture(name));
        auto f = read_predictions(in, Task::NLI, false);
        EXPECT_TRUE(f.issues.empty()) << name;
        EXPECT_FALSE(f.records.empty()) << name;
    }
}
