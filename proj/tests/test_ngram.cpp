#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ctxprobe/ngram_classifier.hpp"
#include "ctxprobe/random.hpp"
#include "toy_corpus.hpp"

using namespace ctxprobe;

using toy::accuracy;
using toy::small_hp;
constexpr auto toy_corpus = toy::corpus;

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
    std::vector<double> z{2, 0, 0};
    auto p = softmax(z);
    EXPECT_NEAR(p[0], 0.7870, 1e-3);
    EXPECT_NEAR(p[1], 0.1065, 1e-3);
    std::vector<double> big{1000, 999, -1000};
    auto q = softmax(big);
    EXPECT_NEAR(q[0] + q[1] + q[2], 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(q[0]));
}

TEST(Argmax, TiesBreakToLowestIndex) {
    std::vector<double> v{1, 3, 3};
    EXPECT_EQ(argmax(v), 1u);
}

TEST(Hyperparams, DefaultsMatchLexicalBaseline) {
    NgramHyperparams hp;
    EXPECT_EQ(hp.max_n, 4u);
    EXPECT_EQ(hp.epochs, 5u);
    EXPECT_DOUBLE_EQ(hp.learning_rate, 0.1);
    EXPECT_EQ(hp.embedding_dim, 100u);
    EXPECT_EQ(hp.bucket_count, 2'000'000u);
}

TEST(Hyperparams, ValidationRejectsNonsense) {
    auto hp = small_hp();
    hp.epochs = 0;
    EXPECT_THROW(hp.validate(), UsageError);
    hp = small_hp();
    hp.learning_rate = -1;
    EXPECT_THROW(hp.validate(), UsageError);
    hp = small_hp();
    hp.bucket_count = 0;
    EXPECT_THROW(hp.validate(), UsageError);
}

TEST(Train, RejectsEmptyOrSingleLabelCorpus) {
    std::vector<LabeledText> empty;
    EXPECT_THROW(train_ngram(empty, Task::DefeasibleNLI, small_hp()), UsageError);
    std::vector<LabeledText> one{{"a b", Label::weakener}, {"c d", Label::weakener}};
    EXPECT_THROW(train_ngram(one, Task::DefeasibleNLI, small_hp()), DataError);
    std::vector<LabeledText> wrong{{"a b", Label::weakener}, {"c d", Label::entailment}};
    EXPECT_THROW(train_ngram(wrong, Task::DefeasibleNLI, small_hp()), DataError);
}

TEST(Train, SeparableToyCorpusReachesHighAccuracy) {
    auto corpus = toy_corpus(200, 9);
    auto m = train_ngram(corpus, Task::DefeasibleNLI, small_hp());
    EXPECT_GE(accuracy(m, corpus), 0.95);
}

TEST(Train, SameSeedGivesIdenticalParameters) {
    auto corpus = toy_corpus(200, 9);
    auto a = train_ngram(corpus, Task::DefeasibleNLI, small_hp(42));
    auto b = train_ngram(corpus, Task::DefeasibleNLI, small_hp(42));
    EXPECT_TRUE(a == b);
    auto c = train_ngram(corpus, Task::DefeasibleNLI, small_hp(43));
    EXPECT_FALSE(a == c);
}

TEST(Train, ParallelWorkersStillLearn) {
    auto corpus = toy_corpus(400, 4);
    auto hp = small_hp();
    hp.workers = 2;
    auto m = train_ngram(corpus, Task::DefeasibleNLI, hp);
    EXPECT_GE(accuracy(m, corpus), 0.9);
}

TEST(Predict, DistributionSumsToOne) {
    auto corpus = toy_corpus(50, 2);
    auto m = train_ngram(corpus, Task::DefeasibleNLI, small_hp());
    Rng rng(1);
    for (const char* text : {"", "zebra", "unseen words only", "river river river zebra"}) {
        auto d = m.predict(text);
        ASSERT_EQ(d.probs.size(), 2u);
        EXPECT_NEAR(d.probs[0] + d.probs[1], 1.0, 1e-6);
    }
}

TEST(Predict, EmptyInputIsUniform) {
    auto m = train_ngram(toy_corpus(50, 2), Task::DefeasibleNLI, small_hp());
    auto d = m.predict("");
    EXPECT_DOUBLE_EQ(d.probs[0], 0.5);
    EXPECT_EQ(d.predicted, Label::weakener);
}

// The hidden layer averages feature rows, so repeating every feature the same
// number of times leaves the prediction unchanged.
TEST(Predict, InvariantToFeatureMultiplicityScaling) {
    auto corpus = toy_corpus(200, 9);
    auto m = train_ngram(corpus, Task::DefeasibleNLI, small_hp());
    for (std::size_t i = 0; i < 40; ++i) {
        auto f = m.features(corpus[i].text);
        auto doubled = f;
        doubled.insert(doubled.end(), f.begin(), f.end());
        auto a = m.predict_features(f), b = m.predict_features(doubled);
        EXPECT_EQ(a.predicted, b.predicted);
        for (std::size_t k = 0; k < a.probs.size(); ++k) EXPECT_NEAR(a.probs[k], b.probs[k], 1e-9);
    }
}

TEST(ModelFile, SaveLoadRoundTripIsBitExact) {
    auto m = train_ngram(toy_corpus(60, 5), Task::DefeasibleNLI, small_hp());
    std::stringstream ss;
    m.save(ss);
    auto back = NgramModel::load(ss);
    EXPECT_TRUE(back == m);
    EXPECT_EQ(back.hyperparams(), m.hyperparams());
    EXPECT_EQ(back.task(), Task::DefeasibleNLI);
}

TEST(ModelFile, RejectsGarbage) {
    std::stringstream ss("definitely not a model");
    EXPECT_THROW(NgramModel::load(ss), DataError);
    auto m = train_ngram(toy_corpus(20, 5), Task::DefeasibleNLI, small_hp());
    std::stringstream full;
    m.save(full);
    std::stringstream truncated(full.str().substr(0, full.str().size() / 2));
    EXPECT_THROW(NgramModel::load(truncated), DataError);
}

TEST(LexicalCorpus, UsesViewText) {
    Instance in{"1", Task::NLI, "A man sits.", "He eats.", std::nullopt, Label::neutral, Split::train};
    std::vector<Instance> v{in};
    EXPECT_EQ(lexical_corpus(v, InputView::Full)[0].text, "A man sits. He eats.");
    EXPECT_EQ(lexical_corpus(v, InputView::Partial)[0].text, "He eats.");
}
