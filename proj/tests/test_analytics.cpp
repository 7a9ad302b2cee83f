#include <gtest/gtest.h>

#include <sstream>

#include "ctxprobe/analytics.hpp"
#include "ctxprobe/plot_output.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace ctxprobe;
using testing_support::fixture;

namespace {

PredictionRecord rec(const std::string& id, std::vector<double> z, Label gold, InputView view = InputView::Full) {
    return {id, "m", view, std::move(z), gold};
}

// Logits whose softmax puts probability p on index `at` and splits the rest
// evenly over the other two classes.
std::vector<double> logits_for(double p, std::size_t at) {
    std::vector<double> z(3, std::log((1 - p) / 2));
    z[at] = std::log(p);
    return z;
}

EditedRecord edit(const std::string& id, Label l, Label target) {
    return {id, "orig-" + id, Task::NLI, "P'", "H", std::nullopt, TextField::premise, l, target, EditStatus::validated};
}

std::vector<EditedRecord> load_edits60() {
    std::ifstream in(fixture("edits60.jsonl"));
    return read_edited_set(in);
}

std::vector<PredictionRecord> load_preds(const std::string& name) {
    std::ifstream in(fixture(name));
    return read_predictions(in, Task::NLI).records;
}

}  // namespace

TEST(Regions, DiagonalAndQuadrantBoundaries) {
    EXPECT_EQ(classify_diagonal(0.2, 0.2), DiagonalRegion::on_diagonal);
    EXPECT_EQ(classify_diagonal(0.2, 0.2 + 1e-13), DiagonalRegion::on_diagonal);
    EXPECT_EQ(classify_diagonal(0.2, 0.3), DiagonalRegion::above_diagonal);
    EXPECT_EQ(classify_diagonal(0.3, 0.2), DiagonalRegion::below_diagonal);
    EXPECT_EQ(classify_quadrant(0.5, 0.5), Quadrant::high_x_high_y);
    EXPECT_EQ(classify_quadrant(0.49, 0.5), Quadrant::low_x_high_y);
    EXPECT_EQ(classify_quadrant(0.9, 0.05), Quadrant::high_x_low_y);
    EXPECT_THROW(make_shift_point("x", 1.2, 0.1), DataError);
}

TEST(ConfidenceShift, UniformPartialAndPeakedFullIsAboveDiagonal) {
    std::vector<PredictionRecord> p{rec("a", {0, 0, 0}, Label::neutral, InputView::Partial)};
    std::vector<PredictionRecord> f{rec("a", {0, 30, 0}, Label::neutral)};
    auto s = confidence_shift_points(p, f);
    ASSERT_EQ(s.points.size(), 1u);
    EXPECT_DOUBLE_EQ(s.points[0].x, 1.0 / 3.0);
    EXPECT_NEAR(s.points[0].y, 1.0, 1e-9);
    EXPECT_EQ(s.points[0].region, DiagonalRegion::above_diagonal);
    EXPECT_EQ(s.source, ProbabilitySource::raw_softmax);
}

TEST(ConfidenceShift, IdenticalViewsAreOnDiagonal) {
    auto recs = synthetic::random_records(50, 4);
    auto s = confidence_shift_points(recs, recs);
    EXPECT_EQ(s.summary().regions.at(DiagonalRegion::on_diagonal), 50u);
}

TEST(ConfidenceShift, StrictlyMoreConfidentFullIsAllAbove) {
    std::vector<PredictionRecord> p, f;
    for (int i = 0; i < 20; ++i) {
        Label g = label_at(Task::NLI, i % 3);
        p.push_back(rec("i" + std::to_string(i), logits_for(0.2 + 0.02 * i, label_index(g)), g, InputView::Partial));
        f.push_back(rec("i" + std::to_string(i), logits_for(0.25 + 0.02 * i + 0.1, label_index(g)), g));
    }
    auto s = confidence_shift_points(p, f);
    EXPECT_DOUBLE_EQ(s.summary().fraction(DiagonalRegion::above_diagonal), 1.0);
}

TEST(ConfidenceShift, CalibrationChangesCoordinatesAndSource) {
    std::vector<PredictionRecord> p{rec("a", {2, 0, 0}, Label::entailment, InputView::Partial)};
    std::vector<PredictionRecord> f{rec("a", {2, 0, 0}, Label::entailment)};
    auto s = confidence_shift_points(p, f, Temperature(2.0), Temperature(1.0));
    EXPECT_EQ(s.source, ProbabilitySource::calibrated);
    EXPECT_LT(s.points[0].x, s.points[0].y);
}

TEST(ConfidenceShift, MissingCounterpartIsAnError) {
    std::vector<PredictionRecord> p{rec("a", {1, 0, 0}, Label::entailment)};
    std::vector<PredictionRecord> f{rec("b", {1, 0, 0}, Label::entailment)};
    EXPECT_THROW(confidence_shift_points(p, f), DataError);
}

TEST(PostEditShift, FlipIsIdealAndIgnoredEditIsArtifactOverride) {
    std::vector<EditedRecord> edits{edit("flip", Label::entailment, Label::contradiction),
                                    edit("stuck", Label::entailment, Label::contradiction)};
    std::vector<PredictionRecord> pre{rec("flip", logits_for(0.9, 0), Label::entailment),
                                      rec("orig-stuck", logits_for(0.9, 0), Label::entailment)};
    std::vector<PredictionRecord> post{rec("flip", logits_for(0.05, 0), Label::contradiction),
                                       rec("stuck", logits_for(0.9, 0), Label::contradiction)};
    auto s = post_edit_shift_points(edits, pre, post);
    ASSERT_EQ(s.points.size(), 2u);
    EXPECT_NEAR(s.points[0].x, 0.9, 1e-12);
    EXPECT_NEAR(s.points[0].y, 0.05, 1e-12);
    EXPECT_EQ(s.points[0].region, DiagonalRegion::below_diagonal);
    EXPECT_EQ(s.points[0].quadrant, Quadrant::high_x_low_y);
    EXPECT_EQ(s.points[1].region, DiagonalRegion::on_diagonal);
    EXPECT_EQ(s.points[1].quadrant, Quadrant::high_x_high_y);
}

TEST(PostEditShift, TenHandSetPairs) {
    // (pre, post) confidence in the original label.
    const std::vector<std::pair<double, double>> xy{{0.9, 0.1}, {0.8, 0.2},  {0.7, 0.6}, {0.6, 0.9}, {0.3, 0.3},
                                                    {0.2, 0.1}, {0.95, 0.85}, {0.4, 0.7}, {0.52, 0.52}, {0.55, 0.45}};
    std::vector<EditedRecord> edits;
    std::vector<PredictionRecord> pre, post;
    for (std::size_t i = 0; i < xy.size(); ++i) {
        std::string id = "e" + std::to_string(i);
        edits.push_back(edit(id, Label::neutral, Label::entailment));
        pre.push_back(rec(id, logits_for(xy[i].first, 1), Label::neutral));
        post.push_back(rec(id, logits_for(xy[i].second, 1), Label::entailment));
    }
    auto sum = post_edit_shift_points(edits, pre, post).summary();
    // Hand tally. Below: 0.9/0.1, 0.8/0.2, 0.7/0.6, 0.2/0.1, 0.95/0.85, 0.55/0.45.
    // Above: 0.6/0.9, 0.4/0.7. On: 0.3/0.3, 0.52/0.52.
    EXPECT_EQ(sum.regions.at(DiagonalRegion::below_diagonal), 6u);
    EXPECT_EQ(sum.regions.at(DiagonalRegion::above_diagonal), 2u);
    EXPECT_EQ(sum.regions.at(DiagonalRegion::on_diagonal), 2u);
    // High x, low y: 0.9/0.1, 0.8/0.2, 0.55/0.45. High x, high y: 0.7/0.6, 0.6/0.9,
    // 0.95/0.85, 0.52/0.52. Low x, high y: 0.4/0.7. Low x, low y: 0.3/0.3, 0.2/0.1.
    EXPECT_EQ(sum.quadrants.at(Quadrant::high_x_low_y), 3u);
    EXPECT_EQ(sum.quadrants.at(Quadrant::high_x_high_y), 4u);
    EXPECT_EQ(sum.quadrants.at(Quadrant::low_x_high_y), 1u);
    EXPECT_EQ(sum.quadrants.at(Quadrant::low_x_low_y), 2u);
}

TEST(StratifiedAccuracy, AllPredictionsEqualTargetGivesOnes) {
    auto edits = load_edits60();
    std::vector<PredictionRecord> preds;
    for (const auto& e : edits) {
        std::vector<double> z(3, 0);
        z[label_index(e.target_label)] = 1;
        preds.push_back(rec(e.edit_id, z, e.target_label));
    }
    auto m = stratified_accuracy(preds, edits);
    for (Label l : kNliLabels)
        for (Label t : kNliLabels)
            if (l != t) EXPECT_EQ(m.at(l, t).accuracy(), 1.0);
            else EXPECT_EQ(m.at(l, t).total, 0u);
}

TEST(StratifiedAccuracy, SixtyEditFixtureMatchesHandCount) {
    auto m = stratified_accuracy(load_preds("edits60_predictions.jsonl"), load_edits60());
    std::ostringstream csv;
    write_csv(csv, m);
    EXPECT_EQ(csv.str(), testing_support::slurp(fixture("edits60_expected.csv")));
    EXPECT_EQ(m.at(Label::neutral, Label::entailment), (CellCount{4, 10}));
}

TEST(StratifiedAccuracy, MissingPredictionIsAnError) {
    auto edits = load_edits60();
    auto preds = load_preds("edits60_predictions.jsonl");
    preds.pop_back();
    EXPECT_THROW(stratified_accuracy(preds, edits), DataError);
}

TEST(SummaryAccuracy, GroupsByModelAndView) {
    std::vector<PredictionRecord> recs{rec("a", {1, 0, 0}, Label::entailment), rec("b", {0, 1, 0}, Label::neutral),
                                       rec("a", {0, 1, 0}, Label::entailment, InputView::Partial)};
    auto rows = summary_accuracy(recs);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].view, InputView::Partial);
    EXPECT_EQ(rows[0].accuracy(), 0.0);
    EXPECT_EQ(rows[1].accuracy(), 1.0);
}

TEST(Ternary, CellIndexingIsABijection) {
    TernaryGrid g;
    g.resolution = 7;
    std::set<std::size_t> seen;
    for (unsigned i = 0; i <= 7; ++i)
        for (unsigned j = 0; i + j <= 7; ++j) {
            auto c = g.index(i, j);
            EXPECT_LT(c, TernaryGrid::cell_count(7));
            EXPECT_TRUE(seen.insert(c).second);
            EXPECT_EQ(g.lattice_point(c), (std::array<unsigned, 3>{i, j, 7 - i - j}));
        }
    EXPECT_EQ(seen.size(), TernaryGrid::cell_count(7));
}

TEST(Ternary, VertexAndCentroid) {
    std::vector<Triple> vertex{{0, 1, 0}};
    auto g = ternary_heatmap(vertex, 30, 0);
    EXPECT_EQ(g.counts[g.index(0, 30)], 1.0);
    EXPECT_EQ(g.total_counts(), 1.0);
    std::vector<Triple> centroid{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    auto c = ternary_heatmap(centroid, 30, 0);
    EXPECT_EQ(c.counts[c.index(10, 10)], 1.0);
}

TEST(Ternary, NearestLatticePointMatchesBruteForce) {
    auto pts = synthetic::simplex_points(500, 21);
    for (unsigned R : {2u, 5u, 30u}) {
        auto g = ternary_heatmap(pts, R, 0);
        auto h = oracle::brute_histogram(pts, R);
        for (const auto& [ij, n] : h) EXPECT_EQ(g.counts[g.index(ij.first, ij.second)], n) << "R=" << R;
        EXPECT_EQ(g.total_counts(), 500.0);
    }
}

TEST(Ternary, SmoothingConservesMass) {
    auto pts = synthetic::simplex_points(300, 2);
    for (double sigma : {0.0, 0.5, 1.5, 3.0}) {
        auto g = ternary_heatmap(pts, 30, sigma);
        EXPECT_NEAR(g.total_density(), 300.0, 1e-6) << sigma;
        for (double d : g.density) EXPECT_GE(d, 0.0);
    }
}

TEST(Ternary, RejectsInvalidInput) {
    std::vector<Triple> bad{{0.5, 0.6, 0.1}};
    EXPECT_THROW(ternary_heatmap(bad, 30, 0), DataError);
    std::vector<Triple> neg{{-0.1, 0.6, 0.5}};
    EXPECT_THROW(ternary_heatmap(neg, 30, 0), DataError);
    std::vector<Triple> ok{{1, 0, 0}};
    EXPECT_THROW(ternary_heatmap(ok, 1, 0), UsageError);
    EXPECT_THROW(ternary_heatmap(ok, 30, -1), UsageError);
}

TEST(PlotOutput, JsonDocumentsCarryExpectedFields) {
    auto m = stratified_accuracy(load_preds("edits60_predictions.jsonl"), load_edits60());
    auto j = to_json(m);
    EXPECT_EQ(j.at("cells").size(), 6u);
    std::vector<Triple> pts{{1, 0, 0}};
    auto g = to_json(ternary_heatmap(pts, 4, 1.0), Task::NLI);
    EXPECT_EQ(g.at("cells").size(), TernaryGrid::cell_count(4));
    EXPECT_EQ(g.at("label_order").size(), 3u);
    ShiftSet s;
    s.points.push_back(make_shift_point("a", 0.2, 0.8));
    auto sj = shift_plot_json(s, "k", "x", "y");
    EXPECT_EQ(sj.at("points")[0].at("region"), "above_diagonal");
    EXPECT_EQ(sj.at("summary").at("n"), 1);
}

TEST(PlotOutput, SvgIsWellFormedEnough) {
    ShiftSet s;
    s.points.push_back(make_shift_point("a", 0.2, 0.8));
    auto svg = svg_scatter(s, "t", "x", "y");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find("<circle"), std::string::npos);
    std::vector<Triple> pts{{0.2, 0.3, 0.5}};
    auto tri = svg_ternary(ternary_heatmap(pts, 10, 1.0), Task::NLI, "t");
    EXPECT_NE(tri.find("contradiction"), std::string::npos);
}
