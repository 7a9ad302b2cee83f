#pragma once
// Confidence-shift points, stratified (l -> l') accuracy, per-model accuracy
// and ternary simplex heatmaps.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/calibration.hpp"
#include "ctxprobe/core_data.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/probe_pipeline.hpp"

namespace ctxprobe {

inline constexpr double kDiagonalTolerance = 1e-12;
inline constexpr double kQuadrantThreshold = 0.5;

enum class DiagonalRegion : std::uint8_t { above_diagonal, below_diagonal, on_diagonal };

inline std::string_view to_string(DiagonalRegion r) {
    switch (r) {
        case DiagonalRegion::above_diagonal: return "above_diagonal";
        case DiagonalRegion::below_diagonal: return "below_diagonal";
        case DiagonalRegion::on_diagonal: return "on_diagonal";
    }
    return "?";
}

// Quadrants of the unit square split at 0.5 on both axes; a coordinate of
// exactly 0.5 counts as high.
//
// For pre/post-edit plots (x = confidence in l before the edit, y = the same
// after) high_x_low_y is the ideal region and high_x_high_y marks edits the
// model ignored.
enum class Quadrant : std::uint8_t { low_x_low_y, high_x_low_y, low_x_high_y, high_x_high_y };

inline std::string_view to_string(Quadrant q) {
    switch (q) {
        case Quadrant::low_x_low_y: return "low_x_low_y";
        case Quadrant::high_x_low_y: return "high_x_low_y";
        case Quadrant::low_x_high_y: return "low_x_high_y";
        case Quadrant::high_x_high_y: return "high_x_high_y";
    }
    return "?";
}

inline DiagonalRegion classify_diagonal(double x, double y) {
    if (std::abs(y - x) <= kDiagonalTolerance) return DiagonalRegion::on_diagonal;
    return y > x ? DiagonalRegion::above_diagonal : DiagonalRegion::below_diagonal;
}

inline Quadrant classify_quadrant(double x, double y) {
    const bool hx = x >= kQuadrantThreshold, hy = y >= kQuadrantThreshold;
    if (hx) return hy ? Quadrant::high_x_high_y : Quadrant::high_x_low_y;
    return hy ? Quadrant::low_x_high_y : Quadrant::low_x_low_y;
}

struct ShiftPoint {
    std::string instance_id;
    double x = 0;
    double y = 0;
    DiagonalRegion region = DiagonalRegion::on_diagonal;
    Quadrant quadrant = Quadrant::low_x_low_y;
};

inline ShiftPoint make_shift_point(std::string id, double x, double y) {
    if (!(x >= 0 && x <= 1 && y >= 0 && y <= 1)) throw DataError("shift coordinates outside [0,1] for " + id);
    return {std::move(id), x, y, classify_diagonal(x, y), classify_quadrant(x, y)};
}

enum class ProbabilitySource : std::uint8_t { raw_softmax, calibrated };

inline std::string_view to_string(ProbabilitySource s) {
    return s == ProbabilitySource::raw_softmax ? "raw_softmax" : "calibrated";
}

struct RegionSummary {
    std::size_t n = 0;
    std::map<DiagonalRegion, std::size_t> regions;
    std::map<Quadrant, std::size_t> quadrants;

    double fraction(DiagonalRegion r) const {
        auto it = regions.find(r);
        return n == 0 || it == regions.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n);
    }
    double fraction(Quadrant q) const {
        auto it = quadrants.find(q);
        return n == 0 || it == quadrants.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n);
    }
};

struct ShiftSet {
    std::vector<ShiftPoint> points;
    ProbabilitySource source = ProbabilitySource::raw_softmax;

    RegionSummary summary() const {
        RegionSummary s;
        s.n = points.size();
        for (auto r : {DiagonalRegion::above_diagonal, DiagonalRegion::below_diagonal, DiagonalRegion::on_diagonal})
            s.regions[r] = 0;
        for (auto q : {Quadrant::low_x_low_y, Quadrant::high_x_low_y, Quadrant::low_x_high_y, Quadrant::high_x_high_y})
            s.quadrants[q] = 0;
        for (const auto& p : points) {
            ++s.regions[p.region];
            ++s.quadrants[p.quadrant];
        }
        return s;
    }
};

namespace detail {

inline std::map<std::string, const PredictionRecord*> index_records(std::span<const PredictionRecord> recs,
                                                                    const char* what) {
    std::map<std::string, const PredictionRecord*> m;
    for (const auto& r : recs)
        if (!m.emplace(r.instance_id, &r).second)
            throw DataError(std::string("duplicate ") + what + " record for " + r.instance_id);
    return m;
}

inline double confidence(const PredictionRecord& r, const std::optional<Temperature>& tau, Label l) {
    return confidence_in(r, tau.value_or(Temperature(1.0)), l);
}

}  // namespace detail

// x = partial-input confidence in gold, y = full-input confidence in gold;
// one point per instance, ordered by id.
inline ShiftSet confidence_shift_points(std::span<const PredictionRecord> partial,
                                        std::span<const PredictionRecord> full,
                                        std::optional<Temperature> partial_tau = std::nullopt,
                                        std::optional<Temperature> full_tau = std::nullopt) {
    auto p = detail::index_records(partial, "partial-input");
    auto f = detail::index_records(full, "full-input");
    std::vector<std::string> missing;
    for (const auto& [id, _] : p)
        if (!f.count(id)) missing.push_back(id + " (no full-input record)");
    for (const auto& [id, _] : f)
        if (!p.count(id)) missing.push_back(id + " (no partial-input record)");
    if (!missing.empty()) throw DataError("prediction coverage mismatch: " + join_ids(missing));

    ShiftSet out;
    out.source = partial_tau || full_tau ? ProbabilitySource::calibrated : ProbabilitySource::raw_softmax;
    for (const auto& [id, pr] : p) {
        const PredictionRecord* fr = f.at(id);
        if (pr->gold != fr->gold) throw DataError("gold label disagrees between views for " + id);
        out.points.push_back(make_shift_point(id, detail::confidence(*pr, partial_tau, pr->gold),
                                              detail::confidence(*fr, full_tau, fr->gold)));
    }
    return out;
}

// x = confidence in the original label l before editing, y = confidence in
// that same (now incorrect) label after editing. Pre-edit records may be keyed
// by edit_id or by the original instance id; post-edit records by edit_id.
inline ShiftSet post_edit_shift_points(std::span<const EditedRecord> edits,
                                       std::span<const PredictionRecord> pre,
                                       std::span<const PredictionRecord> post,
                                       std::optional<Temperature> tau = std::nullopt) {
    auto before = detail::index_records(pre, "pre-edit");
    auto after = detail::index_records(post, "post-edit");
    std::vector<std::string> missing;
    ShiftSet out;
    out.source = tau ? ProbabilitySource::calibrated : ProbabilitySource::raw_softmax;
    for (const auto& e : edits) {
        auto b = before.find(e.edit_id);
        if (b == before.end()) b = before.find(e.original_id);
        auto a = after.find(e.edit_id);
        if (b == before.end()) missing.push_back(e.edit_id + " (no pre-edit record)");
        if (a == after.end()) missing.push_back(e.edit_id + " (no post-edit record)");
        if (b == before.end() || a == after.end()) continue;
        out.points.push_back(make_shift_point(e.edit_id, detail::confidence(*b->second, tau, e.original_label),
                                              detail::confidence(*a->second, tau, e.original_label)));
    }
    if (!missing.empty()) throw DataError("missing edit predictions: " + join_ids(missing));
    return out;
}

// ---------------------------------------------------------------------------

struct CellCount {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::optional<double> accuracy() const {
        if (total == 0) return std::nullopt;
        return static_cast<double>(correct) / static_cast<double>(total);
    }
    bool operator==(const CellCount&) const = default;
};

// Rows: original label l; columns: target label l'. The diagonal is undefined
// and always empty.
struct AccuracyMatrix {
    Task task = Task::NLI;
    std::vector<std::vector<CellCount>> cells;

    const CellCount& at(Label l, Label target) const { return cells[label_index(l)][label_index(target)]; }
};

// Cell (l, l') accuracy is the fraction of edits whose prediction equals l'.
inline AccuracyMatrix stratified_accuracy(std::span<const PredictionRecord> predictions,
                                          std::span<const EditedRecord> edits) {
    if (edits.empty()) throw UsageError("stratified_accuracy needs at least one edit");
    auto recs = detail::index_records(predictions, "edited-set");
    AccuracyMatrix m;
    m.task = edits.front().task;
    const std::size_t k = label_arity(m.task);
    m.cells.assign(k, std::vector<CellCount>(k));
    std::vector<std::string> missing;
    for (const auto& e : edits) {
        if (e.task != m.task) throw DataError("edits mix tasks; stratify each task separately");
        auto it = recs.find(e.edit_id);
        if (it == recs.end()) {
            missing.push_back(e.edit_id);
            continue;
        }
        auto& cell = m.cells[label_index(e.original_label)][label_index(e.target_label)];
        ++cell.total;
        if (it->second->predicted() == e.target_label) ++cell.correct;
    }
    if (!missing.empty()) throw DataError("missing predictions for edits: " + join_ids(missing));
    return m;
}

struct AccuracyRow {
    std::string model_id;
    InputView view = InputView::Full;
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

// Accuracy grouped by (model_id, view), ordered by key.
inline std::vector<AccuracyRow> summary_accuracy(std::span<const PredictionRecord> records) {
    if (records.empty()) throw UsageError("summary_accuracy needs at least one record");
    std::map<ModelViewKey, AccuracyRow> rows;
    for (const auto& r : records) {
        auto& row = rows[{r.model_id, r.view}];
        row.model_id = r.model_id;
        row.view = r.view;
        ++row.total;
        if (r.correct()) ++row.correct;
    }
    std::vector<AccuracyRow> out;
    for (auto& [_, row] : rows) out.push_back(row);
    return out;
}

// ---------------------------------------------------------------------------
// Ternary heatmaps
//
// Bins are the lattice points (i, j, k), i + j + k = R, of the 2-simplex at
// resolution R; a probability triple goes to the nearest lattice point
// (largest-remainder rounding of R * p). Positions use the equilateral
// embedding label0 -> (0, 0), label1 -> (1, 0), label2 -> (1/2, sqrt(3)/2),
// with distances measured in lattice steps. Smoothing spreads each bin's mass
// with an isotropic Gaussian truncated to the simplex and renormalized, so
// total mass is conserved.

using Triple = std::array<double, 3>;

inline constexpr double kTripleTolerance = 1e-6;

struct TernaryGrid {
    unsigned resolution = 0;
    double sigma = 0;
    std::size_t num_points = 0;
    std::vector<double> counts;   // raw bin counts
    std::vector<double> density;  // after smoothing

    static std::size_t cell_count(unsigned r) { return (static_cast<std::size_t>(r) + 1) * (r + 2) / 2; }

    // Cell for lattice point (i, j, R - i - j).
    std::size_t index(unsigned i, unsigned j) const {
        const std::size_t R = resolution, a = i;
        return a * (R + 1) - (a ? a * (a - 1) / 2 : 0) + j;
    }

    std::array<unsigned, 3> lattice_point(std::size_t cell) const {
        for (unsigned i = 0; i <= resolution; ++i)
            for (unsigned j = 0; j + i <= resolution; ++j)
                if (index(i, j) == cell) return {i, j, resolution - i - j};
        throw UsageError("cell index out of range");
    }

    double total_counts() const {
        double s = 0;
        for (double c : counts) s += c;
        return s;
    }
    double total_density() const {
        double s = 0;
        for (double c : density) s += c;
        return s;
    }
};

// Planar position of barycentric weights (a, b, c) in the equilateral
// embedding; lengths scale with the weights' total.
inline std::array<double, 2> simplex_position(double /*a*/, double b, double c) {
    return {b + 0.5 * c, c * std::sqrt(3.0) / 2.0};
}

inline std::array<unsigned, 3> nearest_lattice_point(const Triple& p, unsigned resolution) {
    double sum = 0;
    for (double v : p) {
        if (!(v >= -kTripleTolerance) || !std::isfinite(v)) throw DataError("negative or non-finite probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kTripleTolerance) throw DataError("probability triple does not sum to 1");
    std::array<double, 3> scaled{};
    std::array<unsigned, 3> out{};
    unsigned used = 0;
    for (int i = 0; i < 3; ++i) {
        scaled[i] = std::max(0.0, p[i]) / sum * resolution;
        out[i] = static_cast<unsigned>(std::floor(scaled[i]));
        if (out[i] > resolution) out[i] = resolution;
        used += out[i];
    }
    // Hand the remaining units to the largest remainders (lowest index first on ties).
    while (used < resolution) {
        int best = 0;
        double best_rem = -1;
        for (int i = 0; i < 3; ++i) {
            double rem = scaled[i] - out[i];
            if (rem > best_rem) {
                best_rem = rem;
                best = i;
            }
        }
        ++out[best];
        scaled[best] = out[best];  // consumed
        ++used;
    }
    while (used > resolution) {  // only reachable through clamping
        int worst = 0;
        for (int i = 1; i < 3; ++i)
            if (out[i] > out[worst]) worst = i;
        --out[worst];
        --used;
    }
    return out;
}

inline TernaryGrid ternary_heatmap(std::span<const Triple> points, unsigned resolution, double sigma) {
    if (resolution < 2) throw UsageError("ternary resolution must be >= 2");
    if (!(sigma >= 0) || !std::isfinite(sigma)) throw UsageError("sigma must be >= 0");
    TernaryGrid g;
    g.resolution = resolution;
    g.sigma = sigma;
    g.num_points = points.size();
    const std::size_t cells = TernaryGrid::cell_count(resolution);
    g.counts.assign(cells, 0.0);
    for (const auto& p : points) {
        auto lp = nearest_lattice_point(p, resolution);
        g.counts[g.index(lp[0], lp[1])] += 1.0;
    }
    if (sigma == 0) {
        g.density = g.counts;
        return g;
    }

    std::vector<std::array<double, 2>> pos(cells);
    for (unsigned i = 0; i <= resolution; ++i)
        for (unsigned j = 0; i + j <= resolution; ++j)
            pos[g.index(i, j)] = simplex_position(i, j, resolution - i - j);  // lattice-step units

    g.density.assign(cells, 0.0);
    std::vector<double> w(cells);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t s = 0; s < cells; ++s) {
        if (g.counts[s] == 0) continue;
        double z = 0;
        for (std::size_t t = 0; t < cells; ++t) {
            double dx = pos[s][0] - pos[t][0], dy = pos[s][1] - pos[t][1];
            w[t] = std::exp(-(dx * dx + dy * dy) * inv2s2);
            z += w[t];
        }
        const double scale = g.counts[s] / z;
        for (std::size_t t = 0; t < cells; ++t) g.density[t] += w[t] * scale;
    }
    return g;
}

}  // namespace ctxprobe
