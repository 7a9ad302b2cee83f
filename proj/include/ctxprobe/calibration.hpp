#pragma once
// Prediction records and single-parameter temperature scaling.
//
// fit_temperature minimizes the mean gold-label negative log-likelihood of
// softmax(logits / tau) with golden-section search, then cross-checks a grid
// (default step 0.01) and the interval endpoints, refining around the best
// grid point if it beats the golden-section result.

#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxprobe/core_data.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/ngram_classifier.hpp"

namespace ctxprobe {

struct PredictionRecord {
    std::string instance_id;
    std::string model_id;
    InputView view = InputView::Full;
    std::vector<double> logits;  // canonical label order
    Label gold = Label::entailment;

    Task task() const { return task_of(gold); }
    Label predicted() const { return label_at(task(), argmax(logits)); }
    bool correct() const { return predicted() == gold; }
};

inline std::optional<std::string> check_record(const PredictionRecord& r) {
    if (r.instance_id.empty()) return "empty instance_id";
    if (r.logits.size() != label_arity(r.task())) return "logit count does not match label arity";
    for (double z : r.logits)
        if (!std::isfinite(z)) return "non-finite logit";
    return std::nullopt;
}

class Temperature {
public:
    explicit Temperature(double tau = 1.0) : tau_(tau) {
        if (!(tau > 0) || !std::isfinite(tau))
            throw UsageError("temperature must be a positive finite number");
    }
    double value() const noexcept { return tau_; }
    bool operator==(const Temperature&) const = default;

private:
    double tau_;
};

inline std::vector<double> softmax(std::span<const double> logits, Temperature tau) {
    std::vector<double> scaled(logits.begin(), logits.end());
    for (double& z : scaled) z /= tau.value();
    return softmax(scaled);
}

inline std::vector<double> apply_temperature(const PredictionRecord& r, Temperature tau) {
    return softmax(r.logits, tau);
}

inline double confidence_in(const PredictionRecord& r, Temperature tau, Label label) {
    if (!is_valid_for(r.task(), label)) throw UsageError("label not valid for the record's task");
    return apply_temperature(r, tau)[label_index(label)];
}

// Mean negative log-likelihood of the gold labels.
inline double mean_nll(std::span<const PredictionRecord> records, double tau) {
    double total = 0;
    for (const auto& r : records) {
        double mx = -std::numeric_limits<double>::infinity();
        for (double z : r.logits) mx = std::max(mx, z / tau);
        double lse = 0;
        for (double z : r.logits) lse += std::exp(z / tau - mx);
        total += std::log(lse) + mx - r.logits[label_index(r.gold)] / tau;
    }
    return total / static_cast<double>(records.size());
}

struct TemperatureBounds {
    double lo = 0.05;
    double hi = 10.0;
};

struct FitOptions {
    TemperatureBounds bounds;
    double tolerance = 1e-4;
    double grid_step = 0.01;
};

struct TemperatureFit {
    Temperature tau;
    double nll = 0;
    double nll_at_one = 0;
    // All records have constant logits; NLL does not depend on tau.
    bool degenerate = false;
};

namespace detail {

template <typename F>
double golden_section(F&& f, double a, double b, double tol) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return fc <= fd ? c : d;
}

}  // namespace detail

inline TemperatureFit fit_temperature(std::span<const PredictionRecord> records, const FitOptions& opt = {}) {
    if (records.empty()) throw UsageError("fit_temperature needs at least one record");
    const double lo = opt.bounds.lo, hi = opt.bounds.hi;
    if (!(lo > 0) || !(lo < hi)) throw UsageError("temperature bounds must satisfy 0 < lo < hi");
    for (const auto& r : records)
        if (auto bad = check_record(r)) throw DataError("record " + r.instance_id + ": " + *bad);

    bool degenerate = true;
    for (const auto& r : records) {
        for (double z : r.logits)
            if (z != r.logits.front()) degenerate = false;
        if (!degenerate) break;
    }
    const double nll1 = mean_nll(records, 1.0);
    if (degenerate) return {Temperature(1.0), nll1, nll1, true};

    auto f = [&](double t) { return mean_nll(records, t); };
    double best = detail::golden_section(f, lo, hi, opt.tolerance);
    double best_nll = f(best);

    // Grid cross-check guards against a non-unimodal objective.
    double grid_best = lo, grid_nll = f(lo);
    const auto steps = static_cast<long>(std::floor((hi - lo) / opt.grid_step + 1e-9));
    for (long k = 1; k <= steps; ++k) {
        double t = std::min(hi, lo + static_cast<double>(k) * opt.grid_step);
        double v = f(t);
        if (v < grid_nll) {
            grid_nll = v;
            grid_best = t;
        }
    }
    if (grid_nll < best_nll) {
        double a = std::max(lo, grid_best - opt.grid_step), b = std::min(hi, grid_best + opt.grid_step);
        double refined = detail::golden_section(f, a, b, opt.tolerance);
        double refined_nll = f(refined);
        if (refined_nll < grid_nll) {
            best = refined;
            best_nll = refined_nll;
        } else {
            best = grid_best;
            best_nll = grid_nll;
        }
    }
    for (double t : {lo, hi, 1.0}) {
        if (t < lo || t > hi) continue;
        double v = f(t);
        if (v <= best_nll) {
            best = t;
            best_nll = v;
        }
    }
    return {Temperature(best), best_nll, nll1, false};
}

using ModelViewKey = std::pair<std::string, InputView>;

// One temperature per (model_id, view).
inline std::map<ModelViewKey, TemperatureFit> fit_per_model_view(std::span<const PredictionRecord> records,
                                                                 const FitOptions& opt = {}) {
    std::map<ModelViewKey, std::vector<PredictionRecord>> groups;
    for (const auto& r : records) groups[{r.model_id, r.view}].push_back(r);
    std::map<ModelViewKey, TemperatureFit> out;
    for (auto& [key, group] : groups) out.emplace(key, fit_temperature(group, opt));
    return out;
}

// ---------------------------------------------------------------------------
// Prediction JSONL
//
// One record per line:
//   {"instance_id", "model_id", "view": "partial"|"full", "logits": [...], "gold"}
// An optional first line {"meta": {...}} carries provenance; when it has a
// "label_order" array it must match the canonical order.

struct PredictionFile {
    std::vector<PredictionRecord> records;
    json meta = json::object();
    std::vector<ParseIssue> issues;
};

inline json to_json(const PredictionRecord& r) {
    json j;
    j["instance_id"] = r.instance_id;
    j["model_id"] = r.model_id;
    j["view"] = to_string(r.view);
    j["logits"] = r.logits;
    j["gold"] = to_string(r.gold);
    return j;
}

inline json label_order_json(Task t) {
    json a = json::array();
    for (Label l : labels_of(t)) a.push_back(to_string(l));
    return a;
}

inline PredictionFile read_predictions(std::istream& is, Task task, bool strict = true) {
    PredictionFile out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            if (!j.is_object()) throw DataError("record is not an object");
            if (auto it = j.find("meta"); it != j.end()) {
                if (lineno != 1 && !out.records.empty()) throw DataError("meta header must come first");
                out.meta = *it;
                if (auto lo = it->find("label_order"); lo != it->end() && *lo != label_order_json(task))
                    throw DataError("label_order header does not match the canonical order");
                continue;
            }
            PredictionRecord r;
            r.instance_id = j.at("instance_id").get<std::string>();
            r.model_id = j.at("model_id").get<std::string>();
            auto view = parse_view(j.at("view").get<std::string>());
            if (!view) throw DataError("unknown view");
            r.view = *view;
            r.logits = j.at("logits").get<std::vector<double>>();
            r.gold = require_label(task, j.at("gold").get<std::string>());
            if (auto bad = check_record(r)) throw DataError(*bad);
            out.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            if (strict) throw DataError("prediction line " + std::to_string(lineno) + ": " + e.what());
            out.issues.push_back({lineno, e.what()});
        }
    }
    return out;
}

inline void write_predictions(std::ostream& os, std::span<const PredictionRecord> records, Task task,
                              json meta = json::object()) {
    meta["label_order"] = label_order_json(task);
    meta["task"] = to_string(task);
    os << json{{"meta", meta}}.dump() << '\n';
    for (const auto& r : records) os << to_json(r).dump() << '\n';
}

}  // namespace ctxprobe
