#pragma once
// CSV tables, JSON plot-data documents and SVG figures for analytics outputs.
// Formatting is locale-independent and fixed-precision so repeated runs are
// byte-identical.

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

#include "ctxprobe/analytics.hpp"
#include "ctxprobe/core_data.hpp"
#include "ctxprobe/probe_pipeline.hpp"

namespace ctxprobe {

inline std::string format_fixed(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

inline void write_csv(std::ostream& os, const AccuracyMatrix& m) {
    os << "original_label,target_label,correct,total,accuracy\n";
    for (Label l : labels_of(m.task))
        for (Label t : labels_of(m.task)) {
            if (l == t) continue;
            const CellCount& c = m.at(l, t);
            auto acc = c.accuracy();
            os << to_string(l) << ',' << to_string(t) << ',' << c.correct << ',' << c.total << ','
               << (acc ? format_fixed(*acc, 4) : std::string{}) << '\n';
        }
}

inline void write_csv(std::ostream& os, std::span<const AccuracyRow> rows) {
    os << "model_id,view,correct,total,accuracy\n";
    for (const auto& r : rows)
        os << r.model_id << ',' << to_string(r.view) << ',' << r.correct << ',' << r.total << ','
           << format_fixed(r.accuracy(), 4) << '\n';
}

inline void write_csv(std::ostream& os, const SplitReport& r) {
    os << "split,expected,actual,no_consensus,pass\n";
    for (const auto& e : r.entries)
        os << to_string(e.split) << ',' << e.expected << ',' << e.actual << ',' << e.no_consensus << ','
           << (e.pass ? "pass" : "fail") << '\n';
}

inline void write_csv(std::ostream& os, const RegionSummary& s) {
    os << "region,count,fraction\n";
    for (const auto& [r, n] : s.regions) os << to_string(r) << ',' << n << ',' << format_fixed(s.fraction(r), 4) << '\n';
    for (const auto& [q, n] : s.quadrants) os << to_string(q) << ',' << n << ',' << format_fixed(s.fraction(q), 4) << '\n';
}

inline json to_json(const RegionSummary& s) {
    json regions = json::object(), quadrants = json::object();
    for (const auto& [r, n] : s.regions) regions[std::string(to_string(r))] = n;
    for (const auto& [q, n] : s.quadrants) quadrants[std::string(to_string(q))] = n;
    return json{{"n", s.n}, {"regions", regions}, {"quadrants", quadrants}};
}

inline json shift_plot_json(const ShiftSet& set, std::string kind, std::string x_label, std::string y_label) {
    json pts = json::array();
    for (const auto& p : set.points)
        pts.push_back({{"id", p.instance_id},
                       {"x", p.x},
                       {"y", p.y},
                       {"region", to_string(p.region)},
                       {"quadrant", to_string(p.quadrant)}});
    return json{{"kind", std::move(kind)},
                {"source", to_string(set.source)},
                {"x_label", std::move(x_label)},
                {"y_label", std::move(y_label)},
                {"points", pts},
                {"summary", to_json(set.summary())}};
}

inline json to_json(const AccuracyMatrix& m) {
    json cells = json::array();
    for (Label l : labels_of(m.task))
        for (Label t : labels_of(m.task)) {
            if (l == t) continue;
            const CellCount& c = m.at(l, t);
            auto acc = c.accuracy();
            cells.push_back({{"original_label", to_string(l)},
                             {"target_label", to_string(t)},
                             {"correct", c.correct},
                             {"total", c.total},
                             {"accuracy", acc ? json(*acc) : json(nullptr)}});
        }
    return json{{"kind", "stratified_accuracy"}, {"task", to_string(m.task)}, {"cells", cells}};
}

inline json to_json(const TernaryGrid& g, Task task = Task::NLI) {
    json cells = json::array();
    for (unsigned i = 0; i <= g.resolution; ++i)
        for (unsigned j = 0; i + j <= g.resolution; ++j) {
            std::size_t c = g.index(i, j);
            cells.push_back({{"i", i}, {"j", j}, {"k", g.resolution - i - j}, {"count", g.counts[c]}, {"density", g.density[c]}});
        }
    return json{{"kind", "ternary_heatmap"},
                {"resolution", g.resolution},
                {"sigma", g.sigma},
                {"num_points", g.num_points},
                {"label_order", label_order_json(task)},
                {"cells", cells}};
}

// 420x420 scatter with the diagonal and the 0.5 quadrant lines.
inline std::string svg_scatter(const ShiftSet& set, const std::string& title, const std::string& x_label,
                               const std::string& y_label) {
    const double size = 360, off = 40;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"420\" viewBox=\"0 0 420 420\">\n";
    os << "<rect x=\"40\" y=\"20\" width=\"360\" height=\"360\" fill=\"white\" stroke=\"black\"/>\n";
    os << "<line x1=\"40\" y1=\"380\" x2=\"400\" y2=\"20\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    os << "<line x1=\"220\" y1=\"20\" x2=\"220\" y2=\"380\" stroke=\"lightgray\"/>\n";
    os << "<line x1=\"40\" y1=\"200\" x2=\"400\" y2=\"200\" stroke=\"lightgray\"/>\n";
    for (const auto& p : set.points) {
        const char* color = p.region == DiagonalRegion::above_diagonal   ? "#2b7bba"
                            : p.region == DiagonalRegion::below_diagonal ? "#d7301f"
                                                                         : "#555555";
        os << "<circle cx=\"" << format_fixed(off + p.x * size, 2) << "\" cy=\""
           << format_fixed(20 + (1 - p.y) * size, 2) << "\" r=\"2.5\" fill=\"" << color
           << "\" fill-opacity=\"0.6\"/>\n";
    }
    os << "<text x=\"220\" y=\"412\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    os << "<text x=\"14\" y=\"200\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 200)\">"
       << y_label << "</text>\n";
    os << "<text x=\"220\" y=\"14\" text-anchor=\"middle\" font-size=\"12\">" << title << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

// Triangle heatmap; one disc per lattice cell shaded by relative density.
inline std::string svg_ternary(const TernaryGrid& g, Task task, const std::string& title) {
    const double side = 380, ox = 20, oy = 400;
    const double h = std::sqrt(3.0) / 2.0;
    double peak = 0;
    for (double d : g.density) peak = std::max(peak, d);
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"430\" viewBox=\"0 0 420 430\">\n";
    os << "<polygon points=\"" << format_fixed(ox, 2) << ',' << format_fixed(oy, 2) << ' ' << format_fixed(ox + side, 2)
       << ',' << format_fixed(oy, 2) << ' ' << format_fixed(ox + side / 2, 2) << ',' << format_fixed(oy - side * h, 2)
       << "\" fill=\"white\" stroke=\"black\"/>\n";
    const double r = side / g.resolution / 2.0;
    for (unsigned i = 0; i <= g.resolution; ++i)
        for (unsigned j = 0; i + j <= g.resolution; ++j) {
            const std::size_t c = g.index(i, j);
            if (g.density[c] <= 0) continue;
            auto pos = simplex_position(i, j, g.resolution - i - j);
            double x = ox + pos[0] / g.resolution * side, y = oy - pos[1] / g.resolution * side;
            double a = peak > 0 ? g.density[c] / peak : 0;
            os << "<circle cx=\"" << format_fixed(x, 2) << "\" cy=\"" << format_fixed(y, 2) << "\" r=\""
               << format_fixed(r, 2) << "\" fill=\"#b30000\" fill-opacity=\"" << format_fixed(a, 3) << "\"/>\n";
        }
    auto labels = labels_of(task);
    if (labels.size() == 3) {
        os << "<text x=\"" << format_fixed(ox, 2) << "\" y=\"416\" font-size=\"12\">" << to_string(labels[0]) << "</text>\n";
        os << "<text x=\"" << format_fixed(ox + side, 2) << "\" y=\"416\" text-anchor=\"end\" font-size=\"12\">"
           << to_string(labels[1]) << "</text>\n";
        os << "<text x=\"" << format_fixed(ox + side / 2, 2) << "\" y=\"" << format_fixed(oy - side * h - 4, 2)
           << "\" text-anchor=\"middle\" font-size=\"12\">" << to_string(labels[2]) << "</text>\n";
    }
    os << "<text x=\"210\" y=\"428\" text-anchor=\"middle\" font-size=\"11\">" << title << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace ctxprobe
