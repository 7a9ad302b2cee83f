#pragma once
// `ctxprobe` command line: pipeline orchestration over the library.
//
// Every subcommand that writes an artifact also writes `<out>.manifest.json`
// recording the command, parameters, seeds and the content hashes of its
// inputs and outputs. `report` re-hashes them and refuses stale artifacts.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctxprobe/analytics.hpp"
#include "ctxprobe/calibration.hpp"
#include "ctxprobe/core_data.hpp"
#include "ctxprobe/edit_registry.hpp"
#include "ctxprobe/hashing.hpp"
#include "ctxprobe/ngram_classifier.hpp"
#include "ctxprobe/plot_output.hpp"
#include "ctxprobe/probe_pipeline.hpp"
#include "ctxprobe/service.hpp"

namespace ctxprobe {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

namespace cli {

namespace fs = std::filesystem;

inline std::ifstream open_in(const std::string& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw DataError("cannot open " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw Error(ErrorKind::internal, "cannot write " + path);
    return out;
}

inline void write_text(const std::string& path, const std::string& text) {
    auto out = open_out(path, true);
    out << text;
}

class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)) {}

    void input(const std::string& path) { inputs_.push_back(path); }
    void output(const std::string& path) { outputs_.push_back(path); }
    json& params() { return params_; }
    json& seeds() { return seeds_; }

    void write(const std::string& primary_out) const {
        json in = json::object(), out = json::object();
        for (const auto& p : inputs_) in[p] = hash_file(p);
        for (const auto& p : outputs_) out[p] = hash_file(p);
        json j{{"command", command_}, {"params", params_}, {"seeds", seeds_}, {"inputs", in}, {"outputs", out}};
        write_text(primary_out + ".manifest.json", j.dump(2) + "\n");
    }

private:
    std::string command_;
    json params_ = json::object();
    json seeds_ = json::object();
    std::vector<std::string> inputs_, outputs_;
};

inline Task require_task(const std::string& s) {
    auto t = parse_task(s);
    if (!t) throw UsageError("task must be nli or dnli");
    return *t;
}

inline InputView require_view(const std::string& s) {
    auto v = parse_view(s);
    if (!v) throw UsageError("view must be partial or full");
    return *v;
}

inline Dataset load_dataset(const std::string& path, Task task, std::ostream& err) {
    auto in = open_in(path);
    ParseOptions opt;
    opt.name = fs::path(path).stem().string();
    auto r = parse_dataset(in, task, opt);
    if (r.skipped()) err << "warning: " << path << ": skipped " << r.skipped() << " malformed line(s)\n";
    return std::move(r.dataset);
}

inline std::vector<PredictionRecord> load_predictions(const std::string& path, Task task) {
    auto in = open_in(path);
    return read_predictions(in, task).records;
}

inline std::vector<EditedRecord> load_edits(const std::string& path, Task task, bool validated_only) {
    auto in = open_in(path);
    std::vector<EditedRecord> out;
    for (auto& r : read_edited_set(in))
        if (r.task == task && (!validated_only || r.status == EditStatus::validated)) out.push_back(std::move(r));
    return out;
}

// Reads a temperatures document written by `calibrate`.
inline std::map<ModelViewKey, Temperature> load_temperatures(const std::string& path) {
    auto in = open_in(path);
    json j = json::parse(in);
    std::map<ModelViewKey, Temperature> out;
    for (const auto& t : j.at("temperatures"))
        out.emplace(ModelViewKey{t.at("model_id").get<std::string>(), require_view(t.at("view").get<std::string>())},
                    Temperature(t.at("tau").get<double>()));
    return out;
}

inline std::optional<Temperature> temperature_for(const std::map<ModelViewKey, Temperature>& temps,
                                                  std::span<const PredictionRecord> recs) {
    if (temps.empty() || recs.empty()) return std::nullopt;
    auto it = temps.find({recs.front().model_id, recs.front().view});
    if (it == temps.end())
        throw DataError("no temperature for model " + recs.front().model_id + " (" +
                        std::string(to_string(recs.front().view)) + ")");
    return it->second;
}

inline std::string file_slug(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    return s;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string task, format = "native", name, expect, out, report;
    std::vector<std::string> inputs;
    std::string train, valid, test;
    bool strict = false, require_match = false;
};

inline int run_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
    const Task task = require_task(a.task);
    auto format = parse_source_format(a.format);
    if (!format) throw UsageError("format must be native, snli or dnli");
    DatasetBuilder builder(a.name.empty() ? a.expect : a.name, task);
    Manifest m("ingest");
    std::vector<std::pair<std::string, std::optional<Split>>> sources;
    for (const auto& p : a.inputs) sources.emplace_back(p, std::nullopt);
    if (!a.train.empty()) sources.emplace_back(a.train, Split::train);
    if (!a.valid.empty()) sources.emplace_back(a.valid, Split::valid);
    if (!a.test.empty()) sources.emplace_back(a.test, Split::test);
    if (sources.empty()) throw UsageError("ingest needs --input or --train/--valid/--test");
    for (const auto& [path, split] : sources) {
        if (*format != SourceFormat::native && !split)
            throw UsageError("raw formats need --train/--valid/--test so the split is known");
        auto in = open_in(path);
        ParseOptions opt;
        opt.name = path;
        opt.format = *format;
        opt.split = split;
        opt.strict = a.strict;
        builder.add_stream(in, opt);
        m.input(path);
    }
    for (const auto& issue : builder.issues())
        err << "warning: line " << issue.line << ": " << issue.reason << '\n';
    const SplitCounts no_consensus = builder.no_consensus();
    const std::size_t skipped = builder.issues().size();
    Dataset ds = std::move(builder).build();

    out << "dataset " << ds.name() << ": " << ds.size() << " instances, " << skipped << " skipped\n";
    bool ok = true;
    if (!a.expect.empty()) {
        std::optional<SplitCounts> expected = known_split_sizes(a.expect);
        if (!expected) throw UsageError("unknown split-size preset " + a.expect + " (snli, dnli, dsnli)");
        SplitReport rep = validate_split_sizes(ds, *expected, no_consensus);
        std::ostringstream csv;
        write_csv(csv, rep);
        out << csv.str();
        ok = rep.all_pass();
        if (!a.report.empty()) {
            write_text(a.report, csv.str());
            m.output(a.report);
        }
    }
    if (!a.out.empty()) {
        {
            auto o = open_out(a.out);
            write_dataset(o, ds);
        }
        m.output(a.out);
        m.params() = {{"task", a.task}, {"format", a.format}, {"expect", a.expect}, {"strict", a.strict}};
        m.write(a.out);
    }
    return ok || !a.require_match ? kExitOk : kExitData;
}

struct TrainBowArgs {
    std::string task, train, view = "full", split = "train", out, separator = " ";
    NgramHyperparams hp;
    std::optional<std::uint64_t> seed;
};

inline int run_train_bow(TrainBowArgs a, std::ostream& out, std::ostream& err) {
    const Task task = require_task(a.task);
    if (!a.seed) throw UsageError("train-bow needs an explicit --seed");
    a.hp.seed = *a.seed;
    Dataset ds = load_dataset(a.train, task, err);
    std::vector<Instance> rows;
    if (a.split == "all") {
        rows.assign(ds.instances().begin(), ds.instances().end());
    } else {
        auto s = parse_split(a.split);
        if (!s) throw UsageError("unknown split " + a.split);
        rows = ds.split(*s);
    }
    auto corpus = lexical_corpus(rows, require_view(a.view), DecomposeOptions{a.separator});
    NgramModel model = train_ngram(corpus, task, a.hp);
    {
        auto o = open_out(a.out, true);
        model.save(o);
    }
    Manifest m("train-bow");
    m.input(a.train);
    m.output(a.out);
    m.params() = {{"task", a.task},           {"view", a.view},     {"split", a.split},
                  {"max_n", a.hp.max_n},      {"epochs", a.hp.epochs}, {"learning_rate", a.hp.learning_rate},
                  {"embedding_dim", a.hp.embedding_dim}, {"bucket_count", a.hp.bucket_count},
                  {"workers", a.hp.workers}};
    m.seeds() = {{"train", a.hp.seed}};
    m.write(a.out);
    out << "trained on " << corpus.size() << " examples -> " << a.out << '\n';
    return kExitOk;
}

struct PredictBowArgs {
    std::string model, dataset, edited, split = "test", view = "full", model_id = "bow", out, separator = " ";
};

inline int run_predict_bow(const PredictBowArgs& a, std::ostream& out, std::ostream& err) {
    if (a.dataset.empty() == a.edited.empty()) throw UsageError("pass exactly one of --dataset or --edited");
    NgramModel model = [&] {
        auto in = open_in(a.model, true);
        return NgramModel::load(in);
    }();
    const Task task = model.task();
    const InputView view = require_view(a.view);
    std::vector<Instance> rows;
    Manifest m("predict-bow");
    m.input(a.model);
    if (!a.dataset.empty()) {
        Dataset ds = load_dataset(a.dataset, task, err);
        if (a.split == "all") rows.assign(ds.instances().begin(), ds.instances().end());
        else {
            auto s = parse_split(a.split);
            if (!s) throw UsageError("unknown split " + a.split);
            rows = ds.split(*s);
        }
        m.input(a.dataset);
    } else {
        for (const auto& r : load_edits(a.edited, task, true)) rows.push_back(r.instance());
        m.input(a.edited);
    }
    std::vector<PredictionRecord> recs;
    recs.reserve(rows.size());
    for (const auto& in : rows)
        recs.push_back({in.id, a.model_id, view, model.logits(bow_text(in, view, DecomposeOptions{a.separator})), in.gold});
    {
        auto o = open_out(a.out);
        write_predictions(o, recs, task,
                          json{{"model_id", a.model_id}, {"view", a.view}, {"model_hash", hash_file(a.model)},
                               {"seed", model.hyperparams().seed}});
    }
    m.output(a.out);
    m.params() = {{"view", a.view}, {"model_id", a.model_id}, {"split", a.split}};
    m.seeds() = {{"train", model.hyperparams().seed}};
    m.write(a.out);
    std::size_t correct = 0;
    for (const auto& r : recs) correct += r.correct();
    out << "predicted " << recs.size() << " instances, accuracy "
        << format_fixed(recs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(recs.size()), 4) << '\n';
    return kExitOk;
}

struct CalibrateArgs {
    std::string task, out;
    std::vector<std::string> valid;
    double lo = 0.05, hi = 10.0;
};

inline int run_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream&) {
    const Task task = require_task(a.task);
    std::vector<PredictionRecord> recs;
    Manifest m("calibrate");
    for (const auto& p : a.valid) {
        auto r = load_predictions(p, task);
        recs.insert(recs.end(), r.begin(), r.end());
        m.input(p);
    }
    FitOptions opt;
    opt.bounds = {a.lo, a.hi};
    json temps = json::array();
    for (const auto& [key, fit] : fit_per_model_view(recs, opt)) {
        temps.push_back({{"model_id", key.first},
                         {"view", to_string(key.second)},
                         {"tau", fit.tau.value()},
                         {"nll", fit.nll},
                         {"nll_at_one", fit.nll_at_one},
                         {"degenerate", fit.degenerate}});
        out << key.first << " (" << to_string(key.second) << "): tau=" << format_fixed(fit.tau.value(), 4)
            << " nll=" << format_fixed(fit.nll, 6) << " nll@1=" << format_fixed(fit.nll_at_one, 6)
            << (fit.degenerate ? " [degenerate]" : "") << '\n';
    }
    write_text(a.out, json{{"meta", {{"task", a.task}, {"bounds", {a.lo, a.hi}}}}, {"temperatures", temps}}.dump(2) + "\n");
    m.output(a.out);
    m.params() = {{"task", a.task}, {"lo", a.lo}, {"hi", a.hi}};
    m.write(a.out);
    return kExitOk;
}

struct SubselectArgs {
    std::string task, dataset, partial, bow, out;
};

inline int run_subselect(const SubselectArgs& a, std::ostream& out, std::ostream& err) {
    const Task task = require_task(a.task);
    Dataset ds = load_dataset(a.dataset, task, err);
    auto partial = load_predictions(a.partial, task);
    auto bow = load_predictions(a.bow, task);
    CandidateSet c = select_artifact_candidates(partial, bow, ds);
    json members = json::array();
    std::map<std::string, std::size_t> per_label;
    for (const auto& [id, p] : c.members) {
        members.push_back({{"id", id}, {"partial_neural_correct", p.partial_neural_correct}, {"bow_full_correct", p.bow_full_correct}});
        ++per_label[std::string(to_string(ds.at(id).gold))];
    }
    write_text(a.out, json{{"meta", {{"task", a.task}}}, {"dataset", c.dataset}, {"per_label", per_label}, {"members", members}}.dump(2) + "\n");
    Manifest m("subselect");
    m.input(a.dataset);
    m.input(a.partial);
    m.input(a.bow);
    m.output(a.out);
    m.params() = {{"task", a.task}};
    m.write(a.out);
    out << c.size() << " candidates of " << partial.size() << " instances\n";
    return kExitOk;
}

inline CandidateSet load_candidates(const std::string& path) {
    auto in = open_in(path);
    json j = json::parse(in);
    CandidateSet c;
    c.dataset = j.value("dataset", "");
    for (const auto& mem : j.at("members"))
        c.members.emplace(mem.at("id").get<std::string>(),
                          Provenance{mem.at("partial_neural_correct").get<bool>(), mem.at("bow_full_correct").get<bool>()});
    return c;
}

struct SampleArgs {
    std::string task, dataset, candidates, out, registry;
    std::optional<std::size_t> quota;
    std::optional<std::uint64_t> seed;
};

inline int run_sample(const SampleArgs& a, std::ostream& out, std::ostream& err) {
    const Task task = require_task(a.task);
    if (!a.seed) throw UsageError("sample-edits needs an explicit --seed");
    Dataset ds = load_dataset(a.dataset, task, err);
    CandidateSet c = load_candidates(a.candidates);
    Quota q = a.quota ? uniform_quota(task, *a.quota) : default_quota(task);
    auto assignments = sample_for_editing(c, ds, q, *a.seed);
    {
        auto o = open_out(a.out);
        o << json{{"meta", {{"task", a.task}, {"seed", *a.seed}}}}.dump() << '\n';
        for (const auto& as : assignments)
            o << json{{"instance_id", as.instance_id},
                      {"original_label", to_string(as.original)},
                      {"target_label", to_string(as.target)}}
                     .dump()
              << '\n';
    }
    if (!a.registry.empty()) {
        EditRegistry reg(a.registry);
        reg.add_assignments(assignments, ds);
        out << "queued " << assignments.size() << " assignments in " << a.registry << '\n';
    }
    Manifest m("sample-edits");
    m.input(a.dataset);
    m.input(a.candidates);
    m.output(a.out);
    json quota = json::object();
    for (const auto& [d, n] : q) quota[std::string(to_string(d.first)) + "->" + std::string(to_string(d.second))] = n;
    m.params() = {{"task", a.task}, {"quota", quota}};
    m.seeds() = {{"sample", *a.seed}};
    m.write(a.out);
    out << "sampled " << assignments.size() << " assignments\n";
    return kExitOk;
}

struct ImportArgs {
    std::string input, registry, format, task, out;
    std::vector<std::string> maps;
};

inline int run_import(const ImportArgs& a, std::ostream& out, std::ostream& err) {
    if (a.input.empty() == a.registry.empty()) throw UsageError("pass exactly one of --input or --registry");
    std::vector<EditedRecord> records;
    Manifest m("import-edits");
    if (!a.registry.empty()) {
        if (!fs::exists(a.registry)) throw DataError("no registry at " + a.registry);
        EditRegistry reg(a.registry);
        records = reg.export_records(true);
        m.input(a.registry);
    } else {
        ImportMapping mapping;
        for (const auto& kv : a.maps) {
            auto eq = kv.find('=');
            if (eq == std::string::npos || !mapping.aliases.count(kv.substr(0, eq)))
                throw UsageError("--map expects field=column with a known field, got " + kv);
            mapping.override_field(kv.substr(0, eq), kv.substr(eq + 1));
        }
        bool csv = a.format.empty() ? fs::path(a.input).extension() == ".csv" : a.format == "csv";
        std::optional<Task> task;
        if (!a.task.empty()) task = require_task(a.task);
        auto in = open_in(a.input);
        auto r = import_edited_set(in, csv, task, mapping);
        for (const auto& issue : r.issues) err << "warning: row " << issue.line << ": " << issue.reason << '\n';
        records = std::move(r.records);
        m.input(a.input);
    }
    {
        auto o = open_out(a.out);
        write_edited_set(o, records);
    }
    m.output(a.out);
    m.params() = {{"format", a.format}, {"task", a.task}, {"maps", a.maps}};
    m.write(a.out);
    std::map<std::string, std::size_t> per_task;
    for (const auto& r : records) ++per_task[std::string(to_string(r.task))];
    out << "imported " << records.size() << " edits";
    for (const auto& [t, n] : per_task) out << " (" << t << ": " << n << ")";
    out << '\n';
    return kExitOk;
}

struct EvaluateArgs {
    std::string task, edits, out;
    std::vector<std::string> predictions, test_predictions;
};

inline int run_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
    const Task task = require_task(a.task);
    if (a.predictions.empty() && a.test_predictions.empty())
        throw UsageError("evaluate needs --predictions and/or --test-predictions");
    fs::create_directories(a.out);
    Manifest m("evaluate");
    json summary = json::object();
    if (!a.predictions.empty()) {
        if (a.edits.empty()) throw UsageError("--predictions on the edited set needs --edits");
        auto edits = load_edits(a.edits, task, true);
        if (edits.empty()) throw DataError("no validated " + std::string(to_string(task)) + " edits in " + a.edits);
        m.input(a.edits);
        std::map<ModelViewKey, std::vector<PredictionRecord>> groups;
        for (const auto& p : a.predictions) {
            for (auto& r : load_predictions(p, task)) groups[{r.model_id, r.view}].push_back(std::move(r));
            m.input(p);
        }
        for (const auto& [key, recs] : groups) {
            AccuracyMatrix mat = stratified_accuracy(recs, edits);
            const std::string base = a.out + "/stratified_" + file_slug(key.first) + "_" + std::string(to_string(key.second));
            std::ostringstream csv;
            write_csv(csv, mat);
            write_text(base + ".csv", csv.str());
            write_text(base + ".json", to_json(mat).dump(2) + "\n");
            m.output(base + ".csv");
            m.output(base + ".json");
            out << "stratified accuracy, " << key.first << " (" << to_string(key.second) << "):\n" << csv.str();
        }
    }
    if (!a.test_predictions.empty()) {
        std::vector<PredictionRecord> recs;
        for (const auto& p : a.test_predictions) {
            auto r = load_predictions(p, task);
            recs.insert(recs.end(), r.begin(), r.end());
            m.input(p);
        }
        auto rows = summary_accuracy(recs);
        std::ostringstream csv;
        write_csv(csv, rows);
        write_text(a.out + "/summary_accuracy.csv", csv.str());
        m.output(a.out + "/summary_accuracy.csv");
        out << "summary accuracy:\n" << csv.str();
    }
    m.params() = {{"task", a.task}};
    m.write(a.out);
    return kExitOk;
}

struct AnalyzeArgs {
    std::string task, partial, full, temperatures, edits, pre, post, out;
    unsigned resolution = 30;
    double sigma = 1.5;
};

inline int run_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream&) {
    const Task task = require_task(a.task);
    fs::create_directories(a.out);
    Manifest m("analyze");
    std::map<ModelViewKey, Temperature> temps;
    if (!a.temperatures.empty()) {
        temps = load_temperatures(a.temperatures);
        m.input(a.temperatures);
    }
    bool did = false;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text(a.out + "/" + name, text);
        m.output(a.out + "/" + name);
    };
    if (!a.partial.empty() || !a.full.empty()) {
        if (a.partial.empty() || a.full.empty()) throw UsageError("--partial and --full go together");
        auto p = load_predictions(a.partial, task);
        auto f = load_predictions(a.full, task);
        m.input(a.partial);
        m.input(a.full);
        ShiftSet s = confidence_shift_points(p, f, temperature_for(temps, p), temperature_for(temps, f));
        emit("confidence_shift.json",
             shift_plot_json(s, "confidence_shift", "partial-input confidence in gold", "full-input confidence in gold").dump(2) + "\n");
        std::ostringstream csv;
        write_csv(csv, s.summary());
        emit("confidence_shift_regions.csv", csv.str());
        emit("confidence_shift.svg", svg_scatter(s, "confidence in gold label", "partial input", "full input"));
        out << "confidence shift (" << to_string(s.source) << "), " << s.points.size() << " points:\n" << csv.str();
        did = true;
    }
    if (!a.edits.empty() || !a.pre.empty() || !a.post.empty()) {
        if (a.edits.empty() || a.pre.empty() || a.post.empty()) throw UsageError("--edits, --pre and --post go together");
        auto edits = load_edits(a.edits, task, true);
        auto pre = load_predictions(a.pre, task);
        auto post = load_predictions(a.post, task);
        m.input(a.edits);
        m.input(a.pre);
        m.input(a.post);
        auto tau = temperature_for(temps, post);
        ShiftSet s = post_edit_shift_points(edits, pre, post, tau);
        emit("post_edit_shift.json",
             shift_plot_json(s, "post_edit_shift", "confidence in l before edit", "confidence in l after edit").dump(2) + "\n");
        std::ostringstream csv;
        write_csv(csv, s.summary());
        emit("post_edit_shift_regions.csv", csv.str());
        emit("post_edit_shift.svg", svg_scatter(s, "confidence in original label", "before edit", "after edit"));
        out << "post-edit shift (" << to_string(s.source) << "), " << s.points.size() << " points:\n" << csv.str();

        if (task == Task::NLI) {
            std::map<std::string, const PredictionRecord*> pre_idx, post_idx;
            for (const auto& r : pre) pre_idx[r.instance_id] = &r;
            for (const auto& r : post) post_idx[r.instance_id] = &r;
            const Temperature t = tau.value_or(Temperature(1.0));
            for (auto [l, target] : directions(task)) {
                std::vector<Triple> before, after;
                for (const auto& e : edits) {
                    if (e.original_label != l || e.target_label != target) continue;
                    auto b = pre_idx.count(e.edit_id) ? pre_idx[e.edit_id] : pre_idx[e.original_id];
                    auto pb = apply_temperature(*b, t), pa = apply_temperature(*post_idx.at(e.edit_id), t);
                    before.push_back({pb[0], pb[1], pb[2]});
                    after.push_back({pa[0], pa[1], pa[2]});
                }
                if (before.empty()) continue;
                const std::string dir = std::string(to_string(l)) + "_to_" + std::string(to_string(target));
                for (auto& [phase, pts] : {std::pair{std::string("pre"), before}, std::pair{std::string("post"), after}}) {
                    TernaryGrid g = ternary_heatmap(pts, a.resolution, a.sigma);
                    emit("ternary_" + phase + "_" + dir + ".json", to_json(g, task).dump(2) + "\n");
                    emit("ternary_" + phase + "_" + dir + ".svg", svg_ternary(g, task, phase + "-edit " + dir));
                }
            }
        }
        did = true;
    }
    if (!did) throw UsageError("analyze needs --partial/--full and/or --edits/--pre/--post");
    m.params() = {{"task", a.task}, {"resolution", a.resolution}, {"sigma", a.sigma}};
    m.write(a.out);
    return kExitOk;
}

struct KappaArgs {
    std::string task, pairs, registry, out;
};

inline int run_kappa(const KappaArgs& a, std::ostream& out, std::ostream&) {
    if (a.pairs.empty() == a.registry.empty()) throw UsageError("pass exactly one of --pairs or --registry");
    std::vector<AgreementReport> reports;
    Manifest m("kappa");
    if (!a.pairs.empty()) {
        const Task task = require_task(a.task);
        auto in = open_in(a.pairs);
        std::vector<std::pair<Label, Label>> pairs;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto comma = line.find(',');
            if (comma == std::string::npos) throw DataError("pairs line " + std::to_string(lineno) + ": expected a,b");
            std::string x = line.substr(0, comma), y = line.substr(comma + 1);
            auto la = parse_label(task, x), lb = parse_label(task, y);
            if (!la || !lb) {
                if (lineno == 1) continue;  // header
                throw DataError("pairs line " + std::to_string(lineno) + ": unknown label");
            }
            pairs.emplace_back(*la, *lb);
        }
        reports.push_back(cohen_kappa(pairs));
        m.input(a.pairs);
    } else {
        if (!fs::exists(a.registry)) throw DataError("no registry at " + a.registry);
        EditRegistry reg(a.registry);
        std::vector<Task> tasks = a.task.empty() ? reg.tasks() : std::vector<Task>{require_task(a.task)};
        for (Task t : tasks)
            if (auto r = reg.agreement(t)) reports.push_back(*r);
        if (reports.empty()) throw DataError("no counting validations in " + a.registry);
        m.input(a.registry);
    }
    json all = json::array();
    for (const auto& r : reports) {
        out << to_string(r.task) << ": kappa=" << format_fixed(r.kappa, 4) << " p_o=" << format_fixed(r.p_o, 4)
            << " p_e=" << format_fixed(r.p_e, 4) << " n=" << r.n << (r.degenerate ? " [degenerate]" : "") << '\n';
        all.push_back(to_json(r));
    }
    if (!a.out.empty()) {
        write_text(a.out, json{{"reports", all}}.dump(2) + "\n");
        m.output(a.out);
        m.params() = {{"task", a.task}};
        m.write(a.out);
    }
    return kExitOk;
}

struct ServeArgs {
    std::string registry, analytics_dir, addr;
    unsigned required_agreements = 1;
};

inline int run_serve(const ServeArgs& a, std::ostream& out, std::ostream&) {
    std::string addr = a.addr;
    if (addr.empty())
        if (const char* env = std::getenv("CTXPROBE_SERVE_ADDR")) addr = env;
    if (addr.empty()) addr = "127.0.0.1:8080";
    auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw UsageError("serve address must be host:port");
    const std::string host = addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw UsageError("bad port in " + addr);
    }
    EditRegistry reg(a.registry, ValidationPolicy{a.required_agreements});
    AnnotationService svc(reg, a.analytics_dir);
    httplib::Server server;
    svc.mount(server);
    out << "serving " << a.registry << " on http://" << addr << std::endl;
    if (!server.listen(host, port)) throw Error(ErrorKind::internal, "cannot listen on " + addr);
    return kExitOk;
}

struct ReportArgs {
    std::string artifacts, out;
};

// Bundles every manifest under `artifacts` into one markdown report. Inputs and
// outputs are re-hashed; any mismatch means an artifact is stale.
inline int run_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
    if (!fs::is_directory(a.artifacts)) throw DataError("no artifact directory " + a.artifacts);
    std::vector<fs::path> manifests;
    for (const auto& entry : fs::recursive_directory_iterator(a.artifacts)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() > 14 && name.ends_with(".manifest.json")) manifests.push_back(entry.path());
    }
    std::sort(manifests.begin(), manifests.end(), [&](const fs::path& x, const fs::path& y) {
        return fs::relative(x, a.artifacts).generic_string() < fs::relative(y, a.artifacts).generic_string();
    });
    if (manifests.empty()) throw DataError("no manifests under " + a.artifacts);

    std::vector<std::string> stale;
    std::ostringstream md;
    md << "# ctxprobe report\n\n";
    for (const auto& mp : manifests) {
        auto in = open_in(mp.string());
        json j = json::parse(in);
        md << "## " << j.at("command").get<std::string>() << ": " << fs::relative(mp, a.artifacts).generic_string() << "\n\n";
        md << "- params: `" << j.at("params").dump() << "`\n";
        md << "- seeds: `" << j.at("seeds").dump() << "`\n";
        for (const char* section : {"inputs", "outputs"}) {
            for (auto it = j.at(section).begin(); it != j.at(section).end(); ++it) {
                const std::string path = it.key(), recorded = it->get<std::string>();
                std::string now = fs::exists(path) ? hash_file(path) : std::string("missing");
                if (now != recorded) stale.push_back(path + " (" + section + " of " + mp.filename().string() + ")");
                md << "- " << (section[0] == 'i' ? "input" : "output") << " " << fs::path(path).filename().string()
                   << " `" << recorded << "`\n";
            }
        }
        md << '\n';
        for (auto it = j.at("outputs").begin(); it != j.at("outputs").end(); ++it) {
            fs::path p(it.key());
            if (p.extension() == ".csv" && fs::exists(p)) {
                auto f = open_in(p.string());
                std::stringstream ss;
                ss << f.rdbuf();
                md << "### " << p.filename().string() << "\n\n```csv\n" << ss.str() << "```\n\n";
            }
        }
    }
    if (!stale.empty()) {
        for (const auto& s : stale) err << "stale artifact: " << s << '\n';
        throw DataError(std::to_string(stale.size()) + " stale artifact(s); re-run the upstream commands");
    }
    write_text(a.out, md.str());
    out << "report written to " << a.out << " (" << manifests.size() << " artifacts)\n";
    return kExitOk;
}

}  // namespace cli

// Parses and runs one command line (args excludes the program name).
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    using namespace cli;
    CLI::App app{"Context-editing probe pipeline for NLI artifact analysis", "ctxprobe"};
    app.set_config("--config", "", "TOML/INI configuration file; command-line flags override it");
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Parse and validate datasets (split-size check)");
    c_ingest->add_option("--task", ingest.task, "nli or dnli")->required();
    c_ingest->add_option("--format", ingest.format, "native, snli or dnli");
    c_ingest->add_option("--input", ingest.inputs, "Native JSONL file(s)")->check(CLI::ExistingFile);
    c_ingest->add_option("--train", ingest.train)->check(CLI::ExistingFile);
    c_ingest->add_option("--valid", ingest.valid)->check(CLI::ExistingFile);
    c_ingest->add_option("--test", ingest.test)->check(CLI::ExistingFile);
    c_ingest->add_option("--name", ingest.name);
    c_ingest->add_option("--expect", ingest.expect, "Split-size preset: snli, dnli or dsnli");
    c_ingest->add_option("--out", ingest.out, "Normalized dataset JSONL");
    c_ingest->add_option("--report", ingest.report, "Split report CSV");
    c_ingest->add_flag("--strict", ingest.strict, "Abort on the first malformed line");
    c_ingest->add_flag("--require-match", ingest.require_match, "Exit 2 on split-size mismatch");

    TrainBowArgs train;
    auto* c_train = app.add_subcommand("train-bow", "Train the bag-of-n-grams classifier");
    c_train->add_option("--task", train.task)->required();
    c_train->add_option("--train", train.train, "Native dataset JSONL")->required()->check(CLI::ExistingFile);
    c_train->add_option("--split", train.split, "train, valid, test or all");
    c_train->add_option("--view", train.view, "full or partial");
    c_train->add_option("--separator", train.separator);
    c_train->add_option("--max-n", train.hp.max_n);
    c_train->add_option("--epochs", train.hp.epochs);
    c_train->add_option("--lr", train.hp.learning_rate);
    c_train->add_option("--dim", train.hp.embedding_dim);
    c_train->add_option("--buckets", train.hp.bucket_count);
    c_train->add_option("--workers", train.hp.workers);
    c_train->add_option("--seed", train.seed)->required();
    c_train->add_option("--out", train.out)->required();

    PredictBowArgs predict;
    auto* c_predict = app.add_subcommand("predict-bow", "Write prediction JSONL from a trained n-gram model");
    c_predict->add_option("--model", predict.model)->required()->check(CLI::ExistingFile);
    c_predict->add_option("--dataset", predict.dataset)->check(CLI::ExistingFile);
    c_predict->add_option("--edited", predict.edited, "Edited-set JSONL")->check(CLI::ExistingFile);
    c_predict->add_option("--split", predict.split);
    c_predict->add_option("--view", predict.view);
    c_predict->add_option("--separator", predict.separator);
    c_predict->add_option("--model-id", predict.model_id);
    c_predict->add_option("--out", predict.out)->required();

    CalibrateArgs calib;
    auto* c_calib = app.add_subcommand("calibrate", "Fit one temperature per (model, view) on validation predictions");
    c_calib->add_option("--task", calib.task)->required();
    c_calib->add_option("--valid", calib.valid)->required()->check(CLI::ExistingFile);
    c_calib->add_option("--lo", calib.lo);
    c_calib->add_option("--hi", calib.hi);
    c_calib->add_option("--out", calib.out)->required();

    SubselectArgs sub;
    auto* c_sub = app.add_subcommand("subselect", "Select instances a partial-input or lexical model gets right");
    c_sub->add_option("--task", sub.task)->required();
    c_sub->add_option("--dataset", sub.dataset)->required()->check(CLI::ExistingFile);
    c_sub->add_option("--partial", sub.partial)->required()->check(CLI::ExistingFile);
    c_sub->add_option("--bow", sub.bow)->required()->check(CLI::ExistingFile);
    c_sub->add_option("--out", sub.out)->required();

    SampleArgs sample;
    auto* c_sample = app.add_subcommand("sample-edits", "Sample (instance, target label) editing assignments");
    c_sample->add_option("--task", sample.task)->required();
    c_sample->add_option("--dataset", sample.dataset)->required()->check(CLI::ExistingFile);
    c_sample->add_option("--candidates", sample.candidates)->required()->check(CLI::ExistingFile);
    c_sample->add_option("--quota", sample.quota, "Per-direction count (default 50 nli / 150 dnli)");
    c_sample->add_option("--seed", sample.seed)->required();
    c_sample->add_option("--registry", sample.registry, "Also queue assignments in this registry");
    c_sample->add_option("--out", sample.out)->required();

    ImportArgs imp;
    auto* c_import = app.add_subcommand("import-edits", "Convert a released edit set (or a registry) to edited-set JSONL");
    c_import->add_option("--input", imp.input)->check(CLI::ExistingFile);
    c_import->add_option("--registry", imp.registry, "Export validated edits from a registry");
    c_import->add_option("--format", imp.format, "jsonl or csv (default: by extension)");
    c_import->add_option("--task", imp.task, "Task for records without a task column");
    c_import->add_option("--map", imp.maps, "field=column override");
    c_import->add_option("--out", imp.out)->required();

    EvaluateArgs eval;
    auto* c_eval = app.add_subcommand("evaluate", "Stratified edited-set accuracy and summary accuracy");
    c_eval->add_option("--task", eval.task)->required();
    c_eval->add_option("--edits", eval.edits)->check(CLI::ExistingFile);
    c_eval->add_option("--predictions", eval.predictions, "Predictions on the edited set")->check(CLI::ExistingFile);
    c_eval->add_option("--test-predictions", eval.test_predictions)->check(CLI::ExistingFile);
    c_eval->add_option("--out", eval.out, "Output directory")->required();

    AnalyzeArgs an;
    auto* c_an = app.add_subcommand("analyze", "Confidence shifts, region summaries and ternary heatmaps");
    c_an->add_option("--task", an.task)->required();
    c_an->add_option("--partial", an.partial)->check(CLI::ExistingFile);
    c_an->add_option("--full", an.full)->check(CLI::ExistingFile);
    c_an->add_option("--temperatures", an.temperatures)->check(CLI::ExistingFile);
    c_an->add_option("--edits", an.edits)->check(CLI::ExistingFile);
    c_an->add_option("--pre", an.pre)->check(CLI::ExistingFile);
    c_an->add_option("--post", an.post)->check(CLI::ExistingFile);
    c_an->add_option("--resolution", an.resolution);
    c_an->add_option("--sigma", an.sigma);
    c_an->add_option("--out", an.out, "Output directory")->required();

    KappaArgs kap;
    auto* c_kappa = app.add_subcommand("kappa", "Cohen's kappa from label pairs or registry validations");
    c_kappa->add_option("--task", kap.task);
    c_kappa->add_option("--pairs", kap.pairs, "CSV of label_a,label_b")->check(CLI::ExistingFile);
    c_kappa->add_option("--registry", kap.registry);
    c_kappa->add_option("--out", kap.out);

    ServeArgs serve;
    auto* c_serve = app.add_subcommand("serve", "Start the annotation HTTP service");
    c_serve->add_option("--registry", serve.registry)->required();
    c_serve->add_option("--analytics-dir", serve.analytics_dir);
    c_serve->add_option("--addr", serve.addr, "host:port (default $CTXPROBE_SERVE_ADDR or 127.0.0.1:8080)");
    c_serve->add_option("--required-agreements", serve.required_agreements);

    ReportArgs rep;
    auto* c_report = app.add_subcommand("report", "Bundle all artifacts into one report, refusing stale ones");
    c_report->add_option("--artifacts", rep.artifacts)->required();
    c_report->add_option("--out", rep.out)->required();

    std::vector<const char*> argv{"ctxprobe"};
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (c_ingest->parsed()) return run_ingest(ingest, out, err);
        if (c_train->parsed()) return run_train_bow(train, out, err);
        if (c_predict->parsed()) return run_predict_bow(predict, out, err);
        if (c_calib->parsed()) return run_calibrate(calib, out, err);
        if (c_sub->parsed()) return run_subselect(sub, out, err);
        if (c_sample->parsed()) return run_sample(sample, out, err);
        if (c_import->parsed()) return run_import(imp, out, err);
        if (c_eval->parsed()) return run_evaluate(eval, out, err);
        if (c_an->parsed()) return run_analyze(an, out, err);
        if (c_kappa->parsed()) return run_kappa(kap, out, err);
        if (c_serve->parsed()) return run_serve(serve, out, err);
        if (c_report->parsed()) return run_report(rep, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        switch (e.kind()) {
            case ErrorKind::usage: return kExitUsage;
            case ErrorKind::data: return kExitData;
            case ErrorKind::internal: return kExitInternal;
        }
    } catch (const json::exception& e) {
        err << "error: malformed JSON input: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}

}  // namespace ctxprobe
