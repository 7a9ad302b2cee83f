#pragma once
// Dataset schemas for NLI and defeasible NLI, context/target decomposition,
// JSONL ingestion and split-size validation.
//
// Context/target decomposition:
//   NLI            context = premise,                 target = hypothesis
//   DefeasibleNLI  context = premise + sep + hypothesis, target = update
// A partial-input view exposes the target only.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

using json = nlohmann::json;

enum class Task : std::uint8_t { NLI, DefeasibleNLI };

inline std::string_view to_string(Task t) {
    return t == Task::NLI ? "nli" : "dnli";
}

inline std::optional<Task> parse_task(std::string_view s) {
    if (s == "nli") return Task::NLI;
    if (s == "dnli") return Task::DefeasibleNLI;
    return std::nullopt;
}

// Canonical label indices: entailment=0, neutral=1, contradiction=2;
// weakener=0, strengthener=1. Logit vectors are indexed in this order.
enum class Label : std::uint8_t { entailment, neutral, contradiction, weakener, strengthener };

inline constexpr std::array<Label, 3> kNliLabels{Label::entailment, Label::neutral,
                                                 Label::contradiction};
inline constexpr std::array<Label, 2> kDnliLabels{Label::weakener, Label::strengthener};

constexpr Task task_of(Label l) {
    return (l == Label::weakener || l == Label::strengthener) ? Task::DefeasibleNLI : Task::NLI;
}

constexpr std::size_t label_arity(Task t) { return t == Task::NLI ? 3 : 2; }

constexpr std::size_t label_index(Label l) {
    switch (l) {
        case Label::entailment: return 0;
        case Label::neutral: return 1;
        case Label::contradiction: return 2;
        case Label::weakener: return 0;
        case Label::strengthener: return 1;
    }
    return 0;
}

inline std::span<const Label> labels_of(Task t) {
    if (t == Task::NLI) return kNliLabels;
    return kDnliLabels;
}

inline Label label_at(Task t, std::size_t index) {
    auto labels = labels_of(t);
    if (index >= labels.size())
        throw UsageError("label index " + std::to_string(index) + " out of range for task " +
                         std::string(to_string(t)));
    return labels[index];
}

constexpr bool is_valid_for(Task t, Label l) { return task_of(l) == t; }

inline std::string_view to_string(Label l) {
    switch (l) {
        case Label::entailment: return "entailment";
        case Label::neutral: return "neutral";
        case Label::contradiction: return "contradiction";
        case Label::weakener: return "weakener";
        case Label::strengthener: return "strengthener";
    }
    return "?";
}

inline std::optional<Label> parse_label(Task t, std::string_view s) {
    for (Label l : labels_of(t))
        if (to_string(l) == s) return l;
    return std::nullopt;
}

inline Label require_label(Task t, std::string_view s) {
    if (auto l = parse_label(t, s)) return *l;
    throw DataError("label '" + std::string(s) + "' is not in the " + std::string(to_string(t)) +
                    " label set");
}

enum class Split : std::uint8_t { train, valid, test };
inline constexpr std::array<Split, 3> kSplits{Split::train, Split::valid, Split::test};

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "valid" || s == "dev" || s == "validation") return Split::valid;
    if (s == "test") return Split::test;
    return std::nullopt;
}

using SplitCounts = std::array<std::size_t, 3>;  // indexed by Split

enum class TextField : std::uint8_t { premise, hypothesis, update };

inline std::string_view to_string(TextField f) {
    switch (f) {
        case TextField::premise: return "premise";
        case TextField::hypothesis: return "hypothesis";
        case TextField::update: return "update";
    }
    return "?";
}

inline std::optional<TextField> parse_text_field(std::string_view s) {
    if (s == "premise") return TextField::premise;
    if (s == "hypothesis") return TextField::hypothesis;
    if (s == "update") return TextField::update;
    return std::nullopt;
}

// The single context field an editor may rewrite for a task.
constexpr TextField editable_context_field(Task t) {
    return t == Task::NLI ? TextField::premise : TextField::hypothesis;
}

constexpr TextField target_field(Task t) {
    return t == Task::NLI ? TextField::hypothesis : TextField::update;
}

enum class InputView : std::uint8_t { Partial, Full };

inline std::string_view to_string(InputView v) { return v == InputView::Partial ? "partial" : "full"; }

inline std::optional<InputView> parse_view(std::string_view s) {
    if (s == "partial") return InputView::Partial;
    if (s == "full") return InputView::Full;
    return std::nullopt;
}

struct Instance {
    std::string id;
    Task task = Task::NLI;
    std::string premise;
    std::string hypothesis;
    std::optional<std::string> update;
    Label gold = Label::entailment;
    Split split = Split::test;

    const std::string& field(TextField f) const {
        switch (f) {
            case TextField::premise: return premise;
            case TextField::hypothesis: return hypothesis;
            case TextField::update:
                if (!update) throw DataError("instance " + id + " has no update sentence");
                return *update;
        }
        return premise;
    }

    std::string& field(TextField f) {
        return const_cast<std::string&>(std::as_const(*this).field(f));
    }

    bool operator==(const Instance&) const = default;
};

// Returns the first violated invariant, if any.
inline std::optional<std::string> check_instance(const Instance& in) {
    if (in.id.empty()) return "empty id";
    if (in.premise.empty()) return "empty premise";
    if (in.hypothesis.empty()) return "empty hypothesis";
    if (in.task == Task::DefeasibleNLI) {
        if (!in.update || in.update->empty()) return "defeasible instance without update";
    } else if (in.update) {
        return "NLI instance carries an update";
    }
    if (!is_valid_for(in.task, in.gold)) return "gold label not valid for task";
    return std::nullopt;
}

class Dataset {
public:
    Dataset() = default;

    Dataset(std::string name, Task task, std::vector<Instance> instances)
        : name_(std::move(name)), task_(task), instances_(std::move(instances)) {
        index_.reserve(instances_.size());
        for (std::size_t i = 0; i < instances_.size(); ++i) {
            const Instance& in = instances_[i];
            if (in.task != task_)
                throw DataError("instance " + in.id + " does not share the dataset task");
            if (auto bad = check_instance(in)) throw DataError("instance " + in.id + ": " + *bad);
            if (!index_.emplace(in.id, i).second) throw DataError("duplicate id " + in.id);
            ++counts_[static_cast<std::size_t>(in.split)];
        }
    }

    const std::string& name() const noexcept { return name_; }
    Task task() const noexcept { return task_; }
    std::size_t size() const noexcept { return instances_.size(); }
    bool empty() const noexcept { return instances_.empty(); }
    std::span<const Instance> instances() const noexcept { return instances_; }
    const SplitCounts& split_counts() const noexcept { return counts_; }

    const Instance* find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &instances_[it->second];
    }

    const Instance& at(std::string_view id) const {
        if (const Instance* in = find(id)) return *in;
        throw NotFoundError("unknown instance id " + std::string(id));
    }

    std::vector<Instance> split(Split s) const {
        std::vector<Instance> out;
        for (const auto& in : instances_)
            if (in.split == s) out.push_back(in);
        return out;
    }

private:
    std::string name_;
    Task task_ = Task::NLI;
    std::vector<Instance> instances_;
    std::unordered_map<std::string, std::size_t> index_;
    SplitCounts counts_{};
};

// ---------------------------------------------------------------------------
// Decomposition

struct DecomposeOptions {
    std::string separator = " ";
};

struct ContextTarget {
    std::string context;
    std::string target;
    bool operator==(const ContextTarget&) const = default;
};

inline ContextTarget decompose(const Instance& in, const DecomposeOptions& opt = {}) {
    if (in.task == Task::NLI) return {in.premise, in.hypothesis};
    if (!in.update) throw DataError("defeasible instance " + in.id + " is missing its update");
    return {in.premise + opt.separator + in.hypothesis, *in.update};
}

// Model input pair; `first` is empty for the partial view.
struct TextPair {
    std::string first;
    std::string second;
    bool operator==(const TextPair&) const = default;
};

inline TextPair render_view(const Instance& in, InputView view, const DecomposeOptions& opt = {}) {
    auto ct = decompose(in, opt);
    if (view == InputView::Partial) return {std::string{}, std::move(ct.target)};
    return {std::move(ct.context), std::move(ct.target)};
}

// ---------------------------------------------------------------------------
// JSONL serialization

inline json to_json(const Instance& in) {
    json j;
    j["id"] = in.id;
    j["task"] = to_string(in.task);
    j["premise"] = in.premise;
    j["hypothesis"] = in.hypothesis;
    j["update"] = in.update ? json(*in.update) : json(nullptr);
    j["gold"] = to_string(in.gold);
    j["split"] = to_string(in.split);
    return j;
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    for (const auto& in : ds.instances()) os << to_json(in).dump() << '\n';
}

// Input dialects. `native` is the project schema; the raw dialects accept the
// public SNLI 1.0 and defeasible-NLI distributions directly.
enum class SourceFormat { native, snli_raw, dnli_raw };

inline std::optional<SourceFormat> parse_source_format(std::string_view s) {
    if (s == "native") return SourceFormat::native;
    if (s == "snli") return SourceFormat::snli_raw;
    if (s == "dnli") return SourceFormat::dnli_raw;
    return std::nullopt;
}

struct ParseOptions {
    std::string name;
    SourceFormat format = SourceFormat::native;
    // Raw dialects carry no split field; this supplies it.
    std::optional<Split> split;
    // Abort on the first malformed line instead of skipping it.
    bool strict = false;
};

struct ParseIssue {
    std::size_t line = 0;
    std::string reason;
};

// Records whose gold field is "-" or empty (no annotator consensus) are
// well-formed but carry no admissible label. They are excluded from the
// Dataset and tallied per split so published split sizes remain checkable.
inline bool is_no_consensus(std::string_view gold) { return gold.empty() || gold == "-"; }

class DatasetBuilder {
public:
    DatasetBuilder(std::string name, Task task) : name_(std::move(name)), task_(task) {}

    // Returns the number of instances admitted from this stream.
    std::size_t add_stream(std::istream& is, const ParseOptions& opt) {
        std::string line;
        std::size_t lineno = 0, admitted = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            std::string reason;
            try {
                if (auto in = parse_line(line, opt, lineno)) {
                    if (auto bad = check_instance(*in)) {
                        reason = *bad;
                    } else if (!seen_.emplace(in->id, instances_.size()).second) {
                        reason = "duplicate id " + in->id;
                    } else {
                        instances_.push_back(std::move(*in));
                        ++admitted;
                        continue;
                    }
                } else {
                    continue;  // no-consensus record, tallied
                }
            } catch (const json::exception& e) {
                reason = std::string("malformed JSON: ") + e.what();
            } catch (const DataError& e) {
                reason = e.what();
            }
            if (opt.strict)
                throw DataError(opt.name + ":" + std::to_string(lineno) + ": " + reason);
            issues_.push_back({lineno, std::move(reason)});
        }
        return admitted;
    }

    Dataset build() && { return Dataset(name_, task_, std::move(instances_)); }

    const std::vector<ParseIssue>& issues() const noexcept { return issues_; }
    const SplitCounts& no_consensus() const noexcept { return no_consensus_; }

private:
    static const json& member(const json& j, const char* key) {
        auto it = j.find(key);
        if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
        return *it;
    }

    static std::string text_member(const json& j, const char* key) {
        const json& v = member(j, key);
        if (!v.is_string()) throw DataError(std::string("field '") + key + "' is not a string");
        return v.get<std::string>();
    }

    // Case-insensitive lookup used for the raw defeasible dialect.
    static const json* find_ci(const json& j, std::string_view key) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            if (k.size() == key.size() &&
                std::equal(k.begin(), k.end(), key.begin(), [](char a, char b) {
                    return std::tolower(static_cast<unsigned char>(a)) ==
                           std::tolower(static_cast<unsigned char>(b));
                }))
                return &*it;
        }
        return nullptr;
    }

    Split require_split(const ParseOptions& opt) const {
        if (!opt.split) throw UsageError("raw dataset formats require an explicit split");
        return *opt.split;
    }

    std::optional<Instance> parse_line(const std::string& line, const ParseOptions& opt,
                                       std::size_t lineno) {
        json j = json::parse(line);
        if (!j.is_object()) throw DataError("record is not a JSON object");
        Instance in;
        in.task = task_;
        std::string gold;
        switch (opt.format) {
            case SourceFormat::native: {
                auto task = parse_task(text_member(j, "task"));
                if (!task) throw DataError("unknown task '" + text_member(j, "task") + "'");
                if (*task != task_) throw DataError("record task does not match dataset task");
                in.id = text_member(j, "id");
                in.premise = text_member(j, "premise");
                in.hypothesis = text_member(j, "hypothesis");
                if (auto it = j.find("update"); it != j.end() && !it->is_null()) {
                    if (!it->is_string()) throw DataError("field 'update' is not a string");
                    in.update = it->get<std::string>();
                }
                gold = text_member(j, "gold");
                auto split = parse_split(text_member(j, "split"));
                if (!split) throw DataError("unknown split '" + text_member(j, "split") + "'");
                in.split = *split;
                break;
            }
            case SourceFormat::snli_raw: {
                if (task_ != Task::NLI) throw UsageError("snli format requires task nli");
                in.id = text_member(j, "pairID");
                in.premise = text_member(j, "sentence1");
                in.hypothesis = text_member(j, "sentence2");
                gold = text_member(j, "gold_label");
                in.split = require_split(opt);
                break;
            }
            case SourceFormat::dnli_raw: {
                if (task_ != Task::DefeasibleNLI) throw UsageError("dnli format requires task dnli");
                auto text = [&](std::string_view key) -> std::string {
                    const json* v = find_ci(j, key);
                    if (!v || !v->is_string())
                        throw DataError("missing string field '" + std::string(key) + "'");
                    return v->get<std::string>();
                };
                in.split = require_split(opt);
                in.premise = text("premise");
                in.hypothesis = text("hypothesis");
                in.update = text("update");
                gold = text("updatetype");
                // The distribution has no per-update identifier.
                in.id = std::string(to_string(in.split)) + "-" + std::to_string(lineno);
                break;
            }
        }
        if (is_no_consensus(gold)) {
            ++no_consensus_[static_cast<std::size_t>(in.split)];
            return std::nullopt;
        }
        in.gold = require_label(task_, gold);
        return in;
    }

    std::string name_;
    Task task_;
    std::vector<Instance> instances_;
    std::unordered_map<std::string, std::size_t> seen_;
    std::vector<ParseIssue> issues_;
    SplitCounts no_consensus_{};
};

struct ParseResult {
    Dataset dataset;
    std::vector<ParseIssue> issues;
    SplitCounts no_consensus{};

    std::size_t skipped() const noexcept { return issues.size(); }
};

inline ParseResult parse_dataset(std::istream& is, Task task, const ParseOptions& opt = {}) {
    DatasetBuilder b(opt.name, task);
    b.add_stream(is, opt);
    ParseResult r;
    r.issues = b.issues();
    r.no_consensus = b.no_consensus();
    r.dataset = std::move(b).build();
    return r;
}

// ---------------------------------------------------------------------------
// Split-size validation

struct SplitCheck {
    Split split = Split::train;
    std::size_t expected = 0;
    std::size_t actual = 0;          // admitted instances + no-consensus records
    std::size_t no_consensus = 0;
    bool pass = false;
};

struct SplitReport {
    std::string dataset;
    std::vector<SplitCheck> entries;

    bool all_pass() const {
        return std::all_of(entries.begin(), entries.end(), [](const SplitCheck& c) { return c.pass; });
    }
};

inline SplitReport validate_split_sizes(const Dataset& ds, const SplitCounts& expected,
                                        const SplitCounts& no_consensus = {}) {
    SplitReport r{ds.name(), {}};
    for (Split s : kSplits) {
        auto i = static_cast<std::size_t>(s);
        SplitCheck c;
        c.split = s;
        c.expected = expected[i];
        c.no_consensus = no_consensus[i];
        c.actual = ds.split_counts()[i] + no_consensus[i];
        c.pass = c.actual == c.expected;
        r.entries.push_back(c);
    }
    return r;
}

// Published train/valid/test sizes.
inline std::optional<SplitCounts> known_split_sizes(std::string_view name) {
    static const std::map<std::string, SplitCounts, std::less<>> table{
        {"snli", {550152, 10000, 10000}},
        {"dnli", {200694, 14968, 15414}},
        {"dsnli", {88676, 1785, 1837}},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

}  // namespace ctxprobe
