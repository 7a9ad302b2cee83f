#pragma once
// Artifact-candidate subselection, sampling of (instance, target label)
// editing assignments, edited-example lifecycle with blind validation, and
// Cohen's kappa.

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ctxprobe/calibration.hpp"
#include "ctxprobe/core_data.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/random.hpp"

namespace ctxprobe {

// ---------------------------------------------------------------------------
// Subselection

struct Provenance {
    bool partial_neural_correct = false;
    bool bow_full_correct = false;
    bool operator==(const Provenance&) const = default;
};

struct CandidateSet {
    std::string dataset;
    std::map<std::string, Provenance> members;  // ordered by id

    bool contains(const std::string& id) const { return members.count(id) != 0; }
    std::size_t size() const noexcept { return members.size(); }
};

inline std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 10) {
    std::string s;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) s += (i ? ", " : "") + ids[i];
    if (ids.size() > limit) s += ", ... (" + std::to_string(ids.size()) + " total)";
    return s;
}

// An instance is a candidate iff the partial-input neural model or the
// full-input lexical model predicts its gold label.
inline CandidateSet select_artifact_candidates(std::span<const PredictionRecord> partial_neural,
                                               std::span<const PredictionRecord> bow_full,
                                               const Dataset& dataset) {
    auto index = [&](std::span<const PredictionRecord> recs, const char* what) {
        std::map<std::string, const PredictionRecord*> m;
        for (const auto& r : recs) {
            if (!m.emplace(r.instance_id, &r).second)
                throw DataError(std::string("duplicate ") + what + " record for " + r.instance_id);
            if (!dataset.find(r.instance_id))
                throw DataError(std::string(what) + " record for unknown instance " + r.instance_id);
        }
        return m;
    };
    auto partial = index(partial_neural, "partial-input");
    auto bow = index(bow_full, "bag-of-words");

    std::vector<std::string> missing;
    for (const auto& [id, _] : partial)
        if (!bow.count(id)) missing.push_back(id + " (no bag-of-words record)");
    for (const auto& [id, _] : bow)
        if (!partial.count(id)) missing.push_back(id + " (no partial-input record)");
    if (!missing.empty()) throw DataError("prediction coverage mismatch: " + join_ids(missing));

    CandidateSet out{dataset.name(), {}};
    for (const auto& [id, rec] : partial) {
        const Label gold = dataset.at(id).gold;
        Provenance p{rec->predicted() == gold, bow.at(id)->predicted() == gold};
        if (p.partial_neural_correct || p.bow_full_correct) out.members.emplace(id, p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampling

using Direction = std::pair<Label, Label>;  // (original l, target l')

// Every ordered pair of distinct labels for a task, canonical order.
inline std::vector<Direction> directions(Task t) {
    std::vector<Direction> out;
    for (Label a : labels_of(t))
        for (Label b : labels_of(t))
            if (a != b) out.emplace_back(a, b);
    return out;
}

using Quota = std::map<Direction, std::size_t>;

// 50 per directional pair for NLI (6 pairs), 150 per direction for
// defeasible NLI (2 pairs): 300 edits per task.
inline Quota default_quota(Task t) {
    Quota q;
    for (auto d : directions(t)) q[d] = t == Task::NLI ? 50 : 150;
    return q;
}

inline Quota uniform_quota(Task t, std::size_t per_direction) {
    Quota q;
    for (auto d : directions(t)) q[d] = per_direction;
    return q;
}

struct Assignment {
    std::string instance_id;
    Label original = Label::entailment;
    Label target = Label::entailment;
    bool operator==(const Assignment&) const = default;
};

// For each original label, draws the total demand without replacement from
// the candidates carrying that gold label (seeded Fisher-Yates over the
// id-ordered pool), then deals the draw to target labels in canonical order.
inline std::vector<Assignment> sample_for_editing(const CandidateSet& candidates, const Dataset& dataset,
                                                  const Quota& quota, std::uint64_t seed) {
    const Task task = dataset.task();
    for (const auto& [dir, n] : quota) {
        if (!is_valid_for(task, dir.first) || !is_valid_for(task, dir.second) || dir.first == dir.second)
            throw UsageError("invalid quota direction " + std::string(to_string(dir.first)) + "->" +
                             std::string(to_string(dir.second)));
    }
    std::map<Label, std::vector<std::string>> pools;
    for (const auto& [id, _] : candidates.members) pools[dataset.at(id).gold].push_back(id);

    std::vector<std::string> deficits;
    for (Label l : labels_of(task)) {
        std::size_t demand = 0;
        for (const auto& [dir, n] : quota)
            if (dir.first == l) demand += n;
        std::size_t have = pools[l].size();
        if (have < demand)
            deficits.push_back(std::string(to_string(l)) + ": need " + std::to_string(demand) + ", have " +
                               std::to_string(have));
    }
    if (!deficits.empty()) throw DataError("insufficient candidates: " + join_ids(deficits));

    Rng rng(seed);
    std::vector<Assignment> out;
    for (Label l : labels_of(task)) {
        auto& pool = pools[l];
        rng.shuffle(std::span<std::string>(pool));
        std::size_t next = 0;
        for (Label target : labels_of(task)) {
            auto it = quota.find({l, target});
            if (it == quota.end()) continue;
            for (std::size_t k = 0; k < it->second; ++k) out.push_back({pool[next++], l, target});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Edited examples

enum class EditStatus : std::uint8_t { draft, validated, rejected };

inline std::string_view to_string(EditStatus s) {
    switch (s) {
        case EditStatus::draft: return "draft";
        case EditStatus::validated: return "validated";
        case EditStatus::rejected: return "rejected";
    }
    return "?";
}

inline std::optional<EditStatus> parse_status(std::string_view s) {
    if (s == "draft") return EditStatus::draft;
    if (s == "validated") return EditStatus::validated;
    if (s == "rejected") return EditStatus::rejected;
    return std::nullopt;
}

struct ValidationRecord {
    std::string annotator_id;
    Label assigned_label = Label::entailment;
    std::string timestamp;
    // False for self-validation by the editor; such records never count
    // toward status or agreement.
    bool counting = true;
};

struct EditedExample {
    std::string edit_id;
    Instance original;
    TextField edited_field = TextField::premise;
    std::string edited_text;
    Label target = Label::entailment;  // l'
    std::string editor_id;
    std::vector<ValidationRecord> validations;
    EditStatus status = EditStatus::draft;

    Label original_label() const { return original.gold; }

    // The post-edit instance: edited context, unchanged target, gold l'.
    Instance edited_instance() const {
        Instance in = original;
        in.id = edit_id;
        in.field(edited_field) = edited_text;
        in.gold = target;
        return in;
    }
};

inline void check_edit_invariants(const EditedExample& e) {
    const Task task = e.original.task;
    if (!is_valid_for(task, e.target)) throw UsageError("target label not valid for task");
    if (e.target == e.original.gold) throw UsageError("target label must differ from the original label");
    if (e.edited_field == target_field(task)) throw UsageError("the target field cannot be edited");
    if (e.edited_field != editable_context_field(task))
        throw UsageError("only the " + std::string(to_string(editable_context_field(task))) +
                         " may be edited for this task");
    if (e.edited_text.empty()) throw UsageError("edited text is empty");
    if (e.edited_text == e.original.field(e.edited_field))
        throw UsageError("edited text is identical to the original " +
                         std::string(to_string(e.edited_field)));
}

// Creates a draft edit. `field` defaults to the task's editable context field;
// naming any other field is an error.
inline EditedExample register_edit(std::string edit_id, const Instance& original, Label target,
                                   std::string edited_text, std::string editor_id,
                                   std::optional<TextField> field = std::nullopt) {
    if (auto bad = check_instance(original)) throw DataError("original instance: " + *bad);
    EditedExample e;
    e.edit_id = std::move(edit_id);
    e.original = original;
    e.edited_field = field.value_or(editable_context_field(original.task));
    e.edited_text = std::move(edited_text);
    e.target = target;
    e.editor_id = std::move(editor_id);
    check_edit_invariants(e);
    return e;
}

// Status policy: an edit is rejected as soon as one counting validation
// disagrees with l'; it is validated once `required_agreements` counting
// validations agree; otherwise it stays a draft.
struct ValidationPolicy {
    std::size_t required_agreements = 1;
};

inline EditStatus derive_status(const EditedExample& e, const ValidationPolicy& policy) {
    std::size_t agree = 0;
    for (const auto& v : e.validations) {
        if (!v.counting) continue;
        if (v.assigned_label != e.target) return EditStatus::rejected;
        ++agree;
    }
    return agree >= policy.required_agreements ? EditStatus::validated : EditStatus::draft;
}

// Appends a blind validation. A repeated submission by the same annotator with
// the same label is a no-op; with a different label it is a conflict.
// Returns the (possibly pre-existing) record.
inline const ValidationRecord& record_blind_validation(EditedExample& e, std::string annotator_id,
                                                       Label assigned, std::string timestamp,
                                                       const ValidationPolicy& policy = {}) {
    if (!is_valid_for(e.original.task, assigned)) throw UsageError("label not valid for the edit's task");
    if (annotator_id.empty()) throw UsageError("annotator id is empty");
    for (const auto& v : e.validations) {
        if (v.annotator_id != annotator_id) continue;
        if (v.assigned_label != assigned)
            throw ConflictError("annotator " + annotator_id + " already labeled edit " + e.edit_id);
        return v;
    }
    ValidationRecord v{std::move(annotator_id), assigned, std::move(timestamp), true};
    v.counting = v.annotator_id != e.editor_id;
    e.validations.push_back(std::move(v));
    e.status = derive_status(e, policy);
    return e.validations.back();
}

// ---------------------------------------------------------------------------
// Cohen's kappa

struct AgreementReport {
    Task task = Task::NLI;
    std::size_t n = 0;
    double p_o = 0;
    double p_e = 0;
    double kappa = 0;
    // confusion[a][b]: rater A said label index a, rater B said b.
    std::vector<std::vector<std::size_t>> confusion;
    // Set when p_e = 1 (both raters constant); kappa is then 1 if the raters
    // agree and 0 otherwise.
    bool degenerate = false;
};

inline AgreementReport cohen_kappa(std::span<const std::pair<Label, Label>> pairs) {
    if (pairs.empty()) throw UsageError("cohen_kappa needs at least one pair");
    AgreementReport r;
    r.task = task_of(pairs.front().first);
    const std::size_t k = label_arity(r.task);
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    for (const auto& [a, b] : pairs) {
        if (task_of(a) != r.task || task_of(b) != r.task)
            throw UsageError("all labels must come from one task's label set");
        ++r.confusion[label_index(a)][label_index(b)];
    }
    r.n = pairs.size();
    const double n = static_cast<double>(r.n);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < k; ++i) agree += r.confusion[i][i];
    r.p_o = static_cast<double>(agree) / n;
    for (std::size_t i = 0; i < k; ++i) {
        double row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += static_cast<double>(r.confusion[i][j]);
            col += static_cast<double>(r.confusion[j][i]);
        }
        r.p_e += (row / n) * (col / n);
    }
    if (r.p_e >= 1.0) {
        r.degenerate = true;
        r.kappa = r.p_o >= 1.0 ? 1.0 : 0.0;
    } else {
        r.kappa = (r.p_o - r.p_e) / (1.0 - r.p_e);
    }
    return r;
}

inline json to_json(const AgreementReport& r) {
    return json{{"task", to_string(r.task)}, {"n", r.n},         {"p_o", r.p_o},
                {"p_e", r.p_e},              {"kappa", r.kappa}, {"confusion", r.confusion},
                {"degenerate", r.degenerate}, {"label_order", label_order_json(r.task)}};
}

// Pairs (editor's intended l', validator label) over counting validations.
inline std::vector<std::pair<Label, Label>> agreement_pairs(std::span<const EditedExample> edits, Task task) {
    std::vector<std::pair<Label, Label>> out;
    for (const auto& e : edits) {
        if (e.original.task != task) continue;
        for (const auto& v : e.validations)
            if (v.counting) out.emplace_back(e.target, v.assigned_label);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Edited-set JSONL (the exported evaluation set)
//
// {"edit_id", "original_id", "task", "premise", "hypothesis", "update",
//  "edited_field", "original_label", "target_label", "status"}
// Texts are post-edit.

struct EditedRecord {
    std::string edit_id;
    std::string original_id;
    Task task = Task::NLI;
    std::string premise;
    std::string hypothesis;
    std::optional<std::string> update;
    TextField edited_field = TextField::premise;
    Label original_label = Label::entailment;
    Label target_label = Label::entailment;
    EditStatus status = EditStatus::validated;

    // The post-edit instance, gold = l'.
    Instance instance() const {
        return Instance{edit_id, task, premise, hypothesis, update, target_label, Split::test};
    }
    bool operator==(const EditedRecord&) const = default;
};

inline EditedRecord to_record(const EditedExample& e) {
    Instance post = e.edited_instance();
    return EditedRecord{e.edit_id,        e.original.id,        e.original.task, post.premise,
                        post.hypothesis,  post.update,          e.edited_field,  e.original.gold,
                        e.target,         e.status};
}

inline json to_json(const EditedRecord& r) {
    json j;
    j["edit_id"] = r.edit_id;
    j["original_id"] = r.original_id;
    j["task"] = to_string(r.task);
    j["premise"] = r.premise;
    j["hypothesis"] = r.hypothesis;
    j["update"] = r.update ? json(*r.update) : json(nullptr);
    j["edited_field"] = to_string(r.edited_field);
    j["original_label"] = to_string(r.original_label);
    j["target_label"] = to_string(r.target_label);
    j["status"] = to_string(r.status);
    return j;
}

inline EditedRecord edited_record_from_json(const json& j) {
    EditedRecord r;
    r.edit_id = j.at("edit_id").get<std::string>();
    r.original_id = j.at("original_id").get<std::string>();
    auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw DataError("unknown task");
    r.task = *task;
    r.premise = j.at("premise").get<std::string>();
    r.hypothesis = j.at("hypothesis").get<std::string>();
    if (auto it = j.find("update"); it != j.end() && !it->is_null()) r.update = it->get<std::string>();
    auto field = parse_text_field(j.at("edited_field").get<std::string>());
    if (!field) throw DataError("unknown edited_field");
    r.edited_field = *field;
    r.original_label = require_label(r.task, j.at("original_label").get<std::string>());
    r.target_label = require_label(r.task, j.at("target_label").get<std::string>());
    auto status = parse_status(j.at("status").get<std::string>());
    if (!status) throw DataError("unknown status");
    r.status = *status;
    if (r.edited_field != editable_context_field(r.task)) throw DataError("edited_field not editable for task");
    if (r.original_label == r.target_label) throw DataError("target_label equals original_label");
    if (auto bad = check_instance(r.instance())) throw DataError(*bad);
    return r;
}

inline std::vector<EditedRecord> read_edited_set(std::istream& is) {
    std::vector<EditedRecord> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto r = edited_record_from_json(json::parse(line));
            if (!ids.insert(r.edit_id).second) throw DataError("duplicate edit_id " + r.edit_id);
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw DataError("edited-set line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void write_edited_set(std::ostream& os, std::span<const EditedRecord> records) {
    for (const auto& r : records) os << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Importer for externally produced edit sets (JSONL or CSV with a header row).
//
// Fields are located through an alias table (overridable per column), so files
// using names such as "sentence1"/"new_premise"/"label"/"new_label" map onto
// the edited-set schema. Records are taken as validated ground truth unless
// a status column says otherwise.

struct ImportMapping {
    std::map<std::string, std::vector<std::string>> aliases{
        {"edit_id", {"edit_id", "id", "example_id", "uid"}},
        {"original_id", {"original_id", "orig_id", "pairID", "pair_id", "source_id"}},
        {"task", {"task"}},
        {"premise", {"premise", "edited_premise", "new_premise", "sentence1", "Premise"}},
        {"hypothesis", {"hypothesis", "edited_hypothesis", "new_hypothesis", "sentence2", "Hypothesis"}},
        {"update", {"update", "Update"}},
        {"original_label", {"original_label", "orig_label", "label", "old_label", "gold_label"}},
        {"target_label", {"target_label", "new_label", "edited_label", "induced_label"}},
        {"status", {"status"}},
    };

    void override_field(const std::string& field, const std::string& column) { aliases[field] = {column}; }
};

namespace detail {

inline std::vector<std::string> parse_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

// Reads one CSV record, joining physical lines while inside quotes.
inline bool read_csv_record(std::istream& is, std::string& record) {
    record.clear();
    std::string line;
    bool any = false;
    while (std::getline(is, line)) {
        if (any) record.push_back('\n');
        record += line;
        any = true;
        if (std::count(record.begin(), record.end(), '"') % 2 == 0) return true;
    }
    return any;
}

inline std::string normalize_label_text(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "e" || s == "ent") return "entailment";
    if (s == "n" || s == "neu") return "neutral";
    if (s == "c" || s == "con") return "contradiction";
    if (s == "s" || s == "str") return "strengthener";
    if (s == "w" || s == "weak") return "weakener";
    return s;
}

}  // namespace detail

struct ImportResult {
    std::vector<EditedRecord> records;
    std::vector<ParseIssue> issues;
};

inline ImportResult import_edited_set(std::istream& is, bool csv, std::optional<Task> default_task,
                                      const ImportMapping& mapping = {}) {
    ImportResult out;
    std::vector<std::map<std::string, std::string>> rows;
    if (csv) {
        std::string rec;
        if (!detail::read_csv_record(is, rec)) return out;
        auto header = detail::parse_csv_row(rec);
        while (detail::read_csv_record(is, rec)) {
            if (rec.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto cells = detail::parse_csv_row(rec);
            std::map<std::string, std::string> row;
            for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
            rows.push_back(std::move(row));
        }
    } else {
        std::string line;
        while (std::getline(is, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::map<std::string, std::string> row;
            try {
                json j = json::parse(line);
                for (auto it = j.begin(); it != j.end(); ++it)
                    if (it->is_string()) row[it.key()] = it->get<std::string>();
                    else if (it->is_number_integer()) row[it.key()] = std::to_string(it->get<long long>());
            } catch (const json::exception& e) {
                row["__error"] = e.what();
            }
            rows.push_back(std::move(row));
        }
    }

    std::set<std::string> ids;
    std::size_t rowno = 0;
    for (const auto& row : rows) {
        ++rowno;
        try {
            if (auto it = row.find("__error"); it != row.end()) throw DataError(it->second);
            auto get = [&](const std::string& field) -> std::optional<std::string> {
                for (const auto& name : mapping.aliases.at(field))
                    if (auto it = row.find(name); it != row.end() && !it->second.empty()) return it->second;
                return std::nullopt;
            };
            auto require = [&](const std::string& field) {
                auto v = get(field);
                if (!v) throw DataError("missing " + field);
                return *v;
            };
            EditedRecord r;
            if (auto t = get("task")) {
                auto task = parse_task(*t);
                if (!task) throw DataError("unknown task " + *t);
                r.task = *task;
            } else if (default_task) {
                r.task = *default_task;
            } else {
                r.task = get("update") ? Task::DefeasibleNLI : Task::NLI;
            }
            r.edit_id = get("edit_id").value_or("imported-" + std::to_string(rowno));
            r.original_id = get("original_id").value_or(r.edit_id);
            r.premise = require("premise");
            r.hypothesis = require("hypothesis");
            r.update = get("update");
            r.edited_field = editable_context_field(r.task);
            r.original_label =
                require_label(r.task, detail::normalize_label_text(require("original_label")));
            r.target_label = require_label(r.task, detail::normalize_label_text(require("target_label")));
            if (auto s = get("status")) {
                auto st = parse_status(*s);
                if (!st) throw DataError("unknown status " + *s);
                r.status = *st;
            }
            if (r.original_label == r.target_label) throw DataError("target label equals original label");
            if (auto bad = check_instance(r.instance())) throw DataError(*bad);
            if (!ids.insert(r.edit_id).second) throw DataError("duplicate edit id " + r.edit_id);
            out.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            out.issues.push_back({rowno, e.what()});
        }
    }
    return out;
}

}  // namespace ctxprobe
