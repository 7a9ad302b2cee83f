#pragma once
// Persisted store of editing assignments and edited examples.
//
// The store is a JSONL file of {"kind": "assignment"|"edit", ...} lines,
// rewritten through a temporary file and rename after every mutation. All
// operations hold one mutex, so updates to a single edit are serialized.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ctxprobe/core_data.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/probe_pipeline.hpp"

namespace ctxprobe {

struct PendingAssignment {
    std::string assignment_id;
    Instance instance;
    Label target = Label::entailment;
    std::optional<std::string> edit_id;  // set once an edit was registered
};

inline json to_json(const ValidationRecord& v) {
    return json{{"annotator_id", v.annotator_id},
                {"assigned_label", to_string(v.assigned_label)},
                {"timestamp", v.timestamp},
                {"counting", v.counting}};
}

inline json to_json(const EditedExample& e) {
    json vals = json::array();
    for (const auto& v : e.validations) vals.push_back(to_json(v));
    return json{{"kind", "edit"},
                {"edit_id", e.edit_id},
                {"original", to_json(e.original)},
                {"edited_field", to_string(e.edited_field)},
                {"edited_text", e.edited_text},
                {"target_label", to_string(e.target)},
                {"editor_id", e.editor_id},
                {"validations", vals},
                {"status", to_string(e.status)}};
}

inline Instance instance_from_json(const json& j) {
    std::istringstream is(j.dump());
    auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw DataError("unknown task in stored instance");
    ParseOptions opt;
    opt.strict = true;
    auto r = parse_dataset(is, *task, opt);
    if (r.dataset.size() != 1) throw DataError("stored instance has no admissible label");
    return r.dataset.instances().front();
}

inline EditedExample edited_example_from_json(const json& j) {
    EditedExample e;
    e.edit_id = j.at("edit_id").get<std::string>();
    e.original = instance_from_json(j.at("original"));
    const Task task = e.original.task;
    auto field = parse_text_field(j.at("edited_field").get<std::string>());
    if (!field) throw DataError("unknown edited_field");
    e.edited_field = *field;
    e.edited_text = j.at("edited_text").get<std::string>();
    e.target = require_label(task, j.at("target_label").get<std::string>());
    e.editor_id = j.at("editor_id").get<std::string>();
    for (const auto& v : j.at("validations"))
        e.validations.push_back({v.at("annotator_id").get<std::string>(),
                                 require_label(task, v.at("assigned_label").get<std::string>()),
                                 v.at("timestamp").get<std::string>(), v.at("counting").get<bool>()});
    auto st = parse_status(j.at("status").get<std::string>());
    if (!st) throw DataError("unknown status");
    e.status = *st;
    check_edit_invariants(e);
    return e;
}

class EditRegistry {
public:
    // An empty path keeps the registry in memory only.
    explicit EditRegistry(std::filesystem::path path = {}, ValidationPolicy policy = {})
        : path_(std::move(path)), policy_(policy) {
        if (!path_.empty() && std::filesystem::exists(path_)) load();
    }

    const std::filesystem::path& path() const noexcept { return path_; }

    std::string add_assignment(const Instance& instance, Label target) {
        std::lock_guard lock(mu_);
        if (auto bad = check_instance(instance)) throw DataError("assignment instance: " + *bad);
        if (!is_valid_for(instance.task, target) || target == instance.gold)
            throw UsageError("assignment target must be a different label of the same task");
        PendingAssignment a{next_id("a", ++assignment_counter_), instance, target, std::nullopt};
        assignments_.push_back(a);
        persist_locked();
        return a.assignment_id;
    }

    std::vector<std::string> add_assignments(std::span<const Assignment> sampled, const Dataset& ds) {
        std::vector<std::string> ids;
        for (const auto& a : sampled) ids.push_back(add_assignment(ds.at(a.instance_id), a.target));
        return ids;
    }

    std::optional<PendingAssignment> next_for_editor() const {
        std::lock_guard lock(mu_);
        for (const auto& a : assignments_)
            if (!a.edit_id) return a;
        return std::nullopt;
    }

    EditedExample register_edit(const std::string& assignment_id, std::string edited_text,
                                std::string editor_id, std::optional<TextField> field = std::nullopt) {
        std::lock_guard lock(mu_);
        auto it = std::find_if(assignments_.begin(), assignments_.end(),
                               [&](const PendingAssignment& a) { return a.assignment_id == assignment_id; });
        if (it == assignments_.end()) throw NotFoundError("unknown assignment " + assignment_id);
        if (it->edit_id) throw ConflictError("assignment " + assignment_id + " already has edit " + *it->edit_id);
        auto e = ctxprobe::register_edit(next_id("e", edit_counter_ + 1), it->instance, it->target,
                                         std::move(edited_text), std::move(editor_id), field);
        ++edit_counter_;
        it->edit_id = e.edit_id;
        edits_.push_back(e);
        persist_locked();
        return e;
    }

    // Registers an edit without a prior assignment.
    EditedExample register_edit(const Instance& original, Label target, std::string edited_text,
                                std::string editor_id, std::optional<TextField> field = std::nullopt) {
        std::lock_guard lock(mu_);
        auto e = ctxprobe::register_edit(next_id("e", edit_counter_ + 1), original, target,
                                         std::move(edited_text), std::move(editor_id), field);
        ++edit_counter_;
        edits_.push_back(e);
        persist_locked();
        return e;
    }

    // Returns the updated edit and the stored validation record.
    std::pair<EditedExample, ValidationRecord> add_validation(const std::string& edit_id,
                                                              std::string annotator_id, Label label,
                                                              std::string timestamp) {
        std::lock_guard lock(mu_);
        EditedExample& e = find_locked(edit_id);
        const std::size_t before = e.validations.size();
        ValidationRecord v = record_blind_validation(e, std::move(annotator_id), label, std::move(timestamp), policy_);
        if (e.validations.size() != before) persist_locked();
        return {e, v};
    }

    // The next draft edit this annotator may label blind: not their own and
    // not already labeled by them.
    std::optional<EditedExample> next_for_validator(const std::string& annotator_id) const {
        std::lock_guard lock(mu_);
        for (const auto& e : edits_) {
            if (e.status != EditStatus::draft || e.editor_id == annotator_id) continue;
            bool labeled = std::any_of(e.validations.begin(), e.validations.end(),
                                       [&](const ValidationRecord& v) { return v.annotator_id == annotator_id; });
            if (!labeled) return e;
        }
        return std::nullopt;
    }

    EditedExample get(const std::string& edit_id) const {
        std::lock_guard lock(mu_);
        return const_cast<EditRegistry*>(this)->find_locked(edit_id);
    }

    std::vector<EditedExample> edits() const {
        std::lock_guard lock(mu_);
        return edits_;
    }

    std::vector<PendingAssignment> assignments() const {
        std::lock_guard lock(mu_);
        return assignments_;
    }

    std::vector<Task> tasks() const {
        std::lock_guard lock(mu_);
        std::vector<Task> out;
        for (const auto& e : edits_)
            if (std::find(out.begin(), out.end(), e.original.task) == out.end()) out.push_back(e.original.task);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::optional<AgreementReport> agreement(Task task) const {
        std::lock_guard lock(mu_);
        auto pairs = agreement_pairs(edits_, task);
        if (pairs.empty()) return std::nullopt;
        return cohen_kappa(pairs);
    }

    // Only validated edits belong to the evaluation set; rejected ones stay
    // in the store.
    std::vector<EditedRecord> export_records(bool validated_only = true) const {
        std::lock_guard lock(mu_);
        std::vector<EditedRecord> out;
        for (const auto& e : edits_)
            if (!validated_only || e.status == EditStatus::validated) out.push_back(to_record(e));
        return out;
    }

private:
    static std::string next_id(const char* prefix, std::size_t n) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%06zu", prefix, n);
        return buf;
    }

    EditedExample& find_locked(const std::string& edit_id) {
        for (auto& e : edits_)
            if (e.edit_id == edit_id) return e;
        throw NotFoundError("unknown edit " + edit_id);
    }

    void load() {
        std::ifstream in(path_);
        if (!in) throw DataError("cannot open registry " + path_.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                json j = json::parse(line);
                const std::string kind = j.at("kind").get<std::string>();
                if (kind == "assignment") {
                    PendingAssignment a;
                    a.assignment_id = j.at("assignment_id").get<std::string>();
                    a.instance = instance_from_json(j.at("instance"));
                    a.target = require_label(a.instance.task, j.at("target_label").get<std::string>());
                    if (auto it = j.find("edit_id"); it != j.end() && !it->is_null()) a.edit_id = it->get<std::string>();
                    assignments_.push_back(std::move(a));
                } else if (kind == "edit") {
                    edits_.push_back(edited_example_from_json(j));
                } else {
                    throw DataError("unknown record kind " + kind);
                }
            } catch (const std::exception& e) {
                throw DataError(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        assignment_counter_ = assignments_.size();
        edit_counter_ = edits_.size();
    }

    void persist_locked() const {
        if (path_.empty()) return;
        auto tmp = path_;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw Error(ErrorKind::internal, "cannot write " + tmp.string());
            for (const auto& a : assignments_) {
                json j{{"kind", "assignment"},
                       {"assignment_id", a.assignment_id},
                       {"instance", to_json(a.instance)},
                       {"target_label", to_string(a.target)},
                       {"edit_id", a.edit_id ? json(*a.edit_id) : json(nullptr)}};
                out << j.dump() << '\n';
            }
            for (const auto& e : edits_) out << to_json(e).dump() << '\n';
            out.flush();
            if (!out) throw Error(ErrorKind::internal, "failed writing " + tmp.string());
        }
        std::filesystem::rename(tmp, path_);
    }

    std::filesystem::path path_;
    ValidationPolicy policy_;
    mutable std::mutex mu_;
    std::vector<PendingAssignment> assignments_;
    std::vector<EditedExample> edits_;
    std::size_t assignment_counter_ = 0;
    std::size_t edit_counter_ = 0;
};

}  // namespace ctxprobe
