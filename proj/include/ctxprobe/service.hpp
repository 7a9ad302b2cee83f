#pragma once
// Local HTTP service backing the annotation workbench.
//
//   GET  /edits/next?role=editor|validator&annotator=ID
//   POST /edits                      {"assignment_id", "edited_text", "editor_id"}
//   POST /edits/{id}/validations     {"annotator_id", "assigned_label"}
//   GET  /agreement[?task=nli|dnli]
//   GET  /analytics/{name}           plot-data JSON from the analytics directory
//
// Validator payloads never carry the original or target label.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <regex>
#include <string>

#include <httplib.h>

#include "ctxprobe/edit_registry.hpp"
#include "ctxprobe/error.hpp"

namespace ctxprobe {

struct ServiceResponse {
    int status = 200;
    json body;
};

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class AnnotationService {
public:
    using Clock = std::function<std::string()>;

    AnnotationService(EditRegistry& registry, std::filesystem::path analytics_dir = {}, Clock clock = utc_timestamp)
        : registry_(registry), analytics_dir_(std::move(analytics_dir)), clock_(std::move(clock)) {}

    ServiceResponse next(const std::string& role, const std::string& annotator) const {
        if (role == "editor") {
            auto a = registry_.next_for_editor();
            if (!a) return {200, json{{"item", nullptr}}};
            const Instance& in = a->instance;
            json item{{"assignment_id", a->assignment_id},
                      {"original_id", in.id},
                      {"task", to_string(in.task)},
                      {"premise", in.premise},
                      {"hypothesis", in.hypothesis},
                      {"update", in.update ? json(*in.update) : json(nullptr)},
                      {"editable_field", to_string(editable_context_field(in.task))},
                      {"original_label", to_string(in.gold)},
                      {"target_label", to_string(a->target)}};
            return {200, json{{"item", item}}};
        }
        if (role == "validator") {
            if (annotator.empty()) return error(400, "validator requests need an annotator parameter");
            auto e = registry_.next_for_validator(annotator);
            if (!e) return {200, json{{"item", nullptr}}};
            return {200, json{{"item", validator_payload(*e)}}};
        }
        return error(400, "role must be editor or validator");
    }

    // The blind view of an edit: post-edit texts and the label choices only.
    static json validator_payload(const EditedExample& e) {
        const Instance post = e.edited_instance();
        json choices = json::array();
        for (Label l : labels_of(post.task)) choices.push_back(to_string(l));
        return json{{"edit_id", e.edit_id},
                    {"task", to_string(post.task)},
                    {"premise", post.premise},
                    {"hypothesis", post.hypothesis},
                    {"update", post.update ? json(*post.update) : json(nullptr)},
                    {"label_choices", choices}};
    }

    ServiceResponse create_edit(const json& body) {
        return guarded([&] {
            auto field = body.contains("edited_field")
                             ? parse_text_field(body.at("edited_field").get<std::string>())
                             : std::nullopt;
            if (body.contains("edited_field") && !field) throw UsageError("unknown edited_field");
            auto e = registry_.register_edit(body.at("assignment_id").get<std::string>(),
                                             body.at("edited_text").get<std::string>(),
                                             body.at("editor_id").get<std::string>(), field);
            json out = to_json(e);
            out.erase("kind");
            return ServiceResponse{201, out};
        });
    }

    ServiceResponse add_validation(const std::string& edit_id, const json& body) {
        return guarded([&] {
            const Task task = registry_.get(edit_id).original.task;
            auto label = parse_label(task, body.at("assigned_label").get<std::string>());
            if (!label) throw UsageError("label not valid for the edit's task");
            auto [e, v] = registry_.add_validation(edit_id, body.at("annotator_id").get<std::string>(), *label, clock_());
            return ServiceResponse{201, json{{"edit_id", e.edit_id}, {"recorded", true}, {"counting", v.counting}}};
        });
    }

    ServiceResponse agreement(const std::string& task_name) const {
        return guarded([&] {
            if (!task_name.empty()) {
                auto task = parse_task(task_name);
                if (!task) throw UsageError("unknown task " + task_name);
                auto r = registry_.agreement(*task);
                if (!r) throw NotFoundError("no counting validations for task " + task_name);
                return ServiceResponse{200, to_json(*r)};
            }
            json out = json::object();
            for (Task t : registry_.tasks())
                if (auto r = registry_.agreement(t)) out[std::string(to_string(t))] = to_json(*r);
            return ServiceResponse{200, out};
        });
    }

    ServiceResponse analytics(const std::string& name) const {
        static const std::regex safe("[A-Za-z0-9_.-]+");
        if (!std::regex_match(name, safe) || name.find("..") != std::string::npos)
            return error(400, "invalid analytics name");
        if (analytics_dir_.empty()) return error(404, "no analytics directory configured");
        auto path = analytics_dir_ / (name + ".json");
        std::ifstream in(path);
        if (!in) return error(404, "no analytics document " + name);
        try {
            return {200, json::parse(in)};
        } catch (const json::exception& e) {
            return error(500, std::string("corrupt analytics document: ") + e.what());
        }
    }

    void mount(httplib::Server& server) {
        auto reply = [](httplib::Response& res, const ServiceResponse& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        auto parse_body = [](const httplib::Request& req) -> std::optional<json> {
            try {
                json j = json::parse(req.body);
                if (j.is_object()) return j;
            } catch (const json::exception&) {
            }
            return std::nullopt;
        };
        server.Get("/edits/next", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, next(req.get_param_value("role"), req.get_param_value("annotator")));
        });
        server.Post("/edits", [this, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req);
            reply(res, body ? create_edit(*body) : error(400, "body must be a JSON object"));
        });
        server.Post(R"(/edits/([^/]+)/validations)",
                    [this, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
                        auto body = parse_body(req);
                        reply(res, body ? add_validation(req.matches[1], *body) : error(400, "body must be a JSON object"));
                    });
        server.Get("/agreement", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, agreement(req.get_param_value("task")));
        });
        server.Get(R"(/analytics/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, analytics(req.matches[1]));
        });
    }

private:
    static ServiceResponse error(int status, const std::string& msg) { return {status, json{{"error", msg}}}; }

    template <typename F>
    static ServiceResponse guarded(F&& f) {
        try {
            return f();
        } catch (const NotFoundError& e) {
            return error(404, e.what());
        } catch (const ConflictError& e) {
            return error(409, e.what());
        } catch (const UsageError& e) {
            return error(400, e.what());
        } catch (const DataError& e) {
            return error(400, e.what());
        } catch (const json::exception& e) {
            return error(400, std::string("bad request body: ") + e.what());
        }
    }

    EditRegistry& registry_;
    std::filesystem::path analytics_dir_;
    Clock clock_;
};

}  // namespace ctxprobe
