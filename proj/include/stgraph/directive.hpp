#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgraph/errors.hpp"
#include "stgraph/geometry.hpp"
#include "stgraph/util.hpp"

namespace stg {

// Either a structured scene goal (the stand-in for a goal image) or a natural
// language instruction. Exactly one side is populated.
struct GoalEntry {
    std::string descriptor;
    Vec3 position;
    std::string support;  // descriptor of the supporter, or "table"
};

enum class GoalKind { goal_image, instruction };

struct GoalSpec {
    GoalKind kind = GoalKind::instruction;
    std::string instruction;
    std::vector<GoalEntry> goal_scene;

    static GoalSpec from_instruction(std::string text) {
        GoalSpec g;
        g.kind = GoalKind::instruction;
        g.instruction = std::move(text);
        return g;
    }
    static GoalSpec from_scene(std::vector<GoalEntry> entries) {
        GoalSpec g;
        g.kind = GoalKind::goal_image;
        g.goal_scene = std::move(entries);
        return g;
    }
};

enum class Verb { pick, place_on, place_at, cover_with, uncover, done };

inline const char* verb_name(Verb v) {
    switch (v) {
        case Verb::pick: return "pick";
        case Verb::place_on: return "place_on";
        case Verb::place_at: return "place_at";
        case Verb::cover_with: return "cover_with";
        case Verb::uncover: return "uncover";
        case Verb::done: return "done";
    }
    return "?";
}

inline std::optional<Verb> verb_from_name(const std::string& s) {
    if (s == "pick") return Verb::pick;
    if (s == "place_on") return Verb::place_on;
    if (s == "place_at") return Verb::place_at;
    if (s == "cover_with") return Verb::cover_with;
    if (s == "uncover") return Verb::uncover;
    if (s == "done") return Verb::done;
    return std::nullopt;
}

enum class TargetKind { none, object, position };

struct Target {
    TargetKind kind = TargetKind::none;
    std::string object_id;
    Vec3 position;

    static Target none() { return {}; }
    static Target object(std::string id) {
        Target t;
        t.kind = TargetKind::object;
        t.object_id = std::move(id);
        return t;
    }
    static Target at(Vec3 p) {
        Target t;
        t.kind = TargetKind::position;
        t.position = p;
        return t;
    }
};

// The symbolic action proposal. resolved_release is filled in by the loop
// after metric instantiation so the graph update can predict where the moved
// object will reappear; it is never part of the remote reply schema.
struct ActionDirective {
    Verb verb = Verb::done;
    std::string subject_id;
    Target target;
    std::vector<std::string> declared_preconditions;
    std::string subgoal_note;
    std::optional<Vec3> resolved_release;
};

// Verb arity table: pick/uncover take no target, place_on/cover_with target an
// object, place_at targets a position, done stands alone.
inline void validate_directive(const ActionDirective& d) {
    auto need = [&d](TargetKind k, const char* what) {
        if (d.target.kind != k) {
            throw MalformedDirective(std::string(verb_name(d.verb)) + " requires " + what);
        }
    };
    switch (d.verb) {
        case Verb::pick:
        case Verb::uncover:
            need(TargetKind::none, "no target");
            if (d.subject_id.empty()) throw MalformedDirective("missing subject");
            break;
        case Verb::place_on:
        case Verb::cover_with:
            need(TargetKind::object, "an object target");
            if (d.subject_id.empty()) throw MalformedDirective("missing subject");
            break;
        case Verb::place_at:
            need(TargetKind::position, "a position target");
            if (d.subject_id.empty()) throw MalformedDirective("missing subject");
            break;
        case Verb::done:
            need(TargetKind::none, "no target");
            break;
    }
}

inline std::string render_directive(const ActionDirective& d) {
    std::string out = verb_name(d.verb);
    out += "(";
    if (d.verb != Verb::done) out += d.subject_id;
    switch (d.target.kind) {
        case TargetKind::none:
            break;
        case TargetKind::object:
            out += ", " + d.target.object_id;
            break;
        case TargetKind::position:
            out += ", (" + fmt_fixed(d.target.position.x, 4) + ", " +
                   fmt_fixed(d.target.position.y, 4) + ", " +
                   fmt_fixed(d.target.position.z, 4) + ")";
            break;
    }
    out += ")";
    return out;
}

// directive/1 JSON schema:
//   {"schema": "directive/1", "verb": "...", "subject_id": "...",
//    "target": null | {"object": "..."} | {"position": [x, y, z]},
//    "preconditions": [...], "note": "..."}
// preconditions and note are optional; everything else is required.
inline nlohmann::json directive_to_json(const ActionDirective& d) {
    nlohmann::json j;
    j["schema"] = "directive/1";
    j["verb"] = verb_name(d.verb);
    j["subject_id"] = d.subject_id;
    switch (d.target.kind) {
        case TargetKind::none:
            j["target"] = nullptr;
            break;
        case TargetKind::object:
            j["target"] = {{"object", d.target.object_id}};
            break;
        case TargetKind::position:
            j["target"] = {{"position", {d.target.position.x, d.target.position.y,
                                         d.target.position.z}}};
            break;
    }
    j["preconditions"] = d.declared_preconditions;
    j["note"] = d.subgoal_note;
    if (d.resolved_release) {
        j["resolved_release"] = {d.resolved_release->x, d.resolved_release->y,
                                 d.resolved_release->z};
    }
    return j;
}

inline ActionDirective directive_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw MalformedDirective("directive is not a JSON object");
    if (!j.contains("verb")) throw MalformedDirective("missing field: verb");
    if (!j.at("verb").is_string()) throw MalformedDirective("verb must be a string");
    ActionDirective d;
    auto verb = verb_from_name(j.at("verb").get<std::string>());
    if (!verb) {
        throw MalformedDirective("unknown verb '" + j.at("verb").get<std::string>() + "'");
    }
    d.verb = *verb;
    if (d.verb != Verb::done) {
        if (!j.contains("subject_id")) throw MalformedDirective("missing field: subject_id");
        if (!j.at("subject_id").is_string()) {
            throw MalformedDirective("subject_id must be a string");
        }
        d.subject_id = j.at("subject_id").get<std::string>();
    }
    if (j.contains("target") && !j.at("target").is_null()) {
        const auto& t = j.at("target");
        if (!t.is_object()) throw MalformedDirective("target must be an object or null");
        if (t.contains("object")) {
            if (!t.at("object").is_string()) {
                throw MalformedDirective("target.object must be a string");
            }
            d.target = Target::object(t.at("object").get<std::string>());
        } else if (t.contains("position")) {
            const auto& p = t.at("position");
            if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
                !p[2].is_number()) {
                throw MalformedDirective("target.position must be [x, y, z]");
            }
            d.target = Target::at({p[0].get<double>(), p[1].get<double>(),
                                   p[2].get<double>()});
        } else {
            throw MalformedDirective("target must carry 'object' or 'position'");
        }
    }
    if (j.contains("preconditions")) {
        if (!j.at("preconditions").is_array()) {
            throw MalformedDirective("preconditions must be an array");
        }
        for (const auto& p : j.at("preconditions")) {
            if (!p.is_string()) throw MalformedDirective("preconditions must be strings");
            d.declared_preconditions.push_back(p.get<std::string>());
        }
    }
    if (j.contains("note")) {
        if (!j.at("note").is_string()) throw MalformedDirective("note must be a string");
        d.subgoal_note = j.at("note").get<std::string>();
    }
    if (j.contains("resolved_release")) {
        const auto& p = j.at("resolved_release");
        d.resolved_release = Vec3{p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    }
    validate_directive(d);  // arity errors surface as MalformedDirective
    return d;
}

struct VerificationReport {
    bool passed = false;
    std::vector<std::pair<std::string, std::string>> violated;  // (predicate, explanation)
    int checked_against_step = -1;
};

inline nlohmann::json report_to_json(const VerificationReport& r) {
    nlohmann::json j;
    j["passed"] = r.passed;
    j["checked_against_step"] = r.checked_against_step;
    j["violated"] = nlohmann::json::array();
    for (const auto& [pred, why] : r.violated) {
        j["violated"].push_back({{"predicate", pred}, {"explanation", why}});
    }
    return j;
}

enum class Gripper { close, open, none };

// The metric action: a grasp pose, an optional release pose for placing
// verbs, and the final gripper state.
struct Pose6DoFAction {
    Pose6DoF grasp;
    std::optional<Pose6DoF> release;
    Gripper gripper = Gripper::none;
};

inline nlohmann::json pose_to_json(const Pose6DoF& p) {
    return {{"position", {p.position.x, p.position.y, p.position.z}},
            {"orientation", {p.orientation.w, p.orientation.x, p.orientation.y,
                             p.orientation.z}}};
}

inline Pose6DoF pose_from_json(const nlohmann::json& j) {
    Pose6DoF p;
    const auto& pos = j.at("position");
    p.position = {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()};
    const auto& q = j.at("orientation");
    p.orientation = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                     q[3].get<double>()};
    return p;
}

inline nlohmann::json action_to_json(const Pose6DoFAction& a) {
    nlohmann::json j;
    j["grasp"] = pose_to_json(a.grasp);
    j["release"] = a.release ? pose_to_json(*a.release) : nlohmann::json(nullptr);
    j["gripper"] = a.gripper == Gripper::close ? "close"
                   : a.gripper == Gripper::open ? "open"
                                                : "none";
    return j;
}

inline Pose6DoFAction action_from_json(const nlohmann::json& j) {
    Pose6DoFAction a;
    a.grasp = pose_from_json(j.at("grasp"));
    if (!j.at("release").is_null()) a.release = pose_from_json(j.at("release"));
    std::string g = j.at("gripper").get<std::string>();
    a.gripper = g == "close" ? Gripper::close : g == "open" ? Gripper::open : Gripper::none;
    return a;
}

}  // namespace stg
