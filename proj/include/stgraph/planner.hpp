#pragma once

// Closes the perception-to-action loop: assembles the planning prompt from
// the graph, verifies a proposed directive's preconditions against graph
// geometry, instantiates the accepted directive into a metric 6-DoF action,
// and re-queries the backend with violation feedback when verification
// fails.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stgraph/cstg.hpp"
#include "stgraph/directive.hpp"
#include "stgraph/image.hpp"
#include "stgraph/observation.hpp"

namespace stg {

// ---------------------------------------------------------------------------
// prompt assembly
// ---------------------------------------------------------------------------

struct PromptContext {
    std::string spatial_context_text;            // nodes and edges
    std::string recent_events_text;              // last L log events
    RgbImage annotated_observation;              // render with id labels overlaid
    GoalSpec goal;
    std::vector<std::string> violation_feedback; // grows across replans
};

// Fixed, versioned system preamble. It doubles as the reply-schema contract
// for remote planners: the model must answer with one directive/1 object.
inline const char* prompt_preamble() {
    return
        "planner-prompt/1\n"
        "You control a tabletop robot arm. The scene description below comes\n"
        "from a causal scene graph; each object entry lists its centroid,\n"
        "per-axis shape statistics, visibility, and recent events. Choose the\n"
        "single next action that makes progress toward the goal.\n"
        "Reply with exactly one JSON object and no prose, in this shape:\n"
        "{\"schema\": \"directive/1\", \"verb\": \"<pick|place_on|place_at|"
        "cover_with|uncover|done>\",\n"
        " \"subject_id\": \"<object id>\", \"target\": <see below>,\n"
        " \"preconditions\": [\"clear_top(<id>)\", ...], \"note\": \"<short"
        " rationale>\"}\n"
        "target is null for pick, uncover, and done; {\"object\": \"<id>\"}\n"
        "for place_on and cover_with; {\"position\": [x, y, z]} for place_at.\n";
}

inline std::string render_goal(const GoalSpec& goal, int precision) {
    if (goal.kind == GoalKind::instruction) {
        return "goal (instruction): " + goal.instruction + "\n";
    }
    std::string out = "goal (scene):\n";
    for (const GoalEntry& e : goal.goal_scene) {
        out += "  " + e.descriptor + " at (" + fmt_fixed(e.position.x, precision) +
               ", " + fmt_fixed(e.position.y, precision) + ", " +
               fmt_fixed(e.position.z, precision) + ") on " + e.support + "\n";
    }
    return out;
}

// Draws each visible node's id at its mask centroid pixel. Nodes render in
// id order so the annotation is deterministic.
inline RgbImage annotate_observation(const Observation& obs, const Cstg& g) {
    RgbImage img = obs.rgb;
    for (const auto& [id, node] : g.nodes) {
        if (node.visibility != Visibility::visible) continue;
        auto it = obs.masks.find(node.last_known.source_id);
        if (it == obs.masks.end()) it = obs.masks.find(id);
        if (it == obs.masks.end()) continue;
        const Mask& mask = it->second;
        long sum_u = 0, sum_v = 0, count = 0;
        for (int v = 0; v < mask.height; ++v) {
            for (int u = 0; u < mask.width; ++u) {
                if (mask.at(u, v)) {
                    sum_u += u;
                    sum_v += v;
                    ++count;
                }
            }
        }
        if (count == 0) continue;
        draw_label(img, static_cast<int>(sum_u / count),
                   static_cast<int>(sum_v / count), id);
    }
    return img;
}

inline PromptContext assemble_prompt(const Cstg& g, const Observation& obs,
                                     const GoalSpec& goal, const Config& cfg) {
    PromptContext ctx;
    ctx.spatial_context_text = scene_context(g, cfg);
    ctx.recent_events_text = events_context(g, cfg);
    ctx.annotated_observation = annotate_observation(obs, g);
    ctx.goal = goal;
    return ctx;
}

// The deterministic text the backend sees: preamble, scene, events, goal,
// then any verification feedback accumulated this step.
inline std::string render_prompt_text(const PromptContext& ctx, const Config& cfg) {
    std::string out = prompt_preamble();
    out += ctx.spatial_context_text;
    out += ctx.recent_events_text;
    out += render_goal(ctx.goal, cfg.serialize_precision);
    if (!ctx.violation_feedback.empty()) {
        out += "verification feedback:\n";
        for (const std::string& f : ctx.violation_feedback) {
            out += "- " + f + "\n";
        }
    }
    return out;
}

inline std::string prompt_digest(const PromptContext& ctx, const Config& cfg) {
    std::uint64_t h = fnv1a64(render_prompt_text(ctx, cfg));
    const RgbImage& img = ctx.annotated_observation;
    h = fnv1a64(img.pixels.data(), img.pixels.size(), h);
    return hex64(h);
}

// ---------------------------------------------------------------------------
// precondition verification
// ---------------------------------------------------------------------------

namespace detail {

struct Predicate {
    std::string name;
    std::vector<std::string> args;
    bool well_formed = false;
};

inline Predicate parse_predicate(const std::string& text) {
    Predicate p;
    std::size_t open = text.find('(');
    if (open == std::string::npos || text.back() != ')') return p;
    p.name = text.substr(0, open);
    std::string inner = text.substr(open + 1, text.size() - open - 2);
    std::string arg;
    for (char ch : inner) {
        if (ch == ',') {
            p.args.push_back(arg);
            arg.clear();
        } else if (ch != ' ') {
            arg += ch;
        }
    }
    if (!arg.empty()) p.args.push_back(arg);
    p.well_formed = !p.name.empty() && !p.args.empty();
    return p;
}

// "subject" and "target" in a declared predicate refer to the directive's
// own fields; anything else is a literal object id.
inline std::string resolve_arg(const std::string& arg, const ActionDirective& d) {
    if (arg == "subject") return d.subject_id;
    if (arg == "target" && d.target.kind == TargetKind::object) return d.target.object_id;
    return arg;
}

inline bool in_workspace(const Vec3& p, const Config& cfg) {
    return std::abs(p.x) <= cfg.workspace_half_xy &&
           std::abs(p.y) <= cfg.workspace_half_xy && p.z >= 0.0 &&
           p.z <= cfg.workspace_max_z;
}

// True when some other node rests on x.
inline std::optional<std::string> top_load(const Cstg& g, const std::string& x) {
    for (const SceneEdge& e : g.edges) {
        if (e.from_id == x && e.relation_tags.count("supported_by")) return e.to_id;
        if (e.to_id == x && e.relation_tags.count("supporting")) return e.from_id;
    }
    return std::nullopt;
}

// Footprint fraction of `upper`'s base that `lower`'s top face covers when
// `upper` is set down centered on it.
inline double centered_overlap_fraction(const StfToken& upper, const StfToken& lower) {
    double ux = upper.shape.x.max - upper.shape.x.min;
    double uy = upper.shape.y.max - upper.shape.y.min;
    double lx = lower.shape.x.max - lower.shape.x.min;
    double ly = lower.shape.y.max - lower.shape.y.min;
    if (ux <= 0.0 || uy <= 0.0) return 1.0;
    return (std::min(ux, lx) / ux) * (std::min(uy, ly) / uy);
}

}  // namespace detail

// Evaluates the directive's declared predicates plus the verb's built-in
// requirements against the graph. Throws UnknownObject when the subject of
// an object-verb is not a known node; every other failure lands in the
// report so the caller can re-plan.
inline VerificationReport verify_preconditions(const Cstg& g, const ActionDirective& d,
                                               const Config& cfg) {
    VerificationReport report;
    report.checked_against_step = g.current_step;

    if (d.verb == Verb::done) {
        report.passed = true;
        return report;
    }
    auto subject = g.nodes.find(d.subject_id);
    if (subject == g.nodes.end()) {
        throw UnknownObject("verify_preconditions: unknown subject '" + d.subject_id + "'");
    }

    auto fail = [&report](const std::string& pred, const std::string& why) {
        report.violated.emplace_back(pred, why);
    };

    auto check_one = [&](const std::string& text) {
        detail::Predicate p = detail::parse_predicate(text);
        if (!p.well_formed) {
            fail(text, "unparseable predicate");
            return;
        }
        std::string a0 = detail::resolve_arg(p.args[0], d);
        auto n0 = g.nodes.find(a0);
        if (p.name == "exists") {
            if (n0 == g.nodes.end()) fail(text, "no node with id '" + a0 + "'");
        } else if (p.name == "visible_or_located") {
            if (n0 == g.nodes.end()) {
                fail(text, "never observed, no stored pose for '" + a0 + "'");
            } else if (n0->second.visibility == Visibility::removed) {
                fail(text, "'" + a0 + "' was removed from the scene");
            }
        } else if (p.name == "clear_top") {
            if (n0 == g.nodes.end()) {
                fail(text, "no node with id '" + a0 + "'");
            } else if (auto load = detail::top_load(g, a0)) {
                fail(text, "'" + *load + "' rests on '" + a0 + "'");
            }
        } else if (p.name == "reachable") {
            if (n0 == g.nodes.end()) {
                fail(text, "no node with id '" + a0 + "'");
            } else if (!detail::in_workspace(n0->second.last_known.centroid, cfg)) {
                fail(text, "'" + a0 + "' lies outside the workspace");
            }
        } else if (p.name == "stable_on") {
            if (p.args.size() != 2) {
                fail(text, "stable_on takes two arguments");
                return;
            }
            std::string a1 = detail::resolve_arg(p.args[1], d);
            auto n1 = g.nodes.find(a1);
            if (n0 == g.nodes.end() || n1 == g.nodes.end()) {
                fail(text, "unknown operand");
                return;
            }
            double frac = detail::centered_overlap_fraction(n0->second.last_known,
                                                            n1->second.last_known);
            if (frac < cfg.stability_fraction) {
                fail(text, "support covers only " + fmt_fixed(frac, 2) +
                               " of the base, needs " +
                               fmt_fixed(cfg.stability_fraction, 2));
            }
        } else {
            fail(text, "unknown predicate '" + p.name + "'");
        }
    };

    for (const std::string& pred : d.declared_preconditions) check_one(pred);

    // built-in checks the planner cannot opt out of
    if (d.verb == Verb::pick && subject->second.visibility == Visibility::occluded) {
        std::string occluder = subject->second.occluder_id.value_or("unknown");
        fail("not_occluded(" + d.subject_id + ")",
             "occluded, uncover first (occluder=" + occluder + ")");
    }
    if ((d.verb == Verb::place_on || d.verb == Verb::cover_with) &&
        d.target.kind == TargetKind::object && !g.nodes.count(d.target.object_id)) {
        fail("exists(" + d.target.object_id + ")",
             "no node with id '" + d.target.object_id + "'");
    }
    if (d.verb == Verb::uncover) {
        bool occludes_something = false;
        for (const auto& [id, node] : g.nodes) {
            if (node.visibility == Visibility::occluded && node.occluder_id &&
                *node.occluder_id == d.subject_id) {
                occludes_something = true;
                break;
            }
        }
        if (!occludes_something) {
            fail("occludes_any(" + d.subject_id + ")",
                 "'" + d.subject_id + "' is not recorded as occluding anything");
        }
    }

    report.passed = report.violated.empty();
    return report;
}

// ---------------------------------------------------------------------------
// directive instantiation
// ---------------------------------------------------------------------------

namespace detail {

// Top-down grasp orientation: gripper axis flipped to point at the table
// (a half-turn about x).
inline Quat top_down_orientation() { return Quat{0.0, 1.0, 0.0, 0.0}; }

inline double half_height(const StfToken& tok) {
    return (tok.shape.z.max - tok.shape.z.min) / 2.0;
}

// First parking slot along the parking row that keeps clearance to every
// known object. Deterministic given the graph.
inline Vec3 parking_position(const Cstg& g, const StfToken& subject, const Config& cfg) {
    for (double x = -cfg.parking_span_x; x <= cfg.parking_span_x + 1e-9;
         x += cfg.parking_step_x) {
        bool free = true;
        for (const auto& [id, node] : g.nodes) {
            if (id == subject.object_id) continue;
            if (node.visibility == Visibility::removed) continue;
            double dx = node.last_known.centroid.x - x;
            double dy = node.last_known.centroid.y - cfg.parking_row_y;
            if (std::sqrt(dx * dx + dy * dy) < cfg.parking_clearance) {
                free = false;
                break;
            }
        }
        if (free) return {x, cfg.parking_row_y, half_height(subject)};
    }
    throw UnresolvedTarget("no free parking slot for '" + subject.object_id + "'");
}

}  // namespace detail

// Grounds a verified directive in graph geometry. The grasp closes on the
// subject's top face center raised by the approach offset; placing verbs
// get a release pose over the resolved target. Pure function of
// (directive, graph, config).
inline Pose6DoFAction instantiate_action(const ActionDirective& d, const Cstg& g,
                                         const Config& cfg) {
    auto subject_it = g.nodes.find(d.subject_id);
    if (subject_it == g.nodes.end()) {
        throw UnknownObject("instantiate_action: unknown subject '" + d.subject_id + "'");
    }
    const StfToken& sub = subject_it->second.last_known;

    Pose6DoFAction action;
    action.grasp.position = {sub.centroid.x, sub.centroid.y,
                             sub.shape.z.max + cfg.approach_height};
    action.grasp.orientation = detail::top_down_orientation();

    auto release_over = [&](const std::string& target_id) {
        auto it = g.nodes.find(target_id);
        if (it == g.nodes.end()) {
            throw UnresolvedTarget("no node with id '" + target_id + "'");
        }
        const StfToken& tgt = it->second.last_known;
        Pose6DoF rel;
        rel.position = {tgt.centroid.x, tgt.centroid.y,
                        tgt.shape.z.max + detail::half_height(sub)};
        rel.orientation = detail::top_down_orientation();
        return rel;
    };

    switch (d.verb) {
        case Verb::pick:
            action.gripper = Gripper::close;
            break;
        case Verb::place_on:
        case Verb::cover_with:
            action.release = release_over(d.target.object_id);
            action.gripper = Gripper::open;
            break;
        case Verb::place_at: {
            Pose6DoF rel;
            rel.position = d.target.position;
            rel.orientation = detail::top_down_orientation();
            action.release = rel;
            action.gripper = Gripper::open;
            break;
        }
        case Verb::uncover: {
            Pose6DoF rel;
            rel.position = detail::parking_position(g, sub, cfg);
            rel.orientation = detail::top_down_orientation();
            action.release = rel;
            action.gripper = Gripper::open;
            break;
        }
        case Verb::done:
            throw UnresolvedTarget("done has no action to instantiate");
    }
    return action;
}

// ---------------------------------------------------------------------------
// backends and the replan loop
// ---------------------------------------------------------------------------

class PlannerBackend {
  public:
    virtual ~PlannerBackend() = default;
    virtual ActionDirective propose(const PromptContext& prompt) = 0;
    virtual std::string name() const = 0;
};

// Plays back a fixed directive sequence. Used for scripted episodes and for
// failure-path tests.
class ScriptedBackend : public PlannerBackend {
  public:
    explicit ScriptedBackend(std::vector<ActionDirective> script)
        : script_(std::move(script)) {}

    ActionDirective propose(const PromptContext&) override {
        if (next_ >= script_.size()) {
            throw MalformedDirective("scripted backend ran out of directives");
        }
        return script_[next_++];
    }
    std::string name() const override { return "scripted"; }
    std::size_t consumed() const { return next_; }

  private:
    std::vector<ActionDirective> script_;
    std::size_t next_ = 0;
};

struct StepDecision {
    ActionDirective directive;            // the accepted (or done) directive
    VerificationReport report;
    std::optional<Pose6DoFAction> action; // absent when the directive is done
    int replans = 0;
    std::string prompt_hash;              // digest of the accepted attempt's prompt
    std::vector<ActionDirective> rejected; // earlier attempts, in proposal order
};

// verify_preconditions wrapped so a subject the graph has never seen reads as
// a failed existence check instead of an exception.
inline VerificationReport verify_with_existence(const Cstg& g, const ActionDirective& d,
                                                const Config& cfg) {
    try {
        return verify_preconditions(g, d, cfg);
    } catch (const UnknownObject&) {
        VerificationReport report;
        report.passed = false;
        report.checked_against_step = g.current_step;
        report.violated.emplace_back("exists(" + d.subject_id + ")",
                                     "no node with id '" + d.subject_id + "'");
        return report;
    }
}

inline std::string violation_summary(const VerificationReport& report) {
    std::string summary;
    for (const auto& [pred, why] : report.violated) {
        if (!summary.empty()) summary += "; ";
        summary += pred + ": " + why;
    }
    return summary;
}

// The log entry a rejected directive leaves behind. Replay rebuilds these from
// the recorded attempts, so construction lives here rather than in step_loop.
inline CausalEvent violation_event(const Cstg& g, const ActionDirective& d,
                                   const VerificationReport& report) {
    CausalEvent ev;
    ev.kind = EventKind::precondition_violation;
    auto node = g.nodes.find(d.subject_id);
    ev.subject_id = node == g.nodes.end() ? "" : d.subject_id;
    ev.location = node == g.nodes.end() ? Vec3{} : node->second.last_known.centroid;
    ev.cause = {CauseKind::agent_action, render_directive(d)};
    ev.detail = violation_summary(report);
    return ev;
}

// One planning step: propose, verify, and either instantiate or feed the
// violations back to the backend. Each failed attempt appends a
// precondition_violation event to the graph, which is why `g` is taken
// in-out (the new value replaces it; Cstg itself stays a value type).
inline StepDecision step_loop(Cstg& g, const Observation& obs, const GoalSpec& goal,
                              PlannerBackend& backend, const Config& cfg) {
    PromptContext ctx = assemble_prompt(g, obs, goal, cfg);
    std::vector<ActionDirective> rejected;
    for (int attempt = 0; attempt <= cfg.max_replans; ++attempt) {
        ActionDirective d = backend.propose(ctx);
        validate_directive(d);

        StepDecision decision;
        decision.directive = d;
        decision.replans = attempt;
        decision.prompt_hash = prompt_digest(ctx, cfg);
        if (d.verb == Verb::done) {
            decision.report.passed = true;
            decision.report.checked_against_step = g.current_step;
            decision.rejected = std::move(rejected);
            return decision;
        }

        VerificationReport report = verify_with_existence(g, d, cfg);
        if (report.passed) {
            decision.report = report;
            decision.action = instantiate_action(d, g, cfg);
            decision.rejected = std::move(rejected);
            return decision;
        }

        g = append_events(g, {violation_event(g, d, report)});
        ctx.violation_feedback.push_back("rejected " + render_directive(d) + ": " +
                                         violation_summary(report));
        rejected.push_back(std::move(d));
    }
    throw ReplanBudgetExhausted("no valid directive after " +
                                std::to_string(cfg.max_replans) + " replans");
}

}  // namespace stg
