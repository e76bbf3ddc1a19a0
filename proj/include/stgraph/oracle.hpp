#pragma once

// Scripted expert planner. It plays the remote model's role for offline runs
// and tests: reads the scene graph, decides the single next directive, and
// never needs network access. Strategies are stateless functions of the graph
// and the goal, so replays reproduce the same decisions.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stgraph/config.hpp"
#include "stgraph/cstg.hpp"
#include "stgraph/directive.hpp"
#include "stgraph/errors.hpp"
#include "stgraph/planner.hpp"

namespace stg {

namespace oracle_detail {

// Held objects hover well above any reachable stack, so a height test on the
// last known centroid identifies them without simulator access.
inline bool is_held(const SceneNode& node, const Config& cfg) {
    return node.last_known.centroid.z >= cfg.hover_lift - 0.02;
}

inline const SceneNode* by_descriptor(const Cstg& g, const std::string& descriptor) {
    for (const auto& [id, node] : g.nodes) {
        if (node.descriptor == descriptor) return &node;
    }
    return nullptr;
}

// Referencing an object the graph no longer knows must fail verification,
// not crash the oracle, so unresolved references become placeholder ids.
inline std::string pseudo_id(const std::string& descriptor) {
    std::string id = descriptor;
    std::replace(id.begin(), id.end(), ' ', '_');
    return id;
}

inline std::optional<std::string> supporter_of(const Cstg& g, const std::string& id) {
    for (const SceneEdge& e : g.edges) {
        if (e.to_id == id && e.relation_tags.count("supported_by")) return e.from_id;
        if (e.from_id == id && e.relation_tags.count("supporting")) return e.to_id;
    }
    return std::nullopt;
}

inline bool supports_anything(const Cstg& g, const std::string& id) {
    for (const SceneEdge& e : g.edges) {
        if (e.from_id == id && e.relation_tags.count("supported_by")) return true;
        if (e.to_id == id && e.relation_tags.count("supporting")) return true;
    }
    return false;
}

inline bool is_cube(const SceneNode& node) {
    const std::string& d = node.descriptor;
    return d.size() >= 4 && d.compare(d.size() - 4, 4, "cube") == 0;
}

inline bool was_displaced(const Cstg& g, const std::string& id) {
    for (const CausalEvent& ev : g.log.events) {
        if (ev.kind == EventKind::planned_displacement && ev.subject_id == id) {
            return true;
        }
    }
    return false;
}

// Where the object stood before it was first moved: the earliest planned
// displacement records the vacated location; an undisturbed object is
// already there.
inline Vec3 original_position(const Cstg& g, const SceneNode& node) {
    for (const CausalEvent& ev : g.log.events) {
        if (ev.kind == EventKind::planned_displacement &&
            ev.subject_id == node.object_id) {
            return ev.location;
        }
    }
    return node.last_known.centroid;
}

inline ActionDirective make_pick(const std::string& subject, std::string note) {
    ActionDirective d;
    d.verb = Verb::pick;
    d.subject_id = subject;
    d.declared_preconditions = {"exists(" + subject + ")",
                                "visible_or_located(" + subject + ")",
                                "clear_top(" + subject + ")"};
    d.subgoal_note = std::move(note);
    return d;
}

inline ActionDirective make_place_at(const std::string& subject, Vec3 where,
                                     std::string note) {
    ActionDirective d;
    d.verb = Verb::place_at;
    d.subject_id = subject;
    d.target = Target::at(where);
    d.declared_preconditions = {"exists(" + subject + ")"};
    d.subgoal_note = std::move(note);
    return d;
}

inline ActionDirective make_cover(const std::string& subject, const std::string& target,
                                  std::string note) {
    ActionDirective d;
    d.verb = Verb::cover_with;
    d.subject_id = subject;
    d.target = Target::object(target);
    d.declared_preconditions = {"exists(" + subject + ")"};
    d.subgoal_note = std::move(note);
    return d;
}

inline ActionDirective make_uncover(const std::string& subject, std::string note) {
    ActionDirective d;
    d.verb = Verb::uncover;
    d.subject_id = subject;
    d.declared_preconditions = {"exists(" + subject + ")"};
    d.subgoal_note = std::move(note);
    return d;
}

inline ActionDirective make_done(std::string note) {
    ActionDirective d;
    d.verb = Verb::done;
    d.subgoal_note = std::move(note);
    return d;
}

// ---------------------------------------------------------------------------
// goal-scene strategy
// ---------------------------------------------------------------------------

// Entries ordered so every supporter is placed before what rests on it.
// Supports naming no entry (the table, a fixed container) impose no order.
inline std::vector<std::size_t> support_order(const std::vector<GoalEntry>& entries) {
    std::map<std::string, std::size_t> by_desc;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        by_desc.emplace(entries[i].descriptor, i);
    }
    std::vector<std::vector<std::size_t>> dependents(entries.size());
    std::vector<int> pending(entries.size(), 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto it = by_desc.find(entries[i].support);
        if (it != by_desc.end() && it->second != i) {
            dependents[it->second].push_back(i);
            ++pending[i];
        }
    }
    std::vector<std::size_t> order;
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (pending[i] == 0) ready.push_back(i);
    }
    while (!ready.empty()) {
        std::size_t i = ready.front();
        ready.erase(ready.begin());
        order.push_back(i);
        for (std::size_t dep : dependents[i]) {
            if (--pending[dep] == 0) ready.push_back(dep);
        }
    }
    if (order.size() != entries.size()) {
        throw UnsatisfiableGoal("goal scene support relations form a cycle");
    }
    return order;
}

inline bool entry_satisfied(const Cstg& g, const GoalEntry& entry, const Config& cfg) {
    const SceneNode* node = by_descriptor(g, entry.descriptor);
    if (!node) return false;
    if (is_held(*node, cfg)) return false;
    if ((node->last_known.centroid - entry.position).norm() > cfg.place_tolerance) {
        return false;
    }
    std::optional<std::string> sup = supporter_of(g, node->object_id);
    if (entry.support == "table") return !sup.has_value();
    if (!sup) return false;
    const SceneNode* sup_node = by_descriptor(g, entry.support);
    return sup_node && *sup == sup_node->object_id;
}

inline ActionDirective propose_for_scene(const Cstg& g,
                                         const std::vector<GoalEntry>& entries,
                                         const Config& cfg) {
    std::vector<std::size_t> order = support_order(entries);

    // finish what the gripper is holding first
    for (const auto& [id, node] : g.nodes) {
        if (!is_held(node, cfg)) continue;
        for (const GoalEntry& entry : entries) {
            if (entry.descriptor == node.descriptor) {
                return make_place_at(id, entry.position,
                                     "set " + entry.descriptor + " on " + entry.support);
            }
        }
        return make_place_at(
            id, {0.0, cfg.parking_row_y, detail::half_height(node.last_known)},
            "park the held object; it has no goal entry");
    }

    for (std::size_t i : order) {
        const GoalEntry& entry = entries[i];
        if (entry_satisfied(g, entry, cfg)) continue;
        const SceneNode* node = by_descriptor(g, entry.descriptor);
        std::string subject = node ? node->object_id : pseudo_id(entry.descriptor);
        return make_pick(subject, "move " + entry.descriptor + " toward its goal spot");
    }
    return make_done("every goal entry is in place");
}

// ---------------------------------------------------------------------------
// instruction strategies
// ---------------------------------------------------------------------------

inline ActionDirective propose_hide_restore(const Cstg& g, const std::string& hidden_desc,
                                            const std::string& cover_desc,
                                            const Config& cfg) {
    const SceneNode* cover = by_descriptor(g, cover_desc);
    std::string cover_id = cover ? cover->object_id : pseudo_id(cover_desc);
    const SceneNode* hidden = by_descriptor(g, hidden_desc);

    if (cover && is_held(*cover, cfg)) {
        return make_place_at(cover_id, original_position(g, *cover),
                             "return the " + cover_desc + " to where it started");
    }
    if (hidden && hidden->visibility == Visibility::occluded) {
        return make_uncover(cover_id, "reveal the " + hidden_desc);
    }
    if (!hidden) {
        // nothing remembers the hidden object; reference it anyway and let
        // verification report the failure
        return make_cover(cover_id, pseudo_id(hidden_desc),
                          "hide the " + hidden_desc + " under the " + cover_desc);
    }
    if (!was_displaced(g, cover_id)) {
        return make_cover(cover_id, hidden->object_id,
                          "hide the " + hidden_desc + " under the " + cover_desc);
    }
    if (cover &&
        (cover->last_known.centroid - original_position(g, *cover)).norm() >
            cfg.place_tolerance) {
        return make_place_at(cover_id, original_position(g, *cover),
                             "return the " + cover_desc + " to where it started");
    }
    return make_done("the scene is back to its starting arrangement");
}

inline ActionDirective propose_cover(const Cstg& g, bool top_block,
                                     const std::string& cover_desc, const Config& cfg) {
    const SceneNode* cover = by_descriptor(g, cover_desc);
    std::string cover_id = cover ? cover->object_id : pseudo_id(cover_desc);

    if (top_block) {
        // Any cube the cover occludes is the one we covered. Check this
        // before looking for a stacked cube: once the box is down, the
        // covered cube's support edge may no longer be measurable.
        for (const auto& [id, node] : g.nodes) {
            if (is_cube(node) && node.visibility == Visibility::occluded &&
                node.occluder_id == cover_id) {
                return make_done("the top block sits covered");
            }
        }
        // otherwise: the cube resting on another cube
        for (const auto& [id, node] : g.nodes) {
            if (!is_cube(node)) continue;
            std::optional<std::string> sup = supporter_of(g, id);
            if (!sup || !g.nodes.count(*sup) || !is_cube(g.nodes.at(*sup))) continue;
            return make_cover(cover_id, id, "cover the top block");
        }
        return make_cover(cover_id, pseudo_id("top block"),
                          "cover the top block (not identifiable)");
    }

    // bottom block: clear the tower, then cover the block that never moved
    for (const auto& [id, node] : g.nodes) {
        if (is_cube(node) && is_held(node, cfg)) {
            return make_place_at(id,
                                 {-cfg.parking_span_x, cfg.parking_row_y,
                                  detail::half_height(node.last_known)},
                                 "park the lifted block out of the way");
        }
    }
    for (const auto& [id, node] : g.nodes) {
        if (!is_cube(node)) continue;
        std::optional<std::string> sup = supporter_of(g, id);
        if (sup && g.nodes.count(*sup) && is_cube(g.nodes.at(*sup))) {
            return make_pick(id, "lift the block off the stack");
        }
    }
    std::vector<const SceneNode*> undisturbed;
    for (const auto& [id, node] : g.nodes) {
        if (is_cube(node) && !was_displaced(g, id)) undisturbed.push_back(&node);
    }
    if (undisturbed.size() == 1) {
        const SceneNode* bottom = undisturbed.front();
        if (bottom->visibility == Visibility::occluded &&
            bottom->occluder_id == cover_id) {
            return make_done("the bottom block sits covered");
        }
        return make_cover(cover_id, bottom->object_id, "cover the bottom block");
    }
    return make_cover(cover_id, pseudo_id("bottom block"),
                      "cover the bottom block (not identifiable)");
}

inline ActionDirective propose_unstack_restack(const Cstg& g, const Config& cfg) {
    std::vector<const SceneNode*> cubes;
    for (const auto& [id, node] : g.nodes) {
        if (is_cube(node)) cubes.push_back(&node);
    }
    if (cubes.empty()) return make_done("no blocks to work with");

    std::size_t displaced = 0;
    for (const SceneNode* c : cubes) {
        if (was_displaced(g, c->object_id)) ++displaced;
    }
    // the base block never moves, so teardown is over once the rest have
    bool torn_down = displaced + 1 >= cubes.size();

    for (const SceneNode* c : cubes) {
        if (!is_held(*c, cfg)) continue;
        if (torn_down) {
            return make_place_at(c->object_id, original_position(g, *c),
                                 "rebuild: return the block to its recorded spot");
        }
        double slot = -cfg.parking_span_x +
                      cfg.parking_step_x * static_cast<double>(displaced > 0 ? displaced - 1 : 0);
        return make_place_at(c->object_id,
                             {slot, cfg.parking_row_y, detail::half_height(c->last_known)},
                             "set the block aside");
    }

    if (!torn_down) {
        // topmost stacked block: supported by a block, supporting nothing
        for (const SceneNode* c : cubes) {
            std::optional<std::string> sup = supporter_of(g, c->object_id);
            if (!sup || !g.nodes.count(*sup) || !is_cube(g.nodes.at(*sup))) continue;
            if (supports_anything(g, c->object_id)) continue;
            return make_pick(c->object_id, "unstack the top block");
        }
        return make_done("nothing stacked and nothing recorded; already flat");
    }

    std::sort(cubes.begin(), cubes.end(), [&g](const SceneNode* a, const SceneNode* b) {
        double za = original_position(g, *a).z, zb = original_position(g, *b).z;
        return za != zb ? za < zb : a->object_id < b->object_id;
    });
    for (const SceneNode* c : cubes) {
        if ((c->last_known.centroid - original_position(g, *c)).norm() >
            cfg.place_tolerance) {
            return make_pick(c->object_id, "rebuild: fetch the next block");
        }
    }
    return make_done("the stack is rebuilt as recorded");
}

// Pulls "<head> the X <tail>" selector text out of an instruction.
inline std::string between(const std::string& text, const std::string& after,
                           const std::string& before) {
    std::size_t a = text.find(after);
    if (a == std::string::npos) return "";
    a += after.size();
    std::size_t b = before.empty() ? text.size() : text.find(before, a);
    if (b == std::string::npos) b = text.size();
    std::string out = text.substr(a, b - a);
    while (!out.empty() && (out.back() == ' ' || out.back() == ',' || out.back() == '.')) {
        out.pop_back();
    }
    return out;
}

}  // namespace oracle_detail

inline ActionDirective oracle_propose(const Cstg& g, const GoalSpec& goal,
                                      const Config& cfg) {
    namespace od = oracle_detail;
    if (goal.kind == GoalKind::goal_image) {
        return od::propose_for_scene(g, goal.goal_scene, cfg);
    }
    const std::string& text = goal.instruction;
    if (text.find("unstack") != std::string::npos) {
        return od::propose_unstack_restack(g, cfg);
    }
    if (text.find("cover the top block") != std::string::npos) {
        return od::propose_cover(g, true, od::between(text, "with the ", ""), cfg);
    }
    if (text.find("cover the bottom block") != std::string::npos) {
        return od::propose_cover(g, false, od::between(text, "with the ", ""), cfg);
    }
    if (text.find("hide the ") != std::string::npos &&
        text.find(" beneath the ") != std::string::npos) {
        return od::propose_hide_restore(g, od::between(text, "hide the ", " beneath"),
                                        od::between(text, "beneath the ", ","), cfg);
    }
    throw UnsatisfiableGoal("no scripted strategy for instruction: " + text);
}

// Backend wrapper. The prompt context alone is text; the expert reads the
// bound graph directly, which is exactly the structured state the text was
// rendered from.
class OraclePlanner : public PlannerBackend {
  public:
    OraclePlanner(const Cstg& graph, const Config& cfg) : graph_(&graph), cfg_(&cfg) {}

    void bind(const Cstg& graph) { graph_ = &graph; }

    ActionDirective propose(const PromptContext& prompt) override {
        return oracle_propose(*graph_, prompt.goal, *cfg_);
    }

    std::string name() const override { return "oracle"; }

  private:
    const Cstg* graph_;
    const Config* cfg_;
};

}  // namespace stg
