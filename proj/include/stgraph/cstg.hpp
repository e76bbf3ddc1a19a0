#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgraph/config.hpp"
#include "stgraph/directive.hpp"
#include "stgraph/errors.hpp"
#include "stgraph/geometry.hpp"
#include "stgraph/stf.hpp"
#include "stgraph/util.hpp"

namespace stg {

enum class Visibility { visible, occluded, removed };

inline const char* visibility_name(Visibility v) {
    switch (v) {
        case Visibility::visible: return "visible";
        case Visibility::occluded: return "occluded";
        case Visibility::removed: return "removed";
    }
    return "?";
}

// One tracked object: a sliding window of its most recent tokens plus the
// newest token ever assigned (which survives window eviction during long
// occlusions).
struct SceneNode {
    std::string object_id;
    std::string descriptor;
    std::vector<StfToken> window;  // oldest -> newest, |window| <= K
    StfToken last_known;
    Visibility visibility = Visibility::visible;
    std::optional<std::string> occluder_id;  // present only while occluded
};

// Pairwise relation, stored once per unordered pair with from_id < to_id.
// Tags read as "<to> <tag> <from>": an edge a->b tagged above means b sits
// above a.
struct SceneEdge {
    std::string from_id, to_id;
    double distance = 0.0;
    Vec3 offset;  // to.centroid - from.centroid
    std::set<std::string> relation_tags;
};

enum class EventKind {
    planned_displacement,
    unintended_collision,
    occlusion_start,
    occlusion_end,
    action_executed,
    subtask_completed,
    precondition_violation
};

inline const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::planned_displacement: return "planned_displacement";
        case EventKind::unintended_collision: return "unintended_collision";
        case EventKind::occlusion_start: return "occlusion_start";
        case EventKind::occlusion_end: return "occlusion_end";
        case EventKind::action_executed: return "action_executed";
        case EventKind::subtask_completed: return "subtask_completed";
        case EventKind::precondition_violation: return "precondition_violation";
    }
    return "?";
}

inline std::optional<EventKind> event_kind_from_name(const std::string& s) {
    for (EventKind k : {EventKind::planned_displacement, EventKind::unintended_collision,
                        EventKind::occlusion_start, EventKind::occlusion_end,
                        EventKind::action_executed, EventKind::subtask_completed,
                        EventKind::precondition_violation}) {
        if (s == event_kind_name(k)) return k;
    }
    return std::nullopt;
}

enum class CauseKind { agent_action, external, unknown };

struct Cause {
    CauseKind kind = CauseKind::unknown;
    std::string action_ref;  // rendered directive, only for agent_action
};

struct CausalEvent {
    int event_id = 0;
    int timestamp = 0;
    EventKind kind = EventKind::occlusion_start;
    std::string subject_id;  // empty means "no specific node" (planner-level events)
    Vec3 location;
    Cause cause;
    std::string detail;
};

// Append-only causal history. horizon_k mirrors the window length it was
// built with; events are ordered by (timestamp, event_id).
struct MemoryLog {
    std::vector<CausalEvent> events;
    int horizon_k = 3;
};

struct Cstg {
    std::map<std::string, SceneNode> nodes;
    std::vector<SceneEdge> edges;
    MemoryLog log;
    int current_step = -1;  // no update applied yet
};

// ---------------------------------------------------------------------------
// identity association
// ---------------------------------------------------------------------------

struct AssociationResult {
    // token index -> existing node id, for matched tokens
    std::vector<std::pair<std::size_t, std::string>> matches;
    std::vector<std::size_t> new_tokens;  // token indices that found no node
    std::vector<std::string> notes;       // ambiguity diagnostics, never fatal
};

namespace detail {

// Exhaustive max-cardinality, min-total-distance assignment for one
// descriptor group. Tokens are taken in object-id order and nodes in id
// order, and matches are explored before leaving a token out, so the first
// optimum found gives any contested node to the lowest token id, which is
// the documented tie rule. Group sizes beyond a handful never occur on a
// desk.
struct GroupMatcher {
    const std::vector<std::vector<double>>* cost;  // token x node, <0 = gated off
    std::size_t n_nodes = 0;
    std::vector<int> current, best;
    std::size_t best_count = 0;
    double best_dist = 0.0;
    bool tie_seen = false;

    void run() {
        current.assign(cost->size(), -1);
        best = current;
        descend(0, std::vector<bool>(n_nodes, false), 0, 0.0);
    }

    void descend(std::size_t ti, std::vector<bool> used, std::size_t count, double dist) {
        if (ti == cost->size()) {
            if (count > best_count ||
                (count == best_count && dist < best_dist - 1e-12)) {
                best = current;
                best_count = count;
                best_dist = dist;
                tie_seen = false;
            } else if (count == best_count && count > 0 &&
                       std::abs(dist - best_dist) <= 1e-12 && current != best) {
                tie_seen = true;
            }
            return;
        }
        for (std::size_t ni = 0; ni < n_nodes; ++ni) {
            double c = (*cost)[ti][ni];
            if (c < 0.0 || used[ni]) continue;
            current[ti] = static_cast<int>(ni);
            used[ni] = true;
            descend(ti + 1, used, count + 1, dist + c);
            used[ni] = false;
        }
        // leave token ti unmatched
        current[ti] = -1;
        descend(ti + 1, used, count, dist);
    }
};

}  // namespace detail

// Matches incoming tokens to existing nodes: same descriptor only, gated by
// d_assoc, maximizing match count then minimizing total centroid distance.
// `predicted` overrides a node's reference position (used for the subject of
// the action just executed, whose commanded destination is known).
inline AssociationResult associate_identities(
    const Cstg& prev, const std::vector<StfToken>& incoming, const Config& cfg,
    const std::map<std::string, Vec3>& predicted = {}) {
    AssociationResult out;

    // group tokens by descriptor, ordered by token object id within a group
    // so the tie rule below is literal
    std::map<std::string, std::vector<std::size_t>> token_groups;
    for (std::size_t i = 0; i < incoming.size(); ++i) {
        token_groups[incoming[i].descriptor].push_back(i);
    }
    for (auto& [descriptor, idx] : token_groups) {
        std::sort(idx.begin(), idx.end(), [&incoming](std::size_t a, std::size_t b) {
            return std::tie(incoming[a].object_id, a) <
                   std::tie(incoming[b].object_id, b);
        });
    }

    for (const auto& [descriptor, token_idx] : token_groups) {
        std::vector<std::string> node_ids;  // candidates, ascending id
        for (const auto& [id, node] : prev.nodes) {
            if (node.descriptor == descriptor && node.visibility != Visibility::removed) {
                node_ids.push_back(id);
            }
        }
        if (node_ids.empty()) {
            for (std::size_t i : token_idx) out.new_tokens.push_back(i);
            continue;
        }
        std::vector<std::vector<double>> cost(token_idx.size(),
                                              std::vector<double>(node_ids.size(), -1.0));
        for (std::size_t a = 0; a < token_idx.size(); ++a) {
            for (std::size_t b = 0; b < node_ids.size(); ++b) {
                const SceneNode& node = prev.nodes.at(node_ids[b]);
                Vec3 ref = node.last_known.centroid;
                auto p = predicted.find(node_ids[b]);
                if (p != predicted.end()) ref = p->second;
                double d = (incoming[token_idx[a]].centroid - ref).norm();
                if (d <= cfg.assoc_distance) cost[a][b] = d;
            }
        }
        detail::GroupMatcher matcher;
        matcher.cost = &cost;
        matcher.n_nodes = node_ids.size();
        matcher.run();
        if (matcher.tie_seen) {
            out.notes.push_back("ambiguous association for descriptor '" + descriptor +
                                "' resolved by lowest object id");
        }
        for (std::size_t a = 0; a < token_idx.size(); ++a) {
            if (matcher.best[a] >= 0) {
                out.matches.emplace_back(token_idx[a], node_ids[matcher.best[a]]);
            } else {
                out.new_tokens.push_back(token_idx[a]);
            }
        }
    }
    std::sort(out.new_tokens.begin(), out.new_tokens.end());
    std::sort(out.matches.begin(), out.matches.end());
    return out;
}

// ---------------------------------------------------------------------------
// edges and relations
// ---------------------------------------------------------------------------

namespace detail {

inline std::set<std::string> relation_tags(const StfToken& from, const StfToken& to,
                                           const Config& cfg) {
    std::set<std::string> tags;
    Vec3 off = to.centroid - from.centroid;
    if (off.norm() < cfg.near_threshold) tags.insert("near");
    if (off.z > cfg.dir_epsilon) tags.insert("above");
    if (off.z < -cfg.dir_epsilon) tags.insert("below");
    if (off.x > cfg.dir_epsilon) tags.insert("right_of");
    if (off.x < -cfg.dir_epsilon) tags.insert("left_of");
    if (off.y < -cfg.dir_epsilon) tags.insert("in_front");
    if (off.y > cfg.dir_epsilon) tags.insert("behind");

    // support: vertical gap within [~0, gap_max] and overlapping footprints.
    // Overlap rather than centroid containment, so a beam resting across two
    // pillars counts as supported by each. The small negative slack absorbs
    // rendering quantization of the measured boxes.
    auto rests_on = [&cfg](const StfToken& top, const StfToken& bottom) {
        double gap = top.shape.z.min - bottom.shape.z.max;
        if (gap < -0.005 || gap > cfg.support_gap_max) return false;
        double ox = std::min(top.shape.x.max, bottom.shape.x.max) -
                    std::max(top.shape.x.min, bottom.shape.x.min);
        double oy = std::min(top.shape.y.max, bottom.shape.y.max) -
                    std::max(top.shape.y.min, bottom.shape.y.min);
        return ox > 0.0 && oy > 0.0;
    };
    if (rests_on(to, from)) tags.insert("supported_by");
    if (rests_on(from, to)) tags.insert("supporting");
    return tags;
}

inline std::set<std::string> flip_tags(const std::set<std::string>& tags) {
    std::set<std::string> out;
    for (const auto& t : tags) {
        if (t == "above") out.insert("below");
        else if (t == "below") out.insert("above");
        else if (t == "left_of") out.insert("right_of");
        else if (t == "right_of") out.insert("left_of");
        else if (t == "in_front") out.insert("behind");
        else if (t == "behind") out.insert("in_front");
        else if (t == "supporting") out.insert("supported_by");
        else if (t == "supported_by") out.insert("supporting");
        else out.insert(t);
    }
    return out;
}

inline std::vector<SceneEdge> rebuild_edges(const std::map<std::string, SceneNode>& nodes,
                                            const Config& cfg) {
    std::vector<SceneEdge> edges;
    for (auto i = nodes.begin(); i != nodes.end(); ++i) {
        if (i->second.visibility == Visibility::removed) continue;
        auto j = i;
        for (++j; j != nodes.end(); ++j) {
            if (j->second.visibility == Visibility::removed) continue;
            SceneEdge e;
            e.from_id = i->first;
            e.to_id = j->first;
            e.offset = j->second.last_known.centroid - i->second.last_known.centroid;
            e.distance = e.offset.norm();
            e.relation_tags = relation_tags(i->second.last_known, j->second.last_known, cfg);
            edges.push_back(std::move(e));
        }
    }
    return edges;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// queries
// ---------------------------------------------------------------------------

inline const SceneNode& get_node(const Cstg& g, const std::string& id) {
    auto it = g.nodes.find(id);
    if (it == g.nodes.end()) throw UnknownObject("unknown object '" + id + "'");
    return it->second;
}

struct LastKnownPose {
    Vec3 centroid;
    ShapeVector shape;
    int timestamp = 0;
};

// The object's most recent geometry regardless of current visibility: the
// object-permanence query.
inline LastKnownPose last_known_pose(const Cstg& g, const std::string& id) {
    const SceneNode& n = get_node(g, id);
    return {n.last_known.centroid, n.last_known.shape, n.last_known.t};
}

// Stored edge orientation-normalized to the requested direction.
inline SceneEdge relation_query(const Cstg& g, const std::string& from_id,
                                const std::string& to_id) {
    get_node(g, from_id);
    get_node(g, to_id);
    for (const SceneEdge& e : g.edges) {
        if (e.from_id == from_id && e.to_id == to_id) return e;
        if (e.from_id == to_id && e.to_id == from_id) {
            SceneEdge flipped;
            flipped.from_id = from_id;
            flipped.to_id = to_id;
            flipped.offset = Vec3{0, 0, 0} - e.offset;
            flipped.distance = e.distance;
            flipped.relation_tags = detail::flip_tags(e.relation_tags);
            return flipped;
        }
    }
    throw UnknownObject("no edge between '" + from_id + "' and '" + to_id + "'");
}

inline std::string format_event(const CausalEvent& ev, int precision) {
    std::string out = "[t=" + std::to_string(ev.timestamp) + " #" +
                      std::to_string(ev.event_id) + "] ";
    out += event_kind_name(ev.kind);
    if (!ev.subject_id.empty()) out += " " + ev.subject_id;
    out += " at (" + fmt_fixed(ev.location.x, precision) + ", " +
           fmt_fixed(ev.location.y, precision) + ", " + fmt_fixed(ev.location.z, precision) +
           ")";
    switch (ev.cause.kind) {
        case CauseKind::agent_action:
            out += " cause=action:" + ev.cause.action_ref;
            break;
        case CauseKind::external:
            out += " cause=external";
            break;
        case CauseKind::unknown:
            out += " cause=unknown";
            break;
    }
    if (!ev.detail.empty()) out += " detail=" + ev.detail;
    return out;
}

// Scene half of the context text: header, nodes via their last_known
// tokens, and edges with tags. Kept separate from the events half so the
// planner prompt can place them as distinct sections.
inline std::string scene_context(const Cstg& g, const Config& cfg) {
    std::string out = "cstg/1 step=" + std::to_string(g.current_step) + "\n";
    if (g.nodes.empty()) {
        out += "no objects\n";
    }
    for (const auto& [id, node] : g.nodes) {
        out += "node " + id + " status=" + visibility_name(node.visibility);
        if (node.visibility == Visibility::occluded) {
            out += node.occluder_id ? " occluder=" + *node.occluder_id
                                    : " occluder=unknown";
        }
        out += "\n";
        out += serialize_token(node.last_known, cfg.serialize_precision);
    }
    if (!g.edges.empty()) {
        out += "edges:\n";
        for (const SceneEdge& e : g.edges) {
            out += e.from_id + " -> " + e.to_id +
                   ": distance=" + fmt_fixed(e.distance, cfg.serialize_precision) +
                   " offset=" + fmt_fixed(e.offset.x, cfg.serialize_precision) + " " +
                   fmt_fixed(e.offset.y, cfg.serialize_precision) + " " +
                   fmt_fixed(e.offset.z, cfg.serialize_precision) + " tags=";
            bool first = true;
            for (const auto& t : e.relation_tags) {
                if (!first) out += ",";
                out += t;
                first = false;
            }
            out += "\n";
        }
    }
    return out;
}

// Events half: the most recent L log events as deterministic text.
inline std::string events_context(const Cstg& g, const Config& cfg) {
    std::size_t total = g.log.events.size();
    std::size_t shown = std::min<std::size_t>(total, static_cast<std::size_t>(cfg.recent_events));
    std::string out =
        "events (last " + std::to_string(shown) + " of " + std::to_string(total) + "):\n";
    for (std::size_t i = total - shown; i < total; ++i) {
        out += format_event(g.log.events[i], cfg.serialize_precision) + "\n";
    }
    return out;
}

// Full deterministic text rendering of the graph: scene plus recent events.
inline std::string spatial_context(const Cstg& g, const Config& cfg) {
    return scene_context(g, cfg) + events_context(g, cfg);
}

// ---------------------------------------------------------------------------
// update
// ---------------------------------------------------------------------------

namespace detail {

// Where should the subject of the just-executed action be now? pick lifts it
// straight up by the hover height; placing verbs put it at the resolved
// release position.
inline std::map<std::string, Vec3> predicted_positions(const Cstg& prev,
                                                       const ActionDirective& action,
                                                       const Config& cfg) {
    std::map<std::string, Vec3> out;
    auto it = prev.nodes.find(action.subject_id);
    if (it == prev.nodes.end()) return out;
    switch (action.verb) {
        case Verb::pick:
            out[action.subject_id] =
                it->second.last_known.centroid + Vec3{0, 0, cfg.hover_lift};
            break;
        case Verb::place_on:
        case Verb::place_at:
        case Verb::cover_with:
        case Verb::uncover:
            if (action.resolved_release) {
                out[action.subject_id] = *action.resolved_release;
            }
            break;
        case Verb::done:
            break;
    }
    return out;
}

// Did the action's canonical postcondition become true in the updated graph?
inline bool subtask_done(const Cstg& next, const ActionDirective& action,
                         const Vec3& subject_prev, const Config& cfg) {
    auto it = next.nodes.find(action.subject_id);
    if (it == next.nodes.end()) return false;
    const SceneNode& subject = it->second;
    switch (action.verb) {
        case Verb::pick:
            return subject.last_known.centroid.z - subject_prev.z >= cfg.hover_lift / 2.0;
        case Verb::place_on: {
            auto t = next.nodes.find(action.target.object_id);
            if (t == next.nodes.end()) return false;
            try {
                SceneEdge e = relation_query(next, action.target.object_id,
                                             action.subject_id);
                return e.relation_tags.count("supported_by") > 0;
            } catch (const UnknownObject&) {
                return false;
            }
        }
        case Verb::place_at:
            return (subject.last_known.centroid - action.target.position).norm() <=
                   cfg.place_tolerance;
        case Verb::cover_with: {
            auto t = next.nodes.find(action.target.object_id);
            if (t == next.nodes.end()) return false;
            return t->second.visibility == Visibility::occluded &&
                   t->second.occluder_id == action.subject_id;
        }
        case Verb::uncover:
            for (const CausalEvent& ev : next.log.events) {
                if (ev.timestamp == next.current_step && ev.kind == EventKind::occlusion_end) {
                    return true;
                }
            }
            return false;
        case Verb::done:
            return false;
    }
    return false;
}

}  // namespace detail

// Appends planner-level events (precondition violations) to the log at the
// graph's current step. The log is append-only; this is the only other way
// events enter it besides update_graph's own detection.
inline Cstg append_events(Cstg g, const std::vector<CausalEvent>& drafts) {
    for (CausalEvent ev : drafts) {
        ev.event_id = static_cast<int>(g.log.events.size());
        ev.timestamp = g.current_step;
        g.log.events.push_back(std::move(ev));
    }
    return g;
}

// One observation step: associate tokens to identities, advance windows,
// flip visibility, rebuild edges, detect and append events.
inline Cstg update_graph(const Cstg& prev, const std::vector<StfToken>& incoming,
                         const std::optional<ActionDirective>& executed_action,
                         const Config& cfg) {
    int t = prev.current_step + 1;
    for (const StfToken& tok : incoming) {
        if (tok.t != t) {
            throw StaleStep("update_graph: token at t=" + std::to_string(tok.t) +
                            ", expected " + std::to_string(t));
        }
    }

    std::map<std::string, Vec3> predicted;
    if (executed_action) {
        predicted = detail::predicted_positions(prev, *executed_action, cfg);
    }
    AssociationResult assoc = associate_identities(prev, incoming, cfg, predicted);

    Cstg next;
    next.nodes = prev.nodes;
    next.log = prev.log;
    next.log.horizon_k = cfg.window_k;
    next.current_step = t;

    struct Moved {
        std::string id;
        Vec3 from, to;
    };
    std::vector<Moved> moved;
    std::set<std::string> matched_ids;
    std::vector<std::string> reappeared;  // previously occluded, seen again
    std::map<std::string, int> hidden_since;

    for (const auto& [tok_idx, node_id] : assoc.matches) {
        SceneNode& node = next.nodes[node_id];
        StfToken tok = incoming[tok_idx];
        tok.object_id = node_id;  // token adopts the graph identity
        Vec3 prev_pos = node.last_known.centroid;
        if ((tok.centroid - prev_pos).norm() > cfg.move_epsilon) {
            moved.push_back({node_id, prev_pos, tok.centroid});
        }
        if (node.visibility == Visibility::occluded) {
            reappeared.push_back(node_id);
            hidden_since[node_id] = node.last_known.t;
        }
        node.window.push_back(tok);
        while (static_cast<int>(node.window.size()) > cfg.window_k) {
            node.window.erase(node.window.begin());
        }
        node.last_known = tok;
        node.visibility = Visibility::visible;
        node.occluder_id.reset();
        matched_ids.insert(node_id);
    }

    // mint nodes for unmatched tokens; ids come from the provenance key,
    // uniquified if an unrelated node already claimed it
    for (std::size_t tok_idx : assoc.new_tokens) {
        StfToken tok = incoming[tok_idx];
        std::string id = tok.source_id;
        for (int k = 2; next.nodes.count(id); ++k) {
            id = tok.source_id + "#" + std::to_string(k);
        }
        tok.object_id = id;
        SceneNode node;
        node.object_id = id;
        node.descriptor = tok.descriptor;
        node.window.push_back(tok);
        node.last_known = tok;
        node.visibility = Visibility::visible;
        next.nodes[id] = std::move(node);
        matched_ids.insert(id);
    }

    // unmatched existing nodes lose visibility this step
    std::vector<std::string> newly_occluded;
    for (auto& [id, node] : next.nodes) {
        if (matched_ids.count(id) || node.visibility == Visibility::removed) continue;
        if (node.visibility == Visibility::visible) {
            node.visibility = Visibility::occluded;
            newly_occluded.push_back(id);
        }
    }

    // infer occluders: the hidden centroid lies within a visible node's
    // expanded footprint; nearest footprint centroid wins ties
    for (const std::string& id : newly_occluded) {
        SceneNode& hidden = next.nodes[id];
        Vec3 c = hidden.last_known.centroid;
        std::string best;
        double best_d = 0.0;
        for (const auto& [vid, vnode] : next.nodes) {
            if (vid == id || vnode.visibility != Visibility::visible) continue;
            const ShapeVector& s = vnode.last_known.shape;
            double e = cfg.occluder_expand;
            if (c.x >= s.x.min - e && c.x <= s.x.max + e && c.y >= s.y.min - e &&
                c.y <= s.y.max + e) {
                double d = (vnode.last_known.centroid - c).norm();
                if (best.empty() || d < best_d) {
                    best = vid;
                    best_d = d;
                }
            }
        }
        if (!best.empty()) hidden.occluder_id = best;
    }

    next.edges = detail::rebuild_edges(next.nodes, cfg);

    // -------------------------------------------------------- event detection
    auto push_event = [&next, t](EventKind kind, const std::string& subject,
                                 const Vec3& location, Cause cause, std::string detail) {
        CausalEvent ev;
        ev.event_id = static_cast<int>(next.log.events.size());
        ev.timestamp = t;
        ev.kind = kind;
        ev.subject_id = subject;
        ev.location = location;
        ev.cause = std::move(cause);
        ev.detail = std::move(detail);
        next.log.events.push_back(std::move(ev));
    };
    auto fmt_pos = [&cfg](const Vec3& v) {
        return "(" + fmt_fixed(v.x, cfg.serialize_precision) + ", " +
               fmt_fixed(v.y, cfg.serialize_precision) + ", " +
               fmt_fixed(v.z, cfg.serialize_precision) + ")";
    };

    Cause agent_cause;
    std::string action_text;
    if (executed_action) {
        action_text = render_directive(*executed_action);
        agent_cause = {CauseKind::agent_action, action_text};
    }

    Vec3 subject_prev_pos;
    if (executed_action) {
        auto it = prev.nodes.find(executed_action->subject_id);
        if (it != prev.nodes.end()) subject_prev_pos = it->second.last_known.centroid;

        std::string detail = executed_action->subgoal_note.empty()
                                 ? action_text
                                 : executed_action->subgoal_note;
        for (const std::string& note : assoc.notes) detail += "; " + note;
        Vec3 loc;
        auto now = next.nodes.find(executed_action->subject_id);
        if (now != next.nodes.end()) loc = now->second.last_known.centroid;
        push_event(EventKind::action_executed, executed_action->subject_id, loc,
                   agent_cause, detail);
    }

    // displacement events record the vacated position, so the first
    // displacement of an object pins its original location in the log
    std::sort(moved.begin(), moved.end(),
              [](const Moved& a, const Moved& b) { return a.id < b.id; });
    for (const Moved& m : moved) {
        bool is_subject = executed_action && m.id == executed_action->subject_id;
        std::string detail = "from " + fmt_pos(m.from) + " to " + fmt_pos(m.to);
        if (is_subject) {
            push_event(EventKind::planned_displacement, m.id, m.from, agent_cause, detail);
        } else {
            Cause cause = executed_action ? agent_cause
                                          : Cause{CauseKind::external, ""};
            push_event(EventKind::unintended_collision, m.id, m.from, cause, detail);
        }
    }

    for (const std::string& id : newly_occluded) {
        const SceneNode& node = next.nodes[id];
        Cause cause = executed_action ? agent_cause
                      : node.occluder_id ? Cause{CauseKind::external, ""}
                                         : Cause{CauseKind::unknown, ""};
        std::string detail = node.occluder_id ? "occluded by " + *node.occluder_id
                                              : "no visible occluder";
        push_event(EventKind::occlusion_start, id, node.last_known.centroid, cause, detail);
    }

    std::sort(reappeared.begin(), reappeared.end());
    for (const std::string& id : reappeared) {
        const SceneNode& node = next.nodes[id];
        Cause cause = executed_action ? agent_cause : Cause{CauseKind::unknown, ""};
        push_event(EventKind::occlusion_end, id, node.last_known.centroid, cause,
                   "re-observed after " + std::to_string(t - hidden_since[id]) + " steps");
    }

    if (executed_action &&
        detail::subtask_done(next, *executed_action, subject_prev_pos, cfg)) {
        Vec3 loc;
        auto it = next.nodes.find(executed_action->subject_id);
        if (it != next.nodes.end()) loc = it->second.last_known.centroid;
        push_event(EventKind::subtask_completed, executed_action->subject_id, loc,
                   agent_cause,
                   executed_action->subgoal_note.empty() ? action_text
                                                         : executed_action->subgoal_note);
    }

    return next;
}

// ---------------------------------------------------------------------------
// snapshot export (cstg/1)
// ---------------------------------------------------------------------------

inline nlohmann::json event_to_json(const CausalEvent& ev) {
    nlohmann::json j;
    j["id"] = ev.event_id;
    j["t"] = ev.timestamp;
    j["kind"] = event_kind_name(ev.kind);
    j["subject"] = ev.subject_id;
    j["location"] = {ev.location.x, ev.location.y, ev.location.z};
    switch (ev.cause.kind) {
        case CauseKind::agent_action:
            j["cause"] = {{"kind", "agent_action"}, {"action", ev.cause.action_ref}};
            break;
        case CauseKind::external:
            j["cause"] = {{"kind", "external"}};
            break;
        case CauseKind::unknown:
            j["cause"] = {{"kind", "unknown"}};
            break;
    }
    j["detail"] = ev.detail;
    return j;
}

inline CausalEvent event_from_json(const nlohmann::json& j) {
    CausalEvent ev;
    ev.event_id = j.at("id").get<int>();
    ev.timestamp = j.at("t").get<int>();
    auto kind = event_kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw ConfigError("unknown event kind in snapshot");
    ev.kind = *kind;
    ev.subject_id = j.at("subject").get<std::string>();
    ev.location = {j.at("location")[0].get<double>(), j.at("location")[1].get<double>(),
                   j.at("location")[2].get<double>()};
    std::string ck = j.at("cause").at("kind").get<std::string>();
    if (ck == "agent_action") {
        ev.cause = {CauseKind::agent_action, j.at("cause").at("action").get<std::string>()};
    } else if (ck == "external") {
        ev.cause = {CauseKind::external, ""};
    } else {
        ev.cause = {CauseKind::unknown, ""};
    }
    ev.detail = j.at("detail").get<std::string>();
    return ev;
}

// Versioned full-graph snapshot. Field order is canonicalized (sorted ids,
// sorted edge keys) so equal graphs dump to equal bytes.
inline nlohmann::json cstg_to_json(const Cstg& g) {
    nlohmann::json j;
    j["format"] = "cstg/1";
    j["step"] = g.current_step;
    j["nodes"] = nlohmann::json::array();
    for (const auto& [id, node] : g.nodes) {
        nlohmann::json n;
        n["id"] = id;
        n["descriptor"] = node.descriptor;
        n["visibility"] = visibility_name(node.visibility);
        if (node.occluder_id) n["occluder"] = *node.occluder_id;
        n["last_known"] = token_to_json(node.last_known);
        n["window"] = nlohmann::json::array();
        for (const StfToken& tok : node.window) n["window"].push_back(token_to_json(tok));
        j["nodes"].push_back(std::move(n));
    }
    j["edges"] = nlohmann::json::array();
    for (const SceneEdge& e : g.edges) {
        nlohmann::json ej;
        ej["from"] = e.from_id;
        ej["to"] = e.to_id;
        ej["distance"] = e.distance;
        ej["offset"] = {e.offset.x, e.offset.y, e.offset.z};
        ej["tags"] = e.relation_tags;  // std::set serializes sorted
        j["edges"].push_back(std::move(ej));
    }
    j["events"] = nlohmann::json::array();
    for (const CausalEvent& ev : g.log.events) j["events"].push_back(event_to_json(ev));
    j["window_k"] = g.log.horizon_k;
    return j;
}

inline std::string graph_digest(const Cstg& g) {
    return hex64(fnv1a64(cstg_to_json(g).dump()));
}

// Rough retained-memory accounting used by the latency/memory stability
// checks: the graph must grow only with event count and K*N window slots.
struct CstgFootprint {
    std::size_t nodes = 0;
    std::size_t window_tokens = 0;
    std::size_t events = 0;
};

inline CstgFootprint footprint(const Cstg& g) {
    CstgFootprint f;
    f.nodes = g.nodes.size();
    for (const auto& [id, node] : g.nodes) f.window_tokens += node.window.size();
    f.events = g.log.events.size();
    return f;
}

}  // namespace stg
