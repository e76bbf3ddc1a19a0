#pragma once

// Episode runner and record keeping. Drives the perceive, graph-update, plan,
// verify, act loop against the simulator, writes one JSONL record per episode,
// aggregates suites, and replays records to prove the pipeline deterministic.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgraph/config.hpp"
#include "stgraph/cstg.hpp"
#include "stgraph/directive.hpp"
#include "stgraph/errors.hpp"
#include "stgraph/oracle.hpp"
#include "stgraph/planner.hpp"
#include "stgraph/simulator.hpp"
#include "stgraph/stf.hpp"
#include "stgraph/util.hpp"

namespace stg {

// ---------------------------------------------------------------------------
// config snapshot
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const Config& c) {
    nlohmann::json j;
    j["grid_n"] = c.grid_n;
    j["iou_threshold"] = c.iou_threshold;
    j["serialize_precision"] = c.serialize_precision;
    j["window_k"] = c.window_k;
    j["assoc_distance"] = c.assoc_distance;
    j["move_epsilon"] = c.move_epsilon;
    j["occluder_expand"] = c.occluder_expand;
    j["near_threshold"] = c.near_threshold;
    j["dir_epsilon"] = c.dir_epsilon;
    j["support_gap_max"] = c.support_gap_max;
    j["recent_events"] = c.recent_events;
    j["approach_height"] = c.approach_height;
    j["grasp_radius"] = c.grasp_radius;
    j["place_tolerance"] = c.place_tolerance;
    j["max_replans"] = c.max_replans;
    j["hover_lift"] = c.hover_lift;
    j["workspace_half_xy"] = c.workspace_half_xy;
    j["workspace_max_z"] = c.workspace_max_z;
    j["parking_row_y"] = c.parking_row_y;
    j["parking_span_x"] = c.parking_span_x;
    j["parking_step_x"] = c.parking_step_x;
    j["parking_clearance"] = c.parking_clearance;
    j["stability_fraction"] = c.stability_fraction;
    j["box_epsilon"] = c.box_epsilon;
    j["penetration_epsilon"] = c.penetration_epsilon;
    j["settle_epsilon"] = c.settle_epsilon;
    j["depth_noise_sigma"] = c.depth_noise_sigma;
    j["seed"] = c.seed;
    j["image_width"] = c.image_width;
    j["image_height"] = c.image_height;
    j["remote_retries"] = c.remote_retries;
    j["remote_timeout_ms"] = c.remote_timeout_ms;
    j["model"] = c.model;
    j["disable_stf_geometry"] = c.disable_stf_geometry;
    j["disable_cstg_memory"] = c.disable_cstg_memory;
    return j;
}

inline Config config_from_json(const nlohmann::json& j) {
    Config c;
    c.grid_n = j.value("grid_n", c.grid_n);
    c.iou_threshold = j.value("iou_threshold", c.iou_threshold);
    c.serialize_precision = j.value("serialize_precision", c.serialize_precision);
    c.window_k = j.value("window_k", c.window_k);
    c.assoc_distance = j.value("assoc_distance", c.assoc_distance);
    c.move_epsilon = j.value("move_epsilon", c.move_epsilon);
    c.occluder_expand = j.value("occluder_expand", c.occluder_expand);
    c.near_threshold = j.value("near_threshold", c.near_threshold);
    c.dir_epsilon = j.value("dir_epsilon", c.dir_epsilon);
    c.support_gap_max = j.value("support_gap_max", c.support_gap_max);
    c.recent_events = j.value("recent_events", c.recent_events);
    c.approach_height = j.value("approach_height", c.approach_height);
    c.grasp_radius = j.value("grasp_radius", c.grasp_radius);
    c.place_tolerance = j.value("place_tolerance", c.place_tolerance);
    c.max_replans = j.value("max_replans", c.max_replans);
    c.hover_lift = j.value("hover_lift", c.hover_lift);
    c.workspace_half_xy = j.value("workspace_half_xy", c.workspace_half_xy);
    c.workspace_max_z = j.value("workspace_max_z", c.workspace_max_z);
    c.parking_row_y = j.value("parking_row_y", c.parking_row_y);
    c.parking_span_x = j.value("parking_span_x", c.parking_span_x);
    c.parking_step_x = j.value("parking_step_x", c.parking_step_x);
    c.parking_clearance = j.value("parking_clearance", c.parking_clearance);
    c.stability_fraction = j.value("stability_fraction", c.stability_fraction);
    c.box_epsilon = j.value("box_epsilon", c.box_epsilon);
    c.penetration_epsilon = j.value("penetration_epsilon", c.penetration_epsilon);
    c.settle_epsilon = j.value("settle_epsilon", c.settle_epsilon);
    c.depth_noise_sigma = j.value("depth_noise_sigma", c.depth_noise_sigma);
    c.seed = j.value("seed", c.seed);
    c.image_width = j.value("image_width", c.image_width);
    c.image_height = j.value("image_height", c.image_height);
    c.remote_retries = j.value("remote_retries", c.remote_retries);
    c.remote_timeout_ms = j.value("remote_timeout_ms", c.remote_timeout_ms);
    c.model = j.value("model", c.model);
    c.disable_stf_geometry = j.value("disable_stf_geometry", c.disable_stf_geometry);
    c.disable_cstg_memory = j.value("disable_cstg_memory", c.disable_cstg_memory);
    return c;
}

inline std::string config_hash(const Config& c) {
    return hex64(fnv1a64(config_to_json(c).dump()));
}

// ---------------------------------------------------------------------------
// run configuration and records
// ---------------------------------------------------------------------------

struct RunConfig {
    Config base;                        // tolerances, ablation flags, camera
    std::vector<std::uint64_t> seeds = {0};
};

inline std::vector<std::uint64_t> default_suite_seeds() {
    std::vector<std::uint64_t> seeds(25);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
    return seeds;
}

// Exactly one bucket per failed episode; successful episodes carry none.
enum class FailureCause { none, parsing, placement, grasp, motion, planning };

inline const char* failure_cause_name(FailureCause c) {
    switch (c) {
        case FailureCause::none: return "none";
        case FailureCause::parsing: return "parsing";
        case FailureCause::placement: return "placement";
        case FailureCause::grasp: return "grasp";
        case FailureCause::motion: return "motion";
        case FailureCause::planning: return "planning";
    }
    return "none";
}

inline FailureCause failure_cause_from_name(const std::string& name) {
    if (name == "none") return FailureCause::none;
    if (name == "parsing") return FailureCause::parsing;
    if (name == "placement") return FailureCause::placement;
    if (name == "grasp") return FailureCause::grasp;
    if (name == "motion") return FailureCause::motion;
    if (name == "planning") return FailureCause::planning;
    throw ConfigError("unknown failure cause '" + name + "'");
}

struct StageTimes {
    double perceive_ms = 0.0;  // token extraction
    double graph_ms = 0.0;     // update_graph
    double plan_ms = 0.0;      // step_loop: propose + verify (+ replans)
    double act_ms = 0.0;       // apply_action + render
};

// One record per pipeline step. Record 0 is the initial perception and has no
// decision fields. Every later record holds the decision made on the previous
// record's graph plus the perception that followed its execution; a done
// decision closes the episode and carries no perception of its own.
struct StepRecord {
    int step = 0;                  // graph current_step after this update
    std::string obs_digest;
    std::vector<StfToken> tokens;  // the update's input, verbatim (replay feed)
    std::string graph_digest;      // after the update
    int events_total = 0;

    bool has_decision = false;
    ActionDirective directive;
    VerificationReport report;
    std::vector<ActionDirective> rejected;
    int replans = 0;
    std::string prompt_hash;
    std::optional<Pose6DoFAction> action;  // absent for done
    std::string outcome;                   // ok | grasp_miss | toppled | done
    StageTimes times;
};

struct EpisodeRecord {
    std::string task_name;
    std::string backend;
    std::uint64_t seed = 0;
    nlohmann::json config_snapshot;
    std::string config_hash;
    std::vector<StepRecord> steps;
    bool done = false;
    bool success = false;
    FailureCause cause = FailureCause::none;
    std::string error;  // exception text when the loop aborted
    EpisodePhases phases;
    std::string final_world_digest;
};

// ---------------------------------------------------------------------------
// episode/1 JSONL
// ---------------------------------------------------------------------------

namespace harness_detail {

inline nlohmann::json step_to_json(const StepRecord& s) {
    nlohmann::json j;
    j["step"] = s.step;
    j["obs"] = s.obs_digest;
    j["tokens"] = nlohmann::json::array();
    for (const StfToken& tok : s.tokens) j["tokens"].push_back(token_to_json(tok));
    j["graph"] = s.graph_digest;
    j["events"] = s.events_total;
    if (s.has_decision) {
        j["directive"] = directive_to_json(s.directive);
        j["report"] = report_to_json(s.report);
        j["rejected"] = nlohmann::json::array();
        for (const ActionDirective& d : s.rejected) {
            j["rejected"].push_back(directive_to_json(d));
        }
        j["replans"] = s.replans;
        j["prompt"] = s.prompt_hash;
        j["action"] = s.action ? action_to_json(*s.action) : nlohmann::json(nullptr);
        j["outcome"] = s.outcome;
    }
    j["times"] = {{"perceive_ms", s.times.perceive_ms},
                  {"graph_ms", s.times.graph_ms},
                  {"plan_ms", s.times.plan_ms},
                  {"act_ms", s.times.act_ms}};
    return j;
}

inline StepRecord step_from_json(const nlohmann::json& j) {
    StepRecord s;
    s.step = j.at("step").get<int>();
    s.obs_digest = j.at("obs").get<std::string>();
    for (const auto& t : j.at("tokens")) s.tokens.push_back(token_from_json(t));
    s.graph_digest = j.at("graph").get<std::string>();
    s.events_total = j.at("events").get<int>();
    if (j.contains("directive")) {
        s.has_decision = true;
        s.directive = directive_from_json(j.at("directive"));
        for (const auto& d : j.at("rejected")) {
            s.rejected.push_back(directive_from_json(d));
        }
        s.report.passed = j.at("report").at("passed").get<bool>();
        s.report.checked_against_step = j.at("report").at("checked_against_step").get<int>();
        for (const auto& v : j.at("report").at("violated")) {
            s.report.violated.emplace_back(v.at("predicate").get<std::string>(),
                                           v.at("explanation").get<std::string>());
        }
        s.replans = j.at("replans").get<int>();
        s.prompt_hash = j.at("prompt").get<std::string>();
        if (!j.at("action").is_null()) s.action = action_from_json(j.at("action"));
        s.outcome = j.at("outcome").get<std::string>();
    }
    const auto& t = j.at("times");
    s.times = {t.at("perceive_ms").get<double>(), t.at("graph_ms").get<double>(),
               t.at("plan_ms").get<double>(), t.at("act_ms").get<double>()};
    return s;
}

}  // namespace harness_detail

inline void write_episode(const EpisodeRecord& r, std::ostream& out) {
    nlohmann::json header;
    header["format"] = "episode/1";
    header["task"] = r.task_name;
    header["backend"] = r.backend;
    header["seed"] = r.seed;
    header["config"] = r.config_snapshot;
    header["config_hash"] = r.config_hash;
    out << header.dump() << "\n";
    for (const StepRecord& s : r.steps) {
        out << harness_detail::step_to_json(s).dump() << "\n";
    }
    nlohmann::json fin;
    fin["final"] = true;
    fin["done"] = r.done;
    fin["success"] = r.success;
    fin["cause"] = failure_cause_name(r.cause);
    fin["error"] = r.error;
    fin["phases"] = {{"hide_reached", r.phases.hide_reached},
                     {"disassembled_reached", r.phases.disassembled_reached}};
    fin["world"] = r.final_world_digest;
    out << fin.dump() << "\n";
}

inline EpisodeRecord read_episode(std::istream& in) {
    EpisodeRecord r;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty episode stream");
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("format", "") != "episode/1") {
        throw ConfigError("not an episode/1 stream");
    }
    r.task_name = header.at("task").get<std::string>();
    r.backend = header.value("backend", "");
    r.seed = header.at("seed").get<std::uint64_t>();
    r.config_snapshot = header.at("config");
    r.config_hash = header.at("config_hash").get<std::string>();
    bool saw_final = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.value("final", false)) {
            r.done = j.at("done").get<bool>();
            r.success = j.at("success").get<bool>();
            r.cause = failure_cause_from_name(j.at("cause").get<std::string>());
            r.error = j.value("error", "");
            r.phases.hide_reached = j.at("phases").at("hide_reached").get<bool>();
            r.phases.disassembled_reached =
                j.at("phases").at("disassembled_reached").get<bool>();
            r.final_world_digest = j.at("world").get<std::string>();
            saw_final = true;
            break;
        }
        r.steps.push_back(harness_detail::step_from_json(j));
    }
    if (!saw_final) throw ConfigError("episode stream has no final line");
    return r;
}

// Record identity with wall times stripped: two runs of the same episode must
// agree on this byte for byte.
inline std::string episode_signature(const EpisodeRecord& r) {
    std::ostringstream out;
    nlohmann::json header;
    header["task"] = r.task_name;
    header["backend"] = r.backend;
    header["seed"] = r.seed;
    header["config_hash"] = r.config_hash;
    out << header.dump() << "\n";
    for (const StepRecord& s : r.steps) {
        nlohmann::json j = harness_detail::step_to_json(s);
        j.erase("times");
        out << j.dump() << "\n";
    }
    out << r.done << " " << r.success << " " << failure_cause_name(r.cause) << " "
        << r.error << " " << r.final_world_digest << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// episode runner
// ---------------------------------------------------------------------------

namespace harness_detail {

inline double ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start)
        .count();
}

// The memoryless arm rebuilds the graph from nothing every step: identities,
// last-known poses, and the event log all reset, which is the point of the
// ablation. Tokens are rebased to t=0 to satisfy the fresh graph's step check.
inline Cstg advance_graph(const Cstg& prev, std::vector<StfToken> tokens,
                          const std::optional<ActionDirective>& executed,
                          const Config& cfg) {
    if (cfg.disable_cstg_memory) {
        for (StfToken& tok : tokens) tok.t = 0;
        return update_graph(Cstg{}, tokens, std::nullopt, cfg);
    }
    return update_graph(prev, tokens, executed, cfg);
}

inline FailureCause classify_failure(const EpisodeRecord& r) {
    if (r.success) return FailureCause::none;
    if (r.error.rfind("malformed directive:", 0) == 0) return FailureCause::parsing;
    std::string last_outcome;
    bool any_toppled = false;
    for (const StepRecord& s : r.steps) {
        if (!s.has_decision || !s.action) continue;
        last_outcome = s.outcome;
        if (s.outcome == "toppled") any_toppled = true;
    }
    if (last_outcome == "grasp_miss") return FailureCause::grasp;
    if (any_toppled) return FailureCause::motion;
    if (!r.done) return FailureCause::planning;  // budget, horizon, or unsatisfiable
    return FailureCause::placement;              // finished cleanly, poses wrong
}

}  // namespace harness_detail

// Runs one episode to done, horizon, or failure. A null backend means the
// built-in expert bound to the live graph; callers supply remote or scripted
// backends. Never throws for in-episode failures; the record carries them.
inline EpisodeRecord run_episode(const TaskSpec& task, std::uint64_t seed,
                                 const RunConfig& run,
                                 PlannerBackend* backend = nullptr) {
    namespace hd = harness_detail;
    Config cfg = run.base;
    cfg.seed = seed;

    EpisodeRecord rec;
    rec.task_name = task.name;
    rec.seed = seed;
    rec.config_snapshot = config_to_json(cfg);
    rec.config_hash = config_hash(cfg);
    rec.backend = backend ? backend->name() : "oracle";

    WorldState world = world_from_task(task, seed);
    Observation obs = render(world, cfg);

    auto t0 = std::chrono::steady_clock::now();
    std::vector<StfToken> tokens = perceive(obs, cfg);
    double perceive_ms = hd::ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    Cstg graph = hd::advance_graph(Cstg{}, tokens, std::nullopt, cfg);
    double graph_ms = hd::ms_since(t0);

    update_phases(rec.phases, world, obs, task);

    StepRecord first;
    first.step = graph.current_step;
    first.obs_digest = observation_digest(obs);
    first.tokens = std::move(tokens);
    first.graph_digest = graph_digest(graph);
    first.events_total = static_cast<int>(graph.log.events.size());
    first.times.perceive_ms = perceive_ms;
    first.times.graph_ms = graph_ms;
    rec.steps.push_back(std::move(first));

    OraclePlanner expert(graph, cfg);
    PlannerBackend* active = backend ? backend : &expert;

    try {
        for (int i = 0; i < task.horizon; ++i) {
            StepRecord sr;
            sr.has_decision = true;

            expert.bind(graph);
            t0 = std::chrono::steady_clock::now();
            StepDecision dec = step_loop(graph, obs, task.goal, *active, cfg);
            sr.times.plan_ms = hd::ms_since(t0);

            sr.directive = dec.directive;
            sr.report = dec.report;
            sr.rejected = dec.rejected;
            sr.replans = dec.replans;
            sr.prompt_hash = dec.prompt_hash;
            sr.action = dec.action;

            if (dec.directive.verb == Verb::done) {
                rec.done = true;
                sr.outcome = "done";
                sr.step = graph.current_step;
                // no new observation; rejected attempts may still have
                // appended events, so the digest is recomputed
                sr.obs_digest = rec.steps.back().obs_digest;
                sr.graph_digest = graph_digest(graph);
                sr.events_total = static_cast<int>(graph.log.events.size());
                rec.steps.push_back(std::move(sr));
                break;
            }

            // the gate step_loop enforces, re-asserted where the record is cut
            if (!dec.report.passed || !dec.action) {
                throw Error("verification gate breached for " +
                            render_directive(dec.directive));
            }

            t0 = std::chrono::steady_clock::now();
            ApplyResult applied =
                apply_action(world, *dec.action, dec.directive.subject_id, cfg);
            world = applied.world;
            obs = render(world, cfg);
            sr.times.act_ms = hd::ms_since(t0);
            sr.outcome = outcome_name(applied.outcome);

            t0 = std::chrono::steady_clock::now();
            sr.tokens = perceive(obs, cfg);
            sr.times.perceive_ms = hd::ms_since(t0);

            // the executor reports the actual release spot; association
            // follows the subject across the jump through it
            ActionDirective executed = dec.directive;
            if (dec.action->release) {
                executed.resolved_release = dec.action->release->position;
            }
            std::optional<ActionDirective> graph_feed;
            if (applied.outcome == Outcome::ok) graph_feed = executed;

            t0 = std::chrono::steady_clock::now();
            graph = hd::advance_graph(graph, sr.tokens, graph_feed, cfg);
            sr.times.graph_ms = hd::ms_since(t0);

            sr.step = graph.current_step;
            sr.obs_digest = observation_digest(obs);
            sr.graph_digest = graph_digest(graph);
            sr.events_total = static_cast<int>(graph.log.events.size());
            update_phases(rec.phases, world, obs, task);
            rec.steps.push_back(std::move(sr));
        }
    } catch (const MalformedDirective& e) {
        rec.error = std::string("malformed directive: ") + e.what();
    } catch (const Error& e) {
        rec.error = e.what();
    }

    // Finishing means both doing and knowing: the final state must pass the
    // ground-truth check, and the planner must have declared done. An agent
    // that drifts through the goal state while still searching has not
    // completed the task.
    rec.success = rec.done && check_success(world, task, rec.phases, cfg);
    rec.final_world_digest = world_digest(world);
    rec.cause = hd::classify_failure(rec);
    return rec;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

// Re-executes the deterministic half of the pipeline over the recorded stream:
// rejected directives are re-verified and their violation events re-appended,
// then update_graph runs on the recorded tokens and executed directive, and
// every digest is compared. Divergence means the record was tampered with or
// the pipeline is no longer the one that wrote it. on_step sees the
// reconstructed graph after each record has been checked.
template <class Fn>
inline void replay_walk(const EpisodeRecord& rec, Fn&& on_step) {
    Config cfg = config_from_json(rec.config_snapshot);
    if (rec.steps.empty()) throw ReplayDivergence("record has no steps", -1);

    Cstg graph;
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
        const StepRecord& s = rec.steps[i];
        int at = static_cast<int>(i);
        std::string where = "step " + std::to_string(i);

        if (s.has_decision) {
            if (s.action && !s.report.passed) {
                throw ReplayDivergence(
                    where + ": action recorded despite failed verification", at);
            }
            for (const ActionDirective& d : s.rejected) {
                VerificationReport report = verify_with_existence(graph, d, cfg);
                if (report.passed) {
                    throw ReplayDivergence(where + ": recorded rejection of " +
                                               render_directive(d) +
                                               " passes verification on replay",
                                           at);
                }
                graph = append_events(graph, {violation_event(graph, d, report)});
            }
            if (s.directive.verb != Verb::done &&
                !verify_with_existence(graph, s.directive, cfg).passed) {
                throw ReplayDivergence(where + ": accepted directive " +
                                           render_directive(s.directive) +
                                           " fails verification on replay",
                                       at);
            }
        }

        if (s.has_decision && s.directive.verb == Verb::done) {
            if (graph_digest(graph) != s.graph_digest) {
                throw ReplayDivergence("graph digest diverges at " + where, at);
            }
        } else {
            std::optional<ActionDirective> executed;
            if (s.has_decision && s.outcome == "ok") {
                executed = s.directive;
                if (s.action && s.action->release) {
                    executed->resolved_release = s.action->release->position;
                }
            }
            graph = harness_detail::advance_graph(graph, s.tokens, executed, cfg);
            if (graph_digest(graph) != s.graph_digest) {
                throw ReplayDivergence("graph digest diverges at " + where, at);
            }
        }
        if (static_cast<int>(graph.log.events.size()) != s.events_total) {
            throw ReplayDivergence("event count diverges at " + where, at);
        }
        on_step(graph, s, at);
    }
}

inline bool replay(const EpisodeRecord& rec) {
    replay_walk(rec, [](const Cstg&, const StepRecord&, int) {});
    return true;
}

// Graph snapshot at a recorded step, reconstructed (and thereby re-checked)
// from the record itself. step -1 means the last one.
inline Cstg graph_at_step(const EpisodeRecord& rec, int step = -1) {
    if (step == -1) step = static_cast<int>(rec.steps.size()) - 1;
    if (step < 0 || step >= static_cast<int>(rec.steps.size())) {
        throw ConfigError("record has no step " + std::to_string(step));
    }
    Cstg wanted;
    replay_walk(rec, [&](const Cstg& g, const StepRecord&, int at) {
        if (at == step) wanted = g;
    });
    return wanted;
}

// ---------------------------------------------------------------------------
// suite
// ---------------------------------------------------------------------------

struct TaskResult {
    std::string task_name;
    int episodes = 0;
    int successes = 0;
    std::map<std::string, int> causes;  // failure cause -> count
};

struct StageLatency {
    double mean_perceive_ms = 0.0, max_perceive_ms = 0.0;
    double mean_graph_ms = 0.0, max_graph_ms = 0.0;
    double mean_plan_ms = 0.0, max_plan_ms = 0.0;
    double mean_act_ms = 0.0, max_act_ms = 0.0;
    int samples = 0;
};

struct SuiteReport {
    std::vector<TaskResult> tasks;
    std::vector<StageLatency> by_step;  // indexed by step number
    std::string config_hash;
};

// Pure function of the records: recomputing it yields identical output.
inline SuiteReport summarize(const std::vector<EpisodeRecord>& records) {
    SuiteReport report;
    std::map<std::string, std::size_t> task_index;
    for (const EpisodeRecord& r : records) {
        if (report.config_hash.empty()) report.config_hash = r.config_hash;
        auto [it, fresh] = task_index.try_emplace(r.task_name, report.tasks.size());
        if (fresh) report.tasks.push_back(TaskResult{r.task_name});
        TaskResult& tr = report.tasks[it->second];
        tr.episodes += 1;
        if (r.success) {
            tr.successes += 1;
        } else {
            tr.causes[failure_cause_name(r.cause)] += 1;
        }
        for (std::size_t i = 0; i < r.steps.size(); ++i) {
            if (report.by_step.size() <= i) report.by_step.emplace_back();
            StageLatency& lat = report.by_step[i];
            const StageTimes& t = r.steps[i].times;
            lat.mean_perceive_ms += t.perceive_ms;
            lat.mean_graph_ms += t.graph_ms;
            lat.mean_plan_ms += t.plan_ms;
            lat.mean_act_ms += t.act_ms;
            lat.max_perceive_ms = std::max(lat.max_perceive_ms, t.perceive_ms);
            lat.max_graph_ms = std::max(lat.max_graph_ms, t.graph_ms);
            lat.max_plan_ms = std::max(lat.max_plan_ms, t.plan_ms);
            lat.max_act_ms = std::max(lat.max_act_ms, t.act_ms);
            lat.samples += 1;
        }
    }
    for (StageLatency& lat : report.by_step) {
        if (lat.samples == 0) continue;
        lat.mean_perceive_ms /= lat.samples;
        lat.mean_graph_ms /= lat.samples;
        lat.mean_plan_ms /= lat.samples;
        lat.mean_act_ms /= lat.samples;
    }
    return report;
}

inline nlohmann::json suite_report_to_json(const SuiteReport& r) {
    nlohmann::json j;
    j["config_hash"] = r.config_hash;
    j["tasks"] = nlohmann::json::array();
    for (const TaskResult& t : r.tasks) {
        nlohmann::json tj;
        tj["task"] = t.task_name;
        tj["episodes"] = t.episodes;
        tj["successes"] = t.successes;
        tj["causes"] = t.causes;
        j["tasks"].push_back(tj);
    }
    j["by_step"] = nlohmann::json::array();
    for (const StageLatency& lat : r.by_step) {
        j["by_step"].push_back({{"samples", lat.samples},
                                {"mean_perceive_ms", lat.mean_perceive_ms},
                                {"max_perceive_ms", lat.max_perceive_ms},
                                {"mean_graph_ms", lat.mean_graph_ms},
                                {"max_graph_ms", lat.max_graph_ms},
                                {"mean_plan_ms", lat.mean_plan_ms},
                                {"max_plan_ms", lat.max_plan_ms},
                                {"mean_act_ms", lat.mean_act_ms},
                                {"max_act_ms", lat.max_act_ms}});
    }
    return j;
}

inline std::string suite_report_text(const SuiteReport& r) {
    std::ostringstream out;
    out << "config " << r.config_hash << "\n";
    for (const TaskResult& t : r.tasks) {
        out << "  " << t.task_name << ": " << t.successes << "/" << t.episodes;
        if (!t.causes.empty()) {
            out << " (";
            bool first = true;
            for (const auto& [cause, n] : t.causes) {
                if (!first) out << ", ";
                out << cause << " x" << n;
                first = false;
            }
            out << ")";
        }
        out << "\n";
    }
    for (std::size_t i = 0; i < r.by_step.size(); ++i) {
        const StageLatency& lat = r.by_step[i];
        char line[160];
        std::snprintf(line, sizeof(line),
                      "  step %2zu: perceive %.2f/%.2f graph %.2f/%.2f plan %.2f/%.2f "
                      "act %.2f/%.2f ms (mean/max, n=%d)",
                      i, lat.mean_perceive_ms, lat.max_perceive_ms, lat.mean_graph_ms,
                      lat.max_graph_ms, lat.mean_plan_ms, lat.max_plan_ms,
                      lat.mean_act_ms, lat.max_act_ms, lat.samples);
        out << line << "\n";
    }
    return out.str();
}

// Runs every task over every seed. Episodes are independent; failures are
// recorded, never thrown.
inline std::vector<EpisodeRecord> run_suite(const std::vector<TaskSpec>& tasks,
                                            const RunConfig& run,
                                            PlannerBackend* backend = nullptr) {
    std::vector<EpisodeRecord> records;
    for (const TaskSpec& task : tasks) {
        for (std::uint64_t seed : run.seeds) {
            records.push_back(run_episode(task, seed, run, backend));
        }
    }
    return records;
}

}  // namespace stg
