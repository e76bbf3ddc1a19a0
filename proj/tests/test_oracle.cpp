#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stgraph/oracle.hpp"
#include "stgraph/simulator.hpp"
#include "stgraph/stf.hpp"

using namespace stg;

namespace {

StfToken make_token(const std::string& id, const std::string& desc, Vec3 pos,
                    Vec3 half, int t) {
    StfToken tok;
    tok.object_id = id;
    tok.source_id = id;
    tok.descriptor = desc;
    tok.t = t;
    tok.centroid = pos;
    for (int a = 0; a < 3; ++a) {
        AxisStats& st = tok.shape.axis(a);
        st.mean = pos[a];
        st.sigma = half[a] / 2.0;
        st.min = pos[a] - half[a];
        st.max = pos[a] + half[a];
    }
    tok.evidence.selected.resize(1);
    tok.evidence.aggregate = {0.5, 0.5, 0.5, 0.5, 0.5};
    return tok;
}

StfToken cube_token(const std::string& id, const std::string& desc, Vec3 pos, int t) {
    return make_token(id, desc, pos, {0.025, 0.025, 0.025}, t);
}

Cstg graph_with(const std::vector<StfToken>& tokens, const Config& cfg) {
    return update_graph(Cstg{}, tokens, std::nullopt, cfg);
}

// Closed loop against the simulator: render, perceive, update, propose,
// verify, act. Returns the directives the oracle issued, in order.
struct MiniRun {
    std::vector<std::string> directives;
    WorldState world;
    Cstg graph;
    EpisodePhases phases;
    bool done = false;
};

MiniRun run_oracle_episode(const TaskSpec& task, const Config& cfg, int max_steps) {
    MiniRun out;
    out.world = world_from_task(task, cfg.seed);
    Observation obs = render(out.world, cfg);
    out.graph = update_graph(Cstg{}, perceive(obs, cfg), std::nullopt, cfg);
    update_phases(out.phases, out.world, obs, task);

    OraclePlanner oracle(out.graph, cfg);
    for (int i = 0; i < max_steps; ++i) {
        oracle.bind(out.graph);
        StepDecision dec = step_loop(out.graph, obs, task.goal, oracle, cfg);
        out.directives.push_back(render_directive(dec.directive));
        if (dec.directive.verb == Verb::done) {
            out.done = true;
            break;
        }
        ApplyResult applied =
            apply_action(out.world, *dec.action, dec.directive.subject_id, cfg);
        out.world = applied.world;
        obs = render(out.world, cfg);
        // The executor reports where it actually released the object; track
        // association needs that to follow the subject across the jump.
        ActionDirective executed = dec.directive;
        if (dec.action->release) {
            executed.resolved_release = dec.action->release->position;
        }
        if (applied.outcome == Outcome::ok) {
            out.graph = update_graph(out.graph, perceive(obs, cfg), executed, cfg);
        } else {
            out.graph = update_graph(out.graph, perceive(obs, cfg), std::nullopt, cfg);
        }
        update_phases(out.phases, out.world, obs, task);
    }
    return out;
}

}  // namespace

TEST_CASE("scene strategy picks the unplaced object first") {
    Config cfg;
    // goal: green on red, red already in place, nothing held
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.15, 0.1, 0.025}, 0),
        },
        cfg);
    GoalSpec goal = GoalSpec::from_scene({
        {"red cube", {0.0, 0.0, 0.025}, "table"},
        {"green cube", {0.0, 0.0, 0.075}, "red cube"},
    });

    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::pick);
    REQUIRE(d.subject_id == "green_cube");
    REQUIRE_FALSE(d.declared_preconditions.empty());
}

TEST_CASE("scene strategy places the held object at its goal entry") {
    Config cfg;
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.15, 0.1, 0.325}, 0),  // hovering
        },
        cfg);
    GoalSpec goal = GoalSpec::from_scene({
        {"red cube", {0.0, 0.0, 0.025}, "table"},
        {"green cube", {0.0, 0.0, 0.075}, "red cube"},
    });

    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::place_at);
    REQUIRE(d.subject_id == "green_cube");
    REQUIRE(d.target.position.z == Catch::Approx(0.075));
}

TEST_CASE("scene strategy reports done when every entry is satisfied") {
    Config cfg;
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 0),
        },
        cfg);
    GoalSpec goal = GoalSpec::from_scene({
        {"red cube", {0.0, 0.0, 0.025}, "table"},
        {"green cube", {0.0, 0.0, 0.075}, "red cube"},
    });
    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::done);
}

TEST_CASE("matching position on the wrong supporter does not satisfy an entry") {
    Config cfg;
    // green sits at the right height but on blue, not red
    Cstg g = graph_with(
        {
            cube_token("blue_cube", "blue cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 0),
            cube_token("red_cube", "red cube", {0.2, 0.0, 0.025}, 0),
        },
        cfg);
    GoalSpec goal = GoalSpec::from_scene({
        {"green cube", {0.0, 0.0, 0.075}, "red cube"},
    });
    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::pick);
    REQUIRE(d.subject_id == "green_cube");
}

TEST_CASE("cyclic goal scenes are rejected") {
    Config cfg;
    Cstg g = graph_with({cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0)}, cfg);
    GoalSpec goal = GoalSpec::from_scene({
        {"red cube", {0.0, 0.0, 0.075}, "green cube"},
        {"green cube", {0.0, 0.0, 0.025}, "red cube"},
    });
    REQUIRE_THROWS_AS(oracle_propose(g, goal, cfg), UnsatisfiableGoal);
}

TEST_CASE("supports outside the goal scene impose no ordering") {
    Config cfg;
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.2, 0.2, 0.025}, 0),
            make_token("white_container", "white container", {-0.18, 0.12, 0.01},
                       {0.06, 0.06, 0.01}, 0),
        },
        cfg);
    GoalSpec goal = GoalSpec::from_scene({
        {"red cube", {-0.18, 0.12, 0.045}, "white container"},
    });
    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::pick);
    REQUIRE(d.subject_id == "red_cube");
}

TEST_CASE("unknown instructions are rejected") {
    Config cfg;
    Cstg g = graph_with({cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0)}, cfg);
    REQUIRE_THROWS_AS(
        oracle_propose(g, GoalSpec::from_instruction("juggle the cubes"), cfg),
        UnsatisfiableGoal);
}

TEST_CASE("hide-restore walks cover, uncover, put-back, done") {
    Config cfg;
    GoalSpec goal = GoalSpec::from_instruction(
        "hide the purple cube beneath the brown cup, then restore the scene");

    // fresh scene, cup never moved: cover the cube
    Cstg fresh = graph_with(
        {
            cube_token("purple_cube", "purple cube", {0.0, 0.0, 0.025}, 0),
            make_token("brown_cup", "brown cup", {0.25, 0.0, 0.045},
                       {0.035, 0.035, 0.045}, 0),
        },
        cfg);
    ActionDirective d1 = oracle_propose(fresh, goal, cfg);
    REQUIRE(d1.verb == Verb::cover_with);
    REQUIRE(d1.subject_id == "brown_cup");
    REQUIRE(d1.target.object_id == "purple_cube");

    // cube occluded: uncover
    ActionDirective cover = d1;
    cover.resolved_release = Vec3{0.0, 0.0, 0.07};
    Cstg covered = update_graph(
        fresh,
        {make_token("brown_cup", "brown cup", {0.0, 0.0, 0.045}, {0.035, 0.035, 0.045},
                    1)},
        cover, cfg);
    REQUIRE(covered.nodes.at("purple_cube").visibility == Visibility::occluded);
    ActionDirective d2 = oracle_propose(covered, goal, cfg);
    REQUIRE(d2.verb == Verb::uncover);
    REQUIRE(d2.subject_id == "brown_cup");

    // cube back in view, cup at the parking row: return the cup to its origin
    ActionDirective uncover = d2;
    uncover.resolved_release = Vec3{-0.33, -0.28, 0.045};
    Cstg parked = update_graph(
        covered,
        {
            cube_token("purple_cube", "purple cube", {0.0, 0.0, 0.025}, 2),
            make_token("brown_cup", "brown cup", {-0.33, -0.28, 0.045},
                       {0.035, 0.035, 0.045}, 2),
        },
        uncover, cfg);
    ActionDirective d3 = oracle_propose(parked, goal, cfg);
    REQUIRE(d3.verb == Verb::place_at);
    REQUIRE(d3.subject_id == "brown_cup");
    // the release is the cup's pre-hide location, read back from the log
    REQUIRE(d3.target.position.x == Catch::Approx(0.25));
    REQUIRE(d3.target.position.y == Catch::Approx(0.0).margin(1e-12));

    // cup restored: done
    ActionDirective restore = d3;
    restore.resolved_release = d3.target.position;
    Cstg restored = update_graph(
        parked,
        {
            cube_token("purple_cube", "purple cube", {0.0, 0.0, 0.025}, 3),
            make_token("brown_cup", "brown cup", {0.25, 0.0, 0.045},
                       {0.035, 0.035, 0.045}, 3),
        },
        restore, cfg);
    ActionDirective d4 = oracle_propose(restored, goal, cfg);
    REQUIRE(d4.verb == Verb::done);
}

TEST_CASE("hide-restore without the remembered cube degrades to a failing reference") {
    Config cfg;
    GoalSpec goal = GoalSpec::from_instruction(
        "hide the purple cube beneath the brown cup, then restore the scene");
    // a graph that only knows the cup, as a memoryless rebuild would
    Cstg g = graph_with(
        {make_token("brown_cup", "brown cup", {0.0, 0.0, 0.045}, {0.035, 0.035, 0.045}, 0)},
        cfg);
    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::cover_with);
    REQUIRE(d.target.object_id == "purple_cube");  // placeholder that cannot verify
    VerificationReport report = verify_preconditions(g, d, cfg);
    REQUIRE_FALSE(report.passed);
}

TEST_CASE("cover-top targets the stacked block and stops once covered") {
    Config cfg;
    GoalSpec goal =
        GoalSpec::from_instruction("cover the top block of the stack with the gray box");
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 0),
            make_token("gray_box", "gray box", {0.25, 0.0, 0.03}, {0.035, 0.035, 0.03}, 0),
        },
        cfg);
    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::cover_with);
    REQUIRE(d.subject_id == "gray_box");
    REQUIRE(d.target.object_id == "green_cube");

    ActionDirective cover = d;
    cover.resolved_release = Vec3{0.0, 0.0, 0.13};
    Cstg covered = update_graph(
        g,
        {
            // the lower cube keeps a visible sliver; the box hangs on the top one
            make_token("red_cube", "red cube", {0.0, 0.0, 0.0225}, {0.025, 0.025, 0.0225},
                       1),
            make_token("gray_box", "gray box", {0.0, 0.0, 0.075}, {0.035, 0.035, 0.03}, 1),
        },
        cover, cfg);
    REQUIRE(covered.nodes.at("green_cube").visibility == Visibility::occluded);
    ActionDirective d2 = oracle_propose(covered, goal, cfg);
    REQUIRE(d2.verb == Verb::done);
}

TEST_CASE("cover-bottom clears the stack before covering the never-moved block") {
    Config cfg;
    GoalSpec goal = GoalSpec::from_instruction(
        "cover the bottom block of the stack with the gray box");
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 0),
            make_token("gray_box", "gray box", {0.25, 0.0, 0.03}, {0.035, 0.035, 0.03}, 0),
        },
        cfg);

    ActionDirective d1 = oracle_propose(g, goal, cfg);
    REQUIRE(d1.verb == Verb::pick);
    REQUIRE(d1.subject_id == "green_cube");

    Cstg lifted = update_graph(
        g,
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 1),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.375}, 1),
            make_token("gray_box", "gray box", {0.25, 0.0, 0.03}, {0.035, 0.035, 0.03}, 1),
        },
        d1, cfg);
    ActionDirective d2 = oracle_propose(lifted, goal, cfg);
    REQUIRE(d2.verb == Verb::place_at);
    REQUIRE(d2.subject_id == "green_cube");
    REQUIRE(d2.target.position.y == Catch::Approx(cfg.parking_row_y));

    ActionDirective park = d2;
    park.resolved_release = d2.target.position;
    Cstg parked = update_graph(
        lifted,
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 2),
            cube_token("green_cube", "green cube",
                       {d2.target.position.x, d2.target.position.y, 0.025}, 2),
            make_token("gray_box", "gray box", {0.25, 0.0, 0.03}, {0.035, 0.035, 0.03}, 2),
        },
        park, cfg);
    ActionDirective d3 = oracle_propose(parked, goal, cfg);
    REQUIRE(d3.verb == Verb::cover_with);
    REQUIRE(d3.subject_id == "gray_box");
    REQUIRE(d3.target.object_id == "red_cube");  // the block that never moved
}

TEST_CASE("cover-bottom with no displacement record cannot identify the block") {
    Config cfg;
    GoalSpec goal = GoalSpec::from_instruction(
        "cover the bottom block of the stack with the gray box");
    // two scattered cubes, no log: as a memoryless rebuild would see it
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {-0.33, -0.28, 0.025}, 0),
            make_token("gray_box", "gray box", {0.25, 0.0, 0.03}, {0.035, 0.035, 0.03}, 0),
        },
        cfg);
    ActionDirective d = oracle_propose(g, goal, cfg);
    REQUIRE(d.verb == Verb::cover_with);
    VerificationReport report = verify_preconditions(g, d, cfg);
    REQUIRE_FALSE(report.passed);  // placeholder target never resolves
}

TEST_CASE("unstack strategy tears down, parks, and rebuilds from the log") {
    Config cfg;
    GoalSpec goal =
        GoalSpec::from_instruction("unstack the tower, then rebuild it exactly as it was");

    // four-block tower: red at the base, then green, blue, yellow
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 0),
            cube_token("blue_cube", "blue cube", {0.0, 0.0, 0.125}, 0),
            cube_token("yellow_cube", "yellow cube", {0.0, 0.0, 0.175}, 0),
        },
        cfg);

    ActionDirective d1 = oracle_propose(g, goal, cfg);
    REQUIRE(d1.verb == Verb::pick);
    REQUIRE(d1.subject_id == "yellow_cube");  // the only block supporting nothing

    Cstg lifted = update_graph(
        g,
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 1),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 1),
            cube_token("blue_cube", "blue cube", {0.0, 0.0, 0.125}, 1),
            cube_token("yellow_cube", "yellow cube", {0.0, 0.0, 0.475}, 1),
        },
        d1, cfg);
    ActionDirective d2 = oracle_propose(lifted, goal, cfg);
    REQUIRE(d2.verb == Verb::place_at);
    REQUIRE(d2.subject_id == "yellow_cube");
    REQUIRE(d2.target.position.y == Catch::Approx(cfg.parking_row_y));
}

TEST_CASE("unstack strategy rebuilds in original height order after teardown") {
    Config cfg;
    // teardown already happened: the log shows both movable blocks displaced
    Cstg g = graph_with(
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 0),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 0),
            cube_token("blue_cube", "blue cube", {0.0, 0.0, 0.125}, 0),
        },
        cfg);
    ActionDirective pick_blue = oracle_propose(
        g, GoalSpec::from_instruction("unstack the tower, then rebuild it exactly as it was"),
        cfg);
    REQUIRE(pick_blue.subject_id == "blue_cube");

    Cstg step1 = update_graph(
        g,
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 1),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 1),
            cube_token("blue_cube", "blue cube", {0.0, 0.0, 0.425}, 1),
        },
        pick_blue, cfg);
    ActionDirective park_blue = oracle_propose(
        step1,
        GoalSpec::from_instruction("unstack the tower, then rebuild it exactly as it was"),
        cfg);
    REQUIRE(park_blue.verb == Verb::place_at);
    ActionDirective parked_dir = park_blue;
    parked_dir.resolved_release = park_blue.target.position;

    Cstg step2 = update_graph(
        step1,
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 2),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.075}, 2),
            cube_token("blue_cube", "blue cube",
                       {park_blue.target.position.x, park_blue.target.position.y, 0.025},
                       2),
        },
        parked_dir, cfg);

    GoalSpec goal =
        GoalSpec::from_instruction("unstack the tower, then rebuild it exactly as it was");
    ActionDirective d = oracle_propose(step2, goal, cfg);
    REQUIRE(d.verb == Verb::pick);
    REQUIRE(d.subject_id == "green_cube");

    Cstg step3 = update_graph(
        step2,
        {
            cube_token("red_cube", "red cube", {0.0, 0.0, 0.025}, 3),
            cube_token("green_cube", "green cube", {0.0, 0.0, 0.375}, 3),
            cube_token("blue_cube", "blue cube",
                       {park_blue.target.position.x, park_blue.target.position.y, 0.025},
                       3),
        },
        d, cfg);
    ActionDirective put_back = oracle_propose(step3, goal, cfg);
    REQUIRE(put_back.verb == Verb::place_at);
    REQUIRE(put_back.subject_id == "green_cube");
    // the recorded original spot, not the parking slot
    REQUIRE(put_back.target.position.x == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(put_back.target.position.z == Catch::Approx(0.075));
}

TEST_CASE("spec walkthrough: stack two cubes end to end") {
    Config cfg;
    TaskSpec task;
    task.name = "stack-2";
    task.category = TaskCategory::build;
    task.horizon = 6;
    task.objects = {
        {"red_cube", "red cube", ObjectKind::block, {0.025, 0.025, 0.025},
         Pose6DoF{{-0.1, 0.0, 0.025}, {1, 0, 0, 0}}},
        {"green_cube", "green cube", ObjectKind::block, {0.025, 0.025, 0.025},
         Pose6DoF{{0.12, 0.08, 0.025}, {1, 0, 0, 0}}},
    };
    task.goal = GoalSpec::from_scene({
        {"red cube", {-0.1, 0.0, 0.025}, "table"},
        {"green cube", {-0.1, 0.0, 0.075}, "red cube"},
    });

    MiniRun run = run_oracle_episode(task, cfg, task.horizon);
    REQUIRE(run.done);
    REQUIRE(run.directives.size() == 3);
    REQUIRE(run.directives[0].rfind("pick(green_cube", 0) == 0);
    REQUIRE(run.directives[1].rfind("place_at(green_cube", 0) == 0);
    REQUIRE(run.directives[2] == "done()");
    REQUIRE(check_success(run.world, task, run.phases, cfg));
}

TEST_CASE("spec walkthrough: hide and restore through the simulator") {
    Config cfg;
    TaskSpec task;
    task.name = "hide-restore";
    task.category = TaskCategory::hide_restore;
    task.horizon = 8;
    task.hidden_descriptor = "purple cube";
    task.objects = {
        {"purple_cube", "purple cube", ObjectKind::block, {0.025, 0.025, 0.025},
         Pose6DoF{{0.0, 0.0, 0.025}, {1, 0, 0, 0}}},
        {"brown_cup", "brown cup", ObjectKind::cup, {0.035, 0.035, 0.045},
         Pose6DoF{{0.25, 0.0, 0.045}, {1, 0, 0, 0}}},
    };
    task.goal = GoalSpec::from_instruction(
        "hide the purple cube beneath the brown cup, then restore the scene");

    MiniRun run = run_oracle_episode(task, cfg, task.horizon);
    REQUIRE(run.done);
    REQUIRE(run.phases.hide_reached);
    REQUIRE(check_success(run.world, task, run.phases, cfg));
    // cover, uncover, put the cup back, done
    REQUIRE(run.directives.size() == 4);
    REQUIRE(run.directives[0].rfind("cover_with(brown_cup", 0) == 0);
    REQUIRE(run.directives[1].rfind("uncover(brown_cup", 0) == 0);
    REQUIRE(run.directives[2].rfind("place_at(brown_cup", 0) == 0);

    // the put-back release must equal the cup's pre-hide spot from the log
    const WorldState& w = run.world;
    REQUIRE(w.objects.at("brown_cup").pose.position.x == Catch::Approx(0.25).margin(0.01));
    REQUIRE(w.objects.at("brown_cup").pose.position.y == Catch::Approx(0.0).margin(0.01));
}

TEST_CASE("oracle episodes are reproducible") {
    Config cfg;
    TaskSpec task;
    task.name = "stack-2";
    task.category = TaskCategory::build;
    task.horizon = 6;
    task.objects = {
        {"red_cube", "red cube", ObjectKind::block, {0.025, 0.025, 0.025},
         Pose6DoF{{-0.1, 0.0, 0.025}, {1, 0, 0, 0}}},
        {"green_cube", "green cube", ObjectKind::block, {0.025, 0.025, 0.025},
         Pose6DoF{{0.12, 0.08, 0.025}, {1, 0, 0, 0}}},
    };
    task.goal = GoalSpec::from_scene({
        {"red cube", {-0.1, 0.0, 0.025}, "table"},
        {"green cube", {-0.1, 0.0, 0.075}, "red cube"},
    });

    MiniRun a = run_oracle_episode(task, cfg, task.horizon);
    MiniRun b = run_oracle_episode(task, cfg, task.horizon);
    REQUIRE(a.directives == b.directives);
    REQUIRE(world_digest(a.world) == world_digest(b.world));
}
