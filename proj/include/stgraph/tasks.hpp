#pragma once

// Bundled long-horizon tasks. Eight block-world tasks plus a hide-and-restore
// fixture, expressed as TaskSpec values so tests and the harness can run them
// without file I/O. The tasks/ directory ships the same specs as task/1
// documents; a test pins the two forms against each other.

#include <string>
#include <vector>

#include "stgraph/directive.hpp"
#include "stgraph/errors.hpp"
#include "stgraph/simulator.hpp"

namespace stg {

namespace task_detail {

inline SimObject cube(std::string id, std::string descriptor, double x, double y,
                      double z = 0.025) {
    SimObject o;
    o.object_id = std::move(id);
    o.descriptor = std::move(descriptor);
    o.kind = ObjectKind::block;
    o.half_extents = {0.025, 0.025, 0.025};
    o.pose.position = {x, y, z};
    return o;
}

inline SimObject box(std::string id, std::string descriptor, ObjectKind kind,
                     Vec3 half, Vec3 position) {
    SimObject o;
    o.object_id = std::move(id);
    o.descriptor = std::move(descriptor);
    o.kind = kind;
    o.half_extents = half;
    o.pose.position = position;
    return o;
}

// Three to five cubes scattered on the table, stacked into one tower at the
// origin. Base cube first so the goal scene is already in build order.
inline TaskSpec stack_task(int count) {
    static const char* ids[] = {"red_cube", "green_cube", "blue_cube", "yellow_cube",
                                "purple_cube"};
    static const char* descs[] = {"red cube", "green cube", "blue cube", "yellow cube",
                                  "purple cube"};
    static const Vec3 starts[] = {{-0.15, -0.10, 0.025},
                                  {0.12, 0.08, 0.025},
                                  {0.18, -0.12, 0.025},
                                  {-0.20, 0.10, 0.025},
                                  {0.22, 0.12, 0.025}};
    TaskSpec t;
    t.name = count == 3 ? "stack-3" : "stack-5";
    t.category = TaskCategory::build;
    t.horizon = count == 3 ? 10 : 14;
    std::vector<GoalEntry> goal;
    for (int i = 0; i < count; ++i) {
        t.objects.push_back(cube(ids[i], descs[i], starts[i].x, starts[i].y));
        goal.push_back({descs[i],
                        {0.0, 0.0, 0.025 + 0.05 * i},
                        i == 0 ? "table" : descs[i - 1]});
    }
    t.goal = GoalSpec::from_scene(std::move(goal));
    return t;
}

// Two two-cube pillars with a plank across their tops. The plank covers both
// pillars equally; the goal names the lexically smaller supporter, which is
// the one the settled support map reports.
inline TaskSpec bridge_task() {
    TaskSpec t;
    t.name = "bridge";
    t.category = TaskCategory::build;
    t.horizon = 14;
    t.objects = {
        cube("red_cube", "red cube", -0.20, -0.10),
        cube("blue_cube", "blue cube", 0.20, -0.05),
        cube("green_cube", "green cube", 0.15, 0.10),
        cube("yellow_cube", "yellow cube", -0.12, 0.12),
        box("orange_plank", "orange plank", ObjectKind::block,
            {0.09, 0.025, 0.0125}, {0.0, -0.18, 0.0125}),
    };
    t.goal = GoalSpec::from_scene({
        {"red cube", {-0.06, 0.0, 0.025}, "table"},
        {"blue cube", {0.06, 0.0, 0.025}, "table"},
        {"green cube", {-0.06, 0.0, 0.075}, "red cube"},
        {"yellow cube", {0.06, 0.0, 0.075}, "blue cube"},
        {"orange plank", {0.0, 0.0, 0.1125}, "green cube"},
    });
    return t;
}

// A two-cube tower and a hollow box. The box interior is taller than one cube
// but shorter than two, so it can swallow either tower cube alone.
inline std::vector<SimObject> cover_scene() {
    return {
        cube("red_cube", "red cube", 0.0, 0.0, 0.025),
        cube("green_cube", "green cube", 0.0, 0.0, 0.075),
        box("gray_box", "gray box", ObjectKind::cup, {0.035, 0.035, 0.03},
            {0.20, -0.10, 0.03}),
    };
}

inline TaskSpec cover_top_task() {
    TaskSpec t;
    t.name = "cover-top";
    t.category = TaskCategory::cover;
    t.horizon = 6;
    t.objects = cover_scene();
    t.goal = GoalSpec::from_instruction("cover the top block with the gray box");
    t.covered_descriptor = "green cube";
    t.cover_descriptor = "gray box";
    return t;
}

inline TaskSpec cover_bottom_task() {
    TaskSpec t;
    t.name = "cover-bottom";
    t.category = TaskCategory::cover;
    t.horizon = 8;
    t.objects = cover_scene();
    t.goal = GoalSpec::from_instruction("cover the bottom block with the gray box");
    t.covered_descriptor = "red cube";
    t.cover_descriptor = "gray box";
    return t;
}

// Four cubes sorted onto two flat containers, two per side. The container
// slabs start on their goal spots; only the cubes move.
inline TaskSpec containers_task(bool hard) {
    TaskSpec t;
    t.name = hard ? "containers-hard" : "containers";
    t.category = TaskCategory::build;
    t.horizon = 12;
    t.objects = {
        box("white_container", "white container", ObjectKind::block,
            {0.06, 0.06, 0.01}, {-0.18, 0.12, 0.01}),
        box("black_container", "black container", ObjectKind::block,
            {0.06, 0.06, 0.01}, {0.18, 0.12, 0.01}),
        cube("red_cube", "red cube", -0.12, -0.08),
        cube("green_cube", "green cube", 0.0, -0.12),
        cube("blue_cube", "blue cube", 0.12, -0.08),
        cube("yellow_cube", "yellow cube", 0.22, -0.12),
    };
    if (hard) {
        // Distractors sit exactly on two of the target spots; placing there
        // shoves them aside (toward +x, the tie direction) instead of failing.
        t.objects.push_back(box("purple_cylinder", "purple cylinder",
                                ObjectKind::cylinder, {0.02, 0.02, 0.03},
                                {-0.15, 0.12, 0.05}));
        t.objects.push_back(box("orange_prism", "orange prism", ObjectKind::prism,
                                {0.02, 0.02, 0.03}, {0.21, 0.12, 0.05}));
    }
    // The containers never move, so the goal lists only the cubes. Listing
    // the slabs would make the plan hostage to their measured centroids,
    // which drift once cubes cover parts of them.
    t.goal = GoalSpec::from_scene({
        {"red cube", {-0.21, 0.12, 0.045}, "white container"},
        {"green cube", {-0.15, 0.12, 0.045}, "white container"},
        {"blue cube", {0.15, 0.12, 0.045}, "black container"},
        {"yellow cube", {0.21, 0.12, 0.045}, "black container"},
    });
    return t;
}

// Four-cube tower torn down to the table and rebuilt in place. Success needs
// the disassembled phase plus every cube back within tolerance.
inline TaskSpec unstack_stack_task() {
    TaskSpec t;
    t.name = "unstack-stack";
    t.category = TaskCategory::disassemble;
    t.horizon = 14;
    t.objects = {
        cube("red_cube", "red cube", 0.0, 0.0, 0.025),
        cube("green_cube", "green cube", 0.0, 0.0, 0.075),
        cube("blue_cube", "blue cube", 0.0, 0.0, 0.125),
        cube("yellow_cube", "yellow cube", 0.0, 0.0, 0.175),
    };
    t.goal = GoalSpec::from_instruction("unstack the tower of cubes, then rebuild it");
    return t;
}

inline TaskSpec hide_restore_task() {
    TaskSpec t;
    t.name = "hide-restore";
    t.category = TaskCategory::hide_restore;
    t.horizon = 8;
    t.objects = {
        cube("purple_cube", "purple cube", 0.0, 0.0, 0.025),
        box("brown_cup", "brown cup", ObjectKind::cup, {0.035, 0.035, 0.045},
            {0.25, 0.0, 0.045}),
    };
    t.goal = GoalSpec::from_instruction(
        "hide the purple cube beneath the brown cup, then restore the scene");
    t.hidden_descriptor = "purple cube";
    return t;
}

}  // namespace task_detail

inline std::vector<std::string> builtin_task_names() {
    return {"bridge",     "cover-top", "cover-bottom",  "containers", "containers-hard",
            "stack-3",    "stack-5",   "unstack-stack", "hide-restore"};
}

inline TaskSpec builtin_task(const std::string& name) {
    namespace td = task_detail;
    if (name == "bridge") return td::bridge_task();
    if (name == "cover-top") return td::cover_top_task();
    if (name == "cover-bottom") return td::cover_bottom_task();
    if (name == "containers") return td::containers_task(false);
    if (name == "containers-hard") return td::containers_task(true);
    if (name == "stack-3") return td::stack_task(3);
    if (name == "stack-5") return td::stack_task(5);
    if (name == "unstack-stack") return td::unstack_stack_task();
    if (name == "hide-restore") return td::hide_restore_task();
    throw ConfigError("unknown builtin task '" + name + "'");
}

inline std::vector<TaskSpec> builtin_tasks() {
    std::vector<TaskSpec> out;
    for (const std::string& name : builtin_task_names()) {
        out.push_back(builtin_task(name));
    }
    return out;
}

}  // namespace stg
