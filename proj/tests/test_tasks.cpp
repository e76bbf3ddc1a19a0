// Bundled tasks: the built-in definitions, their serialized files, and a
// closed-loop run of every one of them.

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "stgraph/harness.hpp"
#include "stgraph/tasks.hpp"

using namespace stg;

TEST_CASE("builtin task registry") {
    auto names = builtin_task_names();
    REQUIRE(names.size() == 9);
    for (const std::string& name : names) {
        TaskSpec t = builtin_task(name);
        CHECK(t.name == name);
        CHECK(t.horizon > 0);
        CHECK(!t.objects.empty());
    }
    CHECK_THROWS_AS(builtin_task("no-such-task"), ConfigError);
}

TEST_CASE("task json round trip") {
    for (const TaskSpec& t : builtin_tasks()) {
        INFO(t.name);
        nlohmann::json j = task_to_json(t);
        TaskSpec back = task_from_json(j);
        CHECK(task_to_json(back) == j);
    }
}

TEST_CASE("bundled task files match the builtin definitions") {
    for (const std::string& name : builtin_task_names()) {
        INFO(name);
        std::ifstream in(std::string(STGRAPH_TASKS_DIR) + "/" + name + ".json");
        REQUIRE(in.good());
        nlohmann::json j = nlohmann::json::parse(in);
        CHECK(j == task_to_json(builtin_task(name)));
    }
}

TEST_CASE("bundled initial scenes are already settled") {
    for (const TaskSpec& t : builtin_tasks()) {
        WorldState w = world_from_task(t, 0);
        for (const SimObject& declared : t.objects) {
            INFO(t.name << " " << declared.object_id);
            const SimObject& settled = w.objects.at(declared.object_id);
            CHECK((settled.pose.position - declared.pose.position).norm() < 1e-9);
        }
    }
}

TEST_CASE("every bundled task closes the loop") {
    RunConfig run;
    for (const TaskSpec& task : builtin_tasks()) {
        INFO(task.name);
        EpisodeRecord rec = run_episode(task, 0, run);
        CHECK(rec.done);
        CHECK(rec.success);
        CHECK(rec.cause == FailureCause::none);
        CHECK(rec.error.empty());
        CHECK(rec.steps.size() <= static_cast<std::size_t>(task.horizon) + 1);
    }
}
