// Episode records: config snapshots, JSONL round trips, determinism, replay
// divergence detection, failure-cause classification, and suite aggregation.

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "stgraph/harness.hpp"
#include "stgraph/tasks.hpp"

using namespace stg;

TEST_CASE("config snapshot round trips and hashes") {
    Config c;
    c.window_k = 5;
    c.place_tolerance = 0.013;
    c.disable_stf_geometry = true;
    Config back = config_from_json(config_to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(back.window_k == 5);
    CHECK(back.place_tolerance == Catch::Approx(0.013));
    CHECK(back.disable_stf_geometry);

    Config other = c;
    other.iou_threshold = 0.6;
    CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("episode record JSONL round trip") {
    RunConfig run;
    EpisodeRecord rec = run_episode(builtin_task("cover-top"), 3, run);
    REQUIRE(rec.success);

    std::ostringstream out;
    write_episode(rec, out);
    std::istringstream in(out.str());
    EpisodeRecord back = read_episode(in);

    CHECK(back.task_name == rec.task_name);
    CHECK(back.backend == "oracle");
    CHECK(back.seed == 3);
    CHECK(back.config_hash == rec.config_hash);
    CHECK(back.steps.size() == rec.steps.size());
    CHECK(back.done == rec.done);
    CHECK(back.success == rec.success);
    CHECK(back.cause == rec.cause);
    CHECK(back.final_world_digest == rec.final_world_digest);
    CHECK(episode_signature(back) == episode_signature(rec));
}

TEST_CASE("episode signature ignores wall times") {
    RunConfig run;
    EpisodeRecord rec = run_episode(builtin_task("stack-3"), 0, run);
    EpisodeRecord slow = rec;
    for (auto& s : slow.steps) s.times.plan_ms += 1000.0;
    CHECK(episode_signature(slow) == episode_signature(rec));
}

TEST_CASE("same task and seed reproduce the record") {
    RunConfig plain;
    RunConfig memoryless;
    memoryless.base.disable_cstg_memory = true;
    RunConfig degraded;
    degraded.base.disable_stf_geometry = true;

    for (const RunConfig* run : {&plain, &memoryless, &degraded}) {
        for (const char* name : {"stack-3", "hide-restore"}) {
            INFO(name);
            EpisodeRecord a = run_episode(builtin_task(name), 7, *run);
            EpisodeRecord b = run_episode(builtin_task(name), 7, *run);
            CHECK(episode_signature(a) == episode_signature(b));
        }
    }
}

TEST_CASE("replay accepts faithful records") {
    RunConfig run;
    for (const TaskSpec& t : builtin_tasks()) {
        INFO(t.name);
        CHECK(replay(run_episode(t, 0, run)));
    }
}

TEST_CASE("tampered records are rejected") {
    RunConfig run;
    EpisodeRecord rec = run_episode(builtin_task("stack-3"), 0, run);
    REQUIRE(rec.steps.size() >= 3);

    {
        EpisodeRecord bad = rec;
        bad.steps[1].tokens.at(0).centroid.x += 1e-3;
        CHECK_THROWS_AS(replay(bad), ReplayDivergence);
    }
    {
        EpisodeRecord bad = rec;
        char& digit = bad.steps[2].graph_digest[0];
        digit = digit == '0' ? '1' : '0';
        CHECK_THROWS_AS(replay(bad), ReplayDivergence);
    }
    {
        // executed action whose verification supposedly failed
        EpisodeRecord bad = rec;
        for (auto& s : bad.steps) {
            if (s.has_decision && s.action) {
                s.report.passed = false;
                break;
            }
        }
        CHECK_THROWS_AS(replay(bad), ReplayDivergence);
    }
    {
        // outcome flipped: the executed directive drops out of the graph feed
        EpisodeRecord bad = rec;
        for (auto& s : bad.steps) {
            if (s.has_decision && s.outcome == "ok") {
                s.outcome = "grasp_miss";
                break;
            }
        }
        CHECK_THROWS_AS(replay(bad), ReplayDivergence);
    }
    {
        EpisodeRecord bad = rec;
        bad.steps[1].events_total += 1;
        CHECK_THROWS_AS(replay(bad), ReplayDivergence);
    }
    {
        // fabricated rejection of a directive that actually verifies
        EpisodeRecord bad = rec;
        for (auto& s : bad.steps) {
            if (s.has_decision && s.action) {
                s.rejected.push_back(s.directive);
                break;
            }
        }
        CHECK_THROWS_AS(replay(bad), ReplayDivergence);
    }
}

TEST_CASE("malformed episode streams are rejected") {
    std::istringstream empty("");
    CHECK_THROWS_AS(read_episode(empty), ConfigError);

    std::istringstream wrong("{\"format\":\"episode/2\"}\n");
    CHECK_THROWS_AS(read_episode(wrong), ConfigError);

    RunConfig run;
    EpisodeRecord rec = run_episode(builtin_task("cover-top"), 0, run);
    std::ostringstream out;
    write_episode(rec, out);
    std::string text = out.str();
    std::string truncated = text.substr(0, text.find_last_of('\n', text.size() - 2) + 1);
    std::istringstream in(truncated);
    CHECK_THROWS_AS(read_episode(in), ConfigError);
}

TEST_CASE("memoryless ablation loses multi-step tasks but not single-glance ones") {
    RunConfig run;
    run.base.disable_cstg_memory = true;

    for (const char* name : {"cover-top", "cover-bottom", "unstack-stack",
                             "hide-restore"}) {
        INFO(name);
        EpisodeRecord rec = run_episode(builtin_task(name), 0, run);
        CHECK(!rec.success);
        CHECK((rec.cause == FailureCause::planning ||
               rec.cause == FailureCause::placement));
        CHECK(replay(rec));
    }

    EpisodeRecord containers = run_episode(builtin_task("containers"), 0, run);
    CHECK(containers.success);
}

TEST_CASE("degraded grounding ablation fails by missing grasps") {
    RunConfig run;
    run.base.disable_stf_geometry = true;
    EpisodeRecord rec = run_episode(builtin_task("stack-3"), 0, run);
    CHECK(!rec.success);
    CHECK(rec.cause == FailureCause::grasp);
    CHECK(replay(rec));
}

TEST_CASE("failure causes partition the loss modes") {
    TaskSpec task = builtin_task("stack-3");
    RunConfig run;

    {
        // declaring done with nothing built: finished cleanly, poses wrong
        ActionDirective fin;
        ScriptedBackend script({fin});
        EpisodeRecord rec = run_episode(task, 0, run, &script);
        CHECK(rec.done);
        CHECK(!rec.success);
        CHECK(rec.cause == FailureCause::placement);
        CHECK(rec.backend == "scripted");
    }
    {
        // arity violation aborts the episode as a parsing failure
        ActionDirective bad;
        bad.verb = Verb::pick;
        bad.subject_id = "red_cube";
        bad.target = Target::object("green_cube");
        ScriptedBackend script({bad});
        EpisodeRecord rec = run_episode(task, 0, run, &script);
        CHECK(!rec.success);
        CHECK(rec.cause == FailureCause::parsing);
        CHECK(!rec.error.empty());
    }
    {
        // a subject the graph has never seen burns the whole replan budget
        ActionDirective ghost;
        ghost.verb = Verb::pick;
        ghost.subject_id = "ghost_cube";
        ScriptedBackend script({ghost, ghost, ghost, ghost});
        EpisodeRecord rec = run_episode(task, 0, run, &script);
        CHECK(!rec.done);
        CHECK(rec.cause == FailureCause::planning);
    }
    {
        // half-overlap placement topples: a motion failure
        ActionDirective shove;
        shove.verb = Verb::place_at;
        shove.subject_id = "red_cube";
        shove.target = Target::at({0.15, -0.12, 0.075});
        ActionDirective fin;
        ScriptedBackend script({shove, fin});
        EpisodeRecord rec = run_episode(task, 0, run, &script);
        CHECK(rec.done);
        CHECK(!rec.success);
        CHECK(rec.cause == FailureCause::motion);
        CHECK(replay(rec));
    }
}

TEST_CASE("rejected attempts are recorded and replayed") {
    TaskSpec task = builtin_task("stack-3");
    RunConfig run;

    ActionDirective ghost;
    ghost.verb = Verb::pick;
    ghost.subject_id = "ghost_cube";
    ActionDirective fin;
    ScriptedBackend script({ghost, fin});

    EpisodeRecord rec = run_episode(task, 0, run, &script);
    REQUIRE(rec.steps.size() == 2);
    const StepRecord& decision = rec.steps[1];
    CHECK(decision.replans == 1);
    REQUIRE(decision.rejected.size() == 1);
    CHECK(decision.rejected[0].subject_id == "ghost_cube");
    // the rejection left a violation event behind
    CHECK(decision.events_total == rec.steps[0].events_total + 1);
    CHECK(replay(rec));

    // the record survives a serialization round trip with the rejection intact
    std::ostringstream out;
    write_episode(rec, out);
    std::istringstream in(out.str());
    EpisodeRecord back = read_episode(in);
    REQUIRE(back.steps[1].rejected.size() == 1);
    CHECK(replay(back));
    CHECK(episode_signature(back) == episode_signature(rec));
}

TEST_CASE("suite summary aggregates per task and per step") {
    RunConfig run;
    run.seeds = {0, 1};
    std::vector<EpisodeRecord> records =
        run_suite({builtin_task("stack-3"), builtin_task("cover-top")}, run);
    REQUIRE(records.size() == 4);

    SuiteReport report = summarize(records);
    REQUIRE(report.tasks.size() == 2);
    CHECK(report.tasks[0].task_name == "stack-3");
    CHECK(report.tasks[0].episodes == 2);
    CHECK(report.tasks[0].successes == 2);
    CHECK(report.tasks[1].task_name == "cover-top");
    CHECK(report.tasks[1].successes == 2);
    CHECK(!report.by_step.empty());
    CHECK(report.by_step[0].samples == 4);

    // pure function of the records
    SuiteReport again = summarize(records);
    CHECK(suite_report_to_json(again) == suite_report_to_json(report));
    CHECK(suite_report_text(again) == suite_report_text(report));

    // failed episodes land in exactly one cause bucket
    RunConfig ablated;
    ablated.base.disable_cstg_memory = true;
    std::vector<EpisodeRecord> failures =
        run_suite({builtin_task("hide-restore")}, ablated);
    SuiteReport failed = summarize(failures);
    REQUIRE(failed.tasks.size() == 1);
    CHECK(failed.tasks[0].successes == 0);
    int bucketed = 0;
    for (const auto& [cause, n] : failed.tasks[0].causes) bucketed += n;
    CHECK(bucketed == failed.tasks[0].episodes);
}
