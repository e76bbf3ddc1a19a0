// stgraph: record episodes on the bundled tasks, summarize recorded runs,
// replay records to check their integrity, and export graph snapshots.
//
// Exit codes: 0 all episodes succeeded / checks passed, 1 a task failed or a
// record diverged, 2 the invocation or an input file was bad.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stgraph/harness.hpp"
#include "stgraph/remote.hpp"
#include "stgraph/tasks.hpp"

namespace {

using namespace stg;

// A task argument is either a builtin name or a path to a task/1 JSON file.
TaskSpec resolve_task(const std::string& arg) {
    if (std::filesystem::is_regular_file(arg)) {
        std::ifstream in(arg);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) {
            throw ConfigError("task file '" + arg + "' is not valid JSON");
        }
        return task_from_json(j);
    }
    return builtin_task(arg);
}

std::vector<std::uint64_t> resolve_seeds(std::vector<std::uint64_t> seeds,
                                         const std::string& range) {
    if (!range.empty()) {
        auto dots = range.find("..");
        std::uint64_t lo = 0, hi = 0;
        try {
            if (dots == std::string::npos) throw std::invalid_argument(range);
            lo = std::stoull(range.substr(0, dots));
            hi = std::stoull(range.substr(dots + 2));
        } catch (const std::exception&) {
            throw ConfigError("--seeds wants an inclusive range like 0..24, got '" +
                              range + "'");
        }
        if (hi < lo) throw ConfigError("--seeds range '" + range + "' is empty");
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) seeds.push_back(0);
    return seeds;
}

EpisodeRecord load_episode(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return read_episode(in);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " in '" + path + "'");
    }
}

std::string episode_line(const EpisodeRecord& r) {
    std::string out = r.task_name + " seed " + std::to_string(r.seed) + ": ";
    if (r.success) {
        out += "success in " + std::to_string(r.steps.size()) + " steps";
    } else {
        out += "failed (";
        out += failure_cause_name(r.cause);
        out += ")";
        if (!r.error.empty()) out += ": " + r.error;
    }
    return out;
}

void write_record(const EpisodeRecord& rec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    write_episode(rec, out);
}

int cmd_run(const std::string& task_arg, const std::string& backend_name,
            const std::vector<std::uint64_t>& seeds, const RunConfig& run,
            const std::string& out_path) {
    TaskSpec task = resolve_task(task_arg);

    std::unique_ptr<RemoteBackend> remote;
    if (backend_name == "remote") {
        if (run.base.endpoint_url.empty()) {
            throw ConfigError(
                "remote backend needs --endpoint or STGRAPH_ENDPOINT_URL");
        }
        remote = std::make_unique<RemoteBackend>(run.base);
    }

    // one seed and a non-directory path writes that file; otherwise out_path
    // is a directory holding one file per episode
    bool out_is_dir =
        !out_path.empty() &&
        (seeds.size() > 1 || std::filesystem::is_directory(out_path));
    if (out_is_dir) std::filesystem::create_directories(out_path);

    bool all_ok = true;
    std::vector<EpisodeRecord> records;
    for (std::uint64_t seed : seeds) {
        EpisodeRecord rec = run_episode(task, seed, run, remote.get());
        std::cout << episode_line(rec) << "\n";
        if (!out_path.empty()) {
            std::string path = out_is_dir
                                   ? out_path + "/" + rec.task_name + "-" +
                                         rec.backend + "-seed" +
                                         std::to_string(seed) + ".jsonl"
                                   : out_path;
            write_record(rec, path);
        }
        all_ok = all_ok && rec.success;
        records.push_back(std::move(rec));
    }
    if (records.size() > 1) {
        std::cout << suite_report_text(summarize(records));
    }
    return all_ok ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& paths, bool as_json) {
    std::vector<EpisodeRecord> records;
    for (const std::string& path : paths) {
        records.push_back(load_episode(path));
    }
    SuiteReport report = summarize(records);
    if (as_json) {
        std::cout << suite_report_to_json(report).dump(2) << "\n";
    } else {
        std::cout << suite_report_text(report);
    }
    for (const EpisodeRecord& r : records) {
        if (!r.success) return 1;
    }
    return 0;
}

int cmd_replay(const std::vector<std::string>& paths) {
    bool all_ok = true;
    for (const std::string& path : paths) {
        EpisodeRecord rec = load_episode(path);
        try {
            replay(rec);
            std::cout << "ok: " << path << " (" << rec.steps.size() << " steps, "
                      << (rec.steps.empty() ? 0 : rec.steps.back().events_total)
                      << " events)\n";
        } catch (const ReplayDivergence& e) {
            std::cout << "diverged: " << path << ": " << e.what() << "\n";
            all_ok = false;
        }
    }
    return all_ok ? 0 : 1;
}

int cmd_export_graph(const std::string& path, int step, const std::string& out_path) {
    EpisodeRecord rec = load_episode(path);
    nlohmann::json j = cstg_to_json(graph_at_step(rec, step));
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw ConfigError("cannot write '" + out_path + "'");
        out << j.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scene-graph manipulation pipeline: record, summarize, replay, export"};
    app.require_subcommand(1);

    Config defaults;

    // run
    auto* run_cmd = app.add_subcommand("run", "run episodes and record them");
    std::string task_arg;
    std::string backend_name = "oracle";
    std::vector<std::uint64_t> seed_list;
    std::string seed_range;
    std::vector<std::string> ablations;
    std::string out_path;
    RunConfig run;
    run_cmd->add_option("--task", task_arg, "builtin task name or task/1 JSON file")
        ->required();
    run_cmd->add_option("--backend", backend_name, "planner backend")
        ->check(CLI::IsMember({"oracle", "remote"}))
        ->capture_default_str();
    run_cmd->add_option("--seed", seed_list, "seed to run (repeatable)");
    run_cmd->add_option("--seeds", seed_range, "inclusive seed range, e.g. 0..24");
    run_cmd->add_option("--ablate", ablations, "disable a stage: stf or cstg")
        ->check(CLI::IsMember({"stf", "cstg"}));
    run_cmd->add_option("--k", run.base.window_k, "token window size per node")
        ->capture_default_str();
    run_cmd
        ->add_option("--iou-threshold", run.base.iou_threshold,
                     "patch occupancy threshold")
        ->capture_default_str();
    run_cmd->add_option("--out", out_path,
                        "episode file, or directory when running several seeds");
    run_cmd->add_option("--endpoint", run.base.endpoint_url, "remote endpoint URL")
        ->envname("STGRAPH_ENDPOINT_URL");
    run_cmd->add_option("--token", run.base.api_token, "remote bearer token")
        ->envname("STGRAPH_API_TOKEN");
    run_cmd->add_option("--model", run.base.model, "remote model name")
        ->envname("STGRAPH_MODEL")
        ->capture_default_str();
    run_cmd
        ->add_option("--timeout-ms", run.base.remote_timeout_ms,
                     "remote request deadline")
        ->envname("STGRAPH_TIMEOUT_MS")
        ->capture_default_str();

    // report
    auto* report_cmd =
        app.add_subcommand("report", "summarize recorded episode files");
    std::vector<std::string> report_paths;
    bool report_json = false;
    report_cmd->add_option("files", report_paths, "episode/1 JSONL files")
        ->required();
    report_cmd->add_flag("--json", report_json, "emit the report as JSON");

    // replay
    auto* replay_cmd = app.add_subcommand(
        "replay", "re-derive graph snapshots from records and compare digests");
    std::vector<std::string> replay_paths;
    replay_cmd->add_option("files", replay_paths, "episode/1 JSONL files")
        ->required();

    // export-graph
    auto* export_cmd = app.add_subcommand(
        "export-graph", "reconstruct and print a cstg/1 snapshot from a record");
    std::string export_path;
    int export_step = -1;
    std::string export_out;
    export_cmd->add_option("file", export_path, "episode/1 JSONL file")->required();
    export_cmd->add_option("--step", export_step,
                           "step to export (default: the last one)");
    export_cmd->add_option("--out", export_out, "write to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) {
            for (const std::string& a : ablations) {
                if (a == "stf") run.base.disable_stf_geometry = true;
                if (a == "cstg") run.base.disable_cstg_memory = true;
            }
            return cmd_run(task_arg, backend_name,
                           resolve_seeds(seed_list, seed_range), run, out_path);
        }
        if (report_cmd->parsed()) return cmd_report(report_paths, report_json);
        if (replay_cmd->parsed()) return cmd_replay(replay_paths);
        if (export_cmd->parsed()) {
            return cmd_export_graph(export_path, export_step, export_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
