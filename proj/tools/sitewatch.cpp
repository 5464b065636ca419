#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sitewatch/sitewatch.hpp"
#include "sitewatch/transport.hpp"

using namespace sitewatch;
namespace fs = std::filesystem;

namespace {

Mode mode_option(const std::string& name) {
    auto m = parse_mode(name);
    if (!m) throw ValidationError("unknown mode '" + name + "' (Default, Reactive, Certain)");
    return *m;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw MissingFile("cannot write " + path);
    out << text;
}

struct RunArgs {
    std::vector<std::string> clips;
    std::string config, topology, mode, clock = "simulated", out;
    std::uint64_t seed = 0;
    unsigned duplicate = 2;
};

int cmd_run(const RunArgs& a) {
    RunSpec spec;
    std::vector<fs::path> paths(a.clips.begin(), a.clips.end());
    spec.clips = load_clips(paths);
    if (!a.config.empty()) spec.config = load_config(a.config);
    if (!a.mode.empty()) spec.config.select_mode(mode_option(a.mode));
    if (!a.topology.empty()) spec.topology = load_topology(a.topology);
    auto clock = parse_clock_mode(a.clock);
    if (!clock) throw ValidationError("--clock: expected simulated or realtime");
    spec.clock_mode = *clock;
    spec.seed = a.seed;
    spec.stream_duplication = a.duplicate;

    PacingStats pacing;
    RunHooks hooks;
    hooks.pacing = &pacing;
    const auto log = run_replay(spec, hooks);
    write_text(a.out, log.to_jsonl());

    std::size_t alerts = log.of_kind<AlertEntry>().size();
    std::fprintf(stderr, "run: %zu clip(s), %zu entries, %zu alert(s), mode %s\n", spec.clips.size(),
                 log.entries.size(), alerts, std::string(to_string(spec.config.mode)).c_str());
    if (pacing.frames)
        std::fprintf(stderr, "run: pacing error mean %.2f ms, max %.2f ms\n", pacing.mean_error_ms, pacing.max_error_ms);
    return 0;
}

struct EvalArgs {
    std::vector<std::string> runs, clips;
    std::string dataset = "all", report;
    double iou = 0.5, bin_width = 200.0;
    bool include_mesh = false;
};

/// Mode of a run, from its first config entry.
Mode run_mode(const RunLog& log) {
    for (const auto& e : log.entries)
        if (const auto* c = std::get_if<ConfigEntry>(&e.payload)) return c->config.mode;
    throw SchemaViolation("run log has no config entry");
}

int cmd_eval(const EvalArgs& a) {
    std::map<std::string, Clip> clips;
    for (auto& c : load_clips(std::vector<fs::path>(a.clips.begin(), a.clips.end())))
        clips.emplace(c.clip_id, std::move(c));
    EvalOptions opt;
    opt.iou_threshold = a.iou;
    opt.latency.include_mesh = a.include_mesh;

    std::vector<ClipResult> results;
    std::size_t negative = 0;
    for (const auto& path : a.runs) {
        const auto log = RunLog::load(path);
        const Mode mode = run_mode(log);
        for (const auto& id : log.header.clip_ids) {
            auto it = clips.find(id);
            if (it == clips.end()) throw ClipMismatch(path + ": no clip bundle given for clip '" + id + "'");
            results.push_back(evaluate_clip(log, it->second, a.dataset, mode, opt));
            negative += results.back().negative_delays;
        }
    }
    if (results.empty()) throw EmptyCell("nothing to evaluate");
    const auto rep = aggregate_report(std::span<const ClipResult>(results), a.bin_width);
    std::cout << format_report(rep);
    if (negative) std::fprintf(stderr, "eval: %zu compensated delay(s) below zero\n", negative);
    if (!a.report.empty()) write_text(a.report, to_json(rep).dump(2) + "\n");
    return 0;
}

int cmd_synth(const std::string& scenario, std::uint64_t seed, const std::string& out) {
    const auto clip = synth_clip(load_scenario(scenario), seed);
    save_clip(clip, out);
    std::fprintf(stderr, "synth: %s, %zu frames on %zu node(s), %zu person(s) -> %s\n", clip.clip_id.c_str(),
                 clip.frame_count(), clip.node_ids.size(), clip.ground_truth.size(), out.c_str());
    return 0;
}

int cmd_corpus(const std::string& report, const std::string& topology) {
    CorpusRunOptions opt;
    if (!topology.empty()) opt.topology = load_topology(topology);
    const auto rep = evaluate_corpus(acceptance_corpus(), opt);
    std::cout << format_report(rep);
    if (!report.empty()) write_text(report, to_json(rep).dump(2) + "\n");
    return 0;
}

int cmd_serve(const std::string& listen, const std::string& http, const std::string& config,
              const std::string& topology) {
    if (listen.empty() && http.empty()) throw ValidationError("serve needs --listen and/or --http");
    // Block the stop signals before any server thread starts so sigwait sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    ControlPlane plane(config.empty() ? PipelineConfig::for_mode(Mode::Default) : load_config(config),
                       topology.empty() ? MeshTopology::single_band() : load_topology(topology));
    LineServer line(plane);
    HttpServer web(plane);
    if (!listen.empty()) {
        const auto [host, port] = parse_listen(listen);
        std::fprintf(stderr, "serve: control API (line JSON) on %s:%d\n", host.c_str(), line.start(host, port));
    }
    if (!http.empty()) {
        const auto [host, port] = parse_listen(http);
        std::fprintf(stderr, "serve: HTTP API on %s:%d (POST /api, GET /events)\n", host.c_str(), web.start(host, port));
    }
    int sig = 0;
    sigwait(&stop_signals, &sig);
    std::fprintf(stderr, "serve: shutting down\n");
    plane.stop();
    web.stop();
    line.stop();
    return 0;
}

struct ValidateArgs {
    std::vector<std::string> clips;
    std::string config, topology, scenario, runlog;
};

int cmd_validate(const ValidateArgs& a) {
    int checked = 0;
    for (const auto& c : a.clips) {
        const auto clip = load_clip(c);
        std::printf("clip %s: ok (%zu frames x %zu node(s), %zu person(s))\n", c.c_str(), clip.frame_count(),
                    clip.node_ids.size(), clip.ground_truth.size());
        ++checked;
    }
    if (!a.config.empty()) {
        const auto cfg = load_config(a.config);
        std::printf("config %s: ok (mode %s, threshold %.2f)\n", a.config.c_str(),
                    std::string(to_string(cfg.mode)).c_str(), cfg.alert_confidence_threshold);
        ++checked;
    }
    if (!a.topology.empty()) {
        const auto t = load_topology(a.topology);
        std::printf("topology %s: ok\n", a.topology.c_str());
        for (const auto& [id, hops] : t.hop_counts())
            if (id != kCoordinator) std::printf("  %-12s %d hop(s), %.2f ms one-way\n", id.c_str(), hops, hop_latency(hops));
        ++checked;
    }
    if (!a.scenario.empty()) {
        const auto s = load_scenario(a.scenario);
        std::printf("scenario %s: ok (%zu frames, %zu person(s))\n", a.scenario.c_str(), s.frame_count(), s.persons.size());
        ++checked;
    }
    if (!a.runlog.empty()) {
        const auto log = RunLog::load(a.runlog);
        std::printf("runlog %s: ok (%zu entries%s)\n", a.runlog.c_str(), log.entries.size(),
                    log.aborted() ? ", aborted" : "");
        ++checked;
    }
    if (checked == 0) throw ValidationError("nothing to validate");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sitewatch: proximity alert pipeline replay, evaluation and control"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Replay clip bundles through the alert pipeline");
    run_cmd->add_option("clips", run.clips, "Clip bundle directories")->required()->check(CLI::ExistingDirectory);
    run_cmd->add_option("--config", run.config, "Pipeline config JSON")->check(CLI::ExistingFile);
    run_cmd->add_option("--topology", run.topology, "Mesh topology JSON")->check(CLI::ExistingFile);
    run_cmd->add_option("--mode", run.mode, "Mode preset (Default, Reactive, Certain)");
    run_cmd->add_option("--clock", run.clock, "simulated or realtime")->capture_default_str();
    run_cmd->add_option("--seed", run.seed, "Seed recorded in the run log")->capture_default_str();
    run_cmd->add_option("--duplicate", run.duplicate, "Replays per source stream")->capture_default_str();
    run_cmd->add_option("--out,-o", run.out, "Run log path (default stdout)");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score run logs against clip ground truth");
    eval_cmd->add_option("--run", eval.runs, "Run log (repeatable)")->required()->allow_extra_args(false)->check(CLI::ExistingFile);
    eval_cmd->add_option("clips", eval.clips, "Clip bundle directories")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--dataset", eval.dataset, "Dataset label for the report")->capture_default_str();
    eval_cmd->add_option("--iou", eval.iou, "IoU threshold for frame matching")->capture_default_str();
    eval_cmd->add_flag("--include-mesh", eval.include_mesh, "Add mesh delivery latency to delays");
    eval_cmd->add_option("--bin-width", eval.bin_width, "Delay histogram bin width, ms")->capture_default_str();
    eval_cmd->add_option("--report", eval.report, "Write the JSON report here");

    std::string scenario, synth_out;
    std::uint64_t synth_seed = 0;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a clip bundle from a scenario");
    synth_cmd->add_option("scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--seed", synth_seed, "Noise seed")->capture_default_str();
    synth_cmd->add_option("--out,-o", synth_out, "Output bundle directory")->required();

    std::string corpus_report, corpus_topology;
    auto* corpus_cmd = app.add_subcommand("corpus", "Evaluate every mode on the built-in synthetic corpus");
    corpus_cmd->add_option("--report", corpus_report, "Write the JSON report here");
    corpus_cmd->add_option("--topology", corpus_topology, "Mesh topology JSON")->check(CLI::ExistingFile);

    std::string listen, http, serve_config, serve_topology;
    auto* serve_cmd = app.add_subcommand("serve", "Expose the control API");
    serve_cmd->add_option("--listen", listen, "host:port for line-delimited JSON over TCP");
    serve_cmd->add_option("--http", http, "host:port for HTTP (POST /api, GET /events)");
    serve_cmd->add_option("--config", serve_config, "Initial pipeline config JSON")->check(CLI::ExistingFile);
    serve_cmd->add_option("--topology", serve_topology, "Mesh topology JSON")->check(CLI::ExistingFile);

    ValidateArgs val;
    auto* validate_cmd = app.add_subcommand("validate", "Check clip bundles and JSON documents");
    validate_cmd->add_option("--clip", val.clips, "Clip bundle directory (repeatable)")->allow_extra_args(false);
    validate_cmd->add_option("--config", val.config, "Pipeline config JSON");
    validate_cmd->add_option("--topology", val.topology, "Mesh topology JSON");
    validate_cmd->add_option("--scenario", val.scenario, "Scenario JSON");
    validate_cmd->add_option("--runlog", val.runlog, "Run log JSONL");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return cmd_run(run);
        if (*eval_cmd) return cmd_eval(eval);
        if (*synth_cmd) return cmd_synth(scenario, synth_seed, synth_out);
        if (*corpus_cmd) return cmd_corpus(corpus_report, corpus_topology);
        if (*serve_cmd) return cmd_serve(listen, http, serve_config, serve_topology);
        if (*validate_cmd) return cmd_validate(val);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
