// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sitewatch/sitewatch.hpp"

using namespace sitewatch;

namespace {

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

BBox random_box(DeterministicRng& rng, double x_lo = 0.0, double x_hi = 1.0) {
    const double w = rng.uniform(0.05, 0.25), h = rng.uniform(0.1, 0.35);
    const double x = rng.uniform(x_lo, x_hi - w), y = rng.uniform(0.0, 1.0 - h);
    return {x, y, x + w, y + h};
}

/// Random short scenario: up to three persons on one camera.
ScenarioSpec random_scenario(DeterministicRng& rng, std::size_t max_frames, int max_persons, double x_lo = 0.0,
                             bool spurious = true) {
    ScenarioSpec s;
    s.scenario_id = "rand";
    s.frame_rate = 5.0;
    s.duration = static_cast<double>(5 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_frames - 4))) / 5.0;
    s.noise.miss_probability = rng.uniform(0.0, 0.4);
    s.noise.confidence_jitter = rng.uniform(0.0, 0.2);
    s.noise.bbox_jitter = x_lo > 0.0 ? 0.0 : rng.uniform(0.0, 0.08);
    s.noise.spurious_rate = spurious ? rng.uniform(0.0, 0.5) : 0.0;
    s.quality = {rng.uniform(0.3, 1.0), rng.uniform(0.0, 0.2)};
    const auto frames = s.frame_count();
    const int n = 1 + static_cast<int>(rng.uniform() * static_cast<double>(max_persons));
    for (int k = 0; k < n; ++k) {
        ScriptedPerson p;
        p.person_id = "p" + std::to_string(k);
        p.node_id = "cam1";
        p.confidence = rng.uniform(0.3, 1.0);
        const auto entry = static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(frames - 1));
        const auto exit = entry + static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(frames - 1 - entry));
        p.waypoints.push_back({entry, random_box(rng, x_lo)});
        if (exit > entry) p.waypoints.push_back({exit, random_box(rng, x_lo)});
        s.persons.push_back(p);
    }
    return s;
}

PipelineConfig random_config(DeterministicRng& rng) {
    auto cfg = PipelineConfig::for_mode(kAllModes[static_cast<std::size_t>(rng.uniform() * 3.0) % 3]);
    cfg.min_quality = rng.uniform(0.0, 0.8);
    return cfg;
}

/// Maximum matching size by exhaustive search over assignments.
std::size_t brute_force_tp(const std::vector<BBox>& det, const std::vector<BBox>& gt, double thr) {
    std::vector<bool> used(gt.size(), false);
    std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
        if (i == det.size()) return 0;
        std::size_t b = best(i + 1);
        for (std::size_t k = 0; k < gt.size(); ++k) {
            if (used[k] || !(iou(det[i], gt[k]) >= thr)) continue;
            used[k] = true;
            b = std::max(b, 1 + best(i + 1));
            used[k] = false;
        }
        return b;
    };
    return best(0);
}

using CandidateSet = std::set<std::tuple<std::string, std::uint64_t, TrackId>>;

CandidateSet candidate_set(const RunLog& log) {
    CandidateSet out;
    for (const auto& e : log.of_kind<CandidatesEntry>()) {
        const auto& c = std::get<CandidatesEntry>(e.get().payload);
        for (auto id : c.track_ids) out.emplace(c.node_id, c.frame_index, id);
    }
    return out;
}

std::string without_config(const RunLog& log) {
    std::string out;
    for (const auto& e : log.entries)
        if (!std::holds_alternative<ConfigEntry>(e.payload)) out += to_json(e).dump() + '\n';
    return out;
}

// ---------------------------------------------------------------------------

void mode_ordering() {
    const auto corpus = acceptance_corpus();
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = evaluate_corpus(corpus);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto& r = rep.average.at(Mode::Reactive);
    const auto& d = rep.average.at(Mode::Default);
    const auto& c = rep.average.at(Mode::Certain);
    const double mr = median(r.delays), md = median(d.delays), mc = median(c.delays);
    double seconds_per_clip = 0.0;
    for (const auto& cc : corpus) seconds_per_clip += cc.scenario.duration;
    seconds_per_clip /= static_cast<double>(corpus.size());

    std::printf("INFO corpus: %zu clips, mean %.1f s; precision R/D/C %.3f/%.3f/%.3f; recall %.3f/%.3f/%.3f\n",
                corpus.size(), seconds_per_clip, r.precision, d.precision, c.precision, r.recall, d.recall, c.recall);
    std::printf("INFO corpus: alert%% R/D/C %.2f/%.2f/%.2f; median delay %.0f/%.0f/%.0f ms; false alerts %zu/%zu/%zu\n",
                r.alert_percent, d.alert_percent, c.alert_percent, mr, md, mc, r.false_alerts, d.false_alerts,
                c.false_alerts);

    const bool size_ok = corpus.size() >= 30;
    const bool recall_ok = r.recall > d.recall && d.recall > c.recall;
    const bool precision_ok = c.precision > d.precision && d.precision > r.precision;
    const bool alert_ok = d.alert_percent == 100.0 && r.alert_percent == 100.0 && c.alert_percent <= d.alert_percent;
    const bool delay_ok = mr <= md && md < mc;
    const bool time_ok = secs < 120.0;
    auto verdict = [](const char* what, bool ok) { return std::string(what) + (ok ? " ok" : " violated"); };
    report("mode_ordering", size_ok && recall_ok && precision_ok && alert_ok && delay_ok && time_ok,
           verdict("recall order", recall_ok) + ", " + verdict("precision order", precision_ok) + ", " +
               verdict("alert %", alert_ok) + ", " + verdict("delay order", delay_ok) +
               fmt(" (%.0f clips, %.2f s runtime)", static_cast<double>(corpus.size()), secs));
}

void table_average() {
    struct Row {
        const char* dataset;
        double p[3], r[3], a[3];  // Default, Reactive, Certain
    };
    const Row rows[] = {{"Vehicle", {0.845, 0.826, 0.891}, {0.771, 0.961, 0.660}, {100.0, 100.0, 93.33}},
                        {"Infra.", {0.751, 0.547, 0.863}, {0.829, 0.849, 0.726}, {100.0, 100.0, 96.67}},
                        {"Indoor", {0.925, 0.868, 0.955}, {0.872, 0.925, 0.796}, {100.0, 100.0, 100.0}}};
    const Mode modes[] = {Mode::Default, Mode::Reactive, Mode::Certain};
    const double printed_p[] = {0.841, 0.747, 0.903};
    const double printed_r[] = {0.824, 0.912, 0.727};
    const double printed_a[] = {100.0, 100.0, 96.67};

    std::vector<CellMetrics> cells;
    for (const auto& row : rows)
        for (int m = 0; m < 3; ++m) {
            CellMetrics c;
            c.dataset = row.dataset;
            c.mode = modes[m];
            c.precision = row.p[m];
            c.recall = row.r[m];
            c.alert_percent = row.a[m];
            c.clips = 1;
            cells.push_back(c);
        }
    const auto rep = aggregate_report(std::span<const CellMetrics>(cells));
    double worst = 0.0;
    for (int m = 0; m < 3; ++m) {
        const auto& avg = rep.average.at(modes[m]);
        worst = std::max({worst, std::abs(avg.precision - printed_p[m]), std::abs(avg.recall - printed_r[m]),
                          std::abs(avg.alert_percent - printed_a[m]) / 100.0});
    }
    report("table_average", worst <= 0.001, fmt("largest deviation from printed AVG row %.5f", worst));
}

void latency_constants() {
    const bool mesh = round_trip_latency(1) == 18.0 && round_trip_latency(4) == 100.0 && hop_latency(1) == 9.0 &&
                      hop_latency(4) == 50.0;

    Clip clip;
    clip.clip_id = "harness";
    clip.frame_rate = 5.0;
    clip.duration = 2.0;
    clip.node_ids = {"cam1"};
    for (std::uint64_t i = 0; i < 10; ++i) {
        FrameRecord f;
        f.node_id = "cam1";
        f.frame_index = i;
        f.timestamp = 200.0 * static_cast<double>(i);
        clip.streams["cam1"].push_back(f);
    }
    clip.ground_truth.push_back({"p1", "cam1", 0, 9, std::vector<BBox>(10, BBox{0.2, 0.2, 0.4, 0.6})});
    validate_clip(clip);

    RunLog log;
    log.header.capture = CaptureMode::harness_loop;
    log.header.clip_ids = {"harness"};
    Track t;
    t.node_id = "cam1";
    t.last_bbox = {0.2, 0.2, 0.4, 0.6};
    t.state = TrackState::confirmed;
    log.entries.push_back({0, 0.0, ClipStartEntry{"harness", 0.0, {{"cam1", "cam1"}}}});
    log.entries.push_back({1, 600.0, TracksEntry{"cam1", 3, {t}, {}}});
    log.entries.push_back({2, 683.0, AlertEntry{{0, 683.0, "cam1", 0, DetectionClass::person, 0.9}, 3, {"band1"}}});
    const auto delays = alert_delays(log, clip);
    const bool comp = delays.delays.size() == 1 && delays.delays[0] == 667.0;
    report("latency_constants", mesh && comp,
           fmt("round trip 1 hop %.3f ms, 4 hops %.3f ms; raw 683 ms compensates to %.3f ms", round_trip_latency(1),
               round_trip_latency(4), delays.delays.empty() ? -1.0 : delays.delays[0]));
}

void oracle_equivalence() {
    DeterministicRng rng(1001);
    std::size_t mismatches = 0, frames = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        RunSpec spec;
        spec.clips = {synth_clip(random_scenario(rng, 50, 3), rng.next())};
        spec.config = random_config(rng);
        spec.stream_duplication = 1 + static_cast<unsigned>(rng.uniform() * 2.0);
        const auto log = run_replay(spec);
        const Clip& clip = spec.clips[0];

        std::map<std::pair<std::string, std::uint64_t>, std::vector<Track>> tracks;
        for (const auto& e : log.of_kind<TracksEntry>()) {
            const auto& te = std::get<TracksEntry>(e.get().payload);
            tracks[{te.node_id, te.frame_index}] = te.live;
        }
        FrameCounts expect;
        for (const auto& e : log.of_kind<CandidatesEntry>()) {
            const auto& ce = std::get<CandidatesEntry>(e.get().payload);
            std::vector<BBox> det, gt;
            for (const auto& tr : tracks[{ce.node_id, ce.frame_index}])
                if (tr.cls == DetectionClass::person &&
                    std::find(ce.track_ids.begin(), ce.track_ids.end(), tr.track_id) != ce.track_ids.end())
                    det.push_back(tr.last_bbox);
            for (const auto& p : clip.ground_truth)
                if (p.present(ce.frame_index)) gt.push_back(p.bbox_at(ce.frame_index));
            const auto tp = brute_force_tp(det, gt, 0.5);
            expect += FrameCounts{tp, det.size() - tp, gt.size() - tp};
            ++frames;
        }
        if (framewise_pr(log, clip).counts != expect) ++mismatches;
    }
    report("metrics_oracle", mismatches == 0,
           fmt("%.0f mismatching instances out of 1000 (%.0f frames scored)", static_cast<double>(mismatches),
               static_cast<double>(frames)));
}

void debounce_bound() {
    AlertLedger pair;
    const std::vector<std::string> band{"band1"};
    AlertCandidate c;
    c.node_id = "cam1";
    const auto first = debounce(c, pair, band, 0.0, 2000.0).size();
    c.timestamp = 1500.0;
    const auto second = debounce(c, pair, band, 1500.0, 2000.0).size();
    const bool pair_ok = first == 1 && second == 0;

    // Direct candidate streams over several devices.
    DeterministicRng rng(2000);
    std::size_t violations = 0, delivered = 0;
    for (int trial = 0; trial < 300; ++trial) {
        AlertLedger ledger;
        const std::vector<std::string> devices{"a", "b", "c", "d"};
        std::map<std::string, std::vector<double>> times;
        double now = 0.0;
        for (int i = 0; i < 80; ++i) {
            now += std::floor(rng.uniform(0.0, 1200.0));
            std::vector<std::string> targets;
            for (const auto& d : devices)
                if (rng.bernoulli(0.6)) targets.push_back(d);
            AlertCandidate cand;
            cand.timestamp = now;
            cand.node_id = "cam1";
            cand.track_id = static_cast<TrackId>(i);
            for (const auto& [dev, ev] : debounce(cand, ledger, targets, now, 2000.0)) times[dev].push_back(ev.timestamp);
        }
        for (const auto& [dev, ts] : times) {
            delivered += ts.size();
            for (std::size_t k = 1; k < ts.size(); ++k)
                if (ts[k] - ts[k - 1] < 2000.0) ++violations;
        }
    }
    // Full pipeline runs over the shipped mesh.
    const auto topo = load_topology(std::string(SITEWATCH_DATA_DIR) + "/topology.json");
    for (int trial = 0; trial < 100; ++trial) {
        RunSpec spec;
        spec.clips = {synth_clip(random_scenario(rng, 150, 3), rng.next())};
        spec.config = random_config(rng);
        spec.topology = topo;
        const auto log = run_replay(spec);
        std::map<std::string, std::vector<double>> times;
        for (const auto& e : log.of_kind<AlertEntry>()) {
            const auto& a = std::get<AlertEntry>(e.get().payload);
            for (const auto& d : a.devices) times[d].push_back(a.event.timestamp);
        }
        for (const auto& [dev, ts] : times) {
            delivered += ts.size();
            for (std::size_t k = 1; k < ts.size(); ++k)
                if (ts[k] - ts[k - 1] < 2000.0) ++violations;
        }
    }
    report("debounce", pair_ok && violations == 0,
           fmt("1.5 s pair delivered %.0f of 2; %.0f window violations across %.0f deliveries",
               static_cast<double>(first + second), static_cast<double>(violations), static_cast<double>(delivered)));
}

void zone_semantics() {
    DeterministicRng rng(3000);
    std::size_t differing = 0, leaked = 0, baseline = 0;
    for (int trial = 0; trial < 100; ++trial) {
        RunSpec spec;
        spec.clips = {synth_clip(random_scenario(rng, 100, 3), rng.next())};
        spec.config = random_config(rng);
        const auto plain = run_replay(spec);
        spec.config.zones.emplace("cam1", Zone::full_frame());
        const auto zoned = run_replay(spec);
        if (without_config(plain) != without_config(zoned)) ++differing;
    }
    for (int trial = 0; trial < 100; ++trial) {
        // Zone confined to the left of x = 0.45, persons to the right of 0.5.
        RunSpec spec;
        spec.clips = {synth_clip(random_scenario(rng, 100, 3, 0.5, false), rng.next())};
        spec.config = random_config(rng);
        std::vector<Point> tri;
        do {
            tri = {{rng.uniform(0.0, 0.45), rng.uniform()}, {rng.uniform(0.0, 0.45), rng.uniform()},
                   {rng.uniform(0.0, 0.45), rng.uniform()}};
        } while (!geom::polygon_is_simple(tri));
        baseline += candidate_set(run_replay(spec)).size();
        spec.config.zones.emplace("cam1", Zone::make(tri));
        const auto log = run_replay(spec);
        leaked += log.of_kind<AlertEntry>().size() + candidate_set(log).size();
    }
    report("zone_semantics", differing == 0 && leaked == 0 && baseline > 0,
           fmt("%.0f of 100 full-frame runs differ from zone-free runs; %.0f candidates or alerts outside the zone "
               "(%.0f candidates without it)",
               static_cast<double>(differing), static_cast<double>(leaked), static_cast<double>(baseline)));
}

void determinism() {
    const auto corpus = acceptance_corpus();
    std::size_t differing = 0, replica_mismatch = 0;
    for (std::size_t i = 0; i < corpus.size(); i += 3) {
        RunSpec spec;
        spec.clips = {synth_clip(corpus[i].scenario, corpus[i].seed)};
        spec.config = PipelineConfig::for_mode(kAllModes[i % 3]);
        spec.seed = corpus[i].seed;
        const auto a = run_replay(spec).to_jsonl();
        RunSpec again = spec;
        again.clips = {synth_clip(corpus[i].scenario, corpus[i].seed)};
        const auto log = run_replay(again);
        if (a != log.to_jsonl()) ++differing;

        std::map<std::string, std::vector<std::string>> by_node;
        for (const auto& e : log.entries) {
            std::string node;
            Json j = to_json(e);
            if (const auto* t = std::get_if<TracksEntry>(&e.payload)) node = t->node_id;
            else if (const auto* c = std::get_if<CandidatesEntry>(&e.payload)) node = c->node_id;
            else continue;
            j.erase("seq");
            j.erase("node_id");
            for (const char* list : {"live", "expired"})
                if (j.contains(list))
                    for (auto& tr : j[list]) tr.erase("node_id");
            by_node[node].push_back(j.dump());
        }
        if (by_node.size() != 2 || by_node["cam1"] != by_node["cam1~1"]) ++replica_mismatch;
    }
    report("determinism", differing == 0 && replica_mismatch == 0,
           fmt("%.0f differing run pairs, %.0f replica pairs with diverging histories", static_cast<double>(differing),
               static_cast<double>(replica_mismatch)));
}

void threshold_monotonicity() {
    DeterministicRng rng(4000);
    std::size_t added = 0, checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        RunSpec spec;
        spec.clips = {synth_clip(random_scenario(rng, 100, 3), rng.next())};
        spec.config = random_config(rng);
        const double lo = rng.uniform(0.0, 1.0), hi = rng.uniform(lo, 1.0);
        spec.config.alert_confidence_threshold = lo;
        const auto low = candidate_set(run_replay(spec));
        spec.config.alert_confidence_threshold = hi;
        const auto high = candidate_set(run_replay(spec));
        for (const auto& c : high)
            if (!low.count(c)) ++added;
        checked += high.size();
    }
    report("threshold_monotonicity", added == 0,
           fmt("%.0f candidates appeared only under the higher threshold (%.0f checked over 200 runs)",
               static_cast<double>(added), static_cast<double>(checked)));
}

}  // namespace

int main() {
    const std::pair<const char*, void (*)()> checks[] = {
        {"mode_ordering", mode_ordering},         {"table_average", table_average},
        {"latency_constants", latency_constants}, {"metrics_oracle", oracle_equivalence},
        {"debounce", debounce_bound},             {"zone_semantics", zone_semantics},
        {"determinism", determinism},             {"threshold_monotonicity", threshold_monotonicity}};
    for (const auto& [name, fn] : checks) {
        try {
            fn();
        } catch (const std::exception& e) {
            report(name, false, std::string("exception: ") + e.what());
        }
    }
    std::printf("%d of %zu criteria failed\n", failures, std::size(checks));
    return failures == 0 ? 0 : 1;
}
