#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sitewatch/controlplane.hpp"
#include "sitewatch/evalharness.hpp"
#include "sitewatch/rng.hpp"
#include "sitewatch/scenario.hpp"

namespace sitewatch {

/// Visual variation a clip is built around, expressed as detector noise.
enum class Variation { clear, glare, obstruction, degradation, distance, clutter };

inline std::string_view to_string(Variation v) {
    switch (v) {
        case Variation::clear: return "clear";
        case Variation::glare: return "glare";
        case Variation::obstruction: return "obstruction";
        case Variation::degradation: return "degradation";
        case Variation::distance: return "distance";
        case Variation::clutter: return "clutter";
    }
    return "clear";
}

struct CorpusClip {
    std::string dataset;
    Variation variation = Variation::clear;
    ScenarioSpec scenario;
    std::uint64_t seed = 0;
};

struct CorpusDataset {
    std::string name;
    std::size_t clips = 0;
    std::vector<Variation> variations;  // cycled over the dataset's clips
    double clutter_scale = 1.0;         // site-level background clutter
};

inline constexpr std::uint64_t kCorpusSeed = 20240611;

inline std::vector<CorpusDataset> corpus_datasets() {
    using V = Variation;
    return {
        {"Vehicle", 17, {V::clear, V::glare, V::distance, V::obstruction, V::clutter, V::degradation}, 1.0},
        {"Infra", 7, {V::clutter, V::obstruction, V::glare, V::distance}, 1.5},
        {"Indoor", 10, {V::clear, V::degradation, V::clutter, V::obstruction}, 0.6},
    };
}

namespace detail {

inline NoiseParams variation_noise(Variation v, double clutter_scale, DeterministicRng& rng) {
    NoiseParams n;
    n.confidence_jitter = 0.06;
    n.bbox_jitter = 0.02;
    n.miss_probability = 0.05;
    n.spurious_rate = 0.02;
    switch (v) {
        case Variation::clear: break;
        case Variation::glare:
            n.miss_probability = rng.uniform(0.15, 0.30);
            n.confidence_jitter = 0.12;
            n.spurious_rate = 0.05;
            break;
        case Variation::obstruction:
            n.miss_probability = rng.uniform(0.25, 0.40);
            n.bbox_jitter = 0.05;
            break;
        case Variation::degradation:
            n.miss_probability = rng.uniform(0.10, 0.20);
            n.confidence_jitter = 0.15;
            n.bbox_jitter = 0.06;
            break;
        case Variation::distance:
            n.miss_probability = rng.uniform(0.10, 0.25);
            n.confidence_jitter = 0.10;
            n.bbox_jitter = 0.04;
            break;
        case Variation::clutter:
            n.spurious_rate = rng.uniform(0.08, 0.15);
            n.confidence_jitter = 0.08;
            break;
    }
    n.spurious_rate *= clutter_scale;
    return n;
}

inline QualityProfile variation_quality(Variation v) {
    switch (v) {
        case Variation::glare: return {0.45, 0.10};
        case Variation::degradation: return {0.55, 0.10};
        default: return {0.90, 0.05};
    }
}

/// A walk across part of the frame at roughly one body width per second.
/// Distant subjects are small boxes.
inline ScriptedPerson scripted_walk(std::string id, std::string node, std::uint64_t entry, std::uint64_t exit,
                                   double frame_rate, bool distant, double confidence, DeterministicRng& rng) {
    const double h = distant ? rng.uniform(0.08, 0.14) : rng.uniform(0.20, 0.40);
    const double w = h * rng.uniform(0.35, 0.5);
    const double seconds = static_cast<double>(exit - entry) / frame_rate;
    const double dx = std::min(w * seconds * rng.uniform(0.4, 1.0), 0.9 - w);
    const double dy = rng.uniform(-0.3, 0.3) * dx;
    const double x0 = rng.uniform(0.02, 0.98 - w - dx);
    const double y0 = rng.uniform(0.02 + std::max(0.0, -dy), 0.98 - h - std::max(0.0, dy));
    const bool left_to_right = rng.bernoulli(0.5);
    const double xa = left_to_right ? x0 : x0 + dx;
    const double xb = left_to_right ? x0 + dx : x0;
    ScriptedPerson p;
    p.person_id = std::move(id);
    p.node_id = std::move(node);
    p.confidence = confidence;
    p.waypoints = {{entry, {xa, y0, xa + w, y0 + h}}, {exit, {xb, y0 + dy, xb + w, y0 + dy + h}}};
    return p;
}

}  // namespace detail

/// The frozen evaluation corpus: 34 clips of 20 s at 5 fps over three site
/// types, each clip built around one visual variation. One to three persons
/// walk through one after another.
inline std::vector<CorpusClip> acceptance_corpus(std::uint64_t seed = kCorpusSeed) {
    DeterministicRng rng(seed);
    std::vector<CorpusClip> out;
    for (const auto& ds : corpus_datasets()) {
        for (std::size_t i = 0; i < ds.clips; ++i) {
            CorpusClip c;
            c.dataset = ds.name;
            c.variation = ds.variations[i % ds.variations.size()];
            c.seed = rng.next();

            auto& s = c.scenario;
            s.scenario_id = ds.name + "_" + (i < 9 ? "0" : "") + std::to_string(i + 1);
            s.frame_rate = 5.0;
            s.duration = 20.0;
            s.nodes = {"cam1"};
            s.noise = detail::variation_noise(c.variation, ds.clutter_scale, rng);
            s.quality = detail::variation_quality(c.variation);

            const bool distant = c.variation == Variation::distance;
            const int persons = 1 + static_cast<int>(rng.uniform() * 3.0);
            std::uint64_t entry = 3 + static_cast<std::uint64_t>(rng.uniform(0.0, 10.0));
            for (int k = 0; k < persons; ++k) {
                const std::uint64_t span = 16 + static_cast<std::uint64_t>(rng.uniform(0.0, 12.0));
                const std::uint64_t exit = std::min<std::uint64_t>(entry + span, s.frame_count() - 1);
                if (exit <= entry + 8) break;
                const double conf = distant ? rng.uniform(0.60, 0.75) : rng.uniform(0.62, 0.95);
                s.persons.push_back(detail::scripted_walk("p" + std::to_string(k + 1), "cam1", entry, exit, s.frame_rate, distant,
                                                          conf, rng));
                entry = exit + 1 + static_cast<std::uint64_t>(rng.uniform(0.0, 8.0));
                if (entry + 10 >= s.frame_count()) break;
            }

            if (c.variation == Variation::clutter) {
                Distractor d;
                d.node_id = "cam1";
                d.cls = DetectionClass::person;
                const double h = rng.uniform(0.10, 0.25);
                const double w = h * 0.5;
                const double x = rng.uniform(0.05, 0.9 - w);
                const double y = rng.uniform(0.05, 0.9 - h);
                d.bbox = {x, y, x + w, y + h};
                d.confidence = rng.uniform(0.35, 0.62);
                d.presence_probability = rng.uniform(0.3, 0.7);
                s.distractors.push_back(d);
            }
            validate_scenario(s);
            out.push_back(std::move(c));
        }
    }
    return out;
}

struct CorpusRunOptions {
    PresetTable presets = default_presets();
    MeshTopology topology = MeshTopology::single_band();
    unsigned stream_duplication = 2;
    EvalOptions eval;
};

/// Replays every corpus clip under every mode (simulated clock) and builds
/// the metrics report.
inline MetricsReport evaluate_corpus(const std::vector<CorpusClip>& corpus, const CorpusRunOptions& opt = {}) {
    std::vector<ClipResult> results;
    for (const auto& c : corpus) {
        const Clip clip = synth_clip(c.scenario, c.seed);
        for (Mode m : kAllModes) {
            RunSpec spec;
            spec.clips = {clip};
            spec.config.presets = opt.presets;
            spec.config.select_mode(m);
            spec.topology = opt.topology;
            spec.stream_duplication = opt.stream_duplication;
            spec.seed = c.seed;
            const RunLog log = run_replay(spec);
            results.push_back(evaluate_clip(log, clip, c.dataset, m, opt.eval));
        }
    }
    return aggregate_report(results, 200.0);
}

}  // namespace sitewatch
