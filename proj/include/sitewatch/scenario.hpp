#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sitewatch/clipstore.hpp"
#include "sitewatch/rng.hpp"

namespace sitewatch {

/// Detector noise standing in for visual variation (glare, obstruction,
/// blur/dust, distance, clutter). All zero means a perfect detector.
struct NoiseParams {
    double miss_probability = 0.0;   // per person per frame
    double confidence_jitter = 0.0;  // stddev added to the object's mean confidence
    double bbox_jitter = 0.0;        // stddev per edge, as a fraction of box size
    double spurious_rate = 0.0;      // expected false detections per frame (Poisson)
    double spurious_confidence_min = 0.2;
    double spurious_confidence_max = 0.6;
};

struct QualityProfile {
    double base = 1.0;
    double jitter = 0.0;
};

struct Waypoint {
    std::uint64_t frame = 0;
    BBox bbox;
};

/// A person scripted by keyframes; the bbox is linearly interpolated between
/// waypoints and the person is in frame from the first to the last waypoint.
struct ScriptedPerson {
    std::string person_id;
    std::string node_id;
    std::vector<Waypoint> waypoints;
    double confidence = 1.0;  // detector's mean confidence for this person

    std::uint64_t entry_frame() const { return waypoints.front().frame; }
    std::uint64_t exit_frame() const { return waypoints.back().frame; }

    BBox bbox_at(std::uint64_t frame) const {
        auto hi = std::find_if(waypoints.begin(), waypoints.end(),
                               [&](const Waypoint& w) { return w.frame >= frame; });
        if (hi == waypoints.begin()) return hi->bbox;
        if (hi == waypoints.end()) return waypoints.back().bbox;
        if (hi->frame == frame) return hi->bbox;
        const auto lo = std::prev(hi);
        const double t = static_cast<double>(frame - lo->frame) / static_cast<double>(hi->frame - lo->frame);
        auto lerp = [t](double a, double b) { return a + (b - a) * t; };
        return {lerp(lo->bbox.x_min, hi->bbox.x_min), lerp(lo->bbox.y_min, hi->bbox.y_min),
                lerp(lo->bbox.x_max, hi->bbox.x_max), lerp(lo->bbox.y_max, hi->bbox.y_max)};
    }
};

/// A static non-person object (or person-like clutter) that the detector
/// reports intermittently. Not part of the ground truth.
struct Distractor {
    std::string node_id;
    DetectionClass cls = DetectionClass::person;
    BBox bbox;
    double confidence = 0.5;
    double presence_probability = 1.0;
};

struct ScenarioSpec {
    std::string scenario_id;
    double frame_rate = 5.0;
    double duration = 20.0;  // seconds
    std::vector<std::string> nodes{"cam1"};
    NoiseParams noise;
    QualityProfile quality;
    std::vector<ScriptedPerson> persons;
    std::vector<Distractor> distractors;

    std::size_t frame_count() const {
        return static_cast<std::size_t>(std::llround(duration * frame_rate));
    }
};

/// Frame timestamps are quantized to microseconds so they print identically
/// everywhere.
inline double frame_timestamp_ms(std::uint64_t index, double frame_rate) {
    return std::round(static_cast<double>(index) * 1.0e6 / frame_rate) / 1.0e3;
}

inline void validate_scenario(const ScenarioSpec& s) {
    auto fail = [&](const std::string& m) { throw InvalidScenario(s.scenario_id + ": " + m); };
    if (s.scenario_id.empty()) throw InvalidScenario("scenario_id must be non-empty");
    if (!(s.frame_rate > 0.0) || !std::isfinite(s.frame_rate)) fail("frame_rate must be positive");
    if (!(s.duration > 0.0) || !std::isfinite(s.duration)) fail("duration must be positive");
    if (s.frame_count() == 0) fail("duration shorter than one frame");
    if (s.nodes.empty()) fail("at least one node required");
    for (const auto& n : s.nodes)
        if (!valid_node_id(n)) fail("invalid node id '" + n + "'");

    const auto& nz = s.noise;
    auto prob = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) fail(std::string("noise.") + name + " must be in [0,1]");
    };
    prob(nz.miss_probability, "miss_probability");
    prob(nz.spurious_confidence_min, "spurious_confidence_min");
    prob(nz.spurious_confidence_max, "spurious_confidence_max");
    if (nz.spurious_confidence_min > nz.spurious_confidence_max) fail("spurious confidence range inverted");
    if (!(nz.confidence_jitter >= 0.0) || !(nz.bbox_jitter >= 0.0) || !(nz.spurious_rate >= 0.0))
        fail("noise magnitudes must be non-negative");
    if (!(s.quality.base >= 0.0 && s.quality.base <= 1.0) || !(s.quality.jitter >= 0.0))
        fail("quality profile out of range");

    auto known_node = [&](const std::string& n) {
        return std::find(s.nodes.begin(), s.nodes.end(), n) != s.nodes.end();
    };
    const auto last_frame = s.frame_count() - 1;
    std::set<std::string> ids;
    for (const auto& p : s.persons) {
        if (p.person_id.empty() || !ids.insert(p.person_id).second) fail("person ids must be unique and non-empty");
        if (!known_node(p.node_id)) fail("person '" + p.person_id + "' on unknown node");
        if (p.waypoints.empty()) fail("person '" + p.person_id + "' has no waypoints");
        if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) fail("person confidence must be in [0,1]");
        for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
            const auto& w = p.waypoints[i];
            if (!w.bbox.valid()) fail("person '" + p.person_id + "' trajectory leaves the unit square");
            if (w.frame > last_frame) fail("person '" + p.person_id + "' waypoint after the last frame");
            if (i > 0 && w.frame <= p.waypoints[i - 1].frame) fail("waypoint frames must increase");
        }
    }
    for (const auto& d : s.distractors) {
        if (!known_node(d.node_id)) fail("distractor on unknown node");
        if (!d.bbox.valid()) fail("distractor bbox outside the unit square");
        if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) fail("distractor confidence must be in [0,1]");
        if (!(d.presence_probability >= 0.0 && d.presence_probability <= 1.0))
            fail("distractor presence_probability must be in [0,1]");
    }
}

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline BBox jitter_bbox(const BBox& b, double sigma, DeterministicRng& rng) {
    if (sigma == 0.0) return b;
    const double w = b.width();
    const double h = b.height();
    BBox out{clamp01(b.x_min + rng.normal(0.0, sigma * w)), clamp01(b.y_min + rng.normal(0.0, sigma * h)),
             clamp01(b.x_max + rng.normal(0.0, sigma * w)), clamp01(b.y_max + rng.normal(0.0, sigma * h))};
    return out.valid() ? out : b;
}

}  // namespace detail

/// Deterministic for a fixed (scenario, seed). Ground truth is exactly the
/// scripted trajectories; noise only touches the detector output.
inline Clip synth_clip(const ScenarioSpec& s, std::uint64_t seed) {
    validate_scenario(s);
    DeterministicRng rng(seed);
    const std::size_t frames = s.frame_count();

    Clip clip;
    clip.clip_id = s.scenario_id;
    clip.frame_rate = s.frame_rate;
    clip.duration = static_cast<double>(frames) / s.frame_rate;
    clip.node_ids = s.nodes;

    for (const auto& node : s.nodes) {
        auto& stream = clip.streams[node];
        stream.reserve(frames);
        for (std::uint64_t i = 0; i < frames; ++i) {
            FrameRecord f;
            f.node_id = node;
            f.frame_index = i;
            f.timestamp = frame_timestamp_ms(i, s.frame_rate);
            f.quality = detail::clamp01(rng.normal(s.quality.base, s.quality.jitter));

            for (const auto& p : s.persons) {
                if (p.node_id != node || i < p.entry_frame() || i > p.exit_frame()) continue;
                if (rng.bernoulli(s.noise.miss_probability)) continue;
                Detection d;
                d.cls = DetectionClass::person;
                d.bbox = detail::jitter_bbox(p.bbox_at(i), s.noise.bbox_jitter, rng);
                d.confidence = detail::clamp01(rng.normal(p.confidence, s.noise.confidence_jitter));
                f.detections.push_back(d);
            }
            for (const auto& x : s.distractors) {
                if (x.node_id != node) continue;
                if (!rng.bernoulli(x.presence_probability)) continue;
                Detection d;
                d.cls = x.cls;
                d.bbox = detail::jitter_bbox(x.bbox, s.noise.bbox_jitter, rng);
                d.confidence = detail::clamp01(rng.normal(x.confidence, s.noise.confidence_jitter));
                f.detections.push_back(d);
            }
            const int spurious = rng.poisson(s.noise.spurious_rate);
            for (int k = 0; k < spurious; ++k) {
                const double w = rng.uniform(0.03, 0.15);
                const double h = rng.uniform(0.06, 0.30);
                const double x = rng.uniform(0.0, 1.0 - w);
                const double y = rng.uniform(0.0, 1.0 - h);
                Detection d;
                d.cls = DetectionClass::person;
                d.bbox = {x, y, x + w, y + h};
                d.confidence = rng.uniform(s.noise.spurious_confidence_min, s.noise.spurious_confidence_max);
                f.detections.push_back(d);
            }
            stream.push_back(std::move(f));
        }
    }

    for (const auto& p : s.persons) {
        GroundTruthPerson g;
        g.person_id = p.person_id;
        g.node_id = p.node_id;
        g.entry_frame = p.entry_frame();
        g.exit_frame = p.exit_frame();
        for (auto i = g.entry_frame; i <= g.exit_frame; ++i) g.bboxes.push_back(p.bbox_at(i));
        clip.ground_truth.push_back(std::move(g));
    }
    return clip;
}

// ---------------------------------------------------------------------------
// Scenario document

inline Json to_json(const ScenarioSpec& s) {
    Json persons = Json::array();
    for (const auto& p : s.persons) {
        Json wps = Json::array();
        for (const auto& w : p.waypoints) wps.push_back(Json{{"frame", w.frame}, {"bbox", to_json(w.bbox)}});
        persons.push_back(Json{{"person_id", p.person_id},
                               {"node_id", p.node_id},
                               {"confidence", p.confidence},
                               {"waypoints", std::move(wps)}});
    }
    Json distractors = Json::array();
    for (const auto& d : s.distractors)
        distractors.push_back(Json{{"node_id", d.node_id},
                                   {"class", to_string(d.cls)},
                                   {"bbox", to_json(d.bbox)},
                                   {"confidence", d.confidence},
                                   {"presence_probability", d.presence_probability}});
    return Json{{"scenario_id", s.scenario_id},
                {"frame_rate", s.frame_rate},
                {"duration", s.duration},
                {"nodes", s.nodes},
                {"noise",
                 {{"miss_probability", s.noise.miss_probability},
                  {"confidence_jitter", s.noise.confidence_jitter},
                  {"bbox_jitter", s.noise.bbox_jitter},
                  {"spurious_rate", s.noise.spurious_rate},
                  {"spurious_confidence_min", s.noise.spurious_confidence_min},
                  {"spurious_confidence_max", s.noise.spurious_confidence_max}}},
                {"quality", {{"base", s.quality.base}, {"jitter", s.quality.jitter}}},
                {"persons", std::move(persons)},
                {"distractors", std::move(distractors)}};
}

inline ScenarioSpec parse_scenario(const Json& j) {
    using Reader = ObjectReader<InvalidScenario>;
    Reader r(j, "scenario");
    ScenarioSpec s;
    s.scenario_id = r.get<std::string>("scenario_id");
    s.frame_rate = r.get<double>("frame_rate");
    s.duration = r.get<double>("duration");
    if (const Json* nodes = r.optional_json("nodes")) {
        s.nodes.clear();
        for (const auto& n : expect_array<InvalidScenario>(*nodes, "scenario.nodes"))
            s.nodes.push_back(detail::convert<InvalidScenario, std::string>(n, "scenario.nodes[]"));
    }
    if (const Json* nj = r.optional_json("noise")) {
        Reader n(*nj, "scenario.noise");
        s.noise.miss_probability = n.get_or("miss_probability", 0.0);
        s.noise.confidence_jitter = n.get_or("confidence_jitter", 0.0);
        s.noise.bbox_jitter = n.get_or("bbox_jitter", 0.0);
        s.noise.spurious_rate = n.get_or("spurious_rate", 0.0);
        s.noise.spurious_confidence_min = n.get_or("spurious_confidence_min", s.noise.spurious_confidence_min);
        s.noise.spurious_confidence_max = n.get_or("spurious_confidence_max", s.noise.spurious_confidence_max);
        n.finish();
    }
    if (const Json* qj = r.optional_json("quality")) {
        Reader q(*qj, "scenario.quality");
        s.quality.base = q.get_or("base", 1.0);
        s.quality.jitter = q.get_or("jitter", 0.0);
        q.finish();
    }
    if (const Json* pj = r.optional_json("persons")) {
        for (const auto& pe : expect_array<InvalidScenario>(*pj, "scenario.persons")) {
            Reader pr(pe, "scenario.persons[]");
            ScriptedPerson p;
            p.person_id = pr.get<std::string>("person_id");
            p.node_id = pr.get_or<std::string>("node_id", s.nodes.empty() ? std::string{} : s.nodes.front());
            p.confidence = pr.get_or("confidence", 1.0);
            for (const auto& we : expect_array<InvalidScenario>(pr.json("waypoints"), pr.where("waypoints"))) {
                Reader wr(we, pr.where("waypoints") + "[]");
                Waypoint w;
                w.frame = wr.get<std::uint64_t>("frame");
                w.bbox = parse_bbox<InvalidScenario>(wr.json("bbox"), wr.where("bbox"));
                wr.finish();
                p.waypoints.push_back(w);
            }
            pr.finish();
            s.persons.push_back(std::move(p));
        }
    }
    if (const Json* dj = r.optional_json("distractors")) {
        for (const auto& de : expect_array<InvalidScenario>(*dj, "scenario.distractors")) {
            Reader dr(de, "scenario.distractors[]");
            Distractor d;
            d.node_id = dr.get_or<std::string>("node_id", s.nodes.empty() ? std::string{} : s.nodes.front());
            if (const Json* c = dr.optional_json("class")) d.cls = parse_class_field<InvalidScenario>(*c, dr.where("class"));
            d.bbox = parse_bbox<InvalidScenario>(dr.json("bbox"), dr.where("bbox"));
            d.confidence = dr.get_or("confidence", 0.5);
            d.presence_probability = dr.get_or("presence_probability", 1.0);
            dr.finish();
            s.distractors.push_back(d);
        }
    }
    r.finish();
    validate_scenario(s);
    return s;
}

inline ScenarioSpec load_scenario(const std::filesystem::path& path) {
    const auto text = detail::read_file(path);
    try {
        return parse_scenario(Json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidScenario(path.string() + ": " + e.what());
    }
}

}  // namespace sitewatch
