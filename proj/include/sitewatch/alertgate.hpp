#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sitewatch/clipstore.hpp"
#include "sitewatch/geometry.hpp"
#include "sitewatch/tracker.hpp"

namespace sitewatch {

// ---------------------------------------------------------------------------
// Modes and presets

enum class Mode { Default, Reactive, Certain };

inline constexpr std::array<Mode, 3> kAllModes{Mode::Reactive, Mode::Default, Mode::Certain};

inline std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::Default: return "Default";
        case Mode::Reactive: return "Reactive";
        case Mode::Certain: return "Certain";
    }
    return "Default";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
    for (Mode m : kAllModes)
        if (to_string(m) == s) return m;
    return std::nullopt;
}

struct Preset {
    double alert_confidence_threshold = 0.5;
    TrackerParams tracker_params;

    friend bool operator==(const Preset&, const Preset&) = default;
};

struct PresetTable {
    Preset reactive;
    Preset default_mode;
    Preset certain;

    const Preset& at(Mode m) const {
        switch (m) {
            case Mode::Reactive: return reactive;
            case Mode::Certain: return certain;
            case Mode::Default: break;
        }
        return default_mode;
    }
    Preset& at(Mode m) { return const_cast<Preset&>(std::as_const(*this).at(m)); }

    friend bool operator==(const PresetTable&, const PresetTable&) = default;
};

/// Frozen tuning against the synthetic acceptance corpus. data/presets.json
/// carries the same table.
inline PresetTable default_presets() {
    PresetTable t;
    t.reactive = {0.30, {0.3, 0.8, 1, 0.8, 3}};
    t.default_mode = {0.50, {0.3, 0.6, 2, 0.85, 3}};
    t.certain = {0.70, {0.3, 0.4, 4, 0.9, 3}};
    return t;
}

/// Ordered presets: thresholds strictly increase Reactive -> Default ->
/// Certain and confirm_hits never decrease.
inline void validate_preset_order(const PresetTable& t) {
    const auto& r = t.reactive;
    const auto& d = t.default_mode;
    const auto& c = t.certain;
    if (!(r.alert_confidence_threshold < d.alert_confidence_threshold &&
          d.alert_confidence_threshold < c.alert_confidence_threshold))
        throw ValidationError("presets: thresholds must increase Reactive < Default < Certain");
    if (!(r.tracker_params.confirm_hits <= d.tracker_params.confirm_hits &&
          d.tracker_params.confirm_hits <= c.tracker_params.confirm_hits))
        throw ValidationError("presets: confirm_hits must not decrease Reactive <= Default <= Certain");
    for (Mode m : kAllModes) {
        const auto& p = t.at(m);
        if (!(p.alert_confidence_threshold >= 0.0 && p.alert_confidence_threshold <= 1.0))
            throw ValidationError("presets: threshold out of [0,1]");
        validate<ValidationError>(p.tracker_params);
    }
}

inline Preset mode_preset(Mode m, const PresetTable& table = default_presets()) { return table.at(m); }

// ---------------------------------------------------------------------------
// Zones

enum class ZoneSemantics { include };

/// Operator-drawn region. Alerts are restricted to tracks whose bbox meets
/// the polygon (closed sets, touching counts).
class Zone {
public:
    static Zone make(std::vector<Point> polygon, ZoneSemantics semantics = ZoneSemantics::include) {
        if (polygon.size() < 3) throw ValidationError("zone: polygon needs at least 3 vertices");
        for (const auto& p : polygon)
            if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
                throw ValidationError("zone: vertex outside the unit square");
        if (!geom::polygon_is_simple(polygon)) throw ValidationError("zone: polygon is self-intersecting");
        Zone z;
        z.polygon_ = std::move(polygon);
        z.semantics_ = semantics;
        return z;
    }

    static Zone full_frame() { return make({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

    const std::vector<Point>& polygon() const { return polygon_; }
    ZoneSemantics semantics() const { return semantics_; }

    friend bool operator==(const Zone&, const Zone&) = default;

private:
    Zone() = default;
    std::vector<Point> polygon_;
    ZoneSemantics semantics_ = ZoneSemantics::include;
};

inline bool zone_intersects(const BBox& bbox, const Zone& zone) {
    return geom::rect_intersects_polygon(bbox, zone.polygon());
}

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
    Mode mode = Mode::Default;
    double alert_confidence_threshold = 0.5;
    TrackerParams tracker_params;
    std::set<DetectionClass> class_mask{DetectionClass::person};
    std::map<std::string, Zone> zones;  // node_id -> zone; absent means no zone
    double min_quality = 0.5;
    double debounce_window = 2000.0;  // ms
    PresetTable presets = default_presets();

    static PipelineConfig for_mode(Mode m) {
        PipelineConfig c;
        c.select_mode(m);
        return c;
    }

    void select_mode(Mode m) {
        mode = m;
        const Preset& p = presets.at(m);
        alert_confidence_threshold = p.alert_confidence_threshold;
        tracker_params = p.tracker_params;
    }

    /// Zone governing a node. Replicated streams inherit their source node's
    /// zone unless they have one of their own.
    const Zone* zone_for(const std::string& node_id) const {
        if (auto it = zones.find(node_id); it != zones.end()) return &it->second;
        const auto src = source_node_id(node_id);
        if (src != node_id)
            if (auto it = zones.find(src); it != zones.end()) return &it->second;
        return nullptr;
    }

    static std::string source_node_id(const std::string& node_id) {
        const auto pos = node_id.find('~');
        return pos == std::string::npos ? node_id : node_id.substr(0, pos);
    }

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Node id under which copy `k` of a source stream is replayed. Copy 0 keeps
/// the source id; clip node ids cannot contain '~'.
inline std::string replica_node_id(const std::string& source, unsigned k) {
    return k == 0 ? source : source + "~" + std::to_string(k);
}

inline void validate(const PipelineConfig& c) {
    if (!(c.alert_confidence_threshold >= 0.0 && c.alert_confidence_threshold <= 1.0))
        throw ValidationError("alert_confidence_threshold must be in [0,1]");
    validate<ValidationError>(c.tracker_params);
    if (c.class_mask.empty()) throw ValidationError("class_mask must be non-empty");
    if (!(c.min_quality >= 0.0 && c.min_quality <= 1.0)) throw ValidationError("min_quality must be in [0,1]");
    if (!(c.debounce_window > 0.0)) throw ValidationError("debounce_window must be positive");
    validate_preset_order(c.presets);
}

// ---------------------------------------------------------------------------
// Candidates, events, debounce

struct AlertCandidate {
    double timestamp = 0.0;
    std::string node_id;
    TrackId track_id = 0;
    DetectionClass cls = DetectionClass::person;
    double confidence = 0.0;
    BBox bbox;

    friend bool operator==(const AlertCandidate&, const AlertCandidate&) = default;
};

struct AlertEvent {
    std::uint64_t event_id = 0;
    double timestamp = 0.0;  // run clock, ms
    std::string node_id;
    TrackId track_id = 0;
    DetectionClass cls = DetectionClass::person;
    double confidence_at_alert = 0.0;

    friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

/// Tracks passing every gate: confirmed, class selected, smoothed confidence
/// at or above the alert threshold, and inside the node's zone if it has one.
/// Output is ordered by (node_id, track_id).
inline std::vector<AlertCandidate> evaluate_frame(std::span<const Track> live_tracks, const PipelineConfig& config,
                                                  double now) {
    std::vector<AlertCandidate> out;
    for (const auto& t : live_tracks) {
        if (t.state != TrackState::confirmed) continue;
        if (!config.class_mask.count(t.cls)) continue;
        if (t.smoothed_confidence < config.alert_confidence_threshold) continue;
        if (const Zone* z = config.zone_for(t.node_id); z && !zone_intersects(t.last_bbox, *z)) continue;
        out.push_back({now, t.node_id, t.track_id, t.cls, t.smoothed_confidence, t.last_bbox});
    }
    std::sort(out.begin(), out.end(), [](const AlertCandidate& a, const AlertCandidate& b) {
        return std::tie(a.node_id, a.track_id) < std::tie(b.node_id, b.track_id);
    });
    return out;
}

/// Last-alert bookkeeping. Debounce decisions use the per-device entries;
/// the per-(device, track) entries are diagnostic.
class AlertLedger {
public:
    using TrackKey = std::tuple<std::string, std::string, TrackId>;  // device, node, track

    std::optional<double> last_alert(const std::string& device) const {
        auto it = by_device_.find(device);
        if (it == by_device_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<double> last_alert(const std::string& device, const std::string& node, TrackId track) const {
        auto it = by_track_.find({device, node, track});
        if (it == by_track_.end()) return std::nullopt;
        return it->second;
    }

    void record(const std::string& device, const std::string& node, TrackId track, double now) {
        if (auto prev = last_alert(device); prev && now < *prev)
            throw InvariantViolation("alert ledger: time went backwards for device '" + device + "'");
        by_device_[device] = now;
        by_track_[{device, node, track}] = now;
    }

    std::uint64_t allocate_event_id() { return next_event_id_++; }
    std::uint64_t next_event_id() const { return next_event_id_; }

private:
    std::map<std::string, double> by_device_;
    std::map<TrackKey, double> by_track_;
    std::uint64_t next_event_id_ = 0;
};

/// Delivers the candidate to each target whose last alert is at least
/// `window` ms old. One AlertEvent (one id) is shared by all deliveries; a
/// fully suppressed candidate allocates nothing and leaves the ledger as is.
inline std::vector<std::pair<std::string, AlertEvent>> debounce(const AlertCandidate& candidate, AlertLedger& ledger,
                                                                std::span<const std::string> targets, double now,
                                                                double window) {
    if (!(window > 0.0)) throw DomainError("debounce window must be positive");
    std::vector<std::string> accepted;
    for (const auto& device : targets) {
        const auto last = ledger.last_alert(device);
        if (!last || now - *last >= window) accepted.push_back(device);
    }
    std::vector<std::pair<std::string, AlertEvent>> out;
    if (accepted.empty()) return out;

    AlertEvent ev;
    ev.event_id = ledger.allocate_event_id();
    ev.timestamp = now;
    ev.node_id = candidate.node_id;
    ev.track_id = candidate.track_id;
    ev.cls = candidate.cls;
    ev.confidence_at_alert = candidate.confidence;
    for (auto& device : accepted) {
        ledger.record(device, candidate.node_id, candidate.track_id, now);
        out.emplace_back(std::move(device), ev);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config document

inline Json to_json(const TrackerParams& p) {
    return Json{{"iou_match_threshold", p.iou_match_threshold},
                {"confidence_smoothing_alpha", p.confidence_smoothing_alpha},
                {"confirm_hits", p.confirm_hits},
                {"miss_decay", p.miss_decay},
                {"expire_after_misses", p.expire_after_misses}};
}

inline TrackerParams parse_tracker_params(const Json& j, const std::string& where, TrackerParams base = {}) {
    ObjectReader<ValidationError> r(j, where);
    TrackerParams p = base;
    p.iou_match_threshold = r.get_or("iou_match_threshold", p.iou_match_threshold);
    p.confidence_smoothing_alpha = r.get_or("confidence_smoothing_alpha", p.confidence_smoothing_alpha);
    p.confirm_hits = r.get_or("confirm_hits", p.confirm_hits);
    p.miss_decay = r.get_or("miss_decay", p.miss_decay);
    p.expire_after_misses = r.get_or("expire_after_misses", p.expire_after_misses);
    r.finish();
    validate<ValidationError>(p);
    return p;
}

inline Json to_json(const Preset& p) {
    return Json{{"alert_confidence_threshold", p.alert_confidence_threshold},
                {"tracker_params", to_json(p.tracker_params)}};
}

inline Json to_json(const PresetTable& t) {
    Json j = Json::object();
    for (Mode m : kAllModes) j[std::string(to_string(m))] = to_json(t.at(m));
    return j;
}

inline PresetTable parse_presets(const Json& j, const std::string& where) {
    ObjectReader<ValidationError> r(j, where);
    PresetTable t = default_presets();
    for (Mode m : kAllModes) {
        const auto key = std::string(to_string(m));
        const Json* pj = r.optional_json(key);
        if (!pj) continue;
        ObjectReader<ValidationError> pr(*pj, r.where(key));
        Preset& p = t.at(m);
        p.alert_confidence_threshold = pr.number_in("alert_confidence_threshold", 0.0, 1.0);
        p.tracker_params = parse_tracker_params(pr.json("tracker_params"), pr.where("tracker_params"));
        pr.finish();
    }
    r.finish();
    validate_preset_order(t);
    return t;
}

inline Json to_json(const Zone& z) {
    Json poly = Json::array();
    for (const auto& p : z.polygon()) poly.push_back(Json::array({p.x, p.y}));
    return Json{{"polygon", std::move(poly)}, {"semantics", "include"}};
}

inline std::vector<Point> parse_polygon(const Json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError(where + ": expected vertex list");
    std::vector<Point> out;
    for (const auto& v : j) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ValidationError(where + ": vertices are [x, y] number pairs");
        out.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    return out;
}

inline Zone parse_zone(const Json& j, const std::string& where) {
    ObjectReader<ValidationError> r(j, where);
    auto poly = parse_polygon(r.json("polygon"), r.where("polygon"));
    if (auto sem = r.optional<std::string>("semantics"); sem && *sem != "include")
        throw ValidationError(r.where("semantics") + ": only 'include' zones are supported");
    r.finish();
    return Zone::make(std::move(poly));
}

inline Json to_json(const PipelineConfig& c) {
    Json mask = Json::array();
    for (DetectionClass k : c.class_mask) mask.push_back(to_string(k));
    Json zones = Json::object();
    for (const auto& [node, z] : c.zones) zones[node] = to_json(z);
    return Json{{"mode", to_string(c.mode)},
                {"alert_confidence_threshold", c.alert_confidence_threshold},
                {"tracker_params", to_json(c.tracker_params)},
                {"class_mask", std::move(mask)},
                {"zones", std::move(zones)},
                {"min_quality", c.min_quality},
                {"debounce_window", c.debounce_window},
                {"presets", to_json(c.presets)}};
}

inline std::set<DetectionClass> parse_class_mask(const Json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError(where + ": expected class list");
    std::set<DetectionClass> out;
    for (const auto& c : j) out.insert(parse_class_field<ValidationError>(c, where + "[]"));
    if (out.empty()) throw ValidationError(where + ": class_mask must be non-empty");
    return out;
}

/// Parses a config document. Fields layer over `base`; a "mode" field first
/// expands its preset, then explicit threshold/tracker fields override it.
inline PipelineConfig parse_config(const Json& j, PipelineConfig base = PipelineConfig::for_mode(Mode::Default)) {
    ObjectReader<ValidationError> r(j, "config");
    PipelineConfig c = std::move(base);
    if (const Json* p = r.optional_json("presets")) {
        c.presets = parse_presets(*p, "config.presets");
        if (!r.has("mode")) c.select_mode(c.mode);
    }
    if (auto m = r.optional<std::string>("mode")) {
        auto mode = parse_mode(*m);
        if (!mode) throw ValidationError("config.mode: unknown mode '" + *m + "'");
        c.select_mode(*mode);
    }
    if (auto t = r.optional<double>("alert_confidence_threshold")) {
        r.check_range("alert_confidence_threshold", *t, 0.0, 1.0);
        c.alert_confidence_threshold = *t;
    }
    if (const Json* tp = r.optional_json("tracker_params"))
        c.tracker_params = parse_tracker_params(*tp, "config.tracker_params", c.tracker_params);
    if (const Json* m = r.optional_json("class_mask")) c.class_mask = parse_class_mask(*m, "config.class_mask");
    if (const Json* zj = r.optional_json("zones")) {
        if (!zj->is_object()) throw ValidationError("config.zones: expected object keyed by node_id");
        c.zones.clear();
        for (auto it = zj->begin(); it != zj->end(); ++it) {
            if (it->is_null()) continue;
            c.zones.emplace(it.key(), parse_zone(*it, "config.zones." + it.key()));
        }
    }
    if (auto q = r.optional<double>("min_quality")) {
        r.check_range("min_quality", *q, 0.0, 1.0);
        c.min_quality = *q;
    }
    if (auto w = r.optional<double>("debounce_window")) {
        if (!(*w > 0.0)) throw ValidationError("config.debounce_window must be positive");
        c.debounce_window = *w;
    }
    r.finish();
    validate(c);
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    const auto text = detail::read_file(path);
    try {
        return parse_config(Json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace sitewatch
