#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sitewatch/alertgate.hpp"
#include "sitewatch/alertnet.hpp"
#include "sitewatch/clipstore.hpp"
#include "sitewatch/tracker.hpp"

namespace sitewatch {

enum class ClockMode { simulated, realtime };
/// internal: produced by this simulator. harness_loop: alerts were captured
/// by an external host that replayed the clip over a network loop.
enum class CaptureMode { internal, harness_loop };

inline std::string_view to_string(ClockMode m) { return m == ClockMode::simulated ? "simulated" : "realtime"; }
inline std::string_view to_string(CaptureMode m) { return m == CaptureMode::internal ? "internal" : "harness_loop"; }

inline std::optional<ClockMode> parse_clock_mode(std::string_view s) {
    if (s == "simulated") return ClockMode::simulated;
    if (s == "realtime") return ClockMode::realtime;
    return std::nullopt;
}

struct RunHeader {
    std::uint64_t seed = 0;
    ClockMode clock_mode = ClockMode::simulated;
    CaptureMode capture = CaptureMode::internal;
    unsigned duplication = 1;
    std::vector<std::string> clip_ids;
    MeshTopology topology;

    friend bool operator==(const RunHeader&, const RunHeader&) = default;
};

struct ConfigEntry {
    std::uint64_t version = 0;
    PipelineConfig config;
    friend bool operator==(const ConfigEntry&, const ConfigEntry&) = default;
};

/// Start of one clip on the run clock. Replica node ids map to their source.
struct ClipStartEntry {
    std::string clip_id;
    double offset = 0.0;  // run-clock time of the clip's t = 0
    std::map<std::string, std::string> nodes;  // replayed node -> source node
    friend bool operator==(const ClipStartEntry&, const ClipStartEntry&) = default;
};

struct FrameEntry {
    std::string clip_id;
    std::string node_id;
    std::uint64_t frame_index = 0;
    double clip_time = 0.0;  // the frame's own timestamp
    double quality = 1.0;
    bool quality_pass = true;
    std::size_t detections = 0;
    std::uint64_t config_version = 0;
    friend bool operator==(const FrameEntry&, const FrameEntry&) = default;
};

struct AdvisoryEntry {
    std::string node_id;
    std::uint64_t frame_index = 0;
    std::string message;
    friend bool operator==(const AdvisoryEntry&, const AdvisoryEntry&) = default;
};

struct TracksEntry {
    std::string node_id;
    std::uint64_t frame_index = 0;
    std::vector<Track> live;
    std::vector<Track> expired;
    friend bool operator==(const TracksEntry&, const TracksEntry&) = default;
};

/// Tracks that passed the alert gate on this frame: the pipeline's reported
/// detections for frame-wise scoring.
struct CandidatesEntry {
    std::string node_id;
    std::uint64_t frame_index = 0;
    std::vector<TrackId> track_ids;
    friend bool operator==(const CandidatesEntry&, const CandidatesEntry&) = default;
};

struct AlertEntry {
    AlertEvent event;
    std::uint64_t frame_index = 0;
    std::vector<std::string> devices;
    friend bool operator==(const AlertEntry&, const AlertEntry&) = default;
};

struct DeliveryEntry {
    DeliveryRecord record;
    friend bool operator==(const DeliveryEntry&, const DeliveryEntry&) = default;
};

struct UnreachableEntry {
    std::uint64_t event_id = 0;
    std::string device_id;
    friend bool operator==(const UnreachableEntry&, const UnreachableEntry&) = default;
};

struct RunEndEntry {
    bool aborted = false;
    std::uint64_t frames_processed = 0;  // frame ticks fully processed
    friend bool operator==(const RunEndEntry&, const RunEndEntry&) = default;
};

using LogPayload = std::variant<ConfigEntry, ClipStartEntry, FrameEntry, AdvisoryEntry, TracksEntry, CandidatesEntry,
                                AlertEntry, DeliveryEntry, UnreachableEntry, RunEndEntry>;

inline constexpr std::array<std::string_view, 10> kEventKinds{"config",   "clip_start", "frame",    "advisory",
                                                               "tracks",   "candidates", "alert",    "delivery",
                                                               "unreachable", "run_end"};

inline std::string_view kind_name(const LogPayload& p) { return kEventKinds[p.index()]; }

struct LogEntry {
    std::uint64_t seq = 0;
    double t = 0.0;  // run clock, ms
    LogPayload payload;

    std::string_view kind() const { return kind_name(payload); }
    friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

inline Json to_json(const Track& t) {
    return Json{{"track_id", t.track_id},
                {"node_id", t.node_id},
                {"class", to_string(t.cls)},
                {"smoothed_confidence", t.smoothed_confidence},
                {"last_bbox", to_json(t.last_bbox)},
                {"last_seen_frame", t.last_seen_frame},
                {"hit_count", t.hit_count},
                {"miss_count", t.miss_count},
                {"state", to_string(t.state)}};
}

inline Track parse_track(const Json& j, const std::string& where) {
    ObjectReader<SchemaViolation> r(j, where);
    Track t;
    t.track_id = r.get<TrackId>("track_id");
    t.node_id = r.get<std::string>("node_id");
    t.cls = parse_class_field(r.json("class"), r.where("class"));
    t.smoothed_confidence = r.number_in("smoothed_confidence", 0.0, 1.0);
    t.last_bbox = parse_bbox(r.json("last_bbox"), r.where("last_bbox"));
    t.last_seen_frame = r.get<std::uint64_t>("last_seen_frame");
    t.hit_count = r.get<std::uint32_t>("hit_count");
    t.miss_count = r.get<std::uint32_t>("miss_count");
    const auto state = r.get<std::string>("state");
    auto s = parse_track_state(state);
    if (!s) throw SchemaViolation(r.where("state") + ": unknown state '" + state + "'");
    t.state = *s;
    r.finish();
    return t;
}

inline Json to_json(const AlertEvent& e) {
    return Json{{"event_id", e.event_id},
                {"timestamp", e.timestamp},
                {"node_id", e.node_id},
                {"track_id", e.track_id},
                {"class", to_string(e.cls)},
                {"confidence_at_alert", e.confidence_at_alert}};
}

inline AlertEvent parse_alert_event(const Json& j, const std::string& where) {
    ObjectReader<SchemaViolation> r(j, where);
    AlertEvent e;
    e.event_id = r.get<std::uint64_t>("event_id");
    e.timestamp = r.get<double>("timestamp");
    e.node_id = r.get<std::string>("node_id");
    e.track_id = r.get<TrackId>("track_id");
    e.cls = parse_class_field(r.json("class"), r.where("class"));
    e.confidence_at_alert = r.number_in("confidence_at_alert", 0.0, 1.0);
    r.finish();
    return e;
}

inline Json to_json(const DeliveryRecord& d) {
    return Json{{"event_id", d.event_id},
                {"device_id", d.device_id},
                {"hops", d.hops},
                {"dispatch_time", d.dispatch_time},
                {"delivery_time", d.delivery_time},
                {"pulse", {{"start", d.pulse.start}, {"duration", d.pulse.duration}}}};
}

inline DeliveryRecord parse_delivery(const Json& j, const std::string& where) {
    ObjectReader<SchemaViolation> r(j, where);
    DeliveryRecord d;
    d.event_id = r.get<std::uint64_t>("event_id");
    d.device_id = r.get<std::string>("device_id");
    d.hops = r.get<int>("hops");
    d.dispatch_time = r.get<double>("dispatch_time");
    d.delivery_time = r.get<double>("delivery_time");
    ObjectReader<SchemaViolation> p(r.json("pulse"), r.where("pulse"));
    d.pulse.start = p.get<double>("start");
    d.pulse.duration = p.get<double>("duration");
    p.finish();
    r.finish();
    return d;
}

namespace detail {

template <class T>
Json list_json(const std::vector<T>& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(to_json(x));
    return a;
}

struct PayloadWriter {
    Json& j;
    void operator()(const ConfigEntry& e) const {
        j["version"] = e.version;
        j["config"] = to_json(e.config);
    }
    void operator()(const ClipStartEntry& e) const {
        j["clip_id"] = e.clip_id;
        j["offset"] = e.offset;
        Json nodes = Json::object();
        for (const auto& [n, s] : e.nodes) nodes[n] = s;
        j["nodes"] = std::move(nodes);
    }
    void operator()(const FrameEntry& e) const {
        j["clip_id"] = e.clip_id;
        j["node_id"] = e.node_id;
        j["frame_index"] = e.frame_index;
        j["clip_time"] = e.clip_time;
        j["quality"] = e.quality;
        j["quality_pass"] = e.quality_pass;
        j["detections"] = e.detections;
        j["config_version"] = e.config_version;
    }
    void operator()(const AdvisoryEntry& e) const {
        j["node_id"] = e.node_id;
        j["frame_index"] = e.frame_index;
        j["message"] = e.message;
    }
    void operator()(const TracksEntry& e) const {
        j["node_id"] = e.node_id;
        j["frame_index"] = e.frame_index;
        j["live"] = list_json(e.live);
        j["expired"] = list_json(e.expired);
    }
    void operator()(const CandidatesEntry& e) const {
        j["node_id"] = e.node_id;
        j["frame_index"] = e.frame_index;
        j["track_ids"] = e.track_ids;
    }
    void operator()(const AlertEntry& e) const {
        j["event"] = to_json(e.event);
        j["frame_index"] = e.frame_index;
        j["devices"] = e.devices;
    }
    void operator()(const DeliveryEntry& e) const { j["record"] = to_json(e.record); }
    void operator()(const UnreachableEntry& e) const {
        j["event_id"] = e.event_id;
        j["device_id"] = e.device_id;
    }
    void operator()(const RunEndEntry& e) const {
        j["status"] = e.aborted ? "aborted" : "completed";
        j["frames_processed"] = e.frames_processed;
    }
};

template <class T>
std::vector<T> parse_list(const Json& j, const std::string& where, T (*parse)(const Json&, const std::string&)) {
    std::vector<T> out;
    for (const auto& x : expect_array<SchemaViolation>(j, where)) out.push_back(parse(x, where + "[]"));
    return out;
}

inline LogPayload parse_payload(std::string_view kind, ObjectReader<SchemaViolation>& r) {
    if (kind == "config") {
        ConfigEntry e;
        e.version = r.get<std::uint64_t>("version");
        try {
            e.config = parse_config(r.json("config"));
        } catch (const ValidationError& err) {
            throw SchemaViolation(r.where("config") + ": " + err.what());
        }
        return e;
    }
    if (kind == "clip_start") {
        ClipStartEntry e;
        e.clip_id = r.get<std::string>("clip_id");
        e.offset = r.get<double>("offset");
        const Json& nodes = r.json("nodes");
        if (!nodes.is_object()) throw SchemaViolation(r.where("nodes") + ": expected object");
        for (auto it = nodes.begin(); it != nodes.end(); ++it)
            e.nodes[it.key()] = convert<SchemaViolation, std::string>(*it, r.where("nodes"));
        return e;
    }
    if (kind == "frame") {
        FrameEntry e;
        e.clip_id = r.get<std::string>("clip_id");
        e.node_id = r.get<std::string>("node_id");
        e.frame_index = r.get<std::uint64_t>("frame_index");
        e.clip_time = r.get<double>("clip_time");
        e.quality = r.number_in("quality", 0.0, 1.0);
        e.quality_pass = r.get<bool>("quality_pass");
        e.detections = r.get<std::size_t>("detections");
        e.config_version = r.get<std::uint64_t>("config_version");
        return e;
    }
    if (kind == "advisory") {
        AdvisoryEntry e;
        e.node_id = r.get<std::string>("node_id");
        e.frame_index = r.get<std::uint64_t>("frame_index");
        e.message = r.get<std::string>("message");
        return e;
    }
    if (kind == "tracks") {
        TracksEntry e;
        e.node_id = r.get<std::string>("node_id");
        e.frame_index = r.get<std::uint64_t>("frame_index");
        e.live = parse_list<Track>(r.json("live"), r.where("live"), &parse_track);
        e.expired = parse_list<Track>(r.json("expired"), r.where("expired"), &parse_track);
        return e;
    }
    if (kind == "candidates") {
        CandidatesEntry e;
        e.node_id = r.get<std::string>("node_id");
        e.frame_index = r.get<std::uint64_t>("frame_index");
        for (const auto& id : expect_array<SchemaViolation>(r.json("track_ids"), r.where("track_ids")))
            e.track_ids.push_back(convert<SchemaViolation, TrackId>(id, r.where("track_ids")));
        return e;
    }
    if (kind == "alert") {
        AlertEntry e;
        e.event = parse_alert_event(r.json("event"), r.where("event"));
        e.frame_index = r.get<std::uint64_t>("frame_index");
        for (const auto& d : expect_array<SchemaViolation>(r.json("devices"), r.where("devices")))
            e.devices.push_back(convert<SchemaViolation, std::string>(d, r.where("devices")));
        return e;
    }
    if (kind == "delivery") return DeliveryEntry{parse_delivery(r.json("record"), r.where("record"))};
    if (kind == "unreachable") {
        UnreachableEntry e;
        e.event_id = r.get<std::uint64_t>("event_id");
        e.device_id = r.get<std::string>("device_id");
        return e;
    }
    if (kind == "run_end") {
        RunEndEntry e;
        const auto status = r.get<std::string>("status");
        if (status != "aborted" && status != "completed")
            throw SchemaViolation(r.where("status") + ": unknown status '" + status + "'");
        e.aborted = status == "aborted";
        e.frames_processed = r.get<std::uint64_t>("frames_processed");
        return e;
    }
    throw SchemaViolation(r.context() + ": unknown event type '" + std::string(kind) + "'");
}

}  // namespace detail

inline Json to_json(const LogEntry& e) {
    Json j{{"seq", e.seq}, {"t", e.t}, {"type", e.kind()}};
    std::visit(detail::PayloadWriter{j}, e.payload);
    return j;
}

inline LogEntry parse_log_entry(const Json& j, const std::string& where) {
    ObjectReader<SchemaViolation> r(j, where);
    LogEntry e;
    e.seq = r.get<std::uint64_t>("seq");
    e.t = r.get<double>("t");
    const auto type = r.get<std::string>("type");
    e.payload = detail::parse_payload(type, r);
    r.finish();
    return e;
}

inline Json to_json(const RunHeader& h) {
    return Json{{"type", "header"},
                {"format", "sitewatch-runlog/1"},
                {"seed", h.seed},
                {"clock_mode", to_string(h.clock_mode)},
                {"capture", to_string(h.capture)},
                {"duplication", h.duplication},
                {"clips", h.clip_ids},
                {"topology", to_json(h.topology)}};
}

inline RunHeader parse_run_header(const Json& j) {
    ObjectReader<SchemaViolation> r(j, "runlog.header");
    if (r.get<std::string>("type") != "header") throw SchemaViolation("runlog: first line must be the header");
    if (r.get<std::string>("format") != "sitewatch-runlog/1") throw SchemaViolation("runlog: unsupported format");
    RunHeader h;
    h.seed = r.get<std::uint64_t>("seed");
    auto clock = parse_clock_mode(r.get<std::string>("clock_mode"));
    if (!clock) throw SchemaViolation("runlog.header.clock_mode: unknown value");
    h.clock_mode = *clock;
    const auto capture = r.get<std::string>("capture");
    if (capture == "internal")
        h.capture = CaptureMode::internal;
    else if (capture == "harness_loop")
        h.capture = CaptureMode::harness_loop;
    else
        throw SchemaViolation("runlog.header.capture: unknown value '" + capture + "'");
    h.duplication = r.get<unsigned>("duplication");
    for (const auto& c : expect_array<SchemaViolation>(r.json("clips"), "runlog.header.clips"))
        h.clip_ids.push_back(detail::convert<SchemaViolation, std::string>(c, "runlog.header.clips[]"));
    try {
        h.topology = parse_topology(r.json("topology"));
    } catch (const Error& err) {
        throw SchemaViolation(std::string("runlog.header.topology: ") + err.what());
    }
    r.finish();
    return h;
}

/// Totally ordered record of one run.
struct RunLog {
    RunHeader header;
    std::vector<LogEntry> entries;

    bool aborted() const {
        if (entries.empty()) return false;
        const auto* end = std::get_if<RunEndEntry>(&entries.back().payload);
        return end && end->aborted;
    }

    template <class T>
    std::vector<std::reference_wrapper<const LogEntry>> of_kind() const {
        std::vector<std::reference_wrapper<const LogEntry>> out;
        for (const auto& e : entries)
            if (std::holds_alternative<T>(e.payload)) out.push_back(std::cref(e));
        return out;
    }

    std::string to_jsonl() const {
        std::string out = to_json(header).dump();
        out += '\n';
        for (const auto& e : entries) {
            out += to_json(e).dump();
            out += '\n';
        }
        return out;
    }

    static RunLog from_jsonl(const std::string& text) {
        RunLog log;
        bool first = true;
        detail::for_each_line(text, [&](const std::string& line, std::size_t no) {
            const auto where = "runlog:" + std::to_string(no);
            const Json j = detail::parse_json_text(line, where);
            if (first) {
                log.header = parse_run_header(j);
                first = false;
            } else {
                log.entries.push_back(parse_log_entry(j, where));
            }
        });
        if (first) throw SchemaViolation("runlog: empty file");
        return log;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw MissingFile("cannot write " + path.string());
        out << to_jsonl();
    }

    static RunLog load(const std::filesystem::path& path) { return from_jsonl(detail::read_file(path)); }

    friend bool operator==(const RunLog&, const RunLog&) = default;
};

}  // namespace sitewatch
