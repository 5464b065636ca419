#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sitewatch/error.hpp"
#include "sitewatch/geometry.hpp"
#include "sitewatch/json_io.hpp"

namespace sitewatch {

enum class DetectionClass { person, light_vehicle, heavy_vehicle, demarcation };

inline constexpr std::array<DetectionClass, 4> kAllClasses{
    DetectionClass::person, DetectionClass::light_vehicle, DetectionClass::heavy_vehicle,
    DetectionClass::demarcation};

inline std::string_view to_string(DetectionClass c) {
    switch (c) {
        case DetectionClass::person: return "person";
        case DetectionClass::light_vehicle: return "light_vehicle";
        case DetectionClass::heavy_vehicle: return "heavy_vehicle";
        case DetectionClass::demarcation: return "demarcation";
    }
    return "person";
}

inline std::optional<DetectionClass> parse_class(std::string_view s) {
    for (DetectionClass c : kAllClasses)
        if (to_string(c) == s) return c;
    return std::nullopt;
}

struct Detection {
    DetectionClass cls = DetectionClass::person;
    BBox bbox;
    double confidence = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct FrameRecord {
    std::string node_id;
    std::uint64_t frame_index = 0;
    double timestamp = 0.0;  // ms since clip start
    double quality = 1.0;
    std::vector<Detection> detections;

    friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct GroundTruthPerson {
    std::string person_id;
    std::string node_id;
    std::uint64_t entry_frame = 0;
    std::uint64_t exit_frame = 0;
    std::vector<BBox> bboxes;  // one per frame in [entry_frame, exit_frame]

    bool present(std::uint64_t frame) const { return frame >= entry_frame && frame <= exit_frame; }
    const BBox& bbox_at(std::uint64_t frame) const { return bboxes.at(frame - entry_frame); }

    friend bool operator==(const GroundTruthPerson&, const GroundTruthPerson&) = default;
};

struct Clip {
    std::string clip_id;
    double frame_rate = 0.0;  // frames per second
    double duration = 0.0;    // seconds
    std::vector<std::string> node_ids;
    std::map<std::string, std::vector<FrameRecord>> streams;
    std::vector<GroundTruthPerson> ground_truth;

    std::size_t frame_count() const {
        return streams.empty() ? 0 : streams.begin()->second.size();
    }
    const std::vector<FrameRecord>& stream(const std::string& node) const { return streams.at(node); }

    friend bool operator==(const Clip&, const Clip&) = default;
};

struct QualityVerdict {
    bool pass = true;
    std::optional<std::string> advisory;  // present iff !pass
};

/// Closed threshold. A failing frame still flows downstream; the verdict only
/// advises the operator.
inline QualityVerdict quality_gate(const FrameRecord& frame, double min_quality) {
    if (frame.quality >= min_quality) return {true, std::nullopt};
    std::ostringstream msg;
    msg << "node " << frame.node_id << " frame " << frame.frame_index << ": image quality "
        << frame.quality << " below operating threshold " << min_quality;
    return {false, msg.str()};
}

// ---------------------------------------------------------------------------
// JSON mapping

inline Json to_json(const BBox& b) {
    return Json{{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}

template <class Err = SchemaViolation>
BBox parse_bbox(const Json& j, const std::string& where) {
    ObjectReader<Err> r(j, where);
    BBox b;
    b.x_min = r.number_in("x_min", 0.0, 1.0);
    b.y_min = r.number_in("y_min", 0.0, 1.0);
    b.x_max = r.number_in("x_max", 0.0, 1.0);
    b.y_max = r.number_in("y_max", 0.0, 1.0);
    r.finish();
    if (!(b.x_min < b.x_max && b.y_min < b.y_max))
        throw Err(where + ": degenerate rectangle (need x_min < x_max and y_min < y_max)");
    return b;
}

template <class Err = SchemaViolation>
DetectionClass parse_class_field(const Json& j, const std::string& where) {
    auto name = detail::convert<Err, std::string>(j, where);
    auto c = parse_class(name);
    if (!c) throw Err(where + ": unknown class '" + name + "'");
    return *c;
}

inline Json to_json(const Detection& d) {
    return Json{{"class", to_string(d.cls)}, {"bbox", to_json(d.bbox)}, {"confidence", d.confidence}};
}

inline Detection parse_detection(const Json& j, const std::string& where) {
    ObjectReader<SchemaViolation> r(j, where);
    Detection d;
    d.cls = parse_class_field(r.json("class"), r.where("class"));
    d.bbox = parse_bbox(r.json("bbox"), r.where("bbox"));
    d.confidence = r.number_in("confidence", 0.0, 1.0);
    r.finish();
    return d;
}

inline Json to_json(const FrameRecord& f) {
    Json dets = Json::array();
    for (const auto& d : f.detections) dets.push_back(to_json(d));
    return Json{{"node_id", f.node_id},
                {"frame_index", f.frame_index},
                {"timestamp", f.timestamp},
                {"quality", f.quality},
                {"detections", std::move(dets)}};
}

inline FrameRecord parse_frame(const Json& j, const std::string& where) {
    ObjectReader<SchemaViolation> r(j, where);
    FrameRecord f;
    f.node_id = r.get<std::string>("node_id");
    f.frame_index = r.get<std::uint64_t>("frame_index");
    f.timestamp = r.get<double>("timestamp");
    if (!(f.timestamp >= 0.0) || !std::isfinite(f.timestamp))
        throw SchemaViolation(r.where("timestamp") + ": must be a finite non-negative number");
    f.quality = r.number_in("quality", 0.0, 1.0);
    const Json& dets = expect_array<SchemaViolation>(r.json("detections"), r.where("detections"));
    for (std::size_t i = 0; i < dets.size(); ++i)
        f.detections.push_back(parse_detection(dets[i], r.where("detections") + "[" + std::to_string(i) + "]"));
    r.finish();
    return f;
}

inline Json to_json(const GroundTruthPerson& p) {
    Json boxes = Json::array();
    for (const auto& b : p.bboxes) boxes.push_back(to_json(b));
    return Json{{"person_id", p.person_id},
                {"node_id", p.node_id},
                {"entry_frame", p.entry_frame},
                {"exit_frame", p.exit_frame},
                {"bboxes", std::move(boxes)}};
}

inline GroundTruthPerson parse_ground_truth(const Json& j, const std::string& where) {
    ObjectReader<SchemaViolation> r(j, where);
    GroundTruthPerson p;
    p.person_id = r.get<std::string>("person_id");
    p.node_id = r.get<std::string>("node_id");
    p.entry_frame = r.get<std::uint64_t>("entry_frame");
    p.exit_frame = r.get<std::uint64_t>("exit_frame");
    const Json& boxes = expect_array<SchemaViolation>(r.json("bboxes"), r.where("bboxes"));
    for (std::size_t i = 0; i < boxes.size(); ++i)
        p.bboxes.push_back(parse_bbox(boxes[i], r.where("bboxes") + "[" + std::to_string(i) + "]"));
    r.finish();
    return p;
}

// ---------------------------------------------------------------------------
// Validation

inline bool valid_node_id(std::string_view id) {
    if (id.empty()) return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '_' || c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

/// Checks every cross-record invariant of a clip. Field ranges are assumed
/// already enforced by the parsers (or by construction in synthesis).
inline void validate_clip(const Clip& clip) {
    if (clip.clip_id.empty()) throw SchemaViolation("clip.clip_id: must be non-empty");
    if (!(clip.frame_rate > 0.0)) throw SchemaViolation("clip.frame_rate: must be positive");
    if (!(clip.duration > 0.0)) throw SchemaViolation("clip.duration: must be positive");
    if (clip.node_ids.empty()) throw SchemaViolation("clip.nodes: at least one node required");

    std::set<std::string> seen;
    for (const auto& n : clip.node_ids) {
        if (!valid_node_id(n)) throw SchemaViolation("clip.nodes: invalid node id '" + n + "'");
        if (!seen.insert(n).second) throw SchemaViolation("clip.nodes: duplicate node id '" + n + "'");
        if (!clip.streams.count(n)) throw InvariantViolation("node '" + n + "' has no frame stream");
    }
    if (clip.streams.size() != clip.node_ids.size())
        throw InvariantViolation("frame streams present for nodes not listed in the header");

    const auto& reference = clip.streams.at(clip.node_ids.front());
    const std::size_t count = reference.size();
    if (count == 0) throw InvariantViolation("clip has no frames");
    for (const auto& node : clip.node_ids) {
        const auto& frames = clip.streams.at(node);
        if (frames.size() != count)
            throw InvariantViolation("node '" + node + "' has " + std::to_string(frames.size()) +
                                     " frames, expected " + std::to_string(count));
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const auto& f = frames[i];
            if (f.node_id != node)
                throw InvariantViolation("frame " + std::to_string(i) + " in stream '" + node +
                                         "' carries node_id '" + f.node_id + "'");
            if (f.frame_index != i)
                throw InvariantViolation("node '" + node + "': gap in frame indices at position " +
                                         std::to_string(i) + " (found " + std::to_string(f.frame_index) + ")");
            if (i > 0 && !(f.timestamp > frames[i - 1].timestamp))
                throw InvariantViolation("node '" + node + "': non-monotone timestamp at frame " +
                                         std::to_string(i));
            if (f.timestamp != reference[i].timestamp)
                throw InvariantViolation("node '" + node + "': frame " + std::to_string(i) +
                                         " is off the shared frame clock");
            for (const auto& d : f.detections)
                if (!d.bbox.valid() || d.confidence < 0.0 || d.confidence > 1.0)
                    throw InvariantViolation("node '" + node + "' frame " + std::to_string(i) +
                                             ": detection out of range");
        }
    }
    const double expected = static_cast<double>(count) / clip.frame_rate;
    if (std::abs(expected - clip.duration) > 1.0 / clip.frame_rate + 1e-9)
        throw InvariantViolation("duration " + Json(clip.duration).dump() + " s disagrees with " +
                                 std::to_string(count) + " frames at " + Json(clip.frame_rate).dump() + " fps");

    std::set<std::string> person_ids;
    for (const auto& p : clip.ground_truth) {
        if (!person_ids.insert(p.person_id).second)
            throw InvariantViolation("duplicate ground-truth person '" + p.person_id + "'");
        if (!seen.count(p.node_id))
            throw InvariantViolation("person '" + p.person_id + "' references unknown node '" + p.node_id + "'");
        if (p.entry_frame > p.exit_frame)
            throw InvariantViolation("person '" + p.person_id + "': entry_frame after exit_frame");
        if (p.exit_frame >= count)
            throw InvariantViolation("person '" + p.person_id + "': exit_frame beyond the clip");
        if (p.bboxes.size() != p.exit_frame - p.entry_frame + 1)
            throw InvariantViolation("person '" + p.person_id + "': need one bbox per frame in the interval");
        for (const auto& b : p.bboxes)
            if (!b.valid()) throw InvariantViolation("person '" + p.person_id + "': bbox out of range");
    }
}

// ---------------------------------------------------------------------------
// Bundle I/O

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw MissingFile("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Json parse_json_text(const std::string& text, const std::string& where) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaViolation(where + ": " + e.what());
    }
}

template <class F>
void for_each_line(const std::string& text, F&& f) {
    std::size_t start = 0;
    std::size_t line_no = 1;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) f(std::string(line), line_no);
        start = end + 1;
        ++line_no;
    }
}

}  // namespace detail

inline Json clip_header_json(const Clip& clip) {
    return Json{{"clip_id", clip.clip_id},
                {"frame_rate", clip.frame_rate},
                {"duration", clip.duration},
                {"nodes", clip.node_ids}};
}

inline Clip load_clip(const std::filesystem::path& dir) {
    const auto header_path = dir / "clip.json";
    if (!std::filesystem::exists(header_path)) throw MissingFile("missing " + header_path.string());

    Clip clip;
    {
        const Json h = detail::parse_json_text(detail::read_file(header_path), "clip.json");
        ObjectReader<SchemaViolation> r(h, "clip.json");
        clip.clip_id = r.get<std::string>("clip_id");
        clip.frame_rate = r.get<double>("frame_rate");
        clip.duration = r.get<double>("duration");
        const Json& nodes = expect_array<SchemaViolation>(r.json("nodes"), "clip.json.nodes");
        for (const auto& n : nodes) clip.node_ids.push_back(detail::convert<SchemaViolation, std::string>(n, "clip.json.nodes[]"));
        r.finish();
    }
    for (const auto& node : clip.node_ids) {
        if (!valid_node_id(node)) throw SchemaViolation("clip.json.nodes: invalid node id '" + node + "'");
        const auto name = "frames_" + node + ".jsonl";
        const auto path = dir / name;
        if (!std::filesystem::exists(path)) throw MissingFile("missing " + path.string());
        auto& frames = clip.streams[node];
        detail::for_each_line(detail::read_file(path), [&](const std::string& line, std::size_t no) {
            const auto where = name + ":" + std::to_string(no);
            frames.push_back(parse_frame(detail::parse_json_text(line, where), where));
        });
    }
    const auto gt_path = dir / "ground_truth.jsonl";
    if (!std::filesystem::exists(gt_path)) throw MissingFile("missing " + gt_path.string());
    detail::for_each_line(detail::read_file(gt_path), [&](const std::string& line, std::size_t no) {
        const auto where = "ground_truth.jsonl:" + std::to_string(no);
        clip.ground_truth.push_back(parse_ground_truth(detail::parse_json_text(line, where), where));
    });

    validate_clip(clip);
    return clip;
}

/// Writes the canonical form of a bundle; load_clip followed by save_clip
/// reproduces a canonical bundle byte for byte.
inline void save_clip(const Clip& clip, const std::filesystem::path& dir) {
    validate_clip(clip);
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "clip.json", std::ios::binary | std::ios::trunc);
        out << clip_header_json(clip).dump(2) << '\n';
    }
    for (const auto& node : clip.node_ids) {
        std::ofstream out(dir / ("frames_" + node + ".jsonl"), std::ios::binary | std::ios::trunc);
        for (const auto& f : clip.streams.at(node)) out << to_json(f).dump() << '\n';
    }
    std::ofstream out(dir / "ground_truth.jsonl", std::ios::binary | std::ios::trunc);
    for (const auto& p : clip.ground_truth) out << to_json(p).dump() << '\n';
}

}  // namespace sitewatch
