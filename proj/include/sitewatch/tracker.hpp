#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sitewatch/clipstore.hpp"
#include "sitewatch/matching.hpp"

namespace sitewatch {

using TrackId = std::uint64_t;

enum class TrackState { tentative, confirmed, expired };

inline std::string_view to_string(TrackState s) {
    switch (s) {
        case TrackState::tentative: return "tentative";
        case TrackState::confirmed: return "confirmed";
        case TrackState::expired: return "expired";
    }
    return "tentative";
}

inline std::optional<TrackState> parse_track_state(std::string_view s) {
    for (auto v : {TrackState::tentative, TrackState::confirmed, TrackState::expired})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

/// Track ids are allocated per node, so (node_id, track_id) identifies a
/// track within a run.
struct Track {
    TrackId track_id = 0;
    std::string node_id;
    DetectionClass cls = DetectionClass::person;
    double smoothed_confidence = 0.0;
    BBox last_bbox;
    std::uint64_t last_seen_frame = 0;
    std::uint32_t hit_count = 1;
    std::uint32_t miss_count = 0;  // consecutive frames without a match
    TrackState state = TrackState::tentative;

    friend bool operator==(const Track&, const Track&) = default;
};

struct TrackerParams {
    double iou_match_threshold = 0.3;         // (0,1)
    double confidence_smoothing_alpha = 0.6;  // (0,1]
    std::uint32_t confirm_hits = 2;           // >= 1
    double miss_decay = 0.8;                  // (0,1]
    std::uint32_t expire_after_misses = 3;    // >= 1

    friend bool operator==(const TrackerParams&, const TrackerParams&) = default;
};

template <class Err = ValidationError>
void validate(const TrackerParams& p) {
    if (!(p.iou_match_threshold > 0.0 && p.iou_match_threshold < 1.0))
        throw Err("tracker_params.iou_match_threshold must be in (0,1)");
    if (!(p.confidence_smoothing_alpha > 0.0 && p.confidence_smoothing_alpha <= 1.0))
        throw Err("tracker_params.confidence_smoothing_alpha must be in (0,1]");
    if (p.confirm_hits < 1) throw Err("tracker_params.confirm_hits must be >= 1");
    if (!(p.miss_decay > 0.0 && p.miss_decay <= 1.0)) throw Err("tracker_params.miss_decay must be in (0,1]");
    if (p.expire_after_misses < 1) throw Err("tracker_params.expire_after_misses must be >= 1");
}

struct Association {
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track index, detection index)
    std::vector<std::size_t> unmatched_tracks;
    std::vector<std::size_t> unmatched_detections;
};

/// Globally greedy one-to-one matching by descending IoU. Only same-class
/// pairs with IoU >= threshold are eligible; ties go to the lower track_id,
/// then the lower detection index. Matches come back sorted by track index.
inline Association associate(std::span<const Track> tracks, std::span<const Detection> detections,
                             const TrackerParams& params) {
    ScoreMatrix scores(tracks.size(), std::vector<double>(detections.size(), 0.0));
    std::vector<std::uint64_t> keys(tracks.size());
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
        keys[ti] = tracks[ti].track_id;
        for (std::size_t di = 0; di < detections.size(); ++di)
            if (tracks[ti].cls == detections[di].cls) scores[ti][di] = iou(tracks[ti].last_bbox, detections[di].bbox);
    }
    Association out;
    out.matches = greedy_assignment(scores, params.iou_match_threshold, keys);

    std::vector<bool> track_used(tracks.size(), false);
    std::vector<bool> det_used(detections.size(), false);
    for (const auto& [ti, di] : out.matches) track_used[ti] = det_used[di] = true;
    for (std::size_t i = 0; i < tracks.size(); ++i)
        if (!track_used[i]) out.unmatched_tracks.push_back(i);
    for (std::size_t i = 0; i < detections.size(); ++i)
        if (!det_used[i]) out.unmatched_detections.push_back(i);
    return out;
}

/// Result of one tracker step on one node.
struct FrameTracks {
    std::vector<Track> live;     // ordered by track_id
    std::vector<Track> expired;  // tracks that expired on this frame
};

/// Tracker state for a single node. Single-writer; different nodes are
/// independent and may be stepped concurrently.
class NodeTracker {
public:
    explicit NodeTracker(std::string node_id) : node_id_(std::move(node_id)) {}

    FrameTracks update(const FrameRecord& frame, const TrackerParams& params) {
        if (frame.node_id != node_id_)
            throw InvariantViolation("frame for node '" + frame.node_id + "' routed to tracker '" + node_id_ + "'");
        if (last_frame_ && frame.frame_index <= *last_frame_)
            throw OutOfOrderFrame("node '" + node_id_ + "': frame " + std::to_string(frame.frame_index) +
                                  " after " + std::to_string(*last_frame_));
        last_frame_ = frame.frame_index;

        const Association assoc = associate(tracks_, frame.detections, params);
        const double alpha = params.confidence_smoothing_alpha;

        for (const auto& [ti, di] : assoc.matches) {
            Track& t = tracks_[ti];
            const Detection& d = frame.detections[di];
            t.smoothed_confidence = std::clamp(alpha * d.confidence + (1.0 - alpha) * t.smoothed_confidence, 0.0, 1.0);
            t.last_bbox = d.bbox;
            t.last_seen_frame = frame.frame_index;
            ++t.hit_count;
            t.miss_count = 0;
            if (t.state == TrackState::tentative && t.hit_count >= params.confirm_hits) t.state = TrackState::confirmed;
        }

        FrameTracks out;
        for (std::size_t ti : assoc.unmatched_tracks) {
            Track& t = tracks_[ti];
            t.smoothed_confidence = std::clamp(params.miss_decay * t.smoothed_confidence, 0.0, 1.0);
            ++t.miss_count;
            if (t.miss_count >= params.expire_after_misses) t.state = TrackState::expired;
        }

        for (std::size_t di : assoc.unmatched_detections) {
            const Detection& d = frame.detections[di];
            Track t;
            t.track_id = next_id_++;
            t.node_id = node_id_;
            t.cls = d.cls;
            t.smoothed_confidence = d.confidence;
            t.last_bbox = d.bbox;
            t.last_seen_frame = frame.frame_index;
            t.hit_count = 1;
            t.state = params.confirm_hits <= 1 ? TrackState::confirmed : TrackState::tentative;
            tracks_.push_back(t);
        }

        std::vector<Track> keep;
        keep.reserve(tracks_.size());
        for (auto& t : tracks_) {
            if (t.state == TrackState::expired)
                out.expired.push_back(t);
            else
                keep.push_back(t);
        }
        tracks_ = std::move(keep);
        // Ids are allocated in increasing order and survivors keep their
        // relative order, so tracks_ is already sorted by id.
        out.live = tracks_;
        return out;
    }

    const std::string& node_id() const { return node_id_; }
    const std::vector<Track>& live() const { return tracks_; }
    std::optional<std::uint64_t> last_frame() const { return last_frame_; }
    TrackId next_track_id() const { return next_id_; }

private:
    std::string node_id_;
    std::vector<Track> tracks_;
    TrackId next_id_ = 0;
    std::optional<std::uint64_t> last_frame_;
};

/// Live tracks for every node plus their id counters.
class TrackerState {
public:
    NodeTracker& node(const std::string& node_id) {
        auto it = nodes_.find(node_id);
        if (it == nodes_.end()) it = nodes_.emplace(node_id, NodeTracker(node_id)).first;
        return it->second;
    }

    const std::map<std::string, NodeTracker>& nodes() const { return nodes_; }

private:
    std::map<std::string, NodeTracker> nodes_;
};

inline FrameTracks update_tracks(TrackerState& state, const FrameRecord& frame, const TrackerParams& params) {
    return state.node(frame.node_id).update(frame, params);
}

}  // namespace sitewatch
