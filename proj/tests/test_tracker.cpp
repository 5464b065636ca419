#include <gtest/gtest.h>

#include <map>
#include <vector>

#include "sitewatch/rng.hpp"
#include "sitewatch/tracker.hpp"

using namespace sitewatch;

namespace {

FrameRecord frame(const std::string& node, std::uint64_t index, std::vector<Detection> dets) {
    FrameRecord f;
    f.node_id = node;
    f.frame_index = index;
    f.timestamp = static_cast<double>(index) * 200.0;
    f.detections = std::move(dets);
    return f;
}

Detection person(BBox b, double c) { return {DetectionClass::person, b, c}; }

const BBox kBox{0.2, 0.2, 0.4, 0.6};

std::vector<FrameRecord> random_stream(const std::string& node, std::size_t frames, DeterministicRng& rng) {
    std::vector<FrameRecord> out;
    for (std::size_t i = 0; i < frames; ++i) {
        std::vector<Detection> dets;
        const int n = rng.poisson(1.5);
        for (int k = 0; k < n; ++k) {
            const double x = rng.uniform(0.0, 0.7);
            const double y = rng.uniform(0.0, 0.7);
            const auto cls = kAllClasses[static_cast<std::size_t>(rng.uniform() * 4.0) % 4];
            dets.push_back({cls, {x, y, x + rng.uniform(0.05, 0.3), y + rng.uniform(0.05, 0.3)}, rng.uniform()});
        }
        out.push_back(frame(node, i, std::move(dets)));
    }
    return out;
}

}  // namespace

TEST(Associate, IdenticalBoxMatches) {
    Track t;
    t.last_bbox = kBox;
    const std::vector<Track> tracks{t};
    const std::vector<Detection> dets{person(kBox, 0.9)};
    const auto a = associate(tracks, dets, TrackerParams{});
    ASSERT_EQ(a.matches.size(), 1u);
    EXPECT_EQ(a.matches[0], std::make_pair(std::size_t{0}, std::size_t{0}));
}

TEST(Associate, DisjointBoxesStayUnmatched) {
    Track t;
    t.last_bbox = kBox;
    const std::vector<Track> tracks{t};
    const std::vector<Detection> dets{person({0.7, 0.7, 0.9, 0.9}, 0.9)};
    const auto a = associate(tracks, dets, TrackerParams{});
    EXPECT_TRUE(a.matches.empty());
    EXPECT_EQ(a.unmatched_tracks.size(), 1u);
    EXPECT_EQ(a.unmatched_detections.size(), 1u);
}

TEST(Associate, ClassGated) {
    Track t;
    t.cls = DetectionClass::heavy_vehicle;
    t.last_bbox = kBox;
    const std::vector<Track> tracks{t};
    const std::vector<Detection> dets{person(kBox, 0.9)};
    EXPECT_TRUE(associate(tracks, dets, TrackerParams{}).matches.empty());
}

TEST(Associate, TieGoesToLowerTrackId) {
    Track a, b;
    a.track_id = 5;
    b.track_id = 2;
    a.last_bbox = b.last_bbox = kBox;
    const std::vector<Track> tracks{a, b};
    const std::vector<Detection> dets{person(kBox, 0.9)};
    const auto r = associate(tracks, dets, TrackerParams{});
    ASSERT_EQ(r.matches.size(), 1u);
    EXPECT_EQ(r.matches[0].first, 1u);
}

TEST(Tracker, AlphaOnePassesConfidenceThrough) {
    NodeTracker nt("cam1");
    TrackerParams p;
    p.confidence_smoothing_alpha = 1.0;
    nt.update(frame("cam1", 0, {person(kBox, 0.2)}), p);
    const auto out = nt.update(frame("cam1", 1, {person(kBox, 0.7)}), p);
    ASSERT_EQ(out.live.size(), 1u);
    EXPECT_DOUBLE_EQ(out.live[0].smoothed_confidence, 0.7);
}

TEST(Tracker, EmptyStateThreeDetectionsThreeTentativeTracks) {
    NodeTracker nt("cam1");
    const auto out = nt.update(frame("cam1", 0,
                                     {person({0.0, 0.0, 0.1, 0.1}, 0.9), person({0.3, 0.3, 0.4, 0.4}, 0.9),
                                      person({0.6, 0.6, 0.7, 0.7}, 0.9)}),
                               TrackerParams{});
    ASSERT_EQ(out.live.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(out.live[i].state, TrackState::tentative);
        EXPECT_EQ(out.live[i].track_id, i);
    }
}

TEST(Tracker, EmaThenDecay) {
    NodeTracker nt("cam1");
    TrackerParams p;
    p.confidence_smoothing_alpha = 0.5;
    p.miss_decay = 0.9;
    nt.update(frame("cam1", 0, {person(kBox, 0.8)}), p);
    auto out = nt.update(frame("cam1", 1, {person(kBox, 0.4)}), p);
    EXPECT_NEAR(out.live[0].smoothed_confidence, 0.6, 1e-12);
    out = nt.update(frame("cam1", 2, {}), p);
    EXPECT_NEAR(out.live[0].smoothed_confidence, 0.54, 1e-12);
}

TEST(Tracker, ConfirmsAfterConfirmHits) {
    TrackerParams p;
    p.confirm_hits = 3;
    NodeTracker nt("cam1");
    EXPECT_EQ(nt.update(frame("cam1", 0, {person(kBox, 0.9)}), p).live[0].state, TrackState::tentative);
    EXPECT_EQ(nt.update(frame("cam1", 1, {person(kBox, 0.9)}), p).live[0].state, TrackState::tentative);
    EXPECT_EQ(nt.update(frame("cam1", 2, {person(kBox, 0.9)}), p).live[0].state, TrackState::confirmed);

    p.confirm_hits = 1;
    NodeTracker quick("cam1");
    EXPECT_EQ(quick.update(frame("cam1", 0, {person(kBox, 0.9)}), p).live[0].state, TrackState::confirmed);
}

TEST(Tracker, ExpiresOnExactlyTheNthMiss) {
    for (std::uint32_t n : {1u, 2u, 3u, 5u}) {
        TrackerParams p;
        p.expire_after_misses = n;
        NodeTracker nt("cam1");
        nt.update(frame("cam1", 0, {person(kBox, 0.9)}), p);
        for (std::uint32_t miss = 1; miss <= n; ++miss) {
            const auto out = nt.update(frame("cam1", miss, {}), p);
            if (miss < n) {
                EXPECT_EQ(out.live.size(), 1u) << "n=" << n << " miss=" << miss;
                EXPECT_TRUE(out.expired.empty());
            } else {
                EXPECT_TRUE(out.live.empty()) << "n=" << n;
                ASSERT_EQ(out.expired.size(), 1u);
                EXPECT_EQ(out.expired[0].state, TrackState::expired);
            }
        }
    }
}

TEST(Tracker, OutOfOrderFrameRejected) {
    NodeTracker nt("cam1");
    nt.update(frame("cam1", 4, {}), TrackerParams{});
    EXPECT_THROW(nt.update(frame("cam1", 4, {}), TrackerParams{}), OutOfOrderFrame);
    EXPECT_THROW(nt.update(frame("cam1", 2, {}), TrackerParams{}), OutOfOrderFrame);
}

TEST(Tracker, DuplicateDetectionsCannotShareATrack) {
    NodeTracker nt("cam1");
    TrackerParams p;
    nt.update(frame("cam1", 0, {person(kBox, 0.9)}), p);
    const BBox nudged{0.21, 0.2, 0.41, 0.6};
    const auto out = nt.update(frame("cam1", 1, {person(kBox, 0.9), person(nudged, 0.8)}), p);
    ASSERT_EQ(out.live.size(), 2u);
    EXPECT_EQ(out.live[0].hit_count, 2u);
    EXPECT_EQ(out.live[1].hit_count, 1u);
}

TEST(TrackerProperty, RandomStreamsKeepInvariants) {
    DeterministicRng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        TrackerParams p;
        p.confidence_smoothing_alpha = rng.uniform(0.05, 1.0);
        p.miss_decay = rng.uniform(0.05, 1.0);
        p.confirm_hits = 1 + static_cast<std::uint32_t>(rng.uniform() * 4.0);
        p.expire_after_misses = 1 + static_cast<std::uint32_t>(rng.uniform() * 4.0);
        NodeTracker nt("cam1");
        std::map<TrackId, Track> previous;
        for (const auto& f : random_stream("cam1", 40, rng)) {
            const auto prior_live = nt.live().size();
            const auto out = nt.update(f, p);
            EXPECT_LE(out.live.size() + out.expired.size(), prior_live + f.detections.size());
            std::map<TrackId, Track> now;
            for (const auto& t : out.live) {
                EXPECT_GE(t.smoothed_confidence, 0.0);
                EXPECT_LE(t.smoothed_confidence, 1.0);
                EXPECT_NE(t.state, TrackState::expired);
                if (auto it = previous.find(t.track_id); it != previous.end()) {
                    EXPECT_GE(t.hit_count, it->second.hit_count);
                    if (it->second.state == TrackState::confirmed) EXPECT_EQ(t.state, TrackState::confirmed);
                }
                now[t.track_id] = t;
            }
            for (const auto& t : out.expired) {
                EXPECT_EQ(t.miss_count, p.expire_after_misses);
                EXPECT_TRUE(previous.count(t.track_id));
            }
            previous = std::move(now);
        }
    }
}

TEST(TrackerProperty, Deterministic) {
    DeterministicRng rng(3);
    const auto stream = random_stream("cam1", 60, rng);
    auto history = [&] {
        NodeTracker nt("cam1");
        std::vector<std::vector<Track>> h;
        for (const auto& f : stream) h.push_back(nt.update(f, TrackerParams{}).live);
        return h;
    };
    EXPECT_EQ(history(), history());
}

TEST(TrackerProperty, PerNodeIndependence) {
    DeterministicRng rng(8);
    const auto a = random_stream("camA", 50, rng);
    const auto b = random_stream("camB", 50, rng);
    const TrackerParams p;

    auto alone = [&](const std::vector<FrameRecord>& s) {
        TrackerState st;
        std::vector<std::vector<Track>> h;
        for (const auto& f : s) h.push_back(update_tracks(st, f, p).live);
        return h;
    };
    const auto ha = alone(a);
    const auto hb = alone(b);

    for (int order = 0; order < 20; ++order) {
        TrackerState st;
        std::vector<std::vector<Track>> ia, ib;
        std::size_t i = 0, j = 0;
        while (i < a.size() || j < b.size()) {
            const bool take_a = j >= b.size() || (i < a.size() && rng.bernoulli(0.5));
            if (take_a)
                ia.push_back(update_tracks(st, a[i++], p).live);
            else
                ib.push_back(update_tracks(st, b[j++], p).live);
        }
        EXPECT_EQ(ia, ha);
        EXPECT_EQ(ib, hb);
    }
}
