#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <set>
#include <string>

#include "sitewatch/controlplane.hpp"
#include "sitewatch/runlog.hpp"
#include "sitewatch/scenario.hpp"

using namespace sitewatch;
namespace fs = std::filesystem;

namespace {

Clip noisy_clip() {
    ScenarioSpec s;
    s.scenario_id = "yard";
    s.frame_rate = 5.0;
    s.duration = 8.0;
    s.nodes = {"cam1"};
    s.noise = {0.1, 0.1, 0.02, 0.5, 0.2, 0.6};
    s.quality = {0.5, 0.2};
    ScriptedPerson p;
    p.person_id = "p1";
    p.node_id = "cam1";
    p.confidence = 0.85;
    p.waypoints = {{5, {0.1, 0.3, 0.2, 0.6}}, {30, {0.3, 0.3, 0.4, 0.6}}};
    s.persons.push_back(p);
    return synth_clip(s, 17);
}

// One entry of every kind, including the ones a quiet replay never emits.
RunLog every_kind() {
    RunLog log;
    log.header.seed = 5;
    log.header.capture = CaptureMode::harness_loop;
    log.header.clip_ids = {"c1"};
    log.header.topology = MeshTopology::single_band();

    Track t;
    t.track_id = 2;
    t.node_id = "cam1~1";
    t.smoothed_confidence = 0.625;
    t.last_bbox = {0.1, 0.2, 0.3, 0.4};
    t.state = TrackState::confirmed;
    AlertEvent ev{0, 100.0, "cam1~1", 2, DetectionClass::person, 0.625};
    DeliveryRecord d{0, "band1", 1, 100.0, 109.0, {109.0, 2000.0}};

    std::uint64_t seq = 0;
    auto add = [&](double at, LogPayload p) { log.entries.push_back({seq++, at, std::move(p)}); };
    add(0.0, ConfigEntry{0, PipelineConfig::for_mode(Mode::Reactive)});
    add(0.0, ClipStartEntry{"c1", 0.0, {{"cam1", "cam1"}, {"cam1~1", "cam1"}}});
    add(100.0, FrameEntry{"c1", "cam1~1", 0, 0.0, 0.25, false, 1, 0});
    add(100.0, AdvisoryEntry{"cam1~1", 0, "frame quality 0.25 below 0.5"});
    add(100.0, TracksEntry{"cam1~1", 0, {t}, {}});
    add(100.0, CandidatesEntry{"cam1~1", 0, {2}});
    add(100.0, AlertEntry{ev, 0, {"band1", "ghost"}});
    add(100.0, UnreachableEntry{0, "ghost"});
    add(109.0, DeliveryEntry{d});
    add(109.0, RunEndEntry{true, 1});
    return log;
}

}  // namespace

TEST(RunLogFormat, EveryKindRoundTrips) {
    const auto log = every_kind();
    const auto text = log.to_jsonl();
    const auto back = RunLog::from_jsonl(text);
    EXPECT_EQ(back, log);
    EXPECT_EQ(back.to_jsonl(), text);
    EXPECT_TRUE(back.aborted());

    std::set<std::string_view> kinds;
    for (const auto& e : back.entries) kinds.insert(e.kind());
    EXPECT_EQ(kinds.size(), kEventKinds.size());
}

TEST(RunLogFormat, ReplayRoundTripIsByteIdentical) {
    RunSpec spec;
    spec.clips = {noisy_clip()};
    spec.config = PipelineConfig::for_mode(Mode::Reactive);
    const auto log = run_replay(spec);
    const auto path = fs::temp_directory_path() / ("sitewatch_runlog_" + std::to_string(::getpid()) + ".jsonl");
    log.save(path);
    const auto loaded = RunLog::load(path);
    EXPECT_EQ(loaded, log);
    EXPECT_EQ(loaded.to_jsonl(), log.to_jsonl());
    fs::remove(path);
}

TEST(RunLogFormat, Rejections) {
    EXPECT_THROW(RunLog::from_jsonl(""), SchemaViolation);
    const auto text = every_kind().to_jsonl();
    const auto first_break = text.find('\n');
    // Body without its header.
    EXPECT_THROW(RunLog::from_jsonl(text.substr(first_break + 1)), SchemaViolation);
    auto bad = text;
    bad.replace(bad.find("\"advisory\""), 10, "\"whisper\"");
    EXPECT_THROW(RunLog::from_jsonl(bad), SchemaViolation);
    EXPECT_THROW(RunLog::from_jsonl(text + "{not json\n"), SchemaViolation);
}
