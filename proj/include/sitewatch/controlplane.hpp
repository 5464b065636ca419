#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "sitewatch/alertgate.hpp"
#include "sitewatch/alertnet.hpp"
#include "sitewatch/clipstore.hpp"
#include "sitewatch/runlog.hpp"
#include "sitewatch/tracker.hpp"

namespace sitewatch {

struct RunSpec {
    std::vector<Clip> clips;
    PipelineConfig config = PipelineConfig::for_mode(Mode::Default);
    MeshTopology topology = MeshTopology::single_band();
    ClockMode clock_mode = ClockMode::simulated;
    unsigned stream_duplication = 2;
    std::uint64_t seed = 0;
};

/// Loads clip bundles for a run; any load failure surfaces as ClipLoadError.
inline std::vector<Clip> load_clips(const std::vector<std::filesystem::path>& paths) {
    std::vector<Clip> clips;
    for (const auto& p : paths) {
        try {
            clips.push_back(load_clip(p));
        } catch (const Error& e) {
            throw ClipLoadError(p.string() + ": " + e.kind() + ": " + e.what());
        }
    }
    return clips;
}

struct ConfigSnapshot {
    std::uint64_t version = 0;
    std::shared_ptr<const PipelineConfig> config;
};

struct PacingStats {
    std::size_t frames = 0;
    double mean_error_ms = 0.0;  // mean of (processing start - scheduled time)
    double min_error_ms = 0.0;   // negative would mean a frame ran early
    double max_error_ms = 0.0;
};

struct RunHooks {
    /// Polled once per frame tick; changes take effect at the tick boundary.
    std::function<ConfigSnapshot()> config_source;
    std::stop_token stop;
    /// Receives every entry in run-log order (the event stream tap).
    std::function<void(const LogEntry&)> on_entry;
    PacingStats* pacing = nullptr;
};

namespace detail {

/// Single event-ordering writer. Deliveries land in the future on the run
/// clock, so they wait in a queue until the clock passes them.
class RunWriter {
public:
    RunWriter(RunLog& log, const std::function<void(const LogEntry&)>& sink) : log_(log), sink_(sink) {}

    void emit(double t, LogPayload payload) {
        LogEntry e{seq_++, t, std::move(payload)};
        last_t_ = std::max(last_t_, t);
        if (sink_) sink_(e);
        log_.entries.push_back(std::move(e));
    }

    void defer(DeliveryRecord r) { pending_.push({r.delivery_time, order_++, std::move(r)}); }

    /// Emits queued deliveries due at or before `t`.
    void flush_until(double t) {
        while (!pending_.empty() && pending_.top().time <= t) flush_one();
    }
    void flush_all() {
        while (!pending_.empty()) flush_one();
    }

    double last_t() const { return last_t_; }

private:
    struct Pending {
        double time;
        std::uint64_t order;
        DeliveryRecord record;
        bool operator>(const Pending& o) const { return std::tie(time, order) > std::tie(o.time, o.order); }
    };

    void flush_one() {
        auto p = pending_.top();
        pending_.pop();
        emit(p.time, DeliveryEntry{std::move(p.record)});
    }

    RunLog& log_;
    const std::function<void(const LogEntry&)>& sink_;
    std::uint64_t seq_ = 0;
    std::uint64_t order_ = 0;
    double last_t_ = 0.0;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
};

}  // namespace detail

/// Replays the RunSpec clips through quality gate -> tracker -> alert gate ->
/// debounce -> mesh dispatch. Each source stream is replayed under
/// `stream_duplication` node ids with independent tracker state. Clips run
/// back to back on one run clock; trackers reset per clip, the alert ledger
/// does not.
inline RunLog run_replay(const RunSpec& spec, const RunHooks& hooks = {}) {
    if (spec.stream_duplication < 1) throw ValidationError("stream_duplication must be >= 1");
    if (spec.clips.empty()) throw ValidationError("run needs at least one clip");
    if (!spec.topology.connected()) throw TopologyUnreachable("topology is not connected to the coordinator");
    validate(spec.config);
    for (const auto& c : spec.clips) {
        try {
            validate_clip(c);
        } catch (const Error& e) {
            throw ClipLoadError(c.clip_id + ": " + e.kind() + ": " + e.what());
        }
    }

    RunLog log;
    log.header.seed = spec.seed;
    log.header.clock_mode = spec.clock_mode;
    log.header.capture = CaptureMode::internal;
    log.header.duplication = spec.stream_duplication;
    log.header.topology = spec.topology;
    for (const auto& c : spec.clips) log.header.clip_ids.push_back(c.clip_id);

    detail::RunWriter writer(log, hooks.on_entry);
    ConfigSnapshot current{0, std::make_shared<const PipelineConfig>(spec.config)};
    if (hooks.config_source) current = hooks.config_source();
    writer.emit(0.0, ConfigEntry{current.version, *current.config});

    const auto targets = spec.topology.alert_targets();
    AlertLedger ledger;
    const auto wall_start = std::chrono::steady_clock::now();
    std::vector<double> pacing_errors;

    double offset = 0.0;
    std::uint64_t ticks = 0;
    bool aborted = false;
    for (const auto& clip : spec.clips) {
        if (hooks.stop.stop_requested()) {
            aborted = true;
            break;
        }
        ClipStartEntry start{clip.clip_id, offset, {}};
        std::vector<std::pair<std::string, std::string>> nodes;  // replay id, source id
        for (const auto& src : clip.node_ids)
            for (unsigned k = 0; k < spec.stream_duplication; ++k) {
                nodes.emplace_back(replica_node_id(src, k), src);
                start.nodes[nodes.back().first] = src;
            }
        std::sort(nodes.begin(), nodes.end());
        writer.flush_until(offset);
        writer.emit(offset, std::move(start));

        TrackerState trackers;
        const std::size_t frames = clip.frame_count();
        for (std::size_t i = 0; i < frames; ++i) {
            if (hooks.stop.stop_requested()) {
                aborted = true;
                break;
            }
            const double t = offset + clip.stream(clip.node_ids.front())[i].timestamp;
            if (spec.clock_mode == ClockMode::realtime) {
                const auto due = wall_start + std::chrono::duration<double, std::milli>(t);
                std::this_thread::sleep_until(std::chrono::time_point_cast<std::chrono::steady_clock::duration>(due));
                const auto now = std::chrono::steady_clock::now();
                pacing_errors.push_back(std::chrono::duration<double, std::milli>(now - due).count());
            }
            if (hooks.config_source) {
                auto snap = hooks.config_source();
                if (snap.version != current.version) {
                    current = std::move(snap);
                    writer.flush_until(t);
                    writer.emit(t, ConfigEntry{current.version, *current.config});
                }
            }
            const PipelineConfig& cfg = *current.config;
            writer.flush_until(t);

            std::vector<AlertCandidate> candidates;
            for (const auto& [node, src] : nodes) {
                FrameRecord frame = clip.stream(src)[i];
                frame.node_id = node;
                const auto verdict = quality_gate(frame, cfg.min_quality);
                writer.emit(t, FrameEntry{clip.clip_id, node, frame.frame_index, frame.timestamp, frame.quality,
                                          verdict.pass, frame.detections.size(), current.version});
                if (!verdict.pass) writer.emit(t, AdvisoryEntry{node, frame.frame_index, *verdict.advisory});

                auto tracks = update_tracks(trackers, frame, cfg.tracker_params);
                auto gated = evaluate_frame(tracks.live, cfg, t);
                CandidatesEntry ce{node, frame.frame_index, {}};
                for (const auto& c : gated) ce.track_ids.push_back(c.track_id);
                writer.emit(t, TracksEntry{node, frame.frame_index, std::move(tracks.live), std::move(tracks.expired)});
                writer.emit(t, std::move(ce));
                candidates.insert(candidates.end(), gated.begin(), gated.end());
            }
            std::sort(candidates.begin(), candidates.end(), [](const AlertCandidate& a, const AlertCandidate& b) {
                return std::tie(a.node_id, a.track_id) < std::tie(b.node_id, b.track_id);
            });
            for (const auto& cand : candidates) {
                auto delivered = debounce(cand, ledger, targets, t, cfg.debounce_window);
                if (delivered.empty()) continue;
                AlertEntry alert{delivered.front().second, i, {}};
                for (const auto& d : delivered) alert.devices.push_back(d.first);
                auto result = dispatch(alert.event, spec.topology, alert.devices, t);
                const auto event_id = alert.event.event_id;
                writer.emit(t, std::move(alert));
                for (auto& u : result.unreachable) writer.emit(t, UnreachableEntry{event_id, std::move(u)});
                for (auto& r : result.records) writer.defer(std::move(r));
            }
            ++ticks;
        }
        if (aborted) break;
        if (frames > 0) offset += clip.stream(clip.node_ids.front()).back().timestamp + 1000.0 / clip.frame_rate;
    }
    writer.flush_all();
    writer.emit(writer.last_t(), RunEndEntry{aborted, ticks});

    if (hooks.pacing && !pacing_errors.empty()) {
        auto& p = *hooks.pacing;
        p.frames = pacing_errors.size();
        p.mean_error_ms = std::accumulate(pacing_errors.begin(), pacing_errors.end(), 0.0) /
                          static_cast<double>(pacing_errors.size());
        p.min_error_ms = *std::min_element(pacing_errors.begin(), pacing_errors.end());
        p.max_error_ms = *std::max_element(pacing_errors.begin(), pacing_errors.end());
    }
    return log;
}

// ---------------------------------------------------------------------------
// Control messages

enum class ControlKind { get_config, set_config, set_zone, set_mode, start_run, stop_run, subscribe_events, frame_preview };

inline std::string_view to_string(ControlKind k) {
    switch (k) {
        case ControlKind::get_config: return "get_config";
        case ControlKind::set_config: return "set_config";
        case ControlKind::set_zone: return "set_zone";
        case ControlKind::set_mode: return "set_mode";
        case ControlKind::start_run: return "start_run";
        case ControlKind::stop_run: return "stop_run";
        case ControlKind::subscribe_events: return "subscribe_events";
        case ControlKind::frame_preview: return "frame_preview";
    }
    return "get_config";
}

inline std::optional<ControlKind> parse_control_kind(std::string_view s) {
    for (auto k : {ControlKind::get_config, ControlKind::set_config, ControlKind::set_zone, ControlKind::set_mode,
                   ControlKind::start_run, ControlKind::stop_run, ControlKind::subscribe_events,
                   ControlKind::frame_preview})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct ControlMessage {
    std::string request_id;
    ControlKind kind = ControlKind::get_config;
    Json payload = Json::object();
};

inline ControlMessage parse_control_message(const Json& j) {
    ObjectReader<ValidationError> r(j, "request");
    ControlMessage m;
    const Json& id = r.json("request_id");
    if (id.is_string())
        m.request_id = id.get<std::string>();
    else if (id.is_number_integer())
        m.request_id = id.dump();
    else
        throw ValidationError("request.request_id: expected string or integer");
    const auto kind = r.get<std::string>("kind");
    auto k = parse_control_kind(kind);
    if (!k) throw ValidationError("request.kind: unknown kind '" + kind + "'");
    m.kind = *k;
    if (const Json* p = r.optional_json("payload")) m.payload = *p;
    r.finish();
    return m;
}

/// Pure config transition for set_config / set_zone / set_mode.
inline PipelineConfig apply_config(const PipelineConfig& current, const ControlMessage& change) {
    switch (change.kind) {
        case ControlKind::set_config: return parse_config(change.payload, current);
        case ControlKind::set_mode: {
            ObjectReader<ValidationError> r(change.payload, "set_mode");
            const auto name = r.get<std::string>("mode");
            r.finish();
            auto m = parse_mode(name);
            if (!m) throw ValidationError("set_mode: unknown mode '" + name + "'");
            PipelineConfig next = current;
            next.select_mode(*m);
            return next;
        }
        case ControlKind::set_zone: {
            ObjectReader<ValidationError> r(change.payload, "set_zone");
            const auto node = r.get<std::string>("node_id");
            const Json* poly = r.optional_json("polygon");
            r.finish();
            PipelineConfig next = current;
            if (!poly || (poly->is_array() && poly->empty())) {
                next.zones.erase(node);
            } else {
                next.zones.insert_or_assign(node, Zone::make(parse_polygon(*poly, "set_zone.polygon")));
            }
            return next;
        }
        default: break;
    }
    throw ValidationError("apply_config: '" + std::string(to_string(change.kind)) + "' does not change the config");
}

// ---------------------------------------------------------------------------
// Event stream

inline constexpr std::size_t kDefaultEventBuffer = 1024;

/// One consumer's bounded queue. A consumer that falls `capacity` events
/// behind is disconnected with a BufferOverrun notice instead of stalling
/// the run.
class Subscription {
public:
    enum class Status { event, timeout, closed, overrun };
    struct Poll {
        Status status = Status::timeout;
        Json message;
    };

    Subscription(std::set<std::string> kinds, std::size_t capacity) : kinds_(std::move(kinds)), capacity_(capacity) {}

    bool wants(std::string_view kind) const { return kinds_.empty() || kinds_.count(std::string(kind)); }

    Poll next(std::chrono::milliseconds timeout = std::chrono::milliseconds(0)) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || overrun_ || closed_; });
        if (!queue_.empty()) {
            Poll p{Status::event, std::move(queue_.front())};
            queue_.pop_front();
            return p;
        }
        if (overrun_) {
            if (!overrun_reported_) {
                overrun_reported_ = true;
                return {Status::overrun, Json{{"stream", "notice"},
                                              {"error", {{"kind", "BufferOverrun"},
                                                         {"message", "consumer fell " + std::to_string(capacity_) +
                                                                         " events behind; disconnected"}}}}};
            }
            return {Status::closed, {}};
        }
        if (closed_) return {Status::closed, {}};
        return {Status::timeout, {}};
    }

    bool disconnected() const {
        std::lock_guard lock(mu_);
        return overrun_ || closed_;
    }

    void cancel() { close(); }

private:
    friend class EventBus;

    void push(Json message) {
        {
            std::lock_guard lock(mu_);
            if (overrun_ || closed_) return;
            if (queue_.size() >= capacity_) {
                overrun_ = true;
                queue_.clear();
            } else {
                queue_.push_back(std::move(message));
            }
        }
        cv_.notify_all();
    }

    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    std::set<std::string> kinds_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Json> queue_;
    bool overrun_ = false;
    bool overrun_reported_ = false;
    bool closed_ = false;
};

/// Fan-out of the single ordered writer to any number of subscribers. Every
/// message carries a bus-wide monotonic sequence number.
class EventBus {
public:
    std::shared_ptr<Subscription> subscribe(std::set<std::string> kinds = {},
                                            std::size_t capacity = kDefaultEventBuffer) {
        for (const auto& k : kinds)
            if (std::find(kEventKinds.begin(), kEventKinds.end(), k) == kEventKinds.end())
                throw ValidationError("subscribe_events: unknown event kind '" + k + "'");
        auto sub = std::make_shared<Subscription>(std::move(kinds), capacity);
        std::lock_guard lock(mu_);
        subs_.push_back(sub);
        return sub;
    }

    void publish(const LogEntry& entry) {
        std::lock_guard lock(mu_);
        const auto seq = seq_++;
        std::optional<Json> body;
        std::erase_if(subs_, [](const auto& s) { return s->disconnected(); });
        for (const auto& s : subs_) {
            if (!s->wants(entry.kind())) continue;
            if (!body) body = Json{{"stream", "event"}, {"seq", seq}, {"event", to_json(entry)}};
            s->push(*body);
        }
    }

    std::size_t subscriber_count() const {
        std::lock_guard lock(mu_);
        return subs_.size();
    }

    void close_all() {
        std::lock_guard lock(mu_);
        for (const auto& s : subs_) s->close();
        subs_.clear();
    }

private:
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<Subscription>> subs_;
    std::uint64_t seq_ = 0;
};

// ---------------------------------------------------------------------------
// Control plane

/// Owns the live config, the event bus, and the single active run.
class ControlPlane {
public:
    explicit ControlPlane(PipelineConfig initial = PipelineConfig::for_mode(Mode::Default),
                          MeshTopology topology = MeshTopology::single_band())
        : config_{0, std::make_shared<const PipelineConfig>(std::move(initial))}, topology_(std::move(topology)) {
        validate(*config_.config);
    }

    ~ControlPlane() { stop_and_join(); }

    ConfigSnapshot config() const {
        std::lock_guard lock(mu_);
        return config_;
    }

    /// Serialized config writes; the new snapshot is picked up by a running
    /// replay at its next frame boundary.
    ConfigSnapshot apply(const ControlMessage& change) {
        std::lock_guard lock(mu_);
        auto next = apply_config(*config_.config, change);
        config_ = {config_.version + 1, std::make_shared<const PipelineConfig>(std::move(next))};
        return config_;
    }

    EventBus& bus() { return bus_; }
    const MeshTopology& topology() const { return topology_; }

    /// Blocking run with the live config; RunActive if one is already going.
    RunLog run(RunSpec spec) {
        claim();
        struct Release {
            ControlPlane* cp;
            ~Release() { cp->active_ = false; }
        } release{this};
        std::stop_source source;
        {
            std::lock_guard lock(mu_);
            stop_ = source;
        }
        return execute(std::move(spec), source.get_token());
    }

    /// Starts a run on a background thread. The finished log is kept as
    /// last_run() and, when `out` is set, written there.
    void start(RunSpec spec, std::optional<std::filesystem::path> out = std::nullopt) {
        claim();
        if (worker_.joinable()) worker_.join();
        worker_ = std::jthread([this, spec = std::move(spec), out](std::stop_token token) mutable {
            try {
                auto log = execute(std::move(spec), token);
                if (out) log.save(*out);
                std::lock_guard lock(mu_);
                last_run_ = std::move(log);
                last_error_.reset();
            } catch (const std::exception& e) {
                std::lock_guard lock(mu_);
                last_error_ = e.what();
            }
            active_ = false;
            active_.notify_all();
        });
    }

    /// Requests the active run stop at the next frame boundary.
    bool stop() {
        std::lock_guard lock(mu_);
        if (!active_) return false;
        if (worker_.joinable()) worker_.request_stop();
        stop_.request_stop();
        return true;
    }

    void wait() {
        active_.wait(true);
        if (worker_.joinable()) worker_.join();
    }

    bool running() const { return active_; }

    std::optional<RunLog> last_run() const {
        std::lock_guard lock(mu_);
        return last_run_;
    }
    std::optional<std::string> last_error() const {
        std::lock_guard lock(mu_);
        return last_error_;
    }

    /// Latest frame summary, track snapshot, and zone for a node.
    Json frame_preview(const std::string& node) const {
        std::lock_guard lock(mu_);
        Json out{{"node_id", node}, {"frame", nullptr}, {"tracks", Json::array()}, {"zone", nullptr}};
        if (auto it = preview_frames_.find(node); it != preview_frames_.end()) out["frame"] = it->second;
        if (auto it = preview_tracks_.find(node); it != preview_tracks_.end()) out["tracks"] = it->second;
        if (const Zone* z = config_.config->zone_for(node)) out["zone"] = to_json(*z);
        return out;
    }

    /// Dispatches one control message to a reply payload. Errors propagate
    /// as exceptions; ControlSession turns them into error replies.
    Json handle(const ControlMessage& m) {
        switch (m.kind) {
            case ControlKind::get_config: {
                auto snap = config();
                return Json{{"version", snap.version}, {"config", to_json(*snap.config)}};
            }
            case ControlKind::set_config:
            case ControlKind::set_zone:
            case ControlKind::set_mode: {
                auto snap = apply(m);
                return Json{{"version", snap.version}, {"config", to_json(*snap.config)}};
            }
            case ControlKind::start_run: return start_from_payload(m.payload);
            case ControlKind::stop_run: return Json{{"stopping", stop()}};
            case ControlKind::frame_preview: {
                ObjectReader<ValidationError> r(m.payload, "frame_preview");
                const auto node = r.get<std::string>("node_id");
                r.finish();
                return frame_preview(node);
            }
            case ControlKind::subscribe_events:
                throw ValidationError("subscribe_events is handled by the connection transport");
        }
        throw ValidationError("unhandled control kind");
    }

private:
    void claim() {
        bool expected = false;
        if (!active_.compare_exchange_strong(expected, true)) throw RunActive("a run is already active");
    }

    RunLog execute(RunSpec spec, std::stop_token token) {
        RunHooks hooks;
        hooks.stop = token;
        hooks.config_source = [this] { return config(); };
        hooks.on_entry = [this](const LogEntry& e) {
            note_preview(e);
            bus_.publish(e);
        };
        spec.config = *config().config;
        return run_replay(spec, hooks);
    }

    void note_preview(const LogEntry& e) {
        if (const auto* f = std::get_if<FrameEntry>(&e.payload)) {
            std::lock_guard lock(mu_);
            preview_frames_[f->node_id] = to_json(e);
        } else if (const auto* t = std::get_if<TracksEntry>(&e.payload)) {
            Json tracks = Json::array();
            for (const auto& tr : t->live) tracks.push_back(to_json(tr));
            std::lock_guard lock(mu_);
            preview_tracks_[t->node_id] = std::move(tracks);
        }
    }

    Json start_from_payload(const Json& payload) {
        ObjectReader<ValidationError> r(payload, "start_run");
        std::vector<std::filesystem::path> paths;
        for (const auto& c : expect_array<ValidationError>(r.json("clips"), "start_run.clips"))
            paths.emplace_back(detail::convert<ValidationError, std::string>(c, "start_run.clips[]"));
        RunSpec spec;
        spec.topology = topology_;
        if (const Json* t = r.optional_json("topology")) spec.topology = parse_topology(*t);
        if (auto clock = r.optional<std::string>("clock")) {
            auto c = parse_clock_mode(*clock);
            if (!c) throw ValidationError("start_run.clock: expected simulated or realtime");
            spec.clock_mode = *c;
        }
        spec.stream_duplication = r.get_or<unsigned>("duplicate", 2);
        spec.seed = r.get_or<std::uint64_t>("seed", 0);
        std::optional<std::filesystem::path> out;
        if (auto o = r.optional<std::string>("out")) out = *o;
        r.finish();
        if (spec.stream_duplication < 1) throw ValidationError("start_run.duplicate must be >= 1");
        if (running()) throw RunActive("a run is already active");
        spec.clips = load_clips(paths);
        start(std::move(spec), out);
        return Json{{"started", true}};
    }

    void stop_and_join() {
        if (worker_.joinable()) {
            worker_.request_stop();
            worker_.join();
        }
    }

    mutable std::mutex mu_;
    ConfigSnapshot config_;
    MeshTopology topology_;
    EventBus bus_;
    std::atomic<bool> active_{false};
    std::stop_source stop_;
    std::jthread worker_;
    std::optional<RunLog> last_run_;
    std::optional<std::string> last_error_;
    std::map<std::string, Json> preview_frames_;
    std::map<std::string, Json> preview_tracks_;
};

/// Per-connection request handling: request ids must be unique on the
/// connection and every reply echoes the id.
class ControlSession {
public:
    explicit ControlSession(ControlPlane& plane) : plane_(plane) {}

    /// Returns the reply. For subscribe_events the caller also receives the
    /// subscription through `subscription`.
    Json handle(const Json& request, std::shared_ptr<Subscription>* subscription = nullptr) {
        Json id = request.is_object() && request.contains("request_id") ? request["request_id"] : Json(nullptr);
        try {
            const auto m = parse_control_message(request);
            if (!seen_.insert(m.request_id).second)
                throw ValidationError("request_id '" + m.request_id + "' already used on this connection");
            if (m.kind == ControlKind::subscribe_events) {
                if (!subscription) throw ValidationError("subscribe_events is not available on this channel");
                std::set<std::string> kinds;
                std::size_t capacity = kDefaultEventBuffer;
                if (!m.payload.is_null() && !m.payload.empty()) {
                    ObjectReader<ValidationError> r(m.payload, "subscribe_events");
                    if (const Json* k = r.optional_json("kinds"))
                        for (const auto& x : expect_array<ValidationError>(*k, "subscribe_events.kinds"))
                            kinds.insert(detail::convert<ValidationError, std::string>(x, "subscribe_events.kinds[]"));
                    capacity = r.get_or<std::size_t>("buffer", capacity);
                    r.finish();
                }
                if (capacity == 0) throw ValidationError("subscribe_events.buffer must be positive");
                auto sub = plane_.bus().subscribe(std::move(kinds), capacity);
                *subscription = sub;
                return ok(id, Json{{"subscribed", true}, {"buffer", capacity}});
            }
            return ok(id, plane_.handle(m));
        } catch (const Error& e) {
            return fail(id, e.kind(), e.what());
        } catch (const std::exception& e) {
            return fail(id, "InternalError", e.what());
        }
    }

    static Json ok(const Json& id, Json result) {
        return Json{{"request_id", id}, {"ok", true}, {"result", std::move(result)}};
    }
    static Json fail(const Json& id, const std::string& kind, const std::string& message) {
        return Json{{"request_id", id}, {"ok", false}, {"error", {{"kind", kind}, {"message", message}}}};
    }

private:
    ControlPlane& plane_;
    std::set<std::string> seen_;
};

}  // namespace sitewatch
