#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sitewatch/clipstore.hpp"
#include "sitewatch/matching.hpp"
#include "sitewatch/runlog.hpp"

namespace sitewatch {

/// Delay compensation constants: the harness network loop is deducted and
/// the cameras' sensing latency added back.
struct LatencyAccounting {
    double harness_round_trip = 83.0;  // ms
    double sensing_latency = 67.0;     // ms
    bool include_mesh = false;
};

struct FrameCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    FrameCounts& operator+=(const FrameCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const FrameCounts&, const FrameCounts&) = default;
};

/// One-to-one matching of reported boxes to ground truth. Starts from the
/// greedy descending-IoU assignment and augments it to maximum cardinality,
/// so greedy's answer stands whenever it is already maximal.
inline FrameCounts match_frame(std::span<const BBox> detected, std::span<const BBox> gt, double iou_threshold) {
    ScoreMatrix scores(detected.size(), std::vector<double>(gt.size(), 0.0));
    for (std::size_t i = 0; i < detected.size(); ++i)
        for (std::size_t k = 0; k < gt.size(); ++k) scores[i][k] = iou(detected[i], gt[k]);
    auto assignment = greedy_assignment(scores, iou_threshold);
    assignment = augment_to_maximum(scores, iou_threshold, std::move(assignment));
    FrameCounts c;
    c.tp = assignment.size();
    c.fp = detected.size() - c.tp;
    c.fn = gt.size() - c.tp;
    return c;
}

inline FrameCounts match_frame(std::span<const Track> tracks, std::span<const BBox> gt, double iou_threshold) {
    std::vector<BBox> boxes;
    boxes.reserve(tracks.size());
    for (const auto& t : tracks) boxes.push_back(t.last_bbox);
    return match_frame(std::span<const BBox>(boxes), gt, iou_threshold);
}

struct PrecisionRecall {
    double precision = 1.0;
    double recall = 1.0;
    FrameCounts counts;
};

/// Empty denominators score 1.0 (nothing reported / nothing to find).
inline PrecisionRecall precision_recall(const FrameCounts& c) {
    PrecisionRecall pr;
    pr.counts = c;
    if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return pr;
}

// ---------------------------------------------------------------------------
// Run/clip join

/// The slice of a run log that belongs to one clip, indexed for scoring.
class ClipRun {
public:
    ClipRun(const RunLog& run, const Clip& clip) : clip_(clip) {
        const ClipStartEntry* start = nullptr;
        for (const auto& e : run.entries) {
            if (const auto* cs = std::get_if<ClipStartEntry>(&e.payload)) {
                if (cs->clip_id == clip.clip_id) {
                    start = cs;
                    offset_ = cs->offset;
                    in_clip_ = true;
                } else {
                    in_clip_ = false;
                }
                continue;
            }
            if (!in_clip_) continue;
            std::visit([&](const auto& p) { index(p); }, e.payload);
        }
        if (!start) throw ClipMismatch("run log has no segment for clip '" + clip.clip_id + "'");
        for (const auto& [node, source] : start->nodes) {
            if (!clip.streams.count(source))
                throw ClipMismatch("run node '" + node + "' replays unknown clip node '" + source + "'");
            source_[node] = source;
        }
        const std::size_t frames = clip.frame_count();
        for (const auto& f : frames_)
            if (!source_.count(f.node_id) || f.frame_index >= frames)
                throw ClipMismatch("run references frame " + std::to_string(f.frame_index) + " on node '" +
                                   f.node_id + "' outside clip '" + clip.clip_id + "'");
    }

    const Clip& clip() const { return clip_; }
    double offset() const { return offset_; }
    const std::vector<FrameEntry>& frames() const { return frames_; }
    const std::vector<AlertEntry>& alerts() const { return alerts_; }

    const std::string& source_of(const std::string& node) const {
        auto it = source_.find(node);
        if (it == source_.end()) throw ClipMismatch("unknown run node '" + node + "'");
        return it->second;
    }

    /// Gate-passing tracks of one class on one node/frame.
    std::vector<Track> reported(const std::string& node, std::uint64_t frame, DetectionClass cls) const {
        std::vector<Track> out;
        auto c = candidates_.find({node, frame});
        auto t = tracks_.find({node, frame});
        if (c == candidates_.end() || t == tracks_.end()) return out;
        for (TrackId id : c->second)
            for (const auto& tr : t->second)
                if (tr.track_id == id && tr.cls == cls) out.push_back(tr);
        return out;
    }

    std::optional<Track> track(const std::string& node, std::uint64_t frame, TrackId id) const {
        auto t = tracks_.find({node, frame});
        if (t == tracks_.end()) return std::nullopt;
        for (const auto& tr : t->second)
            if (tr.track_id == id) return tr;
        return std::nullopt;
    }

    /// Fastest mesh delivery of an event, if any was recorded.
    std::optional<double> mesh_latency(std::uint64_t event_id) const {
        auto it = mesh_.find(event_id);
        if (it == mesh_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<BBox> gt_boxes(const std::string& source_node, std::uint64_t frame) const {
        std::vector<BBox> out;
        for (const auto& p : clip_.ground_truth)
            if (p.node_id == source_node && p.present(frame)) out.push_back(p.bbox_at(frame));
        return out;
    }

private:
    using Key = std::pair<std::string, std::uint64_t>;

    void index(const FrameEntry& f) { frames_.push_back(f); }
    void index(const TracksEntry& t) { tracks_[{t.node_id, t.frame_index}] = t.live; }
    void index(const CandidatesEntry& c) { candidates_[{c.node_id, c.frame_index}] = c.track_ids; }
    void index(const AlertEntry& a) { alerts_.push_back(a); }
    void index(const DeliveryEntry& d) {
        const double latency = d.record.delivery_time - d.record.dispatch_time;
        auto [it, fresh] = mesh_.emplace(d.record.event_id, latency);
        if (!fresh) it->second = std::min(it->second, latency);
    }
    template <class T>
    void index(const T&) {}

    const Clip& clip_;
    double offset_ = 0.0;
    bool in_clip_ = false;
    std::map<std::string, std::string> source_;
    std::vector<FrameEntry> frames_;
    std::map<Key, std::vector<Track>> tracks_;
    std::map<Key, std::vector<TrackId>> candidates_;
    std::vector<AlertEntry> alerts_;
    std::map<std::uint64_t, double> mesh_;
};

/// Frame-wise precision/recall of the pipeline's reported person tracks
/// against ground truth, summed over every replayed node and frame.
inline PrecisionRecall framewise_pr(const RunLog& run, const Clip& clip, double iou_threshold = 0.5) {
    const ClipRun view(run, clip);
    FrameCounts total;
    for (const auto& f : view.frames()) {
        const auto tracks = view.reported(f.node_id, f.frame_index, DetectionClass::person);
        const auto gt = view.gt_boxes(view.source_of(f.node_id), f.frame_index);
        total += match_frame(std::span<const Track>(tracks), std::span<const BBox>(gt), iou_threshold);
    }
    return precision_recall(total);
}

// ---------------------------------------------------------------------------
// Alert attribution

struct PersonAlert {
    std::uint64_t event_id = 0;
    double clip_time = 0.0;  // alert time relative to the clip start
};

struct AlertAttribution {
    std::map<std::string, PersonAlert> first_alert;  // person_id -> first attributable alert
    std::size_t total_alerts = 0;
    std::size_t false_alerts = 0;  // alerting bbox overlapped no person
};

/// Each alert goes to every in-frame person on its node whose box overlaps
/// the alerting track; with no overlap it falls back to the in-frame person
/// with the nearest box center.
inline AlertAttribution attribute_alerts(const ClipRun& view) {
    AlertAttribution out;
    const auto& gt = view.clip().ground_truth;
    for (const auto& a : view.alerts()) {
        ++out.total_alerts;
        const auto& source = view.source_of(a.event.node_id);
        const auto tr = view.track(a.event.node_id, a.frame_index, a.event.track_id);
        const double clip_time = a.event.timestamp - view.offset();

        std::vector<std::size_t> present;
        for (std::size_t i = 0; i < gt.size(); ++i)
            if (gt[i].node_id == source && gt[i].present(a.frame_index)) present.push_back(i);

        std::vector<std::size_t> credited;
        if (tr)
            for (std::size_t i : present)
                if (iou(tr->last_bbox, gt[i].bbox_at(a.frame_index)) > 0.0) credited.push_back(i);
        if (credited.empty()) {
            ++out.false_alerts;
            if (tr && !present.empty()) {
                const Point c = tr->last_bbox.center();
                std::size_t best = present.front();
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t i : present) {
                    const Point g = gt[i].bbox_at(a.frame_index).center();
                    const double d = std::hypot(g.x - c.x, g.y - c.y);
                    if (d < best_d) {
                        best_d = d;
                        best = i;
                    }
                }
                credited.push_back(best);
            }
        }
        for (std::size_t i : credited) out.first_alert.try_emplace(gt[i].person_id, PersonAlert{a.event.event_id, clip_time});
    }
    return out;
}

inline double alert_percent(const ClipRun& view) {
    const auto& gt = view.clip().ground_truth;
    if (gt.empty()) return 100.0;
    const auto attribution = attribute_alerts(view);
    return 100.0 * static_cast<double>(attribution.first_alert.size()) / static_cast<double>(gt.size());
}

inline double alert_percent(const RunLog& run, const Clip& clip) { return alert_percent(ClipRun(run, clip)); }

struct DelayResult {
    std::vector<double> delays;                   // one per alerted person, ground-truth order
    std::vector<std::string> negative_delays;     // persons whose compensated delay fell below 0
};

/// Compensated first-alert delay per alerted person. Harness-loop captures
/// deduct the network loop before adding sensing latency; internal runs only
/// add sensing latency.
inline DelayResult alert_delays(const ClipRun& view, CaptureMode capture, const LatencyAccounting& acct) {
    DelayResult out;
    const auto attribution = attribute_alerts(view);
    const auto& clip = view.clip();
    for (const auto& p : clip.ground_truth) {
        auto it = attribution.first_alert.find(p.person_id);
        if (it == attribution.first_alert.end()) continue;
        const double entry = clip.stream(p.node_id).at(p.entry_frame).timestamp;
        double delay = it->second.clip_time - entry;
        if (capture == CaptureMode::harness_loop) delay -= acct.harness_round_trip;
        delay += acct.sensing_latency;
        if (acct.include_mesh) delay += view.mesh_latency(it->second.event_id).value_or(0.0);
        if (delay < 0.0) out.negative_delays.push_back(p.person_id);
        out.delays.push_back(delay);
    }
    return out;
}

inline DelayResult alert_delays(const RunLog& run, const Clip& clip, const LatencyAccounting& acct = {}) {
    return alert_delays(ClipRun(run, clip), run.header.capture, acct);
}

using Histogram = std::map<std::int64_t, std::size_t>;  // bin index -> count

/// Half-open bins [k*w, (k+1)*w). Negative delays land in bin 0.
inline Histogram delay_histogram(std::span<const double> delays, double bin_width = 200.0) {
    if (!(bin_width > 0.0)) throw DomainError("bin width must be positive");
    Histogram h;
    for (double d : delays) {
        const double v = std::max(d, 0.0);
        ++h[static_cast<std::int64_t>(std::floor(v / bin_width))];
    }
    return h;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// ---------------------------------------------------------------------------
// Aggregation

struct EvalOptions {
    double iou_threshold = 0.5;
    LatencyAccounting latency;
};

struct ClipResult {
    std::string clip_id;
    std::string dataset;
    Mode mode = Mode::Default;
    FrameCounts counts;
    std::size_t persons = 0;
    std::size_t alerted = 0;
    std::size_t alerts = 0;
    std::size_t false_alerts = 0;
    std::vector<double> delays;
    std::size_t negative_delays = 0;
};

inline ClipResult evaluate_clip(const RunLog& run, const Clip& clip, std::string dataset, Mode mode,
                                const EvalOptions& opt = {}) {
    const ClipRun view(run, clip);
    ClipResult r;
    r.clip_id = clip.clip_id;
    r.dataset = std::move(dataset);
    r.mode = mode;
    for (const auto& f : view.frames()) {
        const auto tracks = view.reported(f.node_id, f.frame_index, DetectionClass::person);
        const auto gt = view.gt_boxes(view.source_of(f.node_id), f.frame_index);
        r.counts += match_frame(std::span<const Track>(tracks), std::span<const BBox>(gt), opt.iou_threshold);
    }
    const auto attribution = attribute_alerts(view);
    r.persons = clip.ground_truth.size();
    r.alerted = attribution.first_alert.size();
    r.alerts = attribution.total_alerts;
    r.false_alerts = attribution.false_alerts;
    auto delays = alert_delays(view, run.header.capture, opt.latency);
    r.delays = std::move(delays.delays);
    r.negative_delays = delays.negative_delays.size();
    return r;
}

/// One (dataset, mode) cell, or the AVG row when dataset is "AVG".
struct CellMetrics {
    std::string dataset;
    Mode mode = Mode::Default;
    double precision = 1.0;
    double recall = 1.0;
    double alert_percent = 100.0;
    std::vector<double> delays;
    std::size_t false_alerts = 0;
    std::size_t clips = 0;
};

/// Micro-average over every frame and person of the cell's clips.
inline CellMetrics summarize_cell(std::span<const ClipResult> clips) {
    if (clips.empty()) throw EmptyCell("no clips in cell");
    CellMetrics c;
    c.dataset = clips.front().dataset;
    c.mode = clips.front().mode;
    FrameCounts counts;
    std::size_t persons = 0, alerted = 0;
    for (const auto& r : clips) {
        counts += r.counts;
        persons += r.persons;
        alerted += r.alerted;
        c.false_alerts += r.false_alerts;
        c.delays.insert(c.delays.end(), r.delays.begin(), r.delays.end());
    }
    const auto pr = precision_recall(counts);
    c.precision = pr.precision;
    c.recall = pr.recall;
    c.alert_percent = persons ? 100.0 * static_cast<double>(alerted) / static_cast<double>(persons) : 100.0;
    c.clips = clips.size();
    return c;
}

struct MetricsReport {
    std::vector<std::string> datasets;  // first-seen order
    std::vector<Mode> modes;            // Reactive, Default, Certain order, present ones only
    std::map<std::pair<std::string, Mode>, CellMetrics> cells;
    std::map<Mode, CellMetrics> average;  // unweighted mean over datasets
    double bin_width = 200.0;

    const CellMetrics& cell(const std::string& dataset, Mode m) const { return cells.at({dataset, m}); }
    Histogram histogram(Mode m) const { return delay_histogram(average.at(m).delays, bin_width); }
};

/// Builds the report from dataset-level cells. The AVG row is the
/// unweighted mean of the dataset values; delays are pooled.
inline MetricsReport aggregate_report(std::span<const CellMetrics> cells, double bin_width = 200.0) {
    MetricsReport rep;
    rep.bin_width = bin_width;
    for (const auto& c : cells) {
        if (std::find(rep.datasets.begin(), rep.datasets.end(), c.dataset) == rep.datasets.end())
            rep.datasets.push_back(c.dataset);
        if (!rep.cells.emplace(std::make_pair(c.dataset, c.mode), c).second)
            throw ValidationError("duplicate cell " + c.dataset + "/" + std::string(to_string(c.mode)));
    }
    for (Mode m : kAllModes) {
        const bool any = std::any_of(cells.begin(), cells.end(), [&](const CellMetrics& c) { return c.mode == m; });
        if (any) rep.modes.push_back(m);
    }
    if (rep.datasets.empty()) throw EmptyCell("no cells to aggregate");
    for (Mode m : rep.modes) {
        CellMetrics avg;
        avg.dataset = "AVG";
        avg.mode = m;
        avg.precision = avg.recall = avg.alert_percent = 0.0;
        for (const auto& d : rep.datasets) {
            auto it = rep.cells.find({d, m});
            if (it == rep.cells.end()) throw EmptyCell("no clips for dataset '" + d + "' in mode " + std::string(to_string(m)));
            const auto& c = it->second;
            avg.precision += c.precision;
            avg.recall += c.recall;
            avg.alert_percent += c.alert_percent;
            avg.false_alerts += c.false_alerts;
            avg.clips += c.clips;
            avg.delays.insert(avg.delays.end(), c.delays.begin(), c.delays.end());
        }
        const double n = static_cast<double>(rep.datasets.size());
        avg.precision /= n;
        avg.recall /= n;
        avg.alert_percent /= n;
        rep.average.emplace(m, std::move(avg));
    }
    return rep;
}

/// Groups clip results by (dataset, mode), micro-averages each cell, then
/// aggregates as above.
inline MetricsReport aggregate_report(std::span<const ClipResult> clips, double bin_width = 200.0) {
    std::map<std::pair<std::string, Mode>, std::vector<ClipResult>> groups;
    std::vector<std::string> order;
    for (const auto& r : clips) {
        if (std::find(order.begin(), order.end(), r.dataset) == order.end()) order.push_back(r.dataset);
        groups[{r.dataset, r.mode}].push_back(r);
    }
    std::vector<CellMetrics> cells;
    for (const auto& d : order)
        for (Mode m : kAllModes)
            if (auto it = groups.find({d, m}); it != groups.end()) cells.push_back(summarize_cell(it->second));
    return aggregate_report(std::span<const CellMetrics>(cells), bin_width);
}

// ---------------------------------------------------------------------------
// Report output

inline Json to_json(const Histogram& h, double bin_width) {
    Json bins = Json::array();
    for (const auto& [k, n] : h)
        bins.push_back(Json{{"bin", k}, {"from_ms", static_cast<double>(k) * bin_width},
                            {"to_ms", static_cast<double>(k + 1) * bin_width}, {"count", n}});
    return bins;
}

inline Json to_json(const MetricsReport& rep) {
    auto cell_json = [&](const CellMetrics& c) {
        return Json{{"precision", c.precision},
                    {"recall", c.recall},
                    {"alert_percent", c.alert_percent},
                    {"median_delay_ms", c.delays.empty() ? Json(nullptr) : Json(median(c.delays))},
                    {"delays_ms", c.delays},
                    {"false_alerts", c.false_alerts},
                    {"clips", c.clips}};
    };
    Json rows = Json::array();
    for (const auto& d : rep.datasets) {
        Json modes = Json::object();
        for (Mode m : rep.modes) modes[std::string(to_string(m))] = cell_json(rep.cell(d, m));
        rows.push_back(Json{{"dataset", d}, {"modes", std::move(modes)}});
    }
    Json avg = Json::object();
    Json hist = Json::object();
    for (Mode m : rep.modes) {
        avg[std::string(to_string(m))] = cell_json(rep.average.at(m));
        hist[std::string(to_string(m))] = to_json(rep.histogram(m), rep.bin_width);
    }
    return Json{{"conventions",
                 {{"precision_empty", 1.0},
                  {"recall_empty", 1.0},
                  {"average", "micro within dataset, unweighted mean across datasets"},
                  {"bin_width_ms", rep.bin_width}}},
                {"datasets", std::move(rows)},
                {"average", std::move(avg)},
                {"delay_histograms", std::move(hist)}};
}

/// Aligned text table: metric x dataset rows, one column per mode.
inline std::string format_report(const MetricsReport& rep) {
    std::ostringstream os;
    os << std::fixed;
    auto header = [&](const char* metric) {
        os << std::left << std::setw(14) << metric << std::setw(12) << "Dataset";
        for (Mode m : rep.modes) os << std::right << std::setw(12) << to_string(m);
        os << '\n';
    };
    auto rows = [&](const char* metric, auto value, int precision, const char* suffix) {
        header(metric);
        std::vector<std::string> names = rep.datasets;
        names.push_back("AVG");
        for (const auto& d : names) {
            os << std::left << std::setw(14) << "" << std::setw(12) << d;
            for (Mode m : rep.modes) {
                const CellMetrics& c = d == "AVG" ? rep.average.at(m) : rep.cell(d, m);
                std::ostringstream v;
                v << std::fixed << std::setprecision(precision) << value(c) << suffix;
                os << std::right << std::setw(12) << v.str();
            }
            os << '\n';
        }
    };
    rows("Precision", [](const CellMetrics& c) { return c.precision; }, 3, "");
    rows("Recall", [](const CellMetrics& c) { return c.recall; }, 3, "");
    rows("Alert %", [](const CellMetrics& c) { return c.alert_percent; }, 2, "%");
    rows("Median delay", [](const CellMetrics& c) { return c.delays.empty() ? 0.0 : median(c.delays); }, 0, " ms");
    os << "\nDelay histograms (" << std::setprecision(0) << rep.bin_width << " ms bins, all datasets)\n";
    for (Mode m : rep.modes) {
        os << "  " << std::left << std::setw(9) << to_string(m);
        for (const auto& [k, n] : rep.histogram(m)) os << ' ' << k * static_cast<std::int64_t>(rep.bin_width) << ':' << n;
        os << '\n';
    }
    return os.str();
}

}  // namespace sitewatch
