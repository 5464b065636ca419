#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sitewatch/alertgate.hpp"
#include "sitewatch/json_io.hpp"

namespace sitewatch {

enum class DeviceKind { alertband, alertbeacon, halo_light, expansion_node };

inline std::string_view to_string(DeviceKind k) {
    switch (k) {
        case DeviceKind::alertband: return "alertband";
        case DeviceKind::alertbeacon: return "alertbeacon";
        case DeviceKind::halo_light: return "halo_light";
        case DeviceKind::expansion_node: return "expansion_node";
    }
    return "alertband";
}

inline std::optional<DeviceKind> parse_device_kind(std::string_view s) {
    for (auto k : {DeviceKind::alertband, DeviceKind::alertbeacon, DeviceKind::halo_light, DeviceKind::expansion_node})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct Device {
    std::string device_id;
    DeviceKind kind = DeviceKind::alertband;
    std::optional<std::string> position;

    friend bool operator==(const Device&, const Device&) = default;
};

inline constexpr std::string_view kCoordinator = "coordinator";

/// Pulse length for haptic and visual devices. Expansion nodes only relay.
inline constexpr double kPulseDurationMs = 2000.0;

inline double pulse_duration(DeviceKind k) { return k == DeviceKind::expansion_node ? 0.0 : kPulseDurationMs; }

/// Undirected mesh over the coordinator (the processing node's radio) and the
/// registered devices. Construction checks ids and links; connectivity is a
/// separate check so partitioned meshes can still be inspected.
class MeshTopology {
public:
    MeshTopology() = default;

    MeshTopology(std::vector<Device> devices, std::vector<std::pair<std::string, std::string>> links)
        : devices_(std::move(devices)), links_(std::move(links)) {
        std::set<std::string> ids{std::string(kCoordinator)};
        for (const auto& d : devices_) {
            if (d.device_id.empty()) throw ValidationError("topology: empty device_id");
            if (!ids.insert(d.device_id).second)
                throw ValidationError("topology: duplicate device_id '" + d.device_id + "'");
        }
        for (const auto& [a, b] : links_) {
            if (!ids.count(a) || !ids.count(b)) throw ValidationError("topology: link references unknown device");
            if (a == b) throw ValidationError("topology: self-loop on '" + a + "'");
            adjacency_[a].insert(b);
            adjacency_[b].insert(a);
        }
    }

    const std::vector<Device>& devices() const { return devices_; }
    const std::vector<std::pair<std::string, std::string>>& links() const { return links_; }

    const Device* find(const std::string& id) const {
        for (const auto& d : devices_)
            if (d.device_id == id) return &d;
        return nullptr;
    }

    /// BFS hop counts from the coordinator to every reachable device.
    std::map<std::string, int> hop_counts() const {
        std::map<std::string, int> dist{{std::string(kCoordinator), 0}};
        std::deque<std::string> queue{std::string(kCoordinator)};
        while (!queue.empty()) {
            const auto cur = queue.front();
            queue.pop_front();
            auto it = adjacency_.find(cur);
            if (it == adjacency_.end()) continue;
            for (const auto& next : it->second) {
                if (dist.count(next)) continue;
                dist[next] = dist[cur] + 1;
                queue.push_back(next);
            }
        }
        return dist;
    }

    bool connected() const { return hop_counts().size() == devices_.size() + 1; }

    /// Devices that receive alerts: everything except relay-only expansion
    /// nodes, in registration order.
    std::vector<std::string> alert_targets() const {
        std::vector<std::string> out;
        for (const auto& d : devices_)
            if (d.kind != DeviceKind::expansion_node) out.push_back(d.device_id);
        return out;
    }

    /// Coordinator plus one alertband one hop away.
    static MeshTopology single_band() {
        return MeshTopology({{"band1", DeviceKind::alertband, std::nullopt}}, {{std::string(kCoordinator), "band1"}});
    }

    friend bool operator==(const MeshTopology& a, const MeshTopology& b) {
        return a.devices_ == b.devices_ && a.links_ == b.links_;
    }

private:
    std::vector<Device> devices_;
    std::vector<std::pair<std::string, std::string>> links_;
    std::map<std::string, std::set<std::string>> adjacency_;
};

inline int route_hops(const MeshTopology& topology, const std::string& device_id) {
    if (!topology.find(device_id)) throw Unreachable("device '" + device_id + "' is not in the topology");
    const auto hops = topology.hop_counts();
    auto it = hops.find(device_id);
    if (it == hops.end()) throw Unreachable("device '" + device_id + "' is partitioned from the coordinator");
    return it->second;
}

/// Round-trip latency through the published mesh anchors: 18 ms at one hop,
/// 100 ms at four, linear in between and beyond.
inline double round_trip_latency(int hops) {
    if (hops < 1) throw DomainError("hop count must be >= 1, got " + std::to_string(hops));
    // (hops - 1) * 82 is exact in binary, so both anchors come out exact.
    return 18.0 + static_cast<double>(hops - 1) * 82.0 / 3.0;
}

/// One-way delivery latency, half the round trip.
inline double hop_latency(int hops) { return round_trip_latency(hops) / 2.0; }

struct Pulse {
    double start = 0.0;
    double duration = 0.0;

    friend bool operator==(const Pulse&, const Pulse&) = default;
};

struct DeliveryRecord {
    std::uint64_t event_id = 0;
    std::string device_id;
    int hops = 1;
    double dispatch_time = 0.0;
    double delivery_time = 0.0;
    Pulse pulse;

    friend bool operator==(const DeliveryRecord&, const DeliveryRecord&) = default;
};

struct DispatchResult {
    std::vector<DeliveryRecord> records;
    std::vector<std::string> unreachable;
};

/// One record per reachable target, in target order; unknown or partitioned
/// targets are reported without failing the rest.
inline DispatchResult dispatch(const AlertEvent& event, const MeshTopology& topology,
                               std::span<const std::string> targets, double clock) {
    DispatchResult out;
    if (targets.empty()) return out;
    const auto hops = topology.hop_counts();
    for (const auto& id : targets) {
        const Device* dev = topology.find(id);
        auto it = hops.find(id);
        if (!dev || it == hops.end()) {
            out.unreachable.push_back(id);
            continue;
        }
        DeliveryRecord r;
        r.event_id = event.event_id;
        r.device_id = id;
        r.hops = it->second;
        r.dispatch_time = clock;
        r.delivery_time = clock + hop_latency(r.hops);
        r.pulse = {r.delivery_time, pulse_duration(dev->kind)};
        out.records.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Topology document

inline Json to_json(const MeshTopology& t) {
    Json devices = Json::array();
    for (const auto& d : t.devices()) {
        Json j{{"device_id", d.device_id}, {"kind", to_string(d.kind)}};
        if (d.position) j["position"] = *d.position;
        devices.push_back(std::move(j));
    }
    Json links = Json::array();
    for (const auto& [a, b] : t.links()) links.push_back(Json::array({a, b}));
    return Json{{"devices", std::move(devices)}, {"links", std::move(links)}};
}

/// Parses and validates a topology document, including connectivity.
inline MeshTopology parse_topology(const Json& j) {
    ObjectReader<ValidationError> r(j, "topology");
    std::vector<Device> devices;
    for (const auto& dj : expect_array<ValidationError>(r.json("devices"), "topology.devices")) {
        ObjectReader<ValidationError> dr(dj, "topology.devices[]");
        Device d;
        d.device_id = dr.get<std::string>("device_id");
        const auto kind = dr.get<std::string>("kind");
        auto k = parse_device_kind(kind);
        if (!k) throw ValidationError("topology.devices[].kind: unknown kind '" + kind + "'");
        d.kind = *k;
        d.position = dr.optional<std::string>("position");
        dr.finish();
        if (d.device_id == kCoordinator) throw ValidationError("topology: 'coordinator' is reserved");
        devices.push_back(std::move(d));
    }
    std::vector<std::pair<std::string, std::string>> links;
    for (const auto& lj : expect_array<ValidationError>(r.json("links"), "topology.links")) {
        if (!lj.is_array() || lj.size() != 2 || !lj[0].is_string() || !lj[1].is_string())
            throw ValidationError("topology.links: each link is a pair of device ids");
        links.emplace_back(lj[0].get<std::string>(), lj[1].get<std::string>());
    }
    r.finish();
    MeshTopology t(std::move(devices), std::move(links));
    if (!t.connected()) throw TopologyUnreachable("topology: mesh is not connected to the coordinator");
    return t;
}

inline MeshTopology load_topology(const std::filesystem::path& path) {
    const auto text = detail::read_file(path);
    try {
        return parse_topology(Json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace sitewatch
