#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "sitewatch/alertnet.hpp"
#include "sitewatch/rng.hpp"

using namespace sitewatch;

namespace {

const std::string kCoord(kCoordinator);

MeshTopology chain(int length) {
    std::vector<Device> devices;
    std::vector<std::pair<std::string, std::string>> links;
    std::string prev = kCoord;
    for (int i = 1; i < length; ++i) {
        const auto id = "relay" + std::to_string(i);
        devices.push_back({id, DeviceKind::expansion_node, std::nullopt});
        links.emplace_back(prev, id);
        prev = id;
    }
    devices.push_back({"band", DeviceKind::alertband, std::nullopt});
    links.emplace_back(prev, "band");
    return MeshTopology(std::move(devices), std::move(links));
}

AlertEvent event(std::uint64_t id, double t) {
    AlertEvent e;
    e.event_id = id;
    e.timestamp = t;
    e.node_id = "cam1";
    return e;
}

}  // namespace

TEST(Hops, Examples) {
    EXPECT_EQ(route_hops(MeshTopology::single_band(), "band1"), 1);
    EXPECT_EQ(route_hops(chain(4), "band"), 4);

    const MeshTopology diamond({{"a", DeviceKind::expansion_node, std::nullopt},
                                {"b", DeviceKind::expansion_node, std::nullopt},
                                {"d", DeviceKind::alertbeacon, std::nullopt}},
                               {{kCoord, "a"}, {kCoord, "b"}, {"a", "d"}, {"b", "d"}});
    EXPECT_EQ(route_hops(diamond, "d"), 2);
}

TEST(Latency, Anchors) {
    EXPECT_EQ(round_trip_latency(1), 18.0);
    EXPECT_EQ(hop_latency(1), 9.0);
    EXPECT_EQ(round_trip_latency(4), 100.0);
    EXPECT_EQ(hop_latency(4), 50.0);
    EXPECT_NEAR(round_trip_latency(2), 45.3333, 1e-4);
    EXPECT_NEAR(hop_latency(2), 22.6667, 1e-4);
    EXPECT_THROW(round_trip_latency(0), DomainError);
}

TEST(Latency, MonotoneInHops) {
    for (int h = 1; h < 32; ++h) EXPECT_LT(hop_latency(h), hop_latency(h + 1));
}

TEST(Dispatch, SingleBandPulse) {
    const std::vector<std::string> targets{"band1"};
    const auto r = dispatch(event(0, 1000.0), MeshTopology::single_band(), targets, 1000.0);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].delivery_time, 1009.0);
    EXPECT_EQ(r.records[0].pulse.start, 1009.0);
    EXPECT_EQ(r.records[0].pulse.start + r.records[0].pulse.duration, 3009.0);
    EXPECT_TRUE(r.unreachable.empty());
}

TEST(Dispatch, MixedHopCounts) {
    const MeshTopology topo({{"near", DeviceKind::alertband, std::nullopt},
                             {"r1", DeviceKind::expansion_node, std::nullopt},
                             {"r2", DeviceKind::expansion_node, std::nullopt},
                             {"far", DeviceKind::halo_light, std::nullopt}},
                            {{kCoord, "near"}, {kCoord, "r1"}, {"r1", "r2"}, {"r2", "far"}});
    const std::vector<std::string> targets{"far", "near"};
    const auto r = dispatch(event(3, 500.0), topo, targets, 500.0);
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_EQ(r.records[0].device_id, "far");
    EXPECT_EQ(r.records[0].hops, 3);
    EXPECT_EQ(r.records[1].delivery_time, 509.0);
    EXPECT_NEAR(r.records[0].delivery_time, 500.0 + hop_latency(3), 1e-12);
    EXPECT_EQ(topo.alert_targets(), (std::vector<std::string>{"near", "far"}));

    const MeshTopology four = chain(4);
    const std::vector<std::string> band{"band"};
    EXPECT_EQ(dispatch(event(4, 0.0), four, band, 0.0).records.at(0).delivery_time, 50.0);
}

TEST(Dispatch, EmptyTargetsIsNoop) {
    const auto r = dispatch(event(0, 0.0), MeshTopology::single_band(), {}, 0.0);
    EXPECT_TRUE(r.records.empty());
    EXPECT_TRUE(r.unreachable.empty());
}

TEST(Dispatch, UnknownAndPartitionedTargetsReported) {
    const MeshTopology split({{"band1", DeviceKind::alertband, std::nullopt},
                              {"island", DeviceKind::alertband, std::nullopt}},
                             {{kCoord, "band1"}});
    EXPECT_FALSE(split.connected());
    EXPECT_THROW(route_hops(split, "island"), Unreachable);
    EXPECT_THROW(route_hops(split, "ghost"), Unreachable);
    const std::vector<std::string> targets{"ghost", "band1", "island"};
    const auto r = dispatch(event(0, 0.0), split, targets, 0.0);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].device_id, "band1");
    EXPECT_EQ(r.unreachable, (std::vector<std::string>{"ghost", "island"}));
}

TEST(DispatchProperty, DeliveryOrderFollowsDispatchOrder) {
    DeterministicRng rng(13);
    const MeshTopology topo = chain(3);
    const std::vector<std::string> band{"band"};
    double t = 0.0, last_delivery = -1.0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        t += rng.uniform(0.0, 500.0);
        const auto r = dispatch(event(i, t), topo, band, t);
        ASSERT_EQ(r.records.size(), 1u);
        EXPECT_GE(r.records[0].delivery_time, last_delivery);
        EXPECT_GE(r.records[0].delivery_time, t);
        last_delivery = r.records[0].delivery_time;
    }
}

TEST(TopologyDocument, ShippedFileParses) {
    const auto topo = load_topology(std::string(SITEWATCH_DATA_DIR) + "/topology.json");
    EXPECT_EQ(route_hops(topo, "band1"), 1);
    EXPECT_EQ(route_hops(topo, "beacon1"), 2);
    EXPECT_EQ(route_hops(topo, "halo1"), 3);
    EXPECT_EQ(topo.alert_targets(), (std::vector<std::string>{"band1", "beacon1", "halo1"}));
    EXPECT_EQ(parse_topology(to_json(topo)), topo);

    const std::vector<std::string> relay{"relay1"};
    const auto r = dispatch(event(0, 0.0), topo, relay, 0.0);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].pulse.duration, 0.0);
}

TEST(TopologyDocument, Rejections) {
    EXPECT_THROW(parse_topology(Json::parse(R"({"devices":[{"device_id":"a","kind":"alertband"}],"links":[]})")),
                 TopologyUnreachable);
    EXPECT_THROW(parse_topology(Json::parse(R"({"devices":[{"device_id":"a","kind":"siren"}],"links":[]})")),
                 ValidationError);
    EXPECT_THROW(parse_topology(Json::parse(
                     R"({"devices":[{"device_id":"a","kind":"alertband"}],"links":[["coordinator","zz"]]})")),
                 ValidationError);
    EXPECT_THROW(parse_topology(Json::parse(
                     R"({"devices":[{"device_id":"a","kind":"alertband"},{"device_id":"a","kind":"alertband"}],"links":[]})")),
                 ValidationError);
}
