#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <string>
#include <thread>

#include "sitewatch/scenario.hpp"
#include "sitewatch/transport.hpp"

using namespace sitewatch;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

fs::path saved_clip(const std::string& name) {
    ScenarioSpec s;
    s.scenario_id = name;
    s.duration = 2.0;
    ScriptedPerson p;
    p.person_id = "p1";
    p.node_id = "cam1";
    p.waypoints = {{0, {0.1, 0.3, 0.2, 0.6}}, {9, {0.2, 0.3, 0.3, 0.6}}};
    s.persons.push_back(p);
    const auto dir = fs::temp_directory_path() / ("sitewatch_transport_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    save_clip(synth_clip(s, 1), dir);
    return dir;
}

class LineClient {
public:
    explicit LineClient(int port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) throw std::runtime_error("connect");
        timeval tv{5, 0};
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    }
    ~LineClient() { ::close(fd_); }

    void send(const std::string& line) {
        const auto data = line + "\n";
        ASSERT_EQ(::send(fd_, data.data(), data.size(), 0), static_cast<ssize_t>(data.size()));
    }

    Json read() {
        std::size_t pos;
        while ((pos = buffer_.find('\n')) == std::string::npos) {
            char chunk[4096];
            const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
            if (n <= 0) throw std::runtime_error("connection closed");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
        const auto line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return Json::parse(line);
    }

private:
    int fd_ = -1;
    std::string buffer_;
};

}  // namespace

TEST(Listen, ParsesHostAndPort) {
    EXPECT_EQ(parse_listen("0.0.0.0:7070"), std::make_pair(std::string("0.0.0.0"), 7070));
    EXPECT_EQ(parse_listen("7070"), std::make_pair(std::string("127.0.0.1"), 7070));
    EXPECT_THROW(parse_listen("host:port"), ValidationError);
    EXPECT_THROW(parse_listen("localhost:99999"), ValidationError);
}

TEST(LineServer, RequestsAndEventStream) {
    const auto clip = saved_clip("tcp");
    ControlPlane plane;
    LineServer server(plane);
    const int port = server.start("127.0.0.1", 0);
    ASSERT_GT(port, 0);

    LineClient client(port);
    client.send(R"({"request_id":1,"kind":"get_config"})");
    auto reply = client.read();
    EXPECT_EQ(reply["request_id"], 1);
    EXPECT_EQ(reply["ok"], true);
    EXPECT_EQ(reply["result"]["config"]["mode"], "Default");

    client.send("{broken");
    EXPECT_EQ(client.read()["error"]["kind"], "ValidationError");

    client.send(R"({"request_id":"s","kind":"subscribe_events","payload":{"kinds":["alert","run_end"]}})");
    EXPECT_EQ(client.read()["result"]["subscribed"], true);

    client.send(R"({"request_id":"s2","kind":"subscribe_events"})");
    EXPECT_EQ(client.read()["ok"], false);

    client.send(Json{{"request_id", "go"}, {"kind", "start_run"}, {"payload", {{"clips", {clip.string()}}}}}.dump());
    std::size_t alerts = 0;
    bool started = false, ended = false;
    while (!ended) {
        const auto m = client.read();
        if (m.contains("request_id")) {
            EXPECT_EQ(m["request_id"], "go");
            started = m["ok"] == true;
            continue;
        }
        ASSERT_EQ(m["stream"], "event");
        const auto type = m["event"]["type"].get<std::string>();
        if (type == "alert") ++alerts;
        ended = type == "run_end";
    }
    EXPECT_TRUE(started);
    EXPECT_EQ(alerts, 1u);
    plane.wait();
    server.stop();
    fs::remove_all(clip);
}

TEST(HttpServer, ApiAndServerSentEvents) {
    const auto clip = saved_clip("http");
    ControlPlane plane;
    HttpServer server(plane);
    const int port = server.start("127.0.0.1", 0);
    ASSERT_GT(port, 0);

    httplib::Client api("127.0.0.1", port);
    auto res = api.Post("/api", R"({"request_id":"a","kind":"set_mode","payload":{"mode":"Reactive"}})",
                        "application/json");
    ASSERT_TRUE(res);
    auto reply = Json::parse(res->body);
    EXPECT_EQ(reply["ok"], true);
    EXPECT_EQ(reply["result"]["config"]["mode"], "Reactive");

    res = api.Post("/api", R"({"request_id":"a","kind":"get_config"})", "application/json");
    EXPECT_EQ(Json::parse(res->body)["error"]["kind"], "ValidationError");
    res = api.Post("/api", R"({"request_id":"b","kind":"subscribe_events"})", "application/json");
    EXPECT_EQ(Json::parse(res->body)["ok"], false);

    httplib::Client bad("127.0.0.1", port);
    EXPECT_EQ(bad.Get("/events?kinds=gossip")->status, 400);

    std::string stream;
    std::thread reader([&] {
        httplib::Client sse("127.0.0.1", port);
        sse.set_read_timeout(10, 0);
        sse.Get("/events?kinds=alert,run_end", [&](const char* data, std::size_t n) {
            stream.append(data, n);
            return stream.find("event: run_end") == std::string::npos;
        });
    });
    for (int i = 0; i < 200 && plane.bus().subscriber_count() == 0; ++i) std::this_thread::sleep_for(10ms);
    ASSERT_EQ(plane.bus().subscriber_count(), 1u);

    res = api.Post("/api", Json{{"request_id", "go"}, {"kind", "start_run"}, {"payload", {{"clips", {clip.string()}}}}}.dump(),
                   "application/json");
    EXPECT_EQ(Json::parse(res->body)["ok"], true);
    reader.join();
    plane.wait();

    EXPECT_NE(stream.find("event: alert\n"), std::string::npos);
    EXPECT_NE(stream.find("event: run_end\n"), std::string::npos);
    EXPECT_NE(stream.find("data: {"), std::string::npos);
    server.stop();
    fs::remove_all(clip);
}
