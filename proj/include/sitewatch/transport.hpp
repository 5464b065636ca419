#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <list>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>

#include "sitewatch/controlplane.hpp"

namespace sitewatch {

/// Splits "host:port"; a bare port binds to 127.0.0.1.
inline std::pair<std::string, int> parse_listen(const std::string& spec) {
    const auto colon = spec.rfind(':');
    std::string host = colon == std::string::npos ? "127.0.0.1" : spec.substr(0, colon);
    const std::string port = colon == std::string::npos ? spec : spec.substr(colon + 1);
    try {
        std::size_t used = 0;
        const int p = std::stoi(port, &used);
        if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
        return {host.empty() ? "127.0.0.1" : host, p};
    } catch (const std::exception&) {
        throw ValidationError("listen address '" + spec + "': expected host:port");
    }
}

/// Line-delimited JSON over TCP. Each line is one request; each reply is one
/// line. After subscribe_events the connection also carries event lines,
/// interleaved with replies to any further requests.
class LineServer {
public:
    explicit LineServer(ControlPlane& plane) : plane_(plane) {}
    ~LineServer() { stop(); }

    /// Binds and starts accepting; returns the bound port (useful with 0).
    int start(const std::string& host, int port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw ValidationError(std::string("socket: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
            throw ValidationError("listen host '" + host + "' is not an IPv4 address");
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 16) < 0) {
            const std::string err = std::strerror(errno);
            ::close(fd_);
            fd_ = -1;
            throw ValidationError("bind " + host + ":" + std::to_string(port) + ": " + err);
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        running_ = true;
        acceptor_ = std::thread([this] { accept_loop(); });
        return port_;
    }

    int port() const { return port_; }

    void stop() {
        if (!running_.exchange(false)) return;
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        if (acceptor_.joinable()) acceptor_.join();
        std::list<std::shared_ptr<Connection>> conns;
        {
            std::lock_guard lock(mu_);
            conns.swap(connections_);
        }
        for (auto& c : conns) c->close();
        for (auto& c : conns) c->join();
    }

private:
    struct Connection {
        int fd = -1;
        std::mutex write_mu;
        std::thread reader;
        std::thread pump;
        std::shared_ptr<Subscription> sub;
        std::atomic<bool> open{true};

        bool send_line(const Json& j) {
            const auto line = j.dump() + "\n";
            std::lock_guard lock(write_mu);
            std::size_t sent = 0;
            while (sent < line.size()) {
                const auto n = ::send(fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
                if (n <= 0) return false;
                sent += static_cast<std::size_t>(n);
            }
            return true;
        }
        void close() {
            if (open.exchange(false)) ::shutdown(fd, SHUT_RDWR);
            if (sub) sub->cancel();
        }
        void join() {
            if (reader.joinable()) reader.join();
            if (pump.joinable()) pump.join();
            ::close(fd);
        }
    };

    void accept_loop() {
        while (running_) {
            const int cfd = ::accept(fd_, nullptr, nullptr);
            if (cfd < 0) {
                if (!running_) break;
                continue;
            }
            auto conn = std::make_shared<Connection>();
            conn->fd = cfd;
            {
                std::lock_guard lock(mu_);
                connections_.push_back(conn);
            }
            conn->reader = std::thread([this, conn] { serve(conn); });
        }
    }

    void serve(const std::shared_ptr<Connection>& conn) {
        ControlSession session(plane_);
        std::string buffer;
        char chunk[4096];
        while (conn->open) {
            const auto n = ::recv(conn->fd, chunk, sizeof chunk, 0);
            if (n <= 0) break;
            buffer.append(chunk, static_cast<std::size_t>(n));
            std::size_t pos;
            while ((pos = buffer.find('\n')) != std::string::npos) {
                std::string line = buffer.substr(0, pos);
                buffer.erase(0, pos + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.find_first_not_of(" \t") == std::string::npos) continue;
                Json reply;
                std::shared_ptr<Subscription> sub;
                try {
                    reply = session.handle(Json::parse(line), conn->sub ? nullptr : &sub);
                } catch (const nlohmann::json::parse_error& e) {
                    reply = ControlSession::fail(nullptr, "ValidationError", e.what());
                }
                if (!conn->send_line(reply)) conn->open = false;
                if (sub) start_pump(conn, std::move(sub));
            }
        }
        conn->close();
    }

    static void start_pump(const std::shared_ptr<Connection>& conn, std::shared_ptr<Subscription> sub) {
        conn->sub = std::move(sub);
        conn->pump = std::thread([conn] {
            while (conn->open) {
                auto p = conn->sub->next(std::chrono::milliseconds(200));
                if (p.status == Subscription::Status::timeout) continue;
                if (p.status == Subscription::Status::closed) break;
                if (!conn->send_line(p.message)) break;
                if (p.status == Subscription::Status::overrun) break;
            }
            conn->close();
        });
    }

    ControlPlane& plane_;
    int fd_ = -1;
    int port_ = 0;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex mu_;
    std::list<std::shared_ptr<Connection>> connections_;
};

/// Browser-facing channel: `POST /api` takes one control message per request,
/// `GET /events?kinds=a,b&buffer=N` streams events as server-sent events.
/// Request ids are checked across the whole HTTP channel.
class HttpServer {
public:
    explicit HttpServer(ControlPlane& plane) : plane_(plane), session_(plane) {
        server_.Post("/api", [this](const httplib::Request& req, httplib::Response& res) {
            Json reply;
            try {
                const Json body = Json::parse(req.body);
                std::lock_guard lock(mu_);
                reply = session_.handle(body);
            } catch (const nlohmann::json::parse_error& e) {
                reply = ControlSession::fail(nullptr, "ValidationError", e.what());
            }
            res.set_content(reply.dump(), "application/json");
        });
        server_.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
            std::set<std::string> kinds;
            std::size_t capacity = kDefaultEventBuffer;
            std::shared_ptr<Subscription> sub;
            try {
                if (req.has_param("kinds")) {
                    std::stringstream ss(req.get_param_value("kinds"));
                    for (std::string k; std::getline(ss, k, ',');)
                        if (!k.empty()) kinds.insert(k);
                }
                if (req.has_param("buffer")) capacity = std::stoul(req.get_param_value("buffer"));
                if (capacity == 0) throw ValidationError("buffer must be positive");
                sub = plane_.bus().subscribe(std::move(kinds), capacity);
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(ControlSession::fail(nullptr, "ValidationError", e.what()).dump(), "application/json");
                return;
            }
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream",
                [sub](std::size_t, httplib::DataSink& sink) {
                    auto p = sub->next(std::chrono::milliseconds(200));
                    switch (p.status) {
                        case Subscription::Status::timeout: {
                            const std::string ping = ": keepalive\n\n";
                            return sink.write(ping.data(), ping.size());
                        }
                        case Subscription::Status::event: {
                            const auto msg = "id: " + p.message["seq"].dump() + "\nevent: " +
                                             p.message["event"]["type"].get<std::string>() +
                                             "\ndata: " + p.message.dump() + "\n\n";
                            return sink.write(msg.data(), msg.size());
                        }
                        case Subscription::Status::overrun: {
                            const auto msg = "event: notice\ndata: " + p.message.dump() + "\n\n";
                            sink.write(msg.data(), msg.size());
                            sink.done();
                            return true;
                        }
                        case Subscription::Status::closed: sink.done(); return true;
                    }
                    return false;
                },
                [sub](bool) { sub->cancel(); });
        });
    }

    ~HttpServer() { stop(); }

    int start(const std::string& host, int port) {
        port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (port_ < 0) throw ValidationError("bind " + host + ":" + std::to_string(port) + " failed");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        plane_.bus().close_all();
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

private:
    ControlPlane& plane_;
    std::mutex mu_;
    ControlSession session_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace sitewatch
