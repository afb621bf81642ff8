#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "aquamon/gateway/frame.hpp"

namespace aquamon::gateway {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

// "host:port"; throws Errc::config.
Endpoint parse_endpoint(std::string_view text);
std::string to_string(const Endpoint& e);

struct GatewayCounters {
    std::atomic<std::uint64_t> connections_total{0};
    std::atomic<std::uint64_t> connections_open{0};
    std::atomic<std::uint64_t> bytes{0};
    std::atomic<std::uint64_t> frames{0};
    std::atomic<std::uint64_t> crc_failures{0};
    std::atomic<std::uint64_t> resyncs{0};
    std::atomic<std::uint64_t> rejected{0};
    std::atomic<std::uint64_t> self_test_dropped{0};
    std::atomic<std::uint64_t> records{0};
    std::atomic<std::uint64_t> sink_errors{0};

    nlohmann::json to_json() const;
};

// TCP listener. Each connection carries back-to-back frames and gets its own
// scanner and assembler; records from all connections reach the sink one at a
// time.
class GatewayServer {
public:
    using Sink = std::function<void(const GatewayRecord&)>;

    GatewayServer(Endpoint listen, Sink sink, std::chrono::milliseconds flush_timeout = std::chrono::seconds(2));
    ~GatewayServer();

    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    // Binds and starts accepting. Throws Errc::startup if the address is unusable.
    void start();
    void stop();
    bool running() const { return running_; }

    // Actual port after start(), useful when listening on port 0.
    std::uint16_t port() const { return port_; }
    const GatewayCounters& counters() const { return counters_; }

private:
    void accept_loop();
    void serve_connection(int fd);
    void deliver(const GatewayRecord& r);

    Endpoint listen_;
    Sink sink_;
    std::chrono::milliseconds flush_timeout_;
    GatewayCounters counters_;

    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread acceptor_;

    std::mutex conn_mu_;
    std::list<std::thread> workers_;
    std::list<int> open_fds_;

    std::mutex sink_mu_;
};

// Blocking client that writes encoded frames to a gateway.
class FrameSender {
public:
    explicit FrameSender(const Endpoint& to);  // Errc::io when the connection fails
    ~FrameSender();

    FrameSender(const FrameSender&) = delete;
    FrameSender& operator=(const FrameSender&) = delete;

    void send(const SensorFrame& f);
    void send_bytes(std::span<const std::uint8_t> bytes);
    void close();

private:
    int fd_ = -1;
};

}  // namespace aquamon::gateway
