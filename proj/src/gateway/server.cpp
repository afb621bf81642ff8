#include "aquamon/gateway/server.hpp"

#include <charconv>
#include <cstring>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "aquamon/error.hpp"

namespace aquamon::gateway {

namespace {

std::string errno_text() { return std::strerror(errno); }

addrinfo* resolve(const Endpoint& e, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const auto port = std::to_string(e.port);
    const int rc = getaddrinfo(e.host.empty() ? nullptr : e.host.c_str(), port.c_str(), &hints, &res);
    if (rc != 0) return nullptr;
    return res;
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos) {
        throw Error(Errc::config, "address '" + std::string(text) + "' must be host:port");
    }
    Endpoint e;
    e.host = std::string(text.substr(0, colon));
    const auto port = text.substr(colon + 1);
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (port.empty() || ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
        throw Error(Errc::config, "address '" + std::string(text) + "' has an invalid port");
    }
    e.port = static_cast<std::uint16_t>(value);
    return e;
}

std::string to_string(const Endpoint& e) { return e.host + ":" + std::to_string(e.port); }

nlohmann::json GatewayCounters::to_json() const {
    return {{"connections_total", connections_total.load()},
            {"connections_open", connections_open.load()},
            {"bytes", bytes.load()},
            {"frames", frames.load()},
            {"crc_failures", crc_failures.load()},
            {"resyncs", resyncs.load()},
            {"rejected", rejected.load()},
            {"self_test_dropped", self_test_dropped.load()},
            {"records", records.load()},
            {"sink_errors", sink_errors.load()}};
}

GatewayServer::GatewayServer(Endpoint listen, Sink sink, std::chrono::milliseconds flush_timeout)
    : listen_(std::move(listen)), sink_(std::move(sink)), flush_timeout_(flush_timeout) {}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
    if (running_) return;
    addrinfo* res = resolve(listen_, true);
    if (!res) throw Error(Errc::startup, "cannot resolve gateway address " + to_string(listen_));
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
        freeaddrinfo(res);
        throw Error(Errc::startup, "socket: " + errno_text());
    }
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
        const auto why = errno_text();
        freeaddrinfo(res);
        ::close(fd);
        throw Error(Errc::startup, "cannot listen on " + to_string(listen_) + ": " + why);
    }
    freeaddrinfo(res);
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    listen_fd_ = fd;
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void GatewayServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    listen_fd_ = -1;
    std::list<std::thread> workers;
    {
        std::lock_guard lock(conn_mu_);
        for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
}

void GatewayServer::accept_loop() {
    while (running_) {
        pollfd p{listen_fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, 100);
        if (rc <= 0 || !running_) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        std::lock_guard lock(conn_mu_);
        if (!running_) {
            ::close(fd);
            break;
        }
        ++counters_.connections_total;
        ++counters_.connections_open;
        open_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void GatewayServer::deliver(const GatewayRecord& r) {
    std::lock_guard lock(sink_mu_);
    ++counters_.records;
    if (!sink_) return;
    try {
        sink_(r);
    } catch (...) {
        ++counters_.sink_errors;
    }
}

void GatewayServer::serve_connection(int fd) {
    FrameScanner scanner;
    ScannerStats seen;
    RecordAssembler assembler([this](GatewayRecord r) { deliver(r); }, flush_timeout_);
    std::uint64_t dropped = 0;
    std::array<std::uint8_t, 4096> buf{};
    auto sync_counters = [&] {
        const auto& s = scanner.stats();
        counters_.frames += s.frames - seen.frames;
        counters_.crc_failures += s.crc_failures - seen.crc_failures;
        counters_.resyncs += s.resyncs - seen.resyncs;
        counters_.rejected += s.rejected - seen.rejected;
        seen = s;
        counters_.self_test_dropped += assembler.stats().self_test_dropped - dropped;
        dropped = assembler.stats().self_test_dropped;
    };
    for (;;) {
        pollfd p{fd, POLLIN, 0};
        const int rc = ::poll(&p, 1, 100);
        if (rc < 0 && errno != EINTR) break;
        if (rc > 0) {
            const auto n = ::recv(fd, buf.data(), buf.size(), 0);
            if (n <= 0) break;
            counters_.bytes += static_cast<std::uint64_t>(n);
            for (const auto& f : scanner.feed(std::span(buf).first(static_cast<std::size_t>(n)))) assembler.add(f);
        }
        assembler.poll();
        sync_counters();
        if (!running_) break;
    }
    assembler.close();
    sync_counters();
    {
        std::lock_guard lock(conn_mu_);
        open_fds_.remove(fd);
    }
    ::close(fd);
    --counters_.connections_open;
}

FrameSender::FrameSender(const Endpoint& to) {
    addrinfo* res = resolve(to, false);
    if (!res) throw Error(Errc::io, "cannot resolve " + to_string(to));
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
        const auto why = errno_text();
        freeaddrinfo(res);
        close();
        throw Error(Errc::io, "cannot connect to " + to_string(to) + ": " + why);
    }
    freeaddrinfo(res);
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

FrameSender::~FrameSender() { close(); }

void FrameSender::send(const SensorFrame& f) {
    const auto bytes = encode_frame(f);
    send_bytes(bytes);
}

void FrameSender::send_bytes(std::span<const std::uint8_t> bytes) {
    if (fd_ < 0) throw Error(Errc::io, "sender is closed");
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const auto n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::io, "send failed: " + errno_text());
        }
        sent += static_cast<std::size_t>(n);
    }
}

void FrameSender::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

}  // namespace aquamon::gateway
