#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <thread>

#include "aquamon/gateway/server.hpp"
#include "aquamon/service/pipeline.hpp"

namespace httplib {
class Server;
}

namespace aquamon::service {

// HTTP front end. Every route lives under /api; bodies are JSON. Errors come
// back as {"error": {"code", "message", "field"?}} with 400 for unparsable
// bodies, 404 for unknown ids, 409 for safety rejections and conflicts and
// 422 for invalid fields.
class ApiServer {
public:
    ApiServer(Pipeline& pipeline, gateway::Endpoint listen);
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Errc::startup when the address cannot be bound.
    void start();
    void stop();
    std::uint16_t port() const { return port_; }

private:
    void routes();

    Pipeline& pipeline_;
    gateway::Endpoint listen_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
};

}  // namespace aquamon::service
