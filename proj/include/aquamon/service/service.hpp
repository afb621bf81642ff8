#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "aquamon/gateway/server.hpp"
#include "aquamon/service/api.hpp"
#include "aquamon/service/config.hpp"
#include "aquamon/service/pipeline.hpp"

namespace aquamon::service {

// Posts alert events as JSON to an http:// URL from a background thread.
class WebhookPoster {
public:
    WebhookPoster(const std::string& url, std::function<void()> on_failure);
    ~WebhookPoster();

    void post(nlohmann::json body);
    void stop();

private:
    void run();

    std::string host_;
    int port_ = 80;
    std::string path_;
    std::function<void()> on_failure_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<nlohmann::json> queue_;
    bool stopping_ = false;
    std::thread thread_;
};

struct ServiceOptions {
    // Close buckets on the wall clock as well as on record time, so a silent
    // gateway still yields empty buckets. Only meaningful for live sensors.
    bool wall_clock_close = false;
    std::function<UtcSeconds()> clock;
};

// Gateway listener, pipeline, API and optional replay feed in one process.
class Service {
public:
    explicit Service(RuntimeConfig config, ServiceOptions opts = {});
    ~Service();

    // Errc::startup for unusable addresses, Errc::config for model mismatches.
    void start();
    // Stops inputs first, then the API, then the pipeline (final snapshot).
    void stop();

    Pipeline& pipeline() { return *pipeline_; }
    std::uint16_t api_port() const;
    std::optional<std::uint16_t> gateway_port() const;
    bool replay_done() const { return replay_done_; }

private:
    void replay();

    RuntimeConfig config_;
    ServiceOptions opts_;
    std::unique_ptr<Pipeline> pipeline_;
    std::unique_ptr<gateway::GatewayServer> gateway_;
    std::unique_ptr<ApiServer> api_;
    std::unique_ptr<WebhookPoster> webhook_;
    std::thread replay_thread_;
    std::thread ticker_;
    std::atomic<bool> stopping_{false};
    std::atomic<bool> replay_done_{false};
    std::mutex wake_mu_;
    std::condition_variable wake_;
    bool started_ = false;
};

}  // namespace aquamon::service
