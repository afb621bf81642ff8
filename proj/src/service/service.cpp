#include "aquamon/service/service.hpp"

#include <httplib.h>

#include "aquamon/error.hpp"

namespace aquamon::service {

WebhookPoster::WebhookPoster(const std::string& url, std::function<void()> on_failure)
    : on_failure_(std::move(on_failure)) {
    constexpr std::string_view scheme = "http://";
    if (!url.starts_with(scheme)) throw Error(Errc::config, "webhook.url: only http:// URLs are supported");
    auto rest = std::string_view(url).substr(scheme.size());
    const auto slash = rest.find('/');
    const auto authority = rest.substr(0, slash);
    path_ = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    const auto colon = authority.rfind(':');
    host_ = std::string(authority.substr(0, colon));
    if (colon != std::string_view::npos) port_ = gateway::parse_endpoint(authority).port;
    if (host_.empty()) throw Error(Errc::config, "webhook.url: missing host");
    thread_ = std::thread([this] { run(); });
}

WebhookPoster::~WebhookPoster() { stop(); }

void WebhookPoster::post(nlohmann::json body) {
    {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        queue_.push_back(std::move(body));
    }
    cv_.notify_one();
}

void WebhookPoster::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
}

void WebhookPoster::run() {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(2);
    client.set_read_timeout(2);
    for (;;) {
        nlohmann::json body;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) return;
            body = std::move(queue_.front());
            queue_.pop_front();
        }
        const auto res = client.Post(path_, body.dump(), "application/json");
        if (!res || res->status >= 300) on_failure_();
    }
}

Service::Service(RuntimeConfig config, ServiceOptions opts) : config_(std::move(config)), opts_(std::move(opts)) {
    config_.validate();
}

Service::~Service() {
    try {
        stop();
    } catch (...) {
    }
}

void Service::start() {
    if (started_) return;
    PipelineOptions popts;
    popts.clock = opts_.clock;
    popts.no_gateway = !config_.gateway_listen;
    pipeline_ = std::make_unique<Pipeline>(config_, load_models(config_), popts);
    started_ = true;

    if (config_.webhook_url) {
        webhook_ = std::make_unique<WebhookPoster>(*config_.webhook_url, [this] { pipeline_->note_webhook_failure(); });
        pipeline_->set_alert_hook([this](const monitor::MonitorEvent& e) { webhook_->post(monitor::to_json(e)); });
    }
    if (config_.gateway_listen) {
        gateway_ = std::make_unique<gateway::GatewayServer>(
            *config_.gateway_listen, [this](const gateway::GatewayRecord& r) { pipeline_->ingest(r.record); },
            config_.frame_flush_timeout);
        gateway_->start();
        pipeline_->attach_gateway(&gateway_->counters());
    }
    api_ = std::make_unique<ApiServer>(*pipeline_, config_.api_listen);
    api_->start();

    if (config_.replay_path) {
        replay_thread_ = std::thread([this] { replay(); });
    }
    if (opts_.wall_clock_close) {
        ticker_ = std::thread([this] {
            std::unique_lock lock(wake_mu_);
            while (!stopping_) {
                wake_.wait_for(lock, std::chrono::seconds(1));
                if (stopping_) break;
                const auto now = opts_.clock ? opts_.clock()
                                             : std::chrono::time_point_cast<Seconds>(std::chrono::system_clock::now());
                pipeline_->advance_to(now);
            }
        });
    }
}

void Service::replay() {
    try {
        const auto ds = load_dataset_file(*config_.replay_path);
        const auto t0 = std::chrono::steady_clock::now();
        const auto first = ds.records.front().timestamp;
        for (const auto& r : ds.records) {
            if (config_.replay_speedup > 0.0) {
                const auto offset = std::chrono::duration<double>(static_cast<double>((r.timestamp - first).count()) /
                                                                  config_.replay_speedup);
                std::unique_lock lock(wake_mu_);
                wake_.wait_until(lock, t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(offset),
                                 [&] { return stopping_.load(); });
            }
            if (stopping_) return;
            pipeline_->ingest(r);
        }
        pipeline_->flush();
    } catch (const std::exception& e) {
        pipeline_->log().append(EntryKind::system, std::chrono::time_point_cast<Seconds>(std::chrono::system_clock::now()),
                                {{"kind", "replay_failed"}, {"message", e.what()}});
    }
    replay_done_ = true;
}

void Service::stop() {
    if (!started_) return;
    started_ = false;
    {
        std::lock_guard lock(wake_mu_);
        stopping_ = true;
    }
    wake_.notify_all();
    if (replay_thread_.joinable()) replay_thread_.join();
    if (ticker_.joinable()) ticker_.join();
    if (gateway_) gateway_->stop();
    if (api_) api_->stop();
    if (webhook_) webhook_->stop();
    pipeline_->stop();
}

std::uint16_t Service::api_port() const { return api_ ? api_->port() : 0; }

std::optional<std::uint16_t> Service::gateway_port() const {
    if (!gateway_) return std::nullopt;
    return gateway_->port();
}

}  // namespace aquamon::service
