#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aquamon/gateway/server.hpp"
#include "aquamon/metrics.hpp"
#include "aquamon/monitor/monitor.hpp"

namespace aquamon::service {

// A forecaster to load at startup. Window fields, when present, must match the
// weight file.
struct ModelEntry {
    MetricKind metric{};
    std::string path;
    std::optional<std::size_t> history_steps;
    std::optional<std::size_t> horizon_steps;
    std::optional<std::vector<MetricKind>> input_metrics;
};

struct RuntimeConfig {
    std::optional<gateway::Endpoint> gateway_listen = gateway::Endpoint{"127.0.0.1", 7400};  // nullopt: no gateway
    std::chrono::milliseconds frame_flush_timeout{2000};
    gateway::Endpoint api_listen{"127.0.0.1", 8080};
    std::string data_dir = "aquamon-data";

    Seconds resample_step{600};
    Seconds forecast_cadence{3600};
    std::vector<ModelEntry> models;
    // Start without forecasts when a model cannot be loaded.
    bool allow_missing_models = false;

    RangeTable ranges = default_ranges();
    monitor::MonitorConfig monitor;

    std::size_t history_buckets = 1008;  // one week at 10 minutes
    std::uint64_t snapshot_every = 500;  // log entries between state snapshots

    std::optional<std::string> replay_path;
    double replay_speedup = 0.0;

    std::optional<std::string> webhook_url;

    // Errc::config with a field path.
    void validate() const;
};

RuntimeConfig runtime_config_from_json(const nlohmann::json& doc);
RuntimeConfig load_runtime_config(std::string_view text);
RuntimeConfig load_runtime_config_file(const std::string& path);

// AQUAMON_GATEWAY_LISTEN, AQUAMON_API_LISTEN, AQUAMON_DATA_DIR. An empty
// AQUAMON_GATEWAY_LISTEN disables the gateway.
using EnvLookup = std::function<std::optional<std::string>(const char*)>;
void apply_env_overrides(RuntimeConfig& config, const EnvLookup& env);
void apply_env_overrides(RuntimeConfig& config);

nlohmann::json to_json(const RuntimeConfig& config);

}  // namespace aquamon::service
