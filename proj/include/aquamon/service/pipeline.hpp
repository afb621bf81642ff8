#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aquamon/dataset.hpp"
#include "aquamon/forecast/forecast.hpp"
#include "aquamon/forecast/model.hpp"
#include "aquamon/gateway/server.hpp"
#include "aquamon/monitor/supervisor.hpp"
#include "aquamon/service/config.hpp"
#include "aquamon/service/event_log.hpp"

namespace aquamon::service {

// One resample bucket across every metric. A metric with no records has no value.
struct Bucket {
    UtcSeconds start{};
    std::array<std::optional<double>, kMetricCount> values{};
    std::array<std::uint32_t, kMetricCount> counts{};

    std::optional<double> value(MetricKind m) const { return values[metric_index(m)]; }
    bool empty() const;
    friend bool operator==(const Bucket&, const Bucket&) = default;
};

nlohmann::json to_json(const Bucket& b);
Bucket bucket_from_json(const nlohmann::json& doc);

// Everything the service rebuilds from its log.
struct RecoveredState {
    monitor::SystemState state;
    std::deque<Bucket> history;                           // oldest first
    std::map<std::uint64_t, monitor::AlertEvent> alerts;  // latest version of every alert
    std::map<MetricKind, forecast::ForecastResult> forecasts;
    std::optional<UtcSeconds> last_bucket;                // start of the newest closed bucket
};

nlohmann::json to_json(const RecoveredState& r);
RecoveredState recovered_from_json(const nlohmann::json& doc);

// Folds one entry. Applying the same entries again leaves the result unchanged.
void fold_entry(RecoveredState& r, const LogEntry& e, std::size_t history_capacity);
RecoveredState recover(const std::optional<Snapshot>& snapshot, const std::vector<LogEntry>& entries,
                       std::size_t history_capacity);

struct ModelSet {
    std::vector<forecast::CnnModel> models;
    std::vector<std::string> missing;  // "metric: reason" for models skipped in degraded mode
};

// Loads every configured model and checks it against the config. Errc::config
// on a window mismatch; unreadable files are errors unless allow_missing_models.
ModelSet load_models(const RuntimeConfig& config);

struct PipelineOptions {
    std::function<UtcSeconds()> clock;  // operator actions; wall clock by default
    bool no_gateway = false;            // reported in health
};

// Turns records into buckets, forecasts and monitor cycles; owns the event log
// and the supervisor. Buckets close on event time: the first record of a later
// bucket closes every earlier one, empty buckets included.
class Pipeline {
public:
    using AlertHook = std::function<void(const monitor::MonitorEvent&)>;

    Pipeline(RuntimeConfig config, ModelSet models, PipelineOptions opts = {});
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    void ingest(const SampleRecord& r);
    // Closes every bucket that ends at or before `watermark`.
    void advance_to(UtcSeconds watermark);
    // Closes the open bucket, if any.
    void flush();

    monitor::Transition acknowledge(std::uint64_t alert_id, const std::string& actor);
    monitor::Transition set_override(monitor::ActuatorId id, std::optional<monitor::Demand> demand,
                                     const std::string& actor);
    monitor::Transition trigger_estop(const std::string& reason, const std::string& actor);
    monitor::Transition reset_estop(const std::string& actor);

    std::shared_ptr<const monitor::SystemState> state() const;
    std::vector<Bucket> history(std::optional<UtcSeconds> from, std::optional<UtcSeconds> to) const;
    std::vector<monitor::AlertEvent> alerts(std::optional<monitor::AlertState> filter = std::nullopt) const;
    std::map<MetricKind, forecast::ForecastResult> forecasts() const;
    std::optional<UtcSeconds> last_bucket() const;

    nlohmann::json latest_readings_json() const;
    nlohmann::json history_json(MetricKind m, std::optional<UtcSeconds> from, std::optional<UtcSeconds> to) const;
    nlohmann::json forecasts_json() const;
    nlohmann::json alerts_json(std::optional<monitor::AlertState> filter) const;
    nlohmann::json actuators_json() const;
    nlohmann::json health_json() const;

    void attach_gateway(const gateway::GatewayCounters* counters);
    void set_alert_hook(AlertHook hook);
    void note_webhook_failure() { ++webhook_failures_; }

    EventLog& log() { return *log_; }
    const RuntimeConfig& config() const { return config_; }
    const RangeTable& ranges() const { return config_.ranges; }

    // Stops the supervisor, writes a final snapshot and closes the log.
    void stop();

private:
    struct OpenBucket {
        UtcSeconds start{};
        std::array<double, kMetricCount> sum{};
        std::array<std::uint32_t, kMetricCount> counts{};
    };

    void close_through(UtcSeconds end);
    void close_bucket(const Bucket& b);
    void on_transition(const monitor::Transition& t);
    void maybe_snapshot(const monitor::SystemState& state);
    void write_snapshot(const monitor::SystemState& state);
    monitor::Transition run(monitor::Command cmd);
    UtcSeconds now() const;
    LogEntry append_system(UtcSeconds at, std::string_view code, std::string message);

    RuntimeConfig config_;
    std::vector<forecast::CnnModel> models_;
    std::vector<std::string> missing_models_;
    PipelineOptions opts_;
    std::unique_ptr<EventLog> log_;

    // Serializes ingest, bucket closing and cycles.
    std::mutex ingest_mu_;
    std::optional<OpenBucket> open_;

    // Every log append happens under data_mu_ together with its in-memory effect.
    mutable std::mutex data_mu_;
    RecoveredState data_;
    std::uint64_t snapshot_seq_ = 0;
    AlertHook hook_;
    const gateway::GatewayCounters* gateway_ = nullptr;

    std::atomic<std::uint64_t> records_{0};
    std::atomic<std::uint64_t> late_records_{0};
    std::atomic<std::uint64_t> cycles_{0};
    std::atomic<std::uint64_t> webhook_failures_{0};
    std::atomic<std::uint64_t> log_errors_{0};

    std::unique_ptr<monitor::Supervisor> supervisor_;
    bool stopped_ = false;
};

}  // namespace aquamon::service
