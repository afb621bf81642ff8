#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aquamon/dataset.hpp"
#include "aquamon/rng.hpp"

namespace aquamon::sim {

struct PondParams {
    UtcSeconds start = from_epoch(1'624'060'800);  // 2021-06-19 00:00:00
    Seconds sample_period{60};
    std::uint64_t seed = 42;

    double temp_mean = 28.0;
    double temp_amplitude = 1.5;  // diurnal, peak at 06:00 UTC
    // Linear DO saturation around temp_mean; DO = saturation - consumption.
    double do_saturation_at_mean = 7.8;
    double do_saturation_slope = -0.2;  // mg/L per degree
    double do_consumption = 1.3;

    // Indexed by water metric id. DO's level follows the saturation curve; its
    // setpoint only scales outliers.
    std::array<double, kWaterMetricCount> setpoints{28.0, 7.5, 6.5, 250.0, 0.05, 50.0, 0.2, 55.0};
    std::array<double, kWaterMetricCount> noise_stddev{0.3, 0.05, 0.15, 10.0, 0.01, 3.0, 0.02, 3.0};
    std::array<double, kWaterMetricCount> reversion_seconds{3600, 3600, 1800, 7200, 7200, 7200, 7200, 3600};

    double outlier_probability = 0.005;

    double population = 50.0;
    double fish_length = 7.11;
    double fish_weight = 2.91;

    double setpoint(MetricKind m) const { return setpoints[metric_index(m)]; }
    void validate() const;
};

// The outlier stream is seeded with seed ^ kOutlierStreamSalt.
inline constexpr std::uint64_t kOutlierStreamSalt = 0x6f75746c69657273ull;

// All parameters quiet: no noise, no diurnal swing, no outliers.
PondParams quiet_params();

enum class ActionType : std::uint8_t { spike, ramp, sensor_fault, do_crash };

struct ScenarioEvent {
    Seconds at{0};
    ActionType action = ActionType::spike;
    MetricKind metric = MetricKind::dissolved_oxygen;
    double magnitude = 0.0;        // spike: jump in the latent level
    double rate_per_sample = 0.0;  // ramp: offset added each sample while active
    double depth = 0.0;            // do_crash: mg/L below the 5 mg/L minimum
    Seconds duration{0};
};

struct ScenarioScript {
    std::string name = "empty";
    Seconds duration{0};
    std::vector<ScenarioEvent> events;  // sorted by offset

    void validate() const;
};

// Events are sorted by offset on load. Errc::config with a field path on error.
ScenarioScript scenario_from_json(const nlohmann::json& doc);
ScenarioScript load_scenario(std::string_view text);
nlohmann::json to_json(const ScenarioScript& s);

// "healthy" (7 days), "do_crash", "nitrate_ramp", "sensor_fault", "spikes".
std::optional<ScenarioScript> builtin_scenario(std::string_view name);
std::vector<std::string> builtin_scenario_names();

struct SimSample {
    std::uint64_t index = 0;
    UtcSeconds timestamp{};
    MetricValues values;            // emitted, including any outlier
    std::uint16_t faulted_mask = 0;  // bit per metric id: sensor self-test failed, no value
    std::optional<MetricKind> outlier;

    bool faulted(MetricKind m) const { return (faulted_mask >> metric_id(m)) & 1u; }
};

// Deterministic pond: mean-reverting (Ornstein-Uhlenbeck, exact discretization)
// deviations around setpoints, a diurnal temperature cycle, DO tied to
// temperature, scripted events on top, and emitted-only outliers drawn from a
// separate random stream.
class PondSimulator {
public:
    explicit PondSimulator(PondParams params, ScenarioScript script = {});

    SimSample next();

    std::uint64_t samples() const { return index_; }
    std::uint64_t outliers() const { return outliers_; }
    std::size_t events_applied() const { return next_event_; }
    // Latent (pre-outlier) water values of the last sample.
    const std::array<double, kWaterMetricCount>& latent() const { return latent_; }
    const PondParams& params() const { return params_; }

private:
    struct Active {
        ScenarioEvent event;
        UtcSeconds until;
    };

    PondParams params_;
    ScenarioScript script_;
    Rng noise_rng_;
    Rng outlier_rng_;
    std::uint64_t index_ = 0;
    std::uint64_t outliers_ = 0;
    std::size_t next_event_ = 0;
    std::array<double, kWaterMetricCount> deviation_{};
    std::array<double, kWaterMetricCount> ramp_offset_{};
    std::array<double, kWaterMetricCount> latent_{};
    std::vector<Active> active_;
};

class SampleSink {
public:
    virtual ~SampleSink() = default;
    virtual void emit(const SimSample& s) = 0;
    virtual void finish() {}
};

// Dataset CSV in the canonical column order; faulted cells are left empty.
class CsvSink : public SampleSink {
public:
    explicit CsvSink(std::ostream& out);
    void emit(const SimSample& s) override;
    void finish() override;

private:
    std::ostream& out_;
    bool header_ = false;
};

struct RunSummary {
    std::uint64_t samples = 0;
    std::uint64_t outliers = 0;
    std::size_t events_applied = 0;
    std::optional<std::string> error;  // set when the sink failed part-way

    nlohmann::json to_json() const;
};

struct RunOptions {
    double speedup = 0.0;                  // 0 runs unpaced; else one sample per period / speedup
    std::optional<std::uint64_t> samples;  // default: script duration / sample period
    std::function<bool()> should_stop;     // checked before each sample
};

// Sink exceptions end the run; the summary then carries the error and the
// counts reached so far.
RunSummary run_scenario(const PondParams& params, const ScenarioScript& script, SampleSink& sink,
                        const RunOptions& opts = {});

// Sends recorded rows through a sink. With a speedup, rows are spaced by their
// timestamp differences divided by it.
RunSummary replay_records(const std::vector<SampleRecord>& records, SampleSink& sink, const RunOptions& opts = {});

// Collects every sample as a SampleRecord (faulted metrics omitted).
std::vector<SampleRecord> simulate_records(const PondParams& params, const ScenarioScript& script,
                                           std::optional<std::uint64_t> samples = std::nullopt);

}  // namespace aquamon::sim
