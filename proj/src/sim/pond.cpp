#include "aquamon/sim/pond.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <thread>

#include "aquamon/error.hpp"
#include "aquamon/json_util.hpp"

namespace aquamon::sim {

namespace {

constexpr double kDoMinimum = 5.0;

std::size_t idx(MetricKind m) { return metric_index(m); }

}  // namespace

void PondParams::validate() const {
    if (sample_period.count() <= 0) throw Error(Errc::parameter, "sample period must be positive");
    if (!(outlier_probability >= 0.0 && outlier_probability < 1.0)) {
        throw Error(Errc::parameter, "outlier probability must lie in [0, 1)");
    }
    for (std::size_t i = 0; i < kWaterMetricCount; ++i) {
        const auto name = std::string(metric_name(kAllMetrics[i]));
        if (!(noise_stddev[i] >= 0.0) || !std::isfinite(noise_stddev[i])) {
            throw Error(Errc::parameter, "noise stddev for " + name + " must be finite and >= 0");
        }
        if (!(reversion_seconds[i] > 0.0)) throw Error(Errc::parameter, "reversion time for " + name + " must be > 0");
        if (!std::isfinite(setpoints[i])) throw Error(Errc::parameter, "setpoint for " + name + " must be finite");
    }
    if (!std::isfinite(temp_mean) || !std::isfinite(temp_amplitude) || temp_amplitude < 0.0) {
        throw Error(Errc::parameter, "temperature mean/amplitude invalid");
    }
}

PondParams quiet_params() {
    PondParams p;
    p.temp_amplitude = 0.0;
    p.noise_stddev.fill(0.0);
    p.outlier_probability = 0.0;
    return p;
}

void ScenarioScript::validate() const {
    if (duration.count() < 0) throw Error(Errc::config, "scenario.duration_s: must be >= 0");
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        const auto path = "scenario.events[" + std::to_string(i) + "]";
        if (e.at.count() < 0) throw Error(Errc::config, path + ".at_s: must be >= 0");
        if (duration.count() > 0 && e.at > duration) throw Error(Errc::config, path + ".at_s: beyond scenario duration");
        if (i > 0 && e.at < events[i - 1].at) throw Error(Errc::config, path + ": events out of order");
        if (!is_water_metric(e.metric)) throw Error(Errc::config, path + ".metric: not a water metric");
        if (e.action != ActionType::spike && e.duration.count() <= 0) {
            throw Error(Errc::config, path + ".duration_s: must be > 0");
        }
        if (e.action == ActionType::do_crash && !(e.depth > 0.0)) {
            throw Error(Errc::config, path + ".depth: must be > 0");
        }
    }
}

PondSimulator::PondSimulator(PondParams params, ScenarioScript script)
    : params_(std::move(params)),
      script_(std::move(script)),
      noise_rng_(params_.seed),
      outlier_rng_(params_.seed ^ kOutlierStreamSalt) {
    params_.validate();
    script_.validate();
}

SimSample PondSimulator::next() {
    const auto offset = params_.sample_period * static_cast<std::int64_t>(index_);
    const auto t = params_.start + offset;
    const double dt = static_cast<double>(params_.sample_period.count());

    if (index_ > 0) {
        for (std::size_t i = 0; i < kWaterMetricCount; ++i) {
            const double z = noise_rng_.normal();
            const double a = std::exp(-dt / params_.reversion_seconds[i]);
            deviation_[i] = deviation_[i] * a + params_.noise_stddev[i] * std::sqrt(1.0 - a * a) * z;
        }
    }

    std::erase_if(active_, [&](const Active& a) { return a.until <= t; });
    while (next_event_ < script_.events.size() && script_.events[next_event_].at <= offset) {
        const auto& e = script_.events[next_event_++];
        if (e.action == ActionType::spike) {
            deviation_[idx(e.metric)] += e.magnitude;
        } else {
            active_.push_back({e, t + e.duration});
        }
    }

    std::uint16_t faulted = 0;
    std::optional<double> crash_depth;
    for (const auto& a : active_) {
        switch (a.event.action) {
            case ActionType::ramp: ramp_offset_[idx(a.event.metric)] += a.event.rate_per_sample; break;
            case ActionType::sensor_fault: faulted |= static_cast<std::uint16_t>(1u << metric_id(a.event.metric)); break;
            case ActionType::do_crash: crash_depth = std::max(crash_depth.value_or(0.0), a.event.depth); break;
            case ActionType::spike: break;
        }
    }

    const auto seconds_of_day = static_cast<double>(((to_epoch(t) % 86400) + 86400) % 86400);
    const double diurnal = params_.temp_amplitude * std::sin(2.0 * std::numbers::pi * seconds_of_day / 86400.0);
    const auto T = idx(MetricKind::temperature);
    const auto DO = idx(MetricKind::dissolved_oxygen);
    for (std::size_t i = 0; i < kWaterMetricCount; ++i) {
        latent_[i] = params_.setpoints[i] + deviation_[i] + ramp_offset_[i];
    }
    latent_[T] = params_.temp_mean + diurnal + deviation_[T] + ramp_offset_[T];
    latent_[DO] = (params_.do_saturation_at_mean - params_.do_consumption) +
                  params_.do_saturation_slope * (latent_[T] - params_.temp_mean) + deviation_[DO] + ramp_offset_[DO];
    if (crash_depth) latent_[DO] = std::min(latent_[DO], kDoMinimum) - *crash_depth;
    for (std::size_t i = 0; i < kWaterMetricCount; ++i) {
        if (i != T) latent_[i] = std::max(latent_[i], 0.0);
    }

    SimSample s;
    s.index = index_;
    s.timestamp = t;
    s.faulted_mask = faulted;
    for (std::size_t i = 0; i < kWaterMetricCount; ++i) {
        const auto m = kAllMetrics[i];
        if (!s.faulted(m)) s.values.set(m, latent_[i]);
    }
    if (outlier_rng_.bernoulli(params_.outlier_probability)) {
        const auto m = kAllMetrics[outlier_rng_.below(kWaterMetricCount)];
        const double v = params_.setpoint(m) * outlier_rng_.uniform(3.0, 10.0);
        if (!s.faulted(m)) {
            s.values.set(m, v);
            s.outlier = m;
            ++outliers_;
        }
    }
    s.values.set(MetricKind::population, params_.population);
    s.values.set(MetricKind::fish_length, params_.fish_length);
    s.values.set(MetricKind::fish_weight, params_.fish_weight);
    ++index_;
    return s;
}

namespace {

constexpr std::array<std::string_view, 4> kActionNames{"spike", "ramp", "sensor_fault", "do_crash"};

std::string_view action_name(ActionType a) { return kActionNames[static_cast<std::size_t>(a)]; }

double number_at(const nlohmann::json& obj, const char* key, const std::string& path) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw Error(Errc::config, path + "." + key + ": required");
    if (!it->is_number()) throw Error(Errc::config, path + "." + key + ": expected a number");
    const double v = it->get<double>();
    if (!std::isfinite(v)) throw Error(Errc::config, path + "." + key + ": must be finite");
    return v;
}

Seconds seconds_at(const nlohmann::json& obj, const char* key, const std::string& path) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw Error(Errc::config, path + "." + key + ": required");
    if (!it->is_number_integer()) throw Error(Errc::config, path + "." + key + ": expected whole seconds");
    return Seconds{it->get<std::int64_t>()};
}

void only_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
    for (const auto& [k, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw Error(Errc::config, path + "." + k + ": unknown field");
        }
    }
}

ScenarioEvent event_from_json(const nlohmann::json& e, const std::string& path) {
    if (!e.is_object()) throw Error(Errc::config, path + ": expected an object");
    const auto act = e.find("action");
    if (act == e.end() || !act->is_string()) throw Error(Errc::config, path + ".action: expected a string");
    const auto name = act->get<std::string>();
    const auto pos = std::find(kActionNames.begin(), kActionNames.end(), name);
    if (pos == kActionNames.end()) throw Error(Errc::config, path + ".action: unknown action '" + name + "'");

    ScenarioEvent ev;
    ev.action = static_cast<ActionType>(pos - kActionNames.begin());
    ev.at = seconds_at(e, "at_s", path);
    if (ev.action != ActionType::do_crash) {
        const auto m = e.find("metric");
        if (m == e.end() || !m->is_string()) throw Error(Errc::config, path + ".metric: expected a string");
        const auto metric = metric_from_name(m->get<std::string>());
        if (!metric) throw Error(Errc::config, path + ".metric: unknown metric '" + m->get<std::string>() + "'");
        ev.metric = *metric;
    }
    switch (ev.action) {
        case ActionType::spike:
            only_keys(e, {"action", "at_s", "metric", "magnitude"}, path);
            ev.magnitude = number_at(e, "magnitude", path);
            break;
        case ActionType::ramp:
            only_keys(e, {"action", "at_s", "metric", "rate_per_sample", "duration_s"}, path);
            ev.rate_per_sample = number_at(e, "rate_per_sample", path);
            ev.duration = seconds_at(e, "duration_s", path);
            break;
        case ActionType::sensor_fault:
            only_keys(e, {"action", "at_s", "metric", "duration_s"}, path);
            ev.duration = seconds_at(e, "duration_s", path);
            break;
        case ActionType::do_crash:
            only_keys(e, {"action", "at_s", "depth", "duration_s"}, path);
            ev.metric = MetricKind::dissolved_oxygen;
            ev.depth = number_at(e, "depth", path);
            ev.duration = seconds_at(e, "duration_s", path);
            break;
    }
    return ev;
}

}  // namespace

ScenarioScript scenario_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error(Errc::config, "scenario: expected an object");
    only_keys(doc, {"name", "duration_s", "events"}, "scenario");
    ScenarioScript s;
    if (const auto it = doc.find("name"); it != doc.end()) {
        if (!it->is_string()) throw Error(Errc::config, "scenario.name: expected a string");
        s.name = it->get<std::string>();
    }
    s.duration = seconds_at(doc, "duration_s", "scenario");
    if (const auto it = doc.find("events"); it != doc.end()) {
        if (!it->is_array()) throw Error(Errc::config, "scenario.events: expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            s.events.push_back(event_from_json((*it)[i], "scenario.events[" + std::to_string(i) + "]"));
        }
    }
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const ScenarioEvent& a, const ScenarioEvent& b) { return a.at < b.at; });
    s.validate();
    return s;
}

ScenarioScript load_scenario(std::string_view text) { return scenario_from_json(parse_json_strict(text, "scenario")); }

nlohmann::json to_json(const ScenarioScript& s) {
    auto events = nlohmann::json::array();
    for (const auto& e : s.events) {
        nlohmann::json j{{"at_s", e.at.count()}, {"action", action_name(e.action)}};
        switch (e.action) {
            case ActionType::spike:
                j["metric"] = metric_name(e.metric);
                j["magnitude"] = e.magnitude;
                break;
            case ActionType::ramp:
                j["metric"] = metric_name(e.metric);
                j["rate_per_sample"] = e.rate_per_sample;
                j["duration_s"] = e.duration.count();
                break;
            case ActionType::sensor_fault:
                j["metric"] = metric_name(e.metric);
                j["duration_s"] = e.duration.count();
                break;
            case ActionType::do_crash:
                j["depth"] = e.depth;
                j["duration_s"] = e.duration.count();
                break;
        }
        events.push_back(std::move(j));
    }
    return {{"name", s.name}, {"duration_s", s.duration.count()}, {"events", std::move(events)}};
}

std::optional<ScenarioScript> builtin_scenario(std::string_view name) {
    using namespace std::chrono_literals;
    ScenarioScript s;
    s.name = std::string(name);
    if (name == "healthy") {
        s.duration = 7 * 24h;
    } else if (name == "do_crash") {
        s.duration = 3h;
        ScenarioEvent e;
        e.at = 20min;
        e.action = ActionType::do_crash;
        e.depth = 1.5;
        e.duration = 1h;
        s.events.push_back(e);
    } else if (name == "nitrate_ramp") {
        s.duration = 3h;
        ScenarioEvent e;
        e.at = 30min;
        e.action = ActionType::ramp;
        e.metric = MetricKind::nitrate;
        e.rate_per_sample = 2.0;
        e.duration = 1h;
        s.events.push_back(e);
    } else if (name == "sensor_fault") {
        s.duration = 3h;
        ScenarioEvent e;
        e.at = 1h;
        e.action = ActionType::sensor_fault;
        e.metric = MetricKind::dissolved_oxygen;
        e.duration = 30min;
        s.events.push_back(e);
    } else if (name == "spikes") {
        s.duration = 24h;
        const std::array<std::pair<MetricKind, double>, 3> spikes{
            {{MetricKind::turbidity, 40.0}, {MetricKind::ph, -1.2}, {MetricKind::temperature, 4.0}}};
        for (std::size_t i = 0; i < spikes.size(); ++i) {
            ScenarioEvent e;
            e.at = Seconds{(4 + 6 * static_cast<std::int64_t>(i)) * 3600};
            e.metric = spikes[i].first;
            e.magnitude = spikes[i].second;
            s.events.push_back(e);
        }
    } else {
        return std::nullopt;
    }
    return s;
}

std::vector<std::string> builtin_scenario_names() {
    return {"healthy", "do_crash", "nitrate_ramp", "sensor_fault", "spikes"};
}

CsvSink::CsvSink(std::ostream& out) : out_(out) {}

void CsvSink::emit(const SimSample& s) {
    if (!header_) {
        write_dataset_header(out_);
        header_ = true;
    }
    write_dataset_row(out_, SampleRecord{s.timestamp, s.index + 1, s.values});
    if (!out_) throw Error(Errc::io, "CSV sink write failed");
}

void CsvSink::finish() {
    if (!header_) write_dataset_header(out_);
    header_ = true;
    out_.flush();
    if (!out_) throw Error(Errc::io, "CSV sink write failed");
}

nlohmann::json RunSummary::to_json() const {
    nlohmann::json j{{"samples", samples}, {"outliers", outliers}, {"events_applied", events_applied}};
    j["error"] = error ? nlohmann::json(*error) : nlohmann::json(nullptr);
    return j;
}

RunSummary run_scenario(const PondParams& params, const ScenarioScript& script, SampleSink& sink,
                        const RunOptions& opts) {
    PondSimulator pond(params, script);
    const std::uint64_t n =
        opts.samples ? *opts.samples : static_cast<std::uint64_t>(script.duration / params.sample_period);
    RunSummary summary;
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    const auto wall_period = opts.speedup > 0.0
                                 ? std::chrono::duration<double>(static_cast<double>(params.sample_period.count()) /
                                                                 opts.speedup)
                                 : std::chrono::duration<double>(0.0);
    try {
        for (std::uint64_t i = 0; i < n; ++i) {
            if (opts.should_stop && opts.should_stop()) break;
            if (opts.speedup > 0.0) {
                std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(wall_period * static_cast<double>(i)));
            }
            const auto s = pond.next();
            sink.emit(s);
            summary.samples = pond.samples();
            summary.outliers = pond.outliers();
            summary.events_applied = pond.events_applied();
        }
        sink.finish();
    } catch (const std::exception& e) {
        summary.error = e.what();
    }
    return summary;
}

RunSummary replay_records(const std::vector<SampleRecord>& records, SampleSink& sink, const RunOptions& opts) {
    RunSummary summary;
    if (records.empty()) return summary;
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    const auto first = records.front().timestamp;
    const std::uint64_t n = opts.samples ? std::min<std::uint64_t>(*opts.samples, records.size()) : records.size();
    try {
        for (std::uint64_t i = 0; i < n; ++i) {
            if (opts.should_stop && opts.should_stop()) break;
            const auto& r = records[i];
            if (opts.speedup > 0.0) {
                const std::chrono::duration<double> offset(static_cast<double>((r.timestamp - first).count()) / opts.speedup);
                std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(offset));
            }
            SimSample s;
            s.index = i;
            s.timestamp = r.timestamp;
            s.values = r.values;
            sink.emit(s);
            summary.samples = i + 1;
        }
        sink.finish();
    } catch (const std::exception& e) {
        summary.error = e.what();
    }
    return summary;
}

std::vector<SampleRecord> simulate_records(const PondParams& params, const ScenarioScript& script,
                                           std::optional<std::uint64_t> samples) {
    PondSimulator pond(params, script);
    const std::uint64_t n = samples ? *samples : static_cast<std::uint64_t>(script.duration / params.sample_period);
    std::vector<SampleRecord> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto s = pond.next();
        out.push_back(SampleRecord{s.timestamp, s.index + 1, s.values});
    }
    return out;
}

}  // namespace aquamon::sim
