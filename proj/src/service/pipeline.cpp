#include "aquamon/service/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "aquamon/error.hpp"
#include "aquamon/forecast/model_io.hpp"
#include "aquamon/forecast/window.hpp"

namespace aquamon::service {

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

EntryKind entry_kind_for(monitor::EventKind k) {
    using monitor::EventKind;
    switch (k) {
        case EventKind::alert_raised:
        case EventKind::alert_acknowledged:
        case EventKind::alert_cleared: return EntryKind::alert;
        case EventKind::actuator_changed: return EntryKind::actuator;
        case EventKind::estop_triggered:
        case EventKind::estop_reset: return EntryKind::estop;
        case EventKind::diagnostic: break;
    }
    return EntryKind::system;
}

UtcSeconds wall_now() {
    return std::chrono::time_point_cast<Seconds>(std::chrono::system_clock::now());
}

}  // namespace

bool Bucket::empty() const {
    return std::none_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
}

json to_json(const Bucket& b) {
    json values = json::object();
    json counts = json::object();
    for (auto m : kAllMetrics) {
        values[std::string(metric_name(m))] = optional_number(b.value(m));
        counts[std::string(metric_name(m))] = b.counts[metric_index(m)];
    }
    return {{"start", format_iso8601(b.start)}, {"start_epoch", to_epoch(b.start)}, {"values", values}, {"counts", counts}};
}

Bucket bucket_from_json(const json& doc) {
    try {
        Bucket b;
        b.start = from_epoch(doc.at("start_epoch").get<std::int64_t>());
        for (auto m : kAllMetrics) {
            const auto name = std::string(metric_name(m));
            const auto& v = doc.at("values").at(name);
            if (!v.is_null()) b.values[metric_index(m)] = v.get<double>();
            b.counts[metric_index(m)] = doc.at("counts").at(name).get<std::uint32_t>();
        }
        return b;
    } catch (const json::exception& e) {
        throw Error(Errc::parse, std::string("malformed bucket: ") + e.what());
    }
}

json to_json(const RecoveredState& r) {
    json history = json::array();
    for (const auto& b : r.history) history.push_back(to_json(b));
    json alerts = json::array();
    for (const auto& [id, a] : r.alerts) alerts.push_back(monitor::to_json(a));
    json forecasts = json::array();
    for (const auto& [m, f] : r.forecasts) forecasts.push_back(forecast::to_json(f));
    return {{"state", monitor::to_json(r.state)},
            {"history", history},
            {"alerts", alerts},
            {"forecasts", forecasts},
            {"last_bucket", r.last_bucket ? json(to_epoch(*r.last_bucket)) : json(nullptr)}};
}

RecoveredState recovered_from_json(const json& doc) {
    try {
        RecoveredState r;
        r.state = monitor::state_from_json(doc.at("state"));
        for (const auto& b : doc.at("history")) r.history.push_back(bucket_from_json(b));
        for (const auto& a : doc.at("alerts")) {
            auto alert = monitor::alert_from_json(a);
            r.alerts[alert.id] = alert;
        }
        for (const auto& f : doc.at("forecasts")) {
            auto fr = forecast::forecast_from_json(f);
            r.forecasts[fr.target_metric] = fr;
        }
        if (!doc.at("last_bucket").is_null()) r.last_bucket = from_epoch(doc["last_bucket"].get<std::int64_t>());
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::parse, std::string("malformed snapshot: ") + e.what());
    }
}

void fold_entry(RecoveredState& r, const LogEntry& e, std::size_t history_capacity) {
    switch (e.kind) {
        case EntryKind::reading: {
            auto b = bucket_from_json(e.payload);
            if (r.last_bucket && b.start <= *r.last_bucket) return;
            r.last_bucket = b.start;
            r.history.push_back(std::move(b));
            while (r.history.size() > history_capacity) r.history.pop_front();
            return;
        }
        case EntryKind::forecast: {
            auto f = forecast::forecast_from_json(e.payload);
            r.forecasts[f.target_metric] = std::move(f);
            return;
        }
        case EntryKind::alert:
        case EntryKind::actuator:
        case EntryKind::estop: {
            const auto ev = monitor::event_from_json(e.payload);
            monitor::apply_event(r.state, ev);
            if (const auto* a = ev.alert()) r.alerts[a->id] = *a;
            return;
        }
        case EntryKind::system: return;
    }
}

RecoveredState recover(const std::optional<Snapshot>& snapshot, const std::vector<LogEntry>& entries,
                       std::size_t history_capacity) {
    RecoveredState r;
    std::uint64_t from = 0;
    if (snapshot) {
        r = recovered_from_json(snapshot->document);
        from = snapshot->seq;
    }
    for (const auto& e : entries) {
        if (e.seq > from) fold_entry(r, e, history_capacity);
    }
    r.state.counters.clear();
    return r;
}

ModelSet load_models(const RuntimeConfig& config) {
    ModelSet out;
    for (std::size_t i = 0; i < config.models.size(); ++i) {
        const auto& entry = config.models[i];
        const auto path = "forecast.models[" + std::to_string(i) + "]";
        std::optional<forecast::CnnModel> model;
        try {
            model = forecast::load_model_file(entry.path);
        } catch (const Error& e) {
            if (!config.allow_missing_models) throw Error(e.code(), path + ".path: " + e.what());
            out.missing.push_back(std::string(metric_name(entry.metric)) + ": " + e.what());
            continue;
        }
        const auto& spec = model->spec();
        auto mismatch = [&](const std::string& field, const std::string& want, const std::string& got) {
            throw Error(Errc::config, path + "." + field + ": config says " + want + ", weight file has " + got);
        };
        if (spec.target_metric != entry.metric) {
            mismatch("metric", std::string(metric_name(entry.metric)), std::string(metric_name(spec.target_metric)));
        }
        if (spec.step != config.resample_step) {
            mismatch("path", "step " + std::to_string(config.resample_step.count()) + " s",
                     "step " + std::to_string(spec.step.count()) + " s");
        }
        if (entry.history_steps && *entry.history_steps != spec.history_steps) {
            mismatch("history_steps", std::to_string(*entry.history_steps), std::to_string(spec.history_steps));
        }
        if (entry.horizon_steps && *entry.horizon_steps != spec.horizon_steps) {
            mismatch("horizon_steps", std::to_string(*entry.horizon_steps), std::to_string(spec.horizon_steps));
        }
        if (entry.input_metrics && *entry.input_metrics != spec.input_metrics) {
            mismatch("input_metrics", "a different channel list", "its own");
        }
        out.models.push_back(std::move(*model));
    }
    return out;
}

Pipeline::Pipeline(RuntimeConfig config, ModelSet models, PipelineOptions opts)
    : config_(std::move(config)),
      models_(std::move(models.models)),
      missing_models_(std::move(models.missing)),
      opts_(std::move(opts)) {
    config_.validate();
    for (const auto& m : models_) {
        if (m.spec().step != config_.resample_step) {
            throw Error(Errc::config, "forecast model for " + std::string(metric_name(m.spec().target_metric)) +
                                          " uses a different step than resample_step_s");
        }
    }
    log_ = std::make_unique<EventLog>(config_.data_dir);
    const auto& report = log_->open_report();
    const auto& snap = log_->snapshot();
    data_ = recover(snap, log_->loaded_after(snap ? snap->seq : 0), config_.history_buckets);
    snapshot_seq_ = snap ? snap->seq : 0;
    if (report.dropped_lines > 0) {
        append_system(now(), "log_truncated",
                      "dropped " + std::to_string(report.dropped_lines) + " torn or invalid line(s), " +
                          std::to_string(report.dropped_bytes) + " bytes");
    }
    if (report.entries > 0) {
        append_system(now(), "recovered",
                      "replayed " + std::to_string(report.entries - snapshot_seq_) + " entries after snapshot seq " +
                          std::to_string(snapshot_seq_) + (data_.state.estop_latched ? "; e-stop latched" : ""));
    }
    supervisor_ = std::make_unique<monitor::Supervisor>(config_.monitor, config_.ranges, data_.state,
                                                        [this](const monitor::Transition& t) { on_transition(t); });
}

Pipeline::~Pipeline() {
    try {
        stop();
    } catch (...) {
    }
}

void Pipeline::stop() {
    if (stopped_) return;
    stopped_ = true;
    supervisor_->stop();
    {
        std::lock_guard lock(data_mu_);
        data_.state = *supervisor_->snapshot();
        if (!log_->closed()) write_snapshot(data_.state);
    }
    log_->close();
}

UtcSeconds Pipeline::now() const { return opts_.clock ? opts_.clock() : wall_now(); }

LogEntry Pipeline::append_system(UtcSeconds at, std::string_view code, std::string message) {
    return log_->append(EntryKind::system, at, {{"kind", code}, {"message", std::move(message)}});
}

void Pipeline::ingest(const SampleRecord& r) {
    std::lock_guard lock(ingest_mu_);
    ++records_;
    const auto start = floor_to_step(r.timestamp, config_.resample_step);
    if ((data_.last_bucket && start <= *data_.last_bucket) || (open_ && start < open_->start)) {
        ++late_records_;
        return;
    }
    if (open_ && start > open_->start) close_through(start);
    if (!open_) {
        if (data_.last_bucket) close_through(start);
        open_ = OpenBucket{start, {}, {}};
    }
    r.values.for_each([&](MetricKind m, double v) {
        if (!std::isfinite(v)) return;
        open_->sum[metric_index(m)] += v;
        ++open_->counts[metric_index(m)];
    });
}

void Pipeline::advance_to(UtcSeconds watermark) {
    std::lock_guard lock(ingest_mu_);
    if (!open_ && !data_.last_bucket) return;
    close_through(floor_to_step(watermark, config_.resample_step));
}

void Pipeline::flush() {
    std::lock_guard lock(ingest_mu_);
    if (open_) close_through(open_->start + config_.resample_step);
}

void Pipeline::close_through(UtcSeconds until) {
    const auto step = config_.resample_step;
    if (open_ && open_->start < until) {
        Bucket b;
        b.start = open_->start;
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            b.counts[i] = open_->counts[i];
            if (open_->counts[i] > 0) b.values[i] = open_->sum[i] / open_->counts[i];
        }
        open_.reset();
        close_bucket(b);
    }
    if (!data_.last_bucket) return;
    auto next = *data_.last_bucket + step;
    const auto gap = (until - next) / step;
    if (gap > static_cast<std::int64_t>(config_.history_buckets)) {
        const auto skip = gap - static_cast<std::int64_t>(config_.history_buckets);
        {
            std::lock_guard lock(data_mu_);
            append_system(next, "gap_skipped",
                          "skipped " + std::to_string(skip) + " empty buckets from " + format_iso8601(next));
        }
        next += step * skip;
    }
    for (; next < until; next += step) {
        Bucket empty;
        empty.start = next;
        close_bucket(empty);
    }
}

void Pipeline::close_bucket(const Bucket& b) {
    const auto end = b.start + config_.resample_step;
    std::vector<forecast::ForecastResult> forecasts;
    try {
        std::lock_guard lock(data_mu_);
        log_->append(EntryKind::reading, end, to_json(b));
        data_.last_bucket = b.start;
        data_.history.push_back(b);
        while (data_.history.size() > config_.history_buckets) data_.history.pop_front();
        if (b.empty()) append_system(end, "insufficient_data", "no records for bucket " + format_iso8601(b.start));

        if (!models_.empty() && to_epoch(end) % config_.forecast_cadence.count() == 0) {
            for (const auto& model : models_) {
                const auto& spec = model.spec();
                const auto target = std::string(metric_name(spec.target_metric));
                std::optional<std::vector<double>> input;
                const auto h = spec.history_steps;
                const auto n = data_.history.size();
                if (n >= h && data_.history[n - 1].start - data_.history[n - h].start ==
                                  config_.resample_step * static_cast<std::int64_t>(h - 1)) {
                    forecast::SeriesMap series;
                    for (auto m : spec.input_metrics) {
                        RegularSeries s;
                        s.metric = m;
                        s.start = data_.history[n - h].start;
                        s.step = config_.resample_step;
                        for (std::size_t i = n - h; i < n; ++i) {
                            s.values.push_back(data_.history[i].value(m));
                            s.counts.push_back(data_.history[i].counts[metric_index(m)]);
                            s.high_spread.push_back(false);
                        }
                        series[m] = std::move(s);
                    }
                    input = forecast::latest_input(series, spec);
                }
                if (!input) {
                    append_system(end, "insufficient_data",
                                  "no " + target + " forecast: the last " + std::to_string(h) +
                                      " buckets are incomplete");
                    continue;
                }
                auto f = forecast::make_forecast(model, *input, b.start, end);
                log_->append(EntryKind::forecast, end, forecast::to_json(f));
                data_.forecasts[f.target_metric] = f;
                forecasts.push_back(std::move(f));
            }
        }
    } catch (const Error&) {
        ++log_errors_;
    }

    monitor::Readings readings;
    for (std::size_t i = 0; i < kWaterMetricCount; ++i) {
        if (b.values[i]) readings[kAllMetrics[i]] = *b.values[i];
    }
    try {
        run(monitor::CycleCommand{std::move(readings), std::move(forecasts), end});
        ++cycles_;
    } catch (const Error&) {
        ++log_errors_;
    }
}

void Pipeline::on_transition(const monitor::Transition& t) {
    std::vector<monitor::MonitorEvent> alerts;
    AlertHook hook;
    {
        std::lock_guard lock(data_mu_);
        hook = hook_;
        for (const auto& ev : t.events) {
            try {
                log_->append(entry_kind_for(ev.kind), ev.at, monitor::to_json(ev));
            } catch (const Error&) {
                ++log_errors_;
                throw;
            }
            if (const auto* a = ev.alert()) {
                data_.alerts[a->id] = *a;
                alerts.push_back(ev);
            }
        }
        data_.state = t.state;
        maybe_snapshot(t.state);
    }
    if (hook) {
        for (const auto& ev : alerts) hook(ev);
    }
}

void Pipeline::maybe_snapshot(const monitor::SystemState& state) {
    if (log_->last_seq() - snapshot_seq_ >= config_.snapshot_every) {
        try {
            write_snapshot(state);
        } catch (const Error&) {
            ++log_errors_;
        }
    }
}

void Pipeline::write_snapshot(const monitor::SystemState& state) {
    RecoveredState copy = data_;
    copy.state = state;
    copy.state.counters.clear();
    const auto seq = log_->last_seq();
    log_->write_snapshot({seq, to_json(copy)});
    snapshot_seq_ = seq;
}

monitor::Transition Pipeline::run(monitor::Command cmd) { return supervisor_->execute(std::move(cmd)); }

monitor::Transition Pipeline::acknowledge(std::uint64_t alert_id, const std::string& actor) {
    return run(monitor::AckCommand{alert_id, actor, now()});
}

monitor::Transition Pipeline::set_override(monitor::ActuatorId id, std::optional<monitor::Demand> demand,
                                           const std::string& actor) {
    return run(monitor::OverrideCommand{id, demand, actor, now()});
}

monitor::Transition Pipeline::trigger_estop(const std::string& reason, const std::string& actor) {
    return run(monitor::EstopCommand{reason, actor, now()});
}

monitor::Transition Pipeline::reset_estop(const std::string& actor) {
    return run(monitor::ResetCommand{actor, now()});
}

std::shared_ptr<const monitor::SystemState> Pipeline::state() const { return supervisor_->snapshot(); }

std::vector<Bucket> Pipeline::history(std::optional<UtcSeconds> from, std::optional<UtcSeconds> to) const {
    std::lock_guard lock(data_mu_);
    std::vector<Bucket> out;
    for (const auto& b : data_.history) {
        if (from && b.start < *from) continue;
        if (to && b.start >= *to) continue;
        out.push_back(b);
    }
    return out;
}

std::vector<monitor::AlertEvent> Pipeline::alerts(std::optional<monitor::AlertState> filter) const {
    std::lock_guard lock(data_mu_);
    std::vector<monitor::AlertEvent> out;
    for (const auto& [id, a] : data_.alerts) {
        if (!filter || a.state == *filter) out.push_back(a);
    }
    return out;
}

std::map<MetricKind, forecast::ForecastResult> Pipeline::forecasts() const {
    std::lock_guard lock(data_mu_);
    return data_.forecasts;
}

std::optional<UtcSeconds> Pipeline::last_bucket() const {
    std::lock_guard lock(data_mu_);
    return data_.last_bucket;
}

json Pipeline::latest_readings_json() const {
    std::lock_guard lock(data_mu_);
    json metrics = json::object();
    for (auto m : kAllMetrics) {
        json entry{{"value", nullptr}, {"bucket_start", nullptr}, {"status", "unchecked"}, {"unit", metric_unit(m)}};
        for (auto it = data_.history.rbegin(); it != data_.history.rend(); ++it) {
            if (const auto v = it->value(m)) {
                entry["value"] = *v;
                entry["bucket_start"] = format_iso8601(it->start);
                const auto verdict = check_metric(m, *v, config_.ranges);
                entry["status"] = range_status_name(verdict.status);
                if (verdict.violated_bound) entry["violated_bound"] = *verdict.violated_bound;
                break;
            }
        }
        metrics[std::string(metric_name(m))] = entry;
    }
    return {{"last_bucket", data_.last_bucket ? json(format_iso8601(*data_.last_bucket)) : json(nullptr)},
            {"step_s", config_.resample_step.count()},
            {"metrics", metrics}};
}

json Pipeline::history_json(MetricKind m, std::optional<UtcSeconds> from, std::optional<UtcSeconds> to) const {
    json buckets = json::array();
    for (const auto& b : history(from, to)) {
        buckets.push_back({{"start", format_iso8601(b.start)},
                           {"value", optional_number(b.value(m))},
                           {"count", b.counts[metric_index(m)]}});
    }
    return {{"metric", metric_name(m)}, {"step_s", config_.resample_step.count()}, {"buckets", buckets}};
}

json Pipeline::forecasts_json() const {
    json out = json::array();
    for (const auto& [m, f] : forecasts()) out.push_back(forecast::to_json(f));
    return out;
}

json Pipeline::alerts_json(std::optional<monitor::AlertState> filter) const {
    json out = json::array();
    for (const auto& a : alerts(filter)) out.push_back(monitor::to_json(a));
    return out;
}

json Pipeline::actuators_json() const {
    const auto s = state();
    return {{"estop_latched", s->estop_latched},
            {"estop_reason", s->estop_reason ? json(*s->estop_reason) : json(nullptr)},
            {"actuators", monitor::actuators_to_json(*s)}};
}

json Pipeline::health_json() const {
    json models = json::array();
    for (const auto& m : models_) {
        models.push_back({{"metric", metric_name(m.spec().target_metric)}, {"version", m.version()}});
    }
    const bool no_gateway = opts_.no_gateway || !config_.gateway_listen;
    const bool no_forecast = models_.empty();
    const auto s = state();
    json degraded{{"no_gateway", no_gateway},
                  {"no_forecast", no_forecast},
                  {"missing_models", missing_models_},
                  {"log_errors", log_errors_.load() > 0}};
    return {{"status", (no_gateway || no_forecast || !missing_models_.empty() || log_errors_.load() > 0) ? "degraded" : "ok"},
            {"degraded", degraded},
            {"gateway", gateway_ ? gateway_->to_json() : json(nullptr)},
            {"models", models},
            {"estop_latched", s->estop_latched},
            {"last_seq", log_->last_seq()},
            {"last_bucket", last_bucket() ? json(format_iso8601(*last_bucket())) : json(nullptr)},
            {"pipeline",
             {{"records", records_.load()},
              {"late_records", late_records_.load()},
              {"cycles", cycles_.load()},
              {"log_errors", log_errors_.load()},
              {"webhook_failures", webhook_failures_.load()}}}};
}

void Pipeline::attach_gateway(const gateway::GatewayCounters* counters) { gateway_ = counters; }

void Pipeline::set_alert_hook(AlertHook hook) {
    std::lock_guard lock(data_mu_);
    hook_ = std::move(hook);
}

}  // namespace aquamon::service
