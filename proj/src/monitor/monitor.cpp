#include "aquamon/monitor/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aquamon/error.hpp"

namespace aquamon::monitor {

namespace {

constexpr std::array<std::string_view, kActuatorCount> kActuatorNames{
    "aerator", "heater", "chiller", "filtration_pump", "water_exchange_pump"};

constexpr std::array<Direction, 2> kDirections{Direction::below, Direction::above};

std::uint32_t bump(std::uint32_t v) { return v == std::numeric_limits<std::uint32_t>::max() ? v : v + 1; }

bool violates(const RangeVerdict& v, Direction d) {
    return (d == Direction::below && v.status == RangeStatus::below) ||
           (d == Direction::above && v.status == RangeStatus::above);
}

std::string suggestion_for(const MonitorConfig& config, MetricKind m, Direction d) {
    auto it = config.suggestions.find({m, d});
    return it == config.suggestions.end() ? std::string{} : it->second;
}

class Builder {
public:
    explicit Builder(const SystemState& s) : t_{s, {}} {}

    SystemState& state() { return t_.state; }

    void emit(EventKind kind, UtcSeconds at, decltype(MonitorEvent::payload) payload) {
        t_.events.push_back(MonitorEvent{kind, at, std::move(payload)});
    }
    void diagnostic(UtcSeconds at, std::string text) { emit(EventKind::diagnostic, at, std::move(text)); }

    void raise(AlertEvent a) {
        auto& s = t_.state;
        a.id = s.next_alert_id++;
        a.state = AlertState::active;
        s.active_alerts.emplace(a.id, a);
        emit(EventKind::alert_raised, a.raised_at, std::move(a));
    }

    void clear(std::uint64_t id, UtcSeconds now) {
        auto& s = t_.state;
        auto node = s.active_alerts.extract(id);
        node.mapped().state = AlertState::cleared;
        node.mapped().cleared_at = now;
        emit(EventKind::alert_cleared, now, std::move(node.mapped()));
    }

    void set_actuator(ActuatorId id, ActuatorState after, std::string actor, UtcSeconds now) {
        auto& cur = t_.state.actuator(id);
        ActuatorChange change{id, cur, after, std::move(actor)};
        cur = after;
        emit(EventKind::actuator_changed, now, std::move(change));
    }

    Transition take() { return std::move(t_); }

private:
    Transition t_;
};

std::string live_message(MetricKind m, Direction d, double bound, double value) {
    return std::string(metric_name(m)) + " " + std::string(direction_name(d)) + " " + format_value(bound) +
           " (observed " + format_value(value) + ")";
}

std::string forecast_message(MetricKind m, Direction d, double bound, double value, UtcSeconds at) {
    return std::string(metric_name(m)) + " forecast " + std::string(direction_name(d)) + " " +
           format_value(bound) + " (predicted " + format_value(value) + " for " + format_iso8601(at) + ")";
}

void evaluate_live(Builder& b, const Readings& readings, const RangeTable& ranges, const MonitorConfig& config,
                   UtcSeconds now) {
    auto& s = b.state();
    for (const auto& [metric, value] : readings) {
        if (!is_water_metric(metric)) {
            b.diagnostic(now, "dropped reading for non-water metric " + std::string(metric_name(metric)));
            continue;
        }
        if (!std::isfinite(value)) {
            b.diagnostic(now, "dropped non-finite reading for " + std::string(metric_name(metric)));
            continue;
        }
        const auto verdict = check_metric(metric, value, ranges);
        for (Direction d : kDirections) {
            const bool bad = violates(verdict, d);
            auto& c = s.counters[{metric, d}];
            if (bad) {
                c.out_of_range = bump(c.out_of_range);
                c.in_range = 0;
            } else {
                c.in_range = bump(c.in_range);
                c.out_of_range = 0;
            }
            const auto* active = s.find_active(metric, d, AlertKind::live_out_of_range);
            if (bad && !active && c.out_of_range >= config.n_raise) {
                AlertEvent a;
                a.metric = metric;
                a.kind = AlertKind::live_out_of_range;
                a.direction = d;
                a.value = value;
                a.bound = *verdict.violated_bound;
                a.raised_at = now;
                a.message = live_message(metric, d, a.bound, value);
                a.suggestion = suggestion_for(config, metric, d);
                b.raise(std::move(a));
            } else if (!bad && active && c.in_range >= config.m_clear) {
                b.clear(active->id, now);
            }
        }
    }
}

void evaluate_forecast(Builder& b, const forecast::ForecastResult& f, const RangeTable& ranges,
                       const MonitorConfig& config, UtcSeconds now) {
    const auto metric = f.target_metric;
    if (!is_water_metric(metric)) {
        b.diagnostic(now, "ignored forecast for non-water metric " + std::string(metric_name(metric)));
        return;
    }
    if (std::any_of(f.values.begin(), f.values.end(), [](double v) { return !std::isfinite(v); })) {
        b.diagnostic(now, "ignored forecast with non-finite values for " + std::string(metric_name(metric)));
        return;
    }
    const auto range = ranges.find(metric);
    for (Direction d : kDirections) {
        std::optional<std::size_t> worst;
        double bound = 0.0;
        if (range != ranges.end()) {
            for (std::size_t i = 0; i < f.values.size(); ++i) {
                const auto v = check_range(f.values[i], range->second);
                if (!violates(v, d)) continue;
                bound = *v.violated_bound;
                const bool further = !worst || (d == Direction::below ? f.values[i] < f.values[*worst]
                                                                      : f.values[i] > f.values[*worst]);
                if (further) worst = i;
            }
        }
        const auto* active = b.state().find_active(metric, d, AlertKind::forecast_out_of_range);
        if (worst && !active) {
            AlertEvent a;
            a.metric = metric;
            a.kind = AlertKind::forecast_out_of_range;
            a.direction = d;
            a.value = f.values[*worst];
            a.bound = bound;
            a.raised_at = now;
            a.valid_at = f.valid_at(*worst);
            a.message = forecast_message(metric, d, bound, a.value, *a.valid_at);
            a.suggestion = suggestion_for(config, metric, d);
            b.raise(std::move(a));
        } else if (!worst && active) {
            b.clear(active->id, now);
        }
    }
}

void recompute_actuators(Builder& b, const MonitorConfig& config, UtcSeconds now) {
    auto& s = b.state();
    if (s.estop_latched) {
        for (auto id : kAllActuators) {
            const auto& cur = s.actuator(id);
            if (cur.demand != Demand::off || cur.source != Source::estop) {
                b.set_actuator(id, {Demand::off, Source::estop, now}, "", now);
            }
        }
        return;
    }
    std::array<bool, kActuatorCount> wanted{};
    for (const auto& [id, alert] : s.active_alerts) {
        if (alert.kind == AlertKind::forecast_out_of_range && !config.forecasts_drive_actuators) continue;
        for (const auto& rule : config.rules) {
            if (rule.metric == alert.metric && (!rule.direction || *rule.direction == alert.direction)) {
                wanted[static_cast<std::size_t>(rule.actuator)] = true;
            }
        }
    }
    for (auto id : kAllActuators) {
        const auto& cur = s.actuator(id);
        if (cur.source == Source::operator_override) continue;
        const Demand demand = wanted[static_cast<std::size_t>(id)] ? Demand::on : Demand::off;
        if (cur.demand != demand || cur.source != Source::automatic) {
            b.set_actuator(id, {demand, Source::automatic, now}, "", now);
        }
    }
}

}  // namespace

std::string_view alert_kind_name(AlertKind k) {
    return k == AlertKind::live_out_of_range ? "live_out_of_range" : "forecast_out_of_range";
}

std::string_view direction_name(Direction d) { return d == Direction::below ? "below" : "above"; }

std::string_view alert_state_name(AlertState s) {
    switch (s) {
        case AlertState::active: return "active";
        case AlertState::acknowledged: return "acknowledged";
        case AlertState::cleared: return "cleared";
    }
    return "?";
}

std::string_view actuator_name(ActuatorId a) { return kActuatorNames[static_cast<std::size_t>(a)]; }

std::optional<ActuatorId> actuator_from_name(std::string_view name) {
    for (auto id : kAllActuators) {
        if (actuator_name(id) == name) return id;
    }
    return std::nullopt;
}

std::string_view demand_name(Demand d) { return d == Demand::on ? "on" : "off"; }

std::string_view source_name(Source s) {
    switch (s) {
        case Source::automatic: return "auto";
        case Source::operator_override: return "operator_override";
        case Source::estop: return "estop";
    }
    return "?";
}

std::string_view event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::alert_raised: return "alert_raised";
        case EventKind::alert_acknowledged: return "alert_acknowledged";
        case EventKind::alert_cleared: return "alert_cleared";
        case EventKind::actuator_changed: return "actuator_changed";
        case EventKind::estop_triggered: return "estop_triggered";
        case EventKind::estop_reset: return "estop_reset";
        case EventKind::diagnostic: return "diagnostic";
    }
    return "?";
}

const AlertEvent* SystemState::find_active(MetricKind m, Direction d, AlertKind k) const {
    for (const auto& [id, a] : active_alerts) {
        if (a.metric == m && a.direction == d && a.kind == k) return &a;
    }
    return nullptr;
}

std::vector<ActuatorRule> default_actuator_rules() {
    using M = MetricKind;
    using A = ActuatorId;
    return {
        {M::dissolved_oxygen, Direction::below, A::aerator},
        {M::temperature, Direction::below, A::heater},
        {M::temperature, Direction::above, A::chiller},
        {M::tds, Direction::above, A::filtration_pump},
        {M::turbidity, std::nullopt, A::filtration_pump},
        {M::nitrite, Direction::above, A::water_exchange_pump},
        {M::nitrate, Direction::above, A::water_exchange_pump},
    };
}

std::map<CounterKey, std::string> default_suggestions() {
    using M = MetricKind;
    using D = Direction;
    return {
        {{M::dissolved_oxygen, D::below}, "check aerator and air stones; pause feeding"},
        {{M::temperature, D::below}, "check heater and room temperature"},
        {{M::temperature, D::above}, "check chiller; shade the tank"},
        {{M::ph, D::below}, "test alkalinity; adjust buffer manually"},
        {{M::ph, D::above}, "test alkalinity; partial water exchange"},
        {{M::tds, D::above}, "inspect filtration; partial water exchange"},
        {{M::nitrite, D::above}, "partial water exchange; check biofilter"},
        {{M::nitrate, D::above}, "partial water exchange"},
        {{M::nitrate, D::below}, "check nitrate sensor calibration"},
        {{M::turbidity, D::below}, "inspect filtration and sensor window"},
        {{M::turbidity, D::above}, "inspect filtration and sensor window"},
    };
}

void MonitorConfig::validate() const {
    if (n_raise == 0) throw Error(Errc::config, "monitor.n_raise: must be at least 1");
    if (m_clear == 0) throw Error(Errc::config, "monitor.m_clear: must be at least 1");
    for (const auto& r : rules) {
        if (!is_water_metric(r.metric)) {
            throw Error(Errc::config, "monitor.actuator_rules: " + std::string(metric_name(r.metric)) +
                                          " is not a water metric");
        }
    }
}

Transition evaluate_cycle(const SystemState& state, const Readings& readings,
                          std::span<const forecast::ForecastResult> forecasts, const RangeTable& ranges,
                          const MonitorConfig& config, UtcSeconds now) {
    Builder b(state);
    evaluate_live(b, readings, ranges, config, now);
    for (const auto& f : forecasts) evaluate_forecast(b, f, ranges, config, now);
    recompute_actuators(b, config, now);
    return b.take();
}

Transition trigger_estop(const SystemState& state, std::string_view reason, std::string_view actor,
                         UtcSeconds now) {
    Builder b(state);
    if (state.estop_latched) return b.take();
    auto& s = b.state();
    s.estop_latched = true;
    s.estop_reason = std::string(reason);
    b.emit(EventKind::estop_triggered, now, EstopChange{std::string(reason), std::string(actor)});
    for (auto id : kAllActuators) {
        const auto& cur = s.actuator(id);
        if (cur.demand != Demand::off || cur.source != Source::estop) {
            b.set_actuator(id, {Demand::off, Source::estop, now}, std::string(actor), now);
        }
    }
    return b.take();
}

Transition reset_estop(const SystemState& state, std::string_view actor, UtcSeconds now) {
    Builder b(state);
    if (!state.estop_latched) {
        b.diagnostic(now, "e-stop reset by " + std::string(actor) + " ignored: not latched");
        return b.take();
    }
    b.state().estop_latched = false;
    b.state().estop_reason.reset();
    b.emit(EventKind::estop_reset, now, EstopChange{"", std::string(actor)});
    return b.take();
}

Transition acknowledge_alert(const SystemState& state, std::uint64_t alert_id, std::string_view actor,
                             UtcSeconds now) {
    if (alert_id == 0 || alert_id >= state.next_alert_id) {
        throw Error(Errc::not_found, "no alert with id " + std::to_string(alert_id));
    }
    Builder b(state);
    auto it = b.state().active_alerts.find(alert_id);
    if (it == b.state().active_alerts.end()) {
        throw Error(Errc::conflict, "alert " + std::to_string(alert_id) + " is already cleared");
    }
    if (it->second.state == AlertState::acknowledged) return b.take();
    it->second.state = AlertState::acknowledged;
    it->second.acknowledged_by = std::string(actor);
    b.emit(EventKind::alert_acknowledged, now, it->second);
    return b.take();
}

Transition actuator_override(const SystemState& state, ActuatorId id, Demand demand, std::string_view actor,
                             UtcSeconds now) {
    if (state.estop_latched) {
        throw Error(Errc::safety_rejection,
                    "override of " + std::string(actuator_name(id)) + " rejected: e-stop is latched");
    }
    Builder b(state);
    const auto& cur = state.actuator(id);
    if (cur.source == Source::operator_override && cur.demand == demand) return b.take();
    b.set_actuator(id, {demand, Source::operator_override, now}, std::string(actor), now);
    return b.take();
}

Transition release_override(const SystemState& state, ActuatorId id, std::string_view actor, UtcSeconds now) {
    if (state.estop_latched) {
        throw Error(Errc::safety_rejection,
                    "release of " + std::string(actuator_name(id)) + " rejected: e-stop is latched");
    }
    Builder b(state);
    const auto& cur = state.actuator(id);
    if (cur.source != Source::operator_override) return b.take();
    b.set_actuator(id, {cur.demand, Source::automatic, now}, std::string(actor), now);
    return b.take();
}

void apply_event(SystemState& state, const MonitorEvent& e) {
    switch (e.kind) {
        case EventKind::alert_raised:
        case EventKind::alert_acknowledged:
            if (const auto* a = e.alert()) {
                state.active_alerts.insert_or_assign(a->id, *a);
                state.next_alert_id = std::max(state.next_alert_id, a->id + 1);
            }
            break;
        case EventKind::alert_cleared:
            if (const auto* a = e.alert()) {
                state.active_alerts.erase(a->id);
                state.next_alert_id = std::max(state.next_alert_id, a->id + 1);
            }
            break;
        case EventKind::actuator_changed:
            if (const auto* c = e.actuator()) state.actuator(c->id) = c->after;
            break;
        case EventKind::estop_triggered:
            state.estop_latched = true;
            state.estop_reason = e.estop() ? e.estop()->reason : std::string{};
            break;
        case EventKind::estop_reset:
            state.estop_latched = false;
            state.estop_reason.reset();
            break;
        case EventKind::diagnostic:
            break;
    }
}

bool estop_dominates(const SystemState& state) {
    if (!state.estop_latched) return true;
    return std::all_of(state.actuators.begin(), state.actuators.end(),
                       [](const ActuatorState& a) { return a.demand == Demand::off && a.source == Source::estop; });
}

std::vector<AlertEvent> Transition::raised() const {
    std::vector<AlertEvent> out;
    for (const auto& e : events) {
        if (e.kind == EventKind::alert_raised) out.push_back(*e.alert());
    }
    return out;
}

std::vector<ActuatorChange> Transition::actuator_delta() const {
    std::vector<ActuatorChange> out;
    for (const auto& e : events) {
        if (e.kind == EventKind::actuator_changed) out.push_back(*e.actuator());
    }
    return out;
}

}  // namespace aquamon::monitor
