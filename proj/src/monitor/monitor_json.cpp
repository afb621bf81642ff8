#include "aquamon/error.hpp"
#include "aquamon/monitor/monitor.hpp"

namespace aquamon::monitor {

using nlohmann::json;

namespace {

json time_json(UtcSeconds t) { return format_iso8601(t); }

UtcSeconds time_from(const json& j) { return parse_timestamp(j.get<std::string>()); }

template <typename T>
json optional_time(const std::optional<T>& t) {
    return t ? time_json(*t) : json(nullptr);
}

MetricKind metric_from(const json& j) {
    const auto name = j.get<std::string>();
    auto m = metric_from_name(name);
    if (!m) throw Error(Errc::parse, "unknown metric '" + name + "'");
    return *m;
}

Direction direction_from(const std::string& s) {
    if (s == "below") return Direction::below;
    if (s == "above") return Direction::above;
    throw Error(Errc::parse, "unknown direction '" + s + "'");
}

ActuatorId actuator_from(const std::string& s) {
    auto a = actuator_from_name(s);
    if (!a) throw Error(Errc::parse, "unknown actuator '" + s + "'");
    return *a;
}

ActuatorState actuator_state_from(const json& j) {
    ActuatorState s;
    s.demand = j.at("demand").get<std::string>() == "on" ? Demand::on : Demand::off;
    const auto src = j.at("source").get<std::string>();
    if (src == "auto") {
        s.source = Source::automatic;
    } else if (src == "operator_override") {
        s.source = Source::operator_override;
    } else if (src == "estop") {
        s.source = Source::estop;
    } else {
        throw Error(Errc::parse, "unknown actuator source '" + src + "'");
    }
    s.since = time_from(j.at("since"));
    return s;
}

template <typename F>
auto guarded(std::string_view what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw Error(Errc::parse, std::string(what) + ": " + e.what());
    }
}

[[noreturn]] void config_error(const std::string& path, const std::string& why) {
    throw Error(Errc::config, path + ": " + why);
}

std::uint32_t positive_count(const json& v, const std::string& path) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1 || v.get<std::int64_t>() > 1000000) {
        config_error(path, "expected an integer between 1 and 1000000");
    }
    return static_cast<std::uint32_t>(v.get<std::int64_t>());
}

MetricKind config_metric(const json& v, const std::string& path) {
    if (!v.is_string()) config_error(path, "expected a metric name");
    auto m = metric_from_name(v.get<std::string>());
    if (!m) config_error(path, "unknown metric '" + v.get<std::string>() + "'");
    if (!is_water_metric(*m)) config_error(path, "'" + v.get<std::string>() + "' is not a water metric");
    return *m;
}

std::optional<Direction> config_direction(const json& v, const std::string& path) {
    if (!v.is_string()) config_error(path, "expected \"below\", \"above\" or \"any\"");
    const auto s = v.get<std::string>();
    if (s == "below") return Direction::below;
    if (s == "above") return Direction::above;
    if (s == "any") return std::nullopt;
    config_error(path, "expected \"below\", \"above\" or \"any\"");
}

}  // namespace

MonitorConfig monitor_config_from_json(const json& doc, std::string_view path_prefix) {
    const std::string prefix(path_prefix);
    if (!doc.is_object()) config_error(prefix, "expected an object");
    MonitorConfig c;
    for (const auto& [key, value] : doc.items()) {
        const std::string path = prefix + "." + key;
        if (key == "n_raise") {
            c.n_raise = positive_count(value, path);
        } else if (key == "m_clear") {
            c.m_clear = positive_count(value, path);
        } else if (key == "forecasts_drive_actuators") {
            if (!value.is_boolean()) config_error(path, "expected true or false");
            c.forecasts_drive_actuators = value.get<bool>();
        } else if (key == "actuator_rules") {
            if (!value.is_array()) config_error(path, "expected an array");
            c.rules.clear();
            for (std::size_t i = 0; i < value.size(); ++i) {
                const auto& r = value[i];
                const std::string rp = path + "[" + std::to_string(i) + "]";
                if (!r.is_object()) config_error(rp, "expected an object");
                for (const auto& [k, _] : r.items()) {
                    if (k != "metric" && k != "direction" && k != "actuator") config_error(rp + "." + k, "unknown field");
                }
                if (!r.contains("metric")) config_error(rp + ".metric", "required");
                if (!r.contains("actuator")) config_error(rp + ".actuator", "required");
                ActuatorRule rule;
                rule.metric = config_metric(r["metric"], rp + ".metric");
                if (r.contains("direction")) rule.direction = config_direction(r["direction"], rp + ".direction");
                if (!r["actuator"].is_string() || !actuator_from_name(r["actuator"].get<std::string>())) {
                    config_error(rp + ".actuator", "unknown actuator");
                }
                rule.actuator = *actuator_from_name(r["actuator"].get<std::string>());
                c.rules.push_back(rule);
            }
        } else if (key == "suggestions") {
            if (!value.is_object()) config_error(path, "expected an object");
            for (const auto& [k, text] : value.items()) {
                const std::string sp = path + "." + k;
                const auto dot = k.rfind('.');
                if (dot == std::string::npos) config_error(sp, "expected key \"<metric>.<below|above>\"");
                const auto metric = config_metric(json(k.substr(0, dot)), sp);
                const auto dir = config_direction(json(k.substr(dot + 1)), sp);
                if (!dir) config_error(sp, "direction must be below or above");
                if (!text.is_string()) config_error(sp, "expected a string");
                c.suggestions[{metric, *dir}] = text.get<std::string>();
            }
        } else {
            config_error(path, "unknown field");
        }
    }
    c.validate();
    return c;
}

json to_json(const MonitorConfig& c) {
    json rules = json::array();
    for (const auto& r : c.rules) {
        rules.push_back({{"metric", metric_name(r.metric)},
                         {"direction", r.direction ? direction_name(*r.direction) : "any"},
                         {"actuator", actuator_name(r.actuator)}});
    }
    json suggestions = json::object();
    for (const auto& [key, text] : c.suggestions) {
        suggestions[std::string(metric_name(key.first)) + "." + std::string(direction_name(key.second))] = text;
    }
    return {{"n_raise", c.n_raise},
            {"m_clear", c.m_clear},
            {"forecasts_drive_actuators", c.forecasts_drive_actuators},
            {"actuator_rules", rules},
            {"suggestions", suggestions}};
}

json to_json(const AlertEvent& a) {
    return {{"id", a.id},
            {"metric", metric_name(a.metric)},
            {"kind", alert_kind_name(a.kind)},
            {"direction", direction_name(a.direction)},
            {"value", a.value},
            {"bound", a.bound},
            {"unit", metric_unit(a.metric)},
            {"raised_at", time_json(a.raised_at)},
            {"valid_at", optional_time(a.valid_at)},
            {"state", alert_state_name(a.state)},
            {"message", a.message},
            {"suggestion", a.suggestion},
            {"acknowledged_by", a.acknowledged_by},
            {"cleared_at", optional_time(a.cleared_at)}};
}

AlertEvent alert_from_json(const json& j) {
    return guarded("alert", [&] {
        AlertEvent a;
        a.id = j.at("id").get<std::uint64_t>();
        a.metric = metric_from(j.at("metric"));
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "live_out_of_range") {
            a.kind = AlertKind::live_out_of_range;
        } else if (kind == "forecast_out_of_range") {
            a.kind = AlertKind::forecast_out_of_range;
        } else {
            throw Error(Errc::parse, "unknown alert kind '" + kind + "'");
        }
        a.direction = direction_from(j.at("direction").get<std::string>());
        a.value = j.at("value").get<double>();
        a.bound = j.at("bound").get<double>();
        a.raised_at = time_from(j.at("raised_at"));
        if (!j.at("valid_at").is_null()) a.valid_at = time_from(j.at("valid_at"));
        const auto state = j.at("state").get<std::string>();
        if (state == "active") {
            a.state = AlertState::active;
        } else if (state == "acknowledged") {
            a.state = AlertState::acknowledged;
        } else if (state == "cleared") {
            a.state = AlertState::cleared;
        } else {
            throw Error(Errc::parse, "unknown alert state '" + state + "'");
        }
        a.message = j.at("message").get<std::string>();
        a.suggestion = j.value("suggestion", "");
        a.acknowledged_by = j.value("acknowledged_by", "");
        if (j.contains("cleared_at") && !j["cleared_at"].is_null()) a.cleared_at = time_from(j["cleared_at"]);
        return a;
    });
}

json to_json(const ActuatorState& s) {
    return {{"demand", demand_name(s.demand)}, {"source", source_name(s.source)}, {"since", time_json(s.since)}};
}

json actuators_to_json(const SystemState& s) {
    json out = json::object();
    for (auto id : kAllActuators) out[std::string(actuator_name(id))] = to_json(s.actuator(id));
    return out;
}

json to_json(const MonitorEvent& e) {
    json j{{"kind", event_kind_name(e.kind)}, {"at", time_json(e.at)}};
    if (const auto* a = e.alert()) j["alert"] = to_json(*a);
    if (const auto* c = e.actuator()) {
        j["actuator"] = {{"id", actuator_name(c->id)},
                         {"before", to_json(c->before)},
                         {"after", to_json(c->after)},
                         {"actor", c->actor}};
    }
    if (const auto* s = e.estop()) j["estop"] = {{"reason", s->reason}, {"actor", s->actor}};
    if (const auto* t = std::get_if<std::string>(&e.payload)) j["text"] = *t;
    return j;
}

MonitorEvent event_from_json(const json& j) {
    return guarded("monitor event", [&] {
        MonitorEvent e;
        const auto kind = j.at("kind").get<std::string>();
        bool known = false;
        for (auto k : {EventKind::alert_raised, EventKind::alert_acknowledged, EventKind::alert_cleared,
                       EventKind::actuator_changed, EventKind::estop_triggered, EventKind::estop_reset,
                       EventKind::diagnostic}) {
            if (event_kind_name(k) == kind) {
                e.kind = k;
                known = true;
            }
        }
        if (!known) throw Error(Errc::parse, "unknown monitor event kind '" + kind + "'");
        e.at = time_from(j.at("at"));
        if (j.contains("alert")) {
            e.payload = alert_from_json(j["alert"]);
        } else if (j.contains("actuator")) {
            const auto& c = j["actuator"];
            e.payload = ActuatorChange{actuator_from(c.at("id").get<std::string>()), actuator_state_from(c.at("before")),
                                       actuator_state_from(c.at("after")), c.value("actor", "")};
        } else if (j.contains("estop")) {
            e.payload = EstopChange{j["estop"].value("reason", ""), j["estop"].value("actor", "")};
        } else if (j.contains("text")) {
            e.payload = j["text"].get<std::string>();
        }
        return e;
    });
}

json to_json(const SystemState& s) {
    json alerts = json::array();
    for (const auto& [id, a] : s.active_alerts) alerts.push_back(to_json(a));
    json counters = json::array();
    for (const auto& [key, c] : s.counters) {
        counters.push_back({{"metric", metric_name(key.first)},
                            {"direction", direction_name(key.second)},
                            {"out_of_range", c.out_of_range},
                            {"in_range", c.in_range}});
    }
    return {{"estop_latched", s.estop_latched},
            {"estop_reason", s.estop_reason ? json(*s.estop_reason) : json(nullptr)},
            {"actuators", actuators_to_json(s)},
            {"active_alerts", alerts},
            {"counters", counters},
            {"next_alert_id", s.next_alert_id}};
}

SystemState state_from_json(const json& j) {
    return guarded("system state", [&] {
        SystemState s;
        s.estop_latched = j.at("estop_latched").get<bool>();
        if (!j.at("estop_reason").is_null()) s.estop_reason = j["estop_reason"].get<std::string>();
        for (auto id : kAllActuators) s.actuator(id) = actuator_state_from(j.at("actuators").at(std::string(actuator_name(id))));
        for (const auto& a : j.at("active_alerts")) {
            auto alert = alert_from_json(a);
            s.active_alerts.emplace(alert.id, alert);
        }
        for (const auto& c : j.at("counters")) {
            s.counters[{metric_from(c.at("metric")), direction_from(c.at("direction").get<std::string>())}] =
                HysteresisCounter{c.at("out_of_range").get<std::uint32_t>(), c.at("in_range").get<std::uint32_t>()};
        }
        s.next_alert_id = j.at("next_alert_id").get<std::uint64_t>();
        return s;
    });
}

}  // namespace aquamon::monitor
