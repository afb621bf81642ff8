#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "aquamon/forecast/forecast.hpp"
#include "aquamon/metrics.hpp"
#include "aquamon/timestamp.hpp"

namespace aquamon::monitor {

enum class AlertKind : std::uint8_t { live_out_of_range, forecast_out_of_range };
enum class Direction : std::uint8_t { below, above };
enum class AlertState : std::uint8_t { active, acknowledged, cleared };

std::string_view alert_kind_name(AlertKind k);
std::string_view direction_name(Direction d);
std::string_view alert_state_name(AlertState s);

struct AlertEvent {
    std::uint64_t id = 0;
    MetricKind metric{};
    AlertKind kind = AlertKind::live_out_of_range;
    Direction direction = Direction::below;
    double value = 0.0;  // observed or predicted
    double bound = 0.0;
    UtcSeconds raised_at{};
    std::optional<UtcSeconds> valid_at;  // forecast alerts: instant of the offending value
    AlertState state = AlertState::active;
    std::string message;
    std::string suggestion;
    std::string acknowledged_by;
    std::optional<UtcSeconds> cleared_at;

    friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

enum class ActuatorId : std::uint8_t { aerator, heater, chiller, filtration_pump, water_exchange_pump };
inline constexpr std::size_t kActuatorCount = 5;
inline constexpr std::array<ActuatorId, kActuatorCount> kAllActuators{
    ActuatorId::aerator, ActuatorId::heater, ActuatorId::chiller, ActuatorId::filtration_pump,
    ActuatorId::water_exchange_pump};

enum class Demand : std::uint8_t { off, on };
enum class Source : std::uint8_t { automatic, operator_override, estop };

std::string_view actuator_name(ActuatorId a);
std::optional<ActuatorId> actuator_from_name(std::string_view name);
std::string_view demand_name(Demand d);
std::string_view source_name(Source s);  // "auto", "operator_override", "estop"

struct ActuatorState {
    Demand demand = Demand::off;
    Source source = Source::automatic;
    UtcSeconds since{};

    friend bool operator==(const ActuatorState&, const ActuatorState&) = default;
};

struct HysteresisCounter {
    std::uint32_t out_of_range = 0;  // consecutive violating cycles
    std::uint32_t in_range = 0;      // consecutive non-violating cycles

    friend bool operator==(const HysteresisCounter&, const HysteresisCounter&) = default;
};

using CounterKey = std::pair<MetricKind, Direction>;

struct SystemState {
    bool estop_latched = false;
    std::optional<std::string> estop_reason;
    std::array<ActuatorState, kActuatorCount> actuators{};
    std::map<std::uint64_t, AlertEvent> active_alerts;  // active or acknowledged
    std::map<CounterKey, HysteresisCounter> counters;
    std::uint64_t next_alert_id = 1;

    const ActuatorState& actuator(ActuatorId a) const { return actuators[static_cast<std::size_t>(a)]; }
    ActuatorState& actuator(ActuatorId a) { return actuators[static_cast<std::size_t>(a)]; }
    const AlertEvent* find_active(MetricKind m, Direction d, AlertKind k) const;

    friend bool operator==(const SystemState&, const SystemState&) = default;
};

// One row of the metric -> actuator table. An empty direction matches both.
struct ActuatorRule {
    MetricKind metric{};
    std::optional<Direction> direction;
    ActuatorId actuator{};

    friend bool operator==(const ActuatorRule&, const ActuatorRule&) = default;
};

std::vector<ActuatorRule> default_actuator_rules();
std::map<CounterKey, std::string> default_suggestions();

struct MonitorConfig {
    std::uint32_t n_raise = 2;
    std::uint32_t m_clear = 3;
    std::vector<ActuatorRule> rules = default_actuator_rules();
    bool forecasts_drive_actuators = false;
    std::map<CounterKey, std::string> suggestions = default_suggestions();

    void validate() const;
};

// Reads the "monitor" section of the runtime config; `path` prefixes error messages.
MonitorConfig monitor_config_from_json(const nlohmann::json& doc, std::string_view path = "monitor");
nlohmann::json to_json(const MonitorConfig& c);

enum class EventKind : std::uint8_t {
    alert_raised,
    alert_acknowledged,
    alert_cleared,
    actuator_changed,
    estop_triggered,
    estop_reset,
    diagnostic,
};

std::string_view event_kind_name(EventKind k);

struct ActuatorChange {
    ActuatorId id{};
    ActuatorState before;
    ActuatorState after;
    std::string actor;  // operator for overrides, empty for automatic changes

    friend bool operator==(const ActuatorChange&, const ActuatorChange&) = default;
};

struct EstopChange {
    std::string reason;  // trigger reason
    std::string actor;   // who triggered or reset

    friend bool operator==(const EstopChange&, const EstopChange&) = default;
};

struct MonitorEvent {
    EventKind kind = EventKind::diagnostic;
    UtcSeconds at{};
    std::variant<std::monostate, AlertEvent, ActuatorChange, EstopChange, std::string> payload;

    const AlertEvent* alert() const { return std::get_if<AlertEvent>(&payload); }
    const ActuatorChange* actuator() const { return std::get_if<ActuatorChange>(&payload); }
    const EstopChange* estop() const { return std::get_if<EstopChange>(&payload); }

    friend bool operator==(const MonitorEvent&, const MonitorEvent&) = default;
};

struct Transition {
    SystemState state;
    std::vector<MonitorEvent> events;

    std::vector<AlertEvent> raised() const;
    std::vector<ActuatorChange> actuator_delta() const;
};

using Readings = std::map<MetricKind, double>;

// One supervisory cycle: hysteresis on live readings, immediate forecast
// alerts, then actuator demands from the rule table. Readings for non-water
// metrics or with non-finite values are dropped with a diagnostic event.
Transition evaluate_cycle(const SystemState& state, const Readings& readings,
                          std::span<const forecast::ForecastResult> forecasts, const RangeTable& ranges,
                          const MonitorConfig& config, UtcSeconds now);

// Latches and forces every actuator off (source estop), dropping overrides.
// A second trigger while latched emits nothing.
Transition trigger_estop(const SystemState& state, std::string_view reason, std::string_view actor,
                         UtcSeconds now);

// Clears the latch; actuators stay off until the next evaluate_cycle. When not
// latched the state is unchanged and a diagnostic is emitted.
Transition reset_estop(const SystemState& state, std::string_view actor, UtcSeconds now);

// Errc::not_found for an id never issued, Errc::conflict for a cleared alert.
// Acknowledging an acknowledged alert is a no-op.
Transition acknowledge_alert(const SystemState& state, std::uint64_t alert_id, std::string_view actor,
                             UtcSeconds now);

// Errc::safety_rejection while the e-stop is latched.
Transition actuator_override(const SystemState& state, ActuatorId id, Demand demand, std::string_view actor,
                             UtcSeconds now);

// Returns the actuator to automatic control; its demand is recomputed on the
// next cycle. Errc::safety_rejection while latched; no-op if not overridden.
Transition release_override(const SystemState& state, ActuatorId id, std::string_view actor, UtcSeconds now);

// Replays one logged event onto a state. Hysteresis counters are not logged
// and therefore restart from zero.
void apply_event(SystemState& state, const MonitorEvent& event);

bool estop_dominates(const SystemState& state);

nlohmann::json to_json(const AlertEvent& a);
AlertEvent alert_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ActuatorState& s);
nlohmann::json actuators_to_json(const SystemState& s);
nlohmann::json to_json(const MonitorEvent& e);
MonitorEvent event_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SystemState& s);
SystemState state_from_json(const nlohmann::json& doc);

}  // namespace aquamon::monitor
