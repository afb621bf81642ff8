#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace aquamon {

// Stable ids; the wire protocol carries these values.
enum class MetricKind : std::uint8_t {
    temperature = 0,
    ph = 1,
    dissolved_oxygen = 2,
    tds = 3,
    nitrite = 4,
    nitrate = 5,
    ammonia = 6,
    turbidity = 7,
    population = 8,
    fish_length = 9,
    fish_weight = 10,
};

inline constexpr std::size_t kMetricCount = 11;
inline constexpr std::size_t kWaterMetricCount = 8;

inline constexpr std::array<MetricKind, kMetricCount> kAllMetrics = {
    MetricKind::temperature, MetricKind::ph,          MetricKind::dissolved_oxygen,
    MetricKind::tds,         MetricKind::nitrite,     MetricKind::nitrate,
    MetricKind::ammonia,     MetricKind::turbidity,   MetricKind::population,
    MetricKind::fish_length, MetricKind::fish_weight,
};

constexpr std::uint8_t metric_id(MetricKind m) noexcept { return static_cast<std::uint8_t>(m); }
constexpr std::size_t metric_index(MetricKind m) noexcept { return static_cast<std::size_t>(m); }

// Ids 0..7 are range-checkable and forecastable; 8..10 only describe the stock.
constexpr bool is_water_metric(MetricKind m) noexcept { return metric_id(m) < kWaterMetricCount; }

std::optional<MetricKind> metric_from_id(unsigned id) noexcept;

// Canonical name used in alerts, configs and the API ("dissolved_oxygen").
std::string_view metric_name(MetricKind m) noexcept;

// Column header in dataset CSVs; differs from metric_name only for dissolved oxygen.
std::string_view metric_column(MetricKind m) noexcept;

std::string_view metric_unit(MetricKind m) noexcept;

// Accepts canonical names and dataset column headers.
std::optional<MetricKind> metric_from_name(std::string_view name) noexcept;

// Shortest round-trip decimal representation ("25", "0.2", "4.505").
std::string format_value(double v);

enum class BoundKind { closed_interval, min_only, max_only };

struct OptimalRange {
    MetricKind metric{};
    std::optional<double> lower;
    std::optional<double> upper;
    BoundKind bound_kind{BoundKind::closed_interval};

    static OptimalRange closed(MetricKind m, double lower, double upper);
    static OptimalRange min_only(MetricKind m, double lower);
    static OptimalRange max_only(MetricKind m, double upper);

    // Builds from optional bounds and validates the invariants.
    static OptimalRange from_bounds(MetricKind m, std::optional<double> lower,
                                    std::optional<double> upper);

    friend bool operator==(const OptimalRange&, const OptimalRange&) = default;
};

enum class RangeStatus { in_range, below, above, unchecked };

std::string_view range_status_name(RangeStatus s) noexcept;

struct RangeVerdict {
    MetricKind metric{};
    double value = 0.0;
    RangeStatus status = RangeStatus::unchecked;
    std::optional<double> violated_bound;

    friend bool operator==(const RangeVerdict&, const RangeVerdict&) = default;
};

using RangeTable = std::map<MetricKind, OptimalRange>;

// Bounds are inclusive. Throws Errc::invalid_input for a non-finite value.
RangeVerdict check_range(double value, const OptimalRange& range);

// Unchecked for dataset-context metrics and metrics without a configured range.
RangeVerdict check_metric(MetricKind metric, double value, const RangeTable& ranges);

// The seven optimal bands for aquaculture water; ammonia deliberately has none.
RangeTable default_ranges();

// Applies a {"metric": {"lower"?: x, "upper"?: y} | null} document on top of `base`.
// A null entry removes the range. Duplicate metrics (including aliases) are a config error.
RangeTable apply_range_overrides(const RangeTable& base, const nlohmann::json& doc,
                                 std::string_view field_prefix = "ranges");

// Parses a range configuration document, rejecting duplicate keys.
RangeTable parse_range_config(std::string_view text, const RangeTable& base = default_ranges());

nlohmann::json ranges_to_json(const RangeTable& ranges);

}  // namespace aquamon
