#include "aquamon/metrics.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include "aquamon/error.hpp"
#include "aquamon/json_util.hpp"

namespace aquamon {

namespace {

struct MetricInfo {
    std::string_view name;
    std::string_view column;
    std::string_view unit;
};

constexpr std::array<MetricInfo, kMetricCount> kInfo = {{
    {"temperature", "temperature", "degC"},
    {"ph", "ph", ""},
    {"dissolved_oxygen", "dissolved_o2", "mg/L"},
    {"tds", "tds", "mg/L"},
    {"nitrite", "nitrite", "mg/L"},
    {"nitrate", "nitrate", "mg/L"},
    {"ammonia", "ammonia", "mg/L"},
    {"turbidity", "turbidity", ""},
    {"population", "population", "count"},
    {"fish_length", "fish_length", "cm"},
    {"fish_weight", "fish_weight", "g"},
}};

}  // namespace

std::optional<MetricKind> metric_from_id(unsigned id) noexcept {
    if (id >= kMetricCount) return std::nullopt;
    return static_cast<MetricKind>(id);
}

std::string_view metric_name(MetricKind m) noexcept { return kInfo[metric_index(m)].name; }
std::string_view metric_column(MetricKind m) noexcept { return kInfo[metric_index(m)].column; }
std::string_view metric_unit(MetricKind m) noexcept { return kInfo[metric_index(m)].unit; }

std::optional<MetricKind> metric_from_name(std::string_view name) noexcept {
    for (auto m : kAllMetrics) {
        if (name == metric_name(m) || name == metric_column(m)) return m;
    }
    return std::nullopt;
}

std::string format_value(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return std::to_string(v);
    return std::string(buf, end);
}

OptimalRange OptimalRange::closed(MetricKind m, double lower, double upper) {
    return from_bounds(m, lower, upper);
}

OptimalRange OptimalRange::min_only(MetricKind m, double lower) {
    return from_bounds(m, lower, std::nullopt);
}

OptimalRange OptimalRange::max_only(MetricKind m, double upper) {
    return from_bounds(m, std::nullopt, upper);
}

OptimalRange OptimalRange::from_bounds(MetricKind m, std::optional<double> lower,
                                       std::optional<double> upper) {
    const std::string name(metric_name(m));
    if (!lower && !upper) {
        throw Error(Errc::config, name + ": range needs a lower or an upper bound");
    }
    if ((lower && !std::isfinite(*lower)) || (upper && !std::isfinite(*upper))) {
        throw Error(Errc::config, name + ": range bounds must be finite");
    }
    if (lower && upper && !(*lower < *upper)) {
        throw Error(Errc::config, name + ": lower bound must be below upper bound");
    }
    OptimalRange r;
    r.metric = m;
    r.lower = lower;
    r.upper = upper;
    r.bound_kind = lower && upper ? BoundKind::closed_interval
                   : lower        ? BoundKind::min_only
                                  : BoundKind::max_only;
    return r;
}

std::string_view range_status_name(RangeStatus s) noexcept {
    switch (s) {
        case RangeStatus::in_range: return "in_range";
        case RangeStatus::below: return "below";
        case RangeStatus::above: return "above";
        case RangeStatus::unchecked: return "unchecked";
    }
    return "unchecked";
}

RangeVerdict check_range(double value, const OptimalRange& range) {
    if (!std::isfinite(value)) {
        throw Error(Errc::invalid_input,
                    std::string(metric_name(range.metric)) + ": value is not finite");
    }
    RangeVerdict v{range.metric, value, RangeStatus::in_range, std::nullopt};
    if (range.lower && value < *range.lower) {
        v.status = RangeStatus::below;
        v.violated_bound = range.lower;
    } else if (range.upper && value > *range.upper) {
        v.status = RangeStatus::above;
        v.violated_bound = range.upper;
    }
    return v;
}

RangeVerdict check_metric(MetricKind metric, double value, const RangeTable& ranges) {
    if (is_water_metric(metric)) {
        if (auto it = ranges.find(metric); it != ranges.end()) return check_range(value, it->second);
    }
    if (!std::isfinite(value)) {
        throw Error(Errc::invalid_input, std::string(metric_name(metric)) + ": value is not finite");
    }
    return RangeVerdict{metric, value, RangeStatus::unchecked, std::nullopt};
}

RangeTable default_ranges() {
    using M = MetricKind;
    RangeTable t;
    t.emplace(M::temperature, OptimalRange::closed(M::temperature, 25.0, 32.0));
    t.emplace(M::ph, OptimalRange::closed(M::ph, 6.5, 8.5));
    t.emplace(M::dissolved_oxygen, OptimalRange::min_only(M::dissolved_oxygen, 5.0));
    t.emplace(M::tds, OptimalRange::max_only(M::tds, 400.0));
    t.emplace(M::nitrite, OptimalRange::max_only(M::nitrite, 0.2));
    t.emplace(M::nitrate, OptimalRange::closed(M::nitrate, 0.0, 100.0));
    t.emplace(M::turbidity, OptimalRange::closed(M::turbidity, 30.0, 80.0));
    return t;
}

namespace {

std::optional<double> optional_number(const nlohmann::json& obj, const char* key,
                                      const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw Error(Errc::config, path + "." + key + ": expected a number");
    return it->get<double>();
}

}  // namespace

RangeTable apply_range_overrides(const RangeTable& base, const nlohmann::json& doc,
                                 std::string_view field_prefix) {
    const std::string prefix(field_prefix);
    if (!doc.is_object()) throw Error(Errc::config, prefix + ": expected an object");
    RangeTable out = base;
    std::set<MetricKind> seen;
    for (const auto& [key, value] : doc.items()) {
        const std::string path = prefix + "." + key;
        auto metric = metric_from_name(key);
        if (!metric) throw Error(Errc::config, path + ": unknown metric");
        if (!is_water_metric(*metric)) {
            throw Error(Errc::config, path + ": metric is not range-checkable");
        }
        if (!seen.insert(*metric).second) {
            throw Error(Errc::config, path + ": duplicate range definition");
        }
        if (value.is_null()) {
            out.erase(*metric);
            continue;
        }
        if (!value.is_object()) throw Error(Errc::config, path + ": expected an object or null");
        for (const auto& [k, _] : value.items()) {
            if (k != "lower" && k != "upper") {
                throw Error(Errc::config, path + "." + k + ": unknown field");
            }
        }
        try {
            out.insert_or_assign(*metric,
                                 OptimalRange::from_bounds(*metric, optional_number(value, "lower", path),
                                                           optional_number(value, "upper", path)));
        } catch (const Error& e) {
            throw Error(Errc::config, path + ": " + e.what());
        }
    }
    return out;
}

RangeTable parse_range_config(std::string_view text, const RangeTable& base) {
    return apply_range_overrides(base, parse_json_strict(text, "range configuration"));
}

nlohmann::json ranges_to_json(const RangeTable& ranges) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [m, r] : ranges) {
        nlohmann::json entry = nlohmann::json::object();
        entry["lower"] = r.lower ? nlohmann::json(*r.lower) : nlohmann::json(nullptr);
        entry["upper"] = r.upper ? nlohmann::json(*r.upper) : nlohmann::json(nullptr);
        entry["unit"] = metric_unit(m);
        doc[std::string(metric_name(m))] = entry;
    }
    return doc;
}

}  // namespace aquamon
