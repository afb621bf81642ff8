#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aquamon/forecast/model.hpp"
#include "aquamon/metrics.hpp"
#include "aquamon/timestamp.hpp"

namespace aquamon::forecast {

struct ForecastResult {
    UtcSeconds issued_at{};
    MetricKind target_metric{};
    std::vector<double> values;  // natural units, one per horizon step
    UtcSeconds valid_from{};     // instant of values[0]
    Seconds step{600};
    std::string model_version;

    UtcSeconds valid_at(std::size_t i) const { return valid_from + step * static_cast<std::int64_t>(i); }
};

// Runs the model on the latest raw history block. `last_bucket` is the start
// of the newest history bucket; the first value is valid one step later.
ForecastResult make_forecast(const CnnModel& model, std::span<const double> raw_history,
                             UtcSeconds last_bucket, UtcSeconds issued_at);

nlohmann::json to_json(const ForecastResult& f);
ForecastResult forecast_from_json(const nlohmann::json& doc);

}  // namespace aquamon::forecast
