#include "aquamon/forecast/forecast.hpp"

#include <cmath>

#include "aquamon/error.hpp"

namespace aquamon::forecast {

ForecastResult make_forecast(const CnnModel& model, std::span<const double> raw_history,
                             UtcSeconds last_bucket, UtcSeconds issued_at) {
    ForecastResult f;
    f.issued_at = issued_at;
    f.target_metric = model.spec().target_metric;
    f.values = predict(model, raw_history);
    f.step = model.spec().step;
    f.valid_from = last_bucket + f.step;
    f.model_version = model.version();
    for (double v : f.values) {
        if (!std::isfinite(v)) throw Error(Errc::invalid_input, "forecast produced a non-finite value");
    }
    return f;
}

nlohmann::json to_json(const ForecastResult& f) {
    return {{"issued_at", format_iso8601(f.issued_at)},
            {"issued_at_epoch", to_epoch(f.issued_at)},
            {"target_metric", metric_name(f.target_metric)},
            {"values", f.values},
            {"valid_from", format_iso8601(f.valid_from)},
            {"valid_from_epoch", to_epoch(f.valid_from)},
            {"step_s", f.step.count()},
            {"model_version", f.model_version}};
}

ForecastResult forecast_from_json(const nlohmann::json& doc) {
    ForecastResult f;
    f.issued_at = from_epoch(doc.at("issued_at_epoch").get<std::int64_t>());
    auto m = metric_from_name(doc.at("target_metric").get<std::string>());
    if (!m) throw Error(Errc::parse, "forecast: unknown target metric");
    f.target_metric = *m;
    f.values = doc.at("values").get<std::vector<double>>();
    f.valid_from = from_epoch(doc.at("valid_from_epoch").get<std::int64_t>());
    f.step = Seconds{doc.at("step_s").get<std::int64_t>()};
    f.model_version = doc.at("model_version").get<std::string>();
    return f;
}

}  // namespace aquamon::forecast
