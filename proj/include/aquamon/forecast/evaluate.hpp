#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aquamon/forecast/window.hpp"

namespace aquamon::forecast {

// Denominators below this magnitude are excluded from percentage errors.
inline constexpr double kApeMinDenominator = 1e-6;

struct EvalReport {
    double mae = 0.0;
    double rmse = 0.0;
    double mse = 0.0;
    std::optional<double> mdape;  // percent; nullopt when every denominator was excluded
    std::optional<double> mape;   // percent
    std::size_t n_points = 0;
    std::size_t n_excluded_zero_denominator = 0;
};

// Throws Errc::invalid_input on length mismatch, empty input or non-finite values.
EvalReport evaluate(std::span<const double> predictions, std::span<const double> actuals);

// Median with the even-length convention (mean of the two central values).
double median(std::vector<double> values);

nlohmann::json to_json(const EvalReport& r);

// Aligned plain-text table, one row per named report.
std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

// Repeats the last observed target value across the horizon.
std::vector<double> baseline_persistence(std::span<const double> window_input, const WindowSpec& spec);

// Repeats the mean of the last k observed target values. Throws Errc::parameter if k == 0 or k > H.
std::vector<double> baseline_moving_average(std::span<const double> window_input, const WindowSpec& spec,
                                            std::size_t k);

}  // namespace aquamon::forecast
