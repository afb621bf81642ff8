#include "aquamon/forecast/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "aquamon/error.hpp"

namespace aquamon::forecast {

double median(std::vector<double> values) {
    if (values.empty()) throw Error(Errc::invalid_input, "median of an empty set");
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return (lower + upper) / 2.0;
}

EvalReport evaluate(std::span<const double> predictions, std::span<const double> actuals) {
    if (predictions.size() != actuals.size()) {
        throw Error(Errc::invalid_input, "evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                                             std::to_string(actuals.size()) + " actuals");
    }
    if (predictions.empty()) throw Error(Errc::invalid_input, "evaluate: empty input");

    EvalReport r;
    r.n_points = predictions.size();
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    std::vector<double> ape;
    ape.reserve(r.n_points);
    for (std::size_t i = 0; i < r.n_points; ++i) {
        const double y = actuals[i];
        const double yhat = predictions[i];
        if (!std::isfinite(y) || !std::isfinite(yhat)) {
            throw Error(Errc::invalid_input, "evaluate: non-finite value at index " + std::to_string(i));
        }
        const double e = yhat - y;
        abs_sum += std::abs(e);
        sq_sum += e * e;
        if (std::abs(y) >= kApeMinDenominator) {
            ape.push_back(100.0 * std::abs(e) / std::abs(y));
        } else {
            ++r.n_excluded_zero_denominator;
        }
    }
    const auto n = static_cast<double>(r.n_points);
    r.mae = abs_sum / n;
    r.mse = sq_sum / n;
    r.rmse = std::sqrt(r.mse);
    if (!ape.empty()) {
        double s = 0.0;
        for (double a : ape) s += a;
        r.mape = s / static_cast<double>(ape.size());
        r.mdape = median(std::move(ape));
    }
    return r;
}

nlohmann::json to_json(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"mae", r.mae},   {"rmse", r.rmse},           {"mse", r.mse},
            {"mdape", opt(r.mdape)}, {"mape", opt(r.mape)}, {"n_points", r.n_points},
            {"n_excluded_zero_denominator", r.n_excluded_zero_denominator}};
}

std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-20s %12s %12s %12s %12s %12s %8s\n", "model", "MAE", "RMSE", "MSE",
                  "MdAPE(%)", "MAPE(%)", "n");
    out += buf;
    for (const auto& [name, r] : rows) {
        auto pct = [](const std::optional<double>& v) {
            char b[32];
            if (v) {
                std::snprintf(b, sizeof b, "%12.6g", *v);
            } else {
                std::snprintf(b, sizeof b, "%12s", "undefined");
            }
            return std::string(b);
        };
        std::snprintf(buf, sizeof buf, "%-20s %12.6g %12.6g %12.6g %s %s %8zu\n", name.c_str(), r.mae, r.rmse,
                      r.mse, pct(r.mdape).c_str(), pct(r.mape).c_str(), r.n_points);
        out += buf;
    }
    return out;
}

namespace {

void check_window(std::span<const double> input, const WindowSpec& spec) {
    if (input.size() != spec.history_steps * spec.channels()) {
        throw Error(Errc::shape, "baseline: window input does not match the window spec");
    }
}

}  // namespace

std::vector<double> baseline_persistence(std::span<const double> input, const WindowSpec& spec) {
    check_window(input, spec);
    const double last = input[(spec.history_steps - 1) * spec.channels() + spec.target_channel()];
    return std::vector<double>(spec.horizon_steps, last);
}

std::vector<double> baseline_moving_average(std::span<const double> input, const WindowSpec& spec,
                                            std::size_t k) {
    check_window(input, spec);
    if (k == 0 || k > spec.history_steps) {
        throw Error(Errc::parameter, "moving average k=" + std::to_string(k) + " must lie in [1, H=" +
                                         std::to_string(spec.history_steps) + "]");
    }
    const std::size_t C = spec.channels();
    const std::size_t tc = spec.target_channel();
    double s = 0.0;
    for (std::size_t t = spec.history_steps - k; t < spec.history_steps; ++t) s += input[t * C + tc];
    return std::vector<double>(spec.horizon_steps, s / static_cast<double>(k));
}

}  // namespace aquamon::forecast
