#include "aquamon/forecast/window.hpp"

#include <algorithm>

#include "aquamon/error.hpp"

namespace aquamon::forecast {

std::size_t WindowSpec::target_channel() const {
    auto it = std::find(input_metrics.begin(), input_metrics.end(), target_metric);
    if (it == input_metrics.end()) {
        throw Error(Errc::parameter, "target metric " + std::string(metric_name(target_metric)) +
                                         " is not among the input metrics");
    }
    return static_cast<std::size_t>(it - input_metrics.begin());
}

void WindowSpec::validate() const {
    if (history_steps < 1) throw Error(Errc::parameter, "history_steps must be >= 1");
    if (horizon_steps < 1) throw Error(Errc::parameter, "horizon_steps must be >= 1");
    if (step.count() <= 0) throw Error(Errc::parameter, "step must be positive");
    if (input_metrics.empty()) throw Error(Errc::parameter, "at least one input metric is required");
    for (std::size_t i = 0; i < input_metrics.size(); ++i) {
        for (std::size_t j = i + 1; j < input_metrics.size(); ++j) {
            if (input_metrics[i] == input_metrics[j]) {
                throw Error(Errc::parameter,
                            "duplicate input metric " + std::string(metric_name(input_metrics[i])));
            }
        }
    }
    (void)target_channel();
}

WindowSpec default_window_spec(MetricKind target) {
    WindowSpec s;
    s.input_metrics = {target};
    s.target_metric = target;
    return s;
}

namespace {

struct Aligned {
    std::vector<const RegularSeries*> inputs;
    const RegularSeries* target = nullptr;
    std::size_t n = 0;
};

Aligned align(const SeriesMap& series, const WindowSpec& spec) {
    spec.validate();
    Aligned a;
    for (auto m : spec.input_metrics) {
        auto it = series.find(m);
        if (it == series.end()) {
            throw Error(Errc::no_data, "no series for input metric " + std::string(metric_name(m)));
        }
        a.inputs.push_back(&it->second);
    }
    a.target = a.inputs[spec.target_channel()];
    const auto& ref = *a.inputs.front();
    a.n = ref.size();
    for (const auto* s : a.inputs) {
        if (s->step != spec.step || s->start != ref.start || s->step != ref.step) {
            throw Error(Errc::alignment, "series for " + std::string(metric_name(s->metric)) +
                                             " is not on the shared grid");
        }
        a.n = std::min(a.n, s->size());
    }
    return a;
}

}  // namespace

WindowSet make_windows(const SeriesMap& series, const WindowSpec& spec) {
    const auto a = align(series, spec);
    const std::size_t H = spec.history_steps;
    const std::size_t h = spec.horizon_steps;
    const std::size_t C = spec.channels();

    WindowSet out;
    if (a.n < H + h) {
        out.warnings.push_back("series of " + std::to_string(a.n) + " buckets is too short for H=" +
                               std::to_string(H) + ", h=" + std::to_string(h) + "; no windows");
        return out;
    }
    for (std::size_t t = H - 1; t + h < a.n; ++t) {
        Window w;
        w.input.resize(H * C);
        w.target.resize(h);
        bool ok = true;
        for (std::size_t k = 0; k < H && ok; ++k) {
            for (std::size_t c = 0; c < C; ++c) {
                const auto& v = a.inputs[c]->values[t + 1 - H + k];
                if (!v) {
                    ok = false;
                    break;
                }
                w.input[k * C + c] = *v;
            }
        }
        for (std::size_t k = 0; k < h && ok; ++k) {
            const auto& v = a.target->values[t + 1 + k];
            if (!v) {
                ok = false;
                break;
            }
            w.target[k] = *v;
        }
        if (!ok) {
            ++out.skipped_for_gaps;
            continue;
        }
        out.windows.push_back(std::move(w));
        out.anchors.push_back(a.target->bucket_start(t));
    }
    if (out.windows.empty()) out.warnings.push_back("every candidate window touches a missing bucket");
    return out;
}

std::optional<std::vector<double>> latest_input(const SeriesMap& series, const WindowSpec& spec) {
    const auto a = align(series, spec);
    const std::size_t H = spec.history_steps;
    const std::size_t C = spec.channels();
    if (a.n < H) return std::nullopt;
    std::vector<double> input(H * C);
    for (std::size_t k = 0; k < H; ++k) {
        for (std::size_t c = 0; c < C; ++c) {
            const auto& v = a.inputs[c]->values[a.n - H + k];
            if (!v) return std::nullopt;
            input[k * C + c] = *v;
        }
    }
    return input;
}

}  // namespace aquamon::forecast
