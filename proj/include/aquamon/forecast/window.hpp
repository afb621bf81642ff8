#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aquamon/dataset.hpp"
#include "aquamon/metrics.hpp"
#include "aquamon/timestamp.hpp"

namespace aquamon::forecast {

struct WindowSpec {
    std::size_t history_steps = 3;  // 30 minutes at the default step
    std::size_t horizon_steps = 6;  // one hour ahead
    Seconds step{600};
    std::vector<MetricKind> input_metrics{MetricKind::temperature};
    MetricKind target_metric = MetricKind::temperature;

    std::size_t channels() const { return input_metrics.size(); }
    // Position of the target among the input channels.
    std::size_t target_channel() const;
    // Throws Errc::parameter when an invariant does not hold.
    void validate() const;

    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

WindowSpec default_window_spec(MetricKind target);

struct Window {
    std::vector<double> input;   // history_steps x channels, time-major
    std::vector<double> target;  // horizon_steps
};

struct WindowSet {
    std::vector<Window> windows;
    std::vector<UtcSeconds> anchors;  // bucket start of the last history step
    std::size_t skipped_for_gaps = 0;
    std::vector<std::string> warnings;
};

using SeriesMap = std::map<MetricKind, RegularSeries>;

// Slides over the aligned series; windows touching a missing bucket are skipped.
// Throws Errc::alignment if the series disagree on start or step, Errc::no_data
// if an input metric is absent.
WindowSet make_windows(const SeriesMap& series, const WindowSpec& spec);

// History block for the most recent H buckets, or nullopt if any is missing.
std::optional<std::vector<double>> latest_input(const SeriesMap& series, const WindowSpec& spec);

}  // namespace aquamon::forecast
