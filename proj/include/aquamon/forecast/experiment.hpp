#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "aquamon/dataset.hpp"
#include "aquamon/forecast/evaluate.hpp"
#include "aquamon/forecast/train.hpp"
#include "aquamon/forecast/window.hpp"

namespace aquamon::forecast {

// Resamples every input metric of `spec` onto one grid and fills interior gaps
// of at most `max_gap` buckets. With `drop_high_spread`, buckets flagged by the
// resampler are treated as missing first. Errc::no_data if a metric never appears.
SeriesMap prepare_series(const RawDataset& dataset, const WindowSpec& spec, std::size_t max_gap,
                         bool drop_high_spread = false);

struct HoldoutReport {
    EvalReport cnn;
    EvalReport persistence;
    EvalReport moving_average;
    std::size_t windows = 0;

    std::string table() const;
    nlohmann::json to_json() const;
};

// Scores the model and both baselines on every window of `series`.
// Errc::no_data when no complete window exists.
HoldoutReport evaluate_on(const CnnModel& model, const SeriesMap& series);
// Same, but inputs come from `inputs` (a cleaned copy on the same grid) and
// targets from `targets`; anchors missing from either are skipped.
HoldoutReport evaluate_on(const CnnModel& model, const SeriesMap& inputs, const SeriesMap& targets);

struct ExperimentOptions {
    WindowSpec spec;
    TrainHyper hyper;
    double train_fraction = 0.8;
    std::size_t max_gap = 2;
    // Treat buckets that a wild reading dragged off as missing in every model
    // and baseline input. Holdout targets always come from the raw series.
    bool drop_high_spread = true;
};

struct ExperimentResult {
    TrainResult training;
    HoldoutReport holdout;
    std::size_t train_windows = 0;
    std::vector<std::string> warnings;

    // Finite losses and a final loss no higher than the initial one.
    bool converged() const;
};

// Chronological split, training on the first part and scoring on the rest.
ExperimentResult run_experiment(const RawDataset& dataset, const ExperimentOptions& opts);

struct GradcheckResult {
    double discrepancy = 0.0;
    std::size_t parameters = 0;  // total in the model
    std::size_t sampled = 0;
};

// Freshly initialized default-shape model on a random window, both from `seed`.
GradcheckResult seeded_gradient_check(std::uint64_t seed, const GradientCheckOptions& opts = {});

}  // namespace aquamon::forecast
