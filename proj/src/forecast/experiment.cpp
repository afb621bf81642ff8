#include "aquamon/forecast/experiment.hpp"

#include <cmath>
#include <map>

#include "aquamon/error.hpp"
#include "aquamon/rng.hpp"

namespace aquamon::forecast {

SeriesMap prepare_series(const RawDataset& dataset, const WindowSpec& spec, std::size_t max_gap,
                         bool drop_high_spread) {
    spec.validate();
    SeriesMap out;
    ResampleOptions ro;
    ro.step = spec.step;
    for (auto m : spec.input_metrics) {
        auto s = resample(dataset, m, ro);
        if (s.missing_count() == s.size()) {
            throw Error(Errc::no_data, std::string(metric_name(m)) + ": no values in " + dataset.source_name);
        }
        if (drop_high_spread) {
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s.high_spread[i]) s.values[i].reset();
            }
        }
        out.emplace(m, max_gap > 0 ? fill_gaps(s, max_gap) : std::move(s));
    }
    return out;
}

std::string HoldoutReport::table() const {
    return format_report_table({{"cnn", cnn}, {"persistence", persistence}, {"moving_average", moving_average}});
}

nlohmann::json HoldoutReport::to_json() const {
    return {{"windows", windows},
            {"cnn", forecast::to_json(cnn)},
            {"persistence", forecast::to_json(persistence)},
            {"moving_average", forecast::to_json(moving_average)}};
}

HoldoutReport evaluate_on(const CnnModel& model, const SeriesMap& series) { return evaluate_on(model, series, series); }

HoldoutReport evaluate_on(const CnnModel& model, const SeriesMap& inputs, const SeriesMap& targets) {
    const auto& spec = model.spec();
    const auto in_set = make_windows(inputs, spec);
    const auto target_set = &inputs == &targets ? in_set : make_windows(targets, spec);
    std::map<UtcSeconds, const Window*> target_at;
    for (std::size_t i = 0; i < target_set.windows.size(); ++i) target_at[target_set.anchors[i]] = &target_set.windows[i];

    std::vector<double> actual, cnn, persist, moving;
    std::size_t used = 0;
    for (std::size_t i = 0; i < in_set.windows.size(); ++i) {
        const auto it = target_at.find(in_set.anchors[i]);
        if (it == target_at.end()) continue;
        const auto& input = in_set.windows[i].input;
        const auto& target = it->second->target;
        actual.insert(actual.end(), target.begin(), target.end());
        const auto p = predict(model, input);
        cnn.insert(cnn.end(), p.begin(), p.end());
        const auto b = baseline_persistence(input, spec);
        persist.insert(persist.end(), b.begin(), b.end());
        const auto ma = baseline_moving_average(input, spec, spec.history_steps);
        moving.insert(moving.end(), ma.begin(), ma.end());
        ++used;
    }
    if (used == 0) {
        throw Error(Errc::no_data, "no complete " + std::to_string(spec.history_steps) + "+" +
                                       std::to_string(spec.horizon_steps) + " window in the evaluation data");
    }
    HoldoutReport r;
    r.windows = used;
    r.cnn = evaluate(cnn, actual);
    r.persistence = evaluate(persist, actual);
    r.moving_average = evaluate(moving, actual);
    return r;
}

bool ExperimentResult::converged() const {
    const auto& t = training;
    if (!std::isfinite(t.initial_loss)) return false;
    for (double l : t.epoch_loss) {
        if (!std::isfinite(l)) return false;
    }
    return t.final_loss() <= t.initial_loss;
}

ExperimentResult run_experiment(const RawDataset& dataset, const ExperimentOptions& opts) {
    if (!(opts.train_fraction > 0.0 && opts.train_fraction < 1.0)) {
        throw Error(Errc::parameter, "train_fraction must be in (0, 1)");
    }
    SeriesMap train_part, test_inputs, test_targets;
    for (const auto& [m, s] : prepare_series(dataset, opts.spec, opts.max_gap, opts.drop_high_spread)) {
        auto [a, b] = split(s, opts.train_fraction);
        train_part.emplace(m, std::move(a));
        test_inputs.emplace(m, std::move(b));
    }
    for (const auto& [m, s] : prepare_series(dataset, opts.spec, opts.max_gap)) {
        test_targets.emplace(m, split(s, opts.train_fraction).second);
    }
    const auto train_set = make_windows(train_part, opts.spec);
    if (train_set.windows.empty()) throw Error(Errc::no_data, "no complete window in the training split");

    ExperimentResult r{train(train_set.windows, opts.spec, opts.hyper), {}, train_set.windows.size(), train_set.warnings};
    r.training.model.trained_on = dataset.source_name;
    r.holdout = evaluate_on(r.training.model, test_inputs, test_targets);
    return r;
}

GradcheckResult seeded_gradient_check(std::uint64_t seed, const GradientCheckOptions& opts) {
    CnnModel model(default_window_spec(MetricKind::temperature));
    init_parameters(model, seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    const auto& spec = model.spec();
    Window w;
    for (std::size_t i = 0; i < spec.history_steps * spec.channels(); ++i) w.input.push_back(rng.uniform(-2, 2));
    for (std::size_t i = 0; i < spec.horizon_steps; ++i) w.target.push_back(rng.uniform(-2, 2));
    GradcheckResult r;
    r.parameters = model.param_count();
    r.sampled = std::min(opts.sample_size, r.parameters);
    r.discrepancy = gradient_check(model, w, opts);
    return r;
}

}  // namespace aquamon::forecast
