#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "aquamon/error.hpp"
#include "aquamon/forecast/evaluate.hpp"
#include "aquamon/rng.hpp"

using namespace aquamon;
using namespace aquamon::forecast;

TEST_CASE("metrics on a worked example") {
    const std::vector<double> y{10, 20, 40};
    const std::vector<double> p{11, 18, 80};
    const auto r = evaluate(p, y);
    CHECK(r.mae == doctest::Approx(43.0 / 3.0));
    CHECK(r.mse == doctest::Approx(535.0));
    CHECK(r.rmse == doctest::Approx(std::sqrt(535.0)));
    REQUIRE(r.mape.has_value());
    CHECK(*r.mape == doctest::Approx(40.0));
    CHECK(*r.mdape == doctest::Approx(10.0));
    CHECK(r.n_points == 3);
    CHECK(r.n_excluded_zero_denominator == 0);
}

TEST_CASE("zero actuals are excluded from percentage errors") {
    const std::vector<double> y{0, 10};
    const std::vector<double> p{1, 10};
    const auto r = evaluate(p, y);
    CHECK(r.n_excluded_zero_denominator == 1);
    CHECK(*r.mdape == 0.0);
    CHECK(r.mae == doctest::Approx(0.5));

    const std::vector<double> zeros{0, 0};
    const auto z = evaluate(p, zeros);
    CHECK_FALSE(z.mdape.has_value());
    CHECK_FALSE(z.mape.has_value());
    CHECK(z.n_excluded_zero_denominator == 2);
}

TEST_CASE("evaluate rejects bad input") {
    auto code = [](std::vector<double> p, std::vector<double> y) {
        try {
            evaluate(p, y);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::io;
    };
    CHECK(code({1, 2}, {1}) == Errc::invalid_input);
    CHECK(code({}, {}) == Errc::invalid_input);
    CHECK(code({1, NAN}, {1, 2}) == Errc::invalid_input);
    CHECK(code({1, 2}, {1, INFINITY}) == Errc::invalid_input);
}

TEST_CASE("median convention") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK(median({7}) == 7.0);
}

TEST_CASE("rmse bounds mae and mdape resists one outlier") {
    Rng rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 3 + rng.below(40);
        std::vector<double> y, p;
        for (std::size_t i = 0; i < n; ++i) {
            y.push_back(rng.uniform(1, 50));
            p.push_back(y.back() * (1 + rng.uniform(-0.2, 0.2)));
        }
        const auto base = evaluate(p, y);
        CHECK(base.rmse + 1e-12 >= base.mae);

        // One wild prediction moves MAPE a lot but MdAPE at most to a neighbouring rank.
        auto q = p;
        q[rng.below(n)] = 1e6;
        const auto spoiled = evaluate(q, y);
        std::vector<double> ape;
        for (std::size_t i = 0; i < n; ++i) ape.push_back(100.0 * std::abs(p[i] - y[i]) / std::abs(y[i]));
        std::sort(ape.begin(), ape.end());
        CHECK(*spoiled.mdape <= ape.back() + 1e-9);
        CHECK(*spoiled.mape > *base.mape);
    }
}

TEST_CASE("baselines") {
    WindowSpec spec;
    spec.history_steps = 3;
    spec.horizon_steps = 4;
    spec.input_metrics = {MetricKind::ph, MetricKind::temperature};
    spec.target_metric = MetricKind::temperature;
    const std::vector<double> input{7.0, 25.0, 7.1, 26.0, 7.2, 30.0};
    CHECK(baseline_persistence(input, spec) == std::vector<double>(4, 30.0));
    CHECK(baseline_moving_average(input, spec, 2) == std::vector<double>(4, 28.0));
    CHECK(baseline_moving_average(input, spec, 3) == std::vector<double>(4, 27.0));
    CHECK_THROWS_AS(baseline_moving_average(input, spec, 0), Error);
    CHECK_THROWS_AS(baseline_moving_average(input, spec, 4), Error);
}

TEST_CASE("report rendering") {
    const std::vector<double> y{10, 20, 40};
    const std::vector<double> p{11, 18, 80};
    const auto r = evaluate(p, y);
    const auto j = to_json(r);
    CHECK(j.at("n_points") == 3);
    CHECK(j.at("mdape").get<double>() == doctest::Approx(10.0));
    const auto table = format_report_table({{"cnn", r}, {"persistence", r}});
    CHECK(table.find("persistence") != std::string::npos);
    CHECK(table.find("MdAPE") != std::string::npos);
}
