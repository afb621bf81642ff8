#include <doctest.h>

#include "aquamon/error.hpp"
#include "aquamon/forecast/window.hpp"
#include "aquamon/rng.hpp"
#include "fixtures.hpp"

using namespace aquamon;
using namespace aquamon::forecast;
using aquamon::testing::make_series;

namespace {

WindowSpec spec_hc(std::size_t H, std::size_t h, std::vector<MetricKind> inputs = {MetricKind::temperature}) {
    WindowSpec s;
    s.history_steps = H;
    s.horizon_steps = h;
    s.input_metrics = std::move(inputs);
    s.target_metric = MetricKind::temperature;
    return s;
}

std::vector<std::optional<double>> ramp(std::size_t n) {
    std::vector<std::optional<double>> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(static_cast<double>(i));
    return v;
}

// Brute-force oracle: an anchor survives iff every bucket it touches is present.
std::size_t enumerate_valid(const std::vector<std::optional<double>>& v, std::size_t H, std::size_t h) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < v.size(); ++t) {
        if (t + 1 < H || t + h >= v.size()) continue;
        bool ok = true;
        for (std::size_t i = t + 1 - H; i <= t + h; ++i) ok = ok && v[i].has_value();
        if (ok) ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("window counts without gaps") {
    SeriesMap m{{MetricKind::temperature, make_series(MetricKind::temperature, ramp(10))}};
    const auto ws = make_windows(m, spec_hc(3, 2));
    REQUIRE(ws.windows.size() == 6);
    CHECK(ws.windows[0].input == std::vector<double>{0, 1, 2});
    CHECK(ws.windows[0].target == std::vector<double>{3, 4});
    CHECK(ws.windows[5].input == std::vector<double>{5, 6, 7});
    CHECK(ws.windows[5].target == std::vector<double>{8, 9});
    CHECK(ws.anchors[0] == from_epoch(1200));
}

TEST_CASE("too-short series yields no windows and a warning") {
    SeriesMap m{{MetricKind::temperature, make_series(MetricKind::temperature, ramp(5))}};
    const auto ws = make_windows(m, spec_hc(3, 6));
    CHECK(ws.windows.empty());
    CHECK_FALSE(ws.warnings.empty());
}

TEST_CASE("gap rule agrees with anchor enumeration") {
    // n=6, H=3, h=2 has only two anchors and both touch the fourth bucket.
    auto v6 = ramp(6);
    v6[3].reset();
    CHECK(enumerate_valid(v6, 3, 2) == 0);
    SeriesMap m6{{MetricKind::temperature, make_series(MetricKind::temperature, v6)}};
    CHECK(make_windows(m6, spec_hc(3, 2)).windows.size() == 0);
    CHECK(make_windows(m6, spec_hc(3, 2)).skipped_for_gaps == 2);

    // n=10 with the fourth bucket missing leaves the last two anchors.
    auto v10 = ramp(10);
    v10[3].reset();
    CHECK(enumerate_valid(v10, 3, 2) == 2);
    SeriesMap m10{{MetricKind::temperature, make_series(MetricKind::temperature, v10)}};
    const auto ws = make_windows(m10, spec_hc(3, 2));
    REQUIRE(ws.windows.size() == 2);
    CHECK(ws.windows[0].input == std::vector<double>{4, 5, 6});

    Rng rng(9);
    for (int trial = 0; trial < 300; ++trial) {
        auto v = ramp(1 + rng.below(30));
        for (auto& x : v) {
            if (rng.bernoulli(0.15)) x.reset();
        }
        const auto H = 1 + rng.below(4);
        const auto h = 1 + rng.below(4);
        SeriesMap mm{{MetricKind::temperature, make_series(MetricKind::temperature, v)}};
        CHECK(make_windows(mm, spec_hc(H, h)).windows.size() == enumerate_valid(v, H, h));
    }
}

TEST_CASE("multichannel windows are time-major") {
    SeriesMap m{{MetricKind::temperature, make_series(MetricKind::temperature, ramp(6))},
                {MetricKind::dissolved_oxygen, make_series(MetricKind::dissolved_oxygen, {10.0, 11.0, 12.0, 13.0, 14.0, 15.0})}};
    const auto ws = make_windows(m, spec_hc(2, 1, {MetricKind::dissolved_oxygen, MetricKind::temperature}));
    REQUIRE(ws.windows.size() == 4);
    CHECK(ws.windows[0].input == std::vector<double>{10, 0, 11, 1});
    CHECK(ws.windows[0].target == std::vector<double>{2});
}

TEST_CASE("misaligned series are rejected") {
    SeriesMap m{{MetricKind::temperature, make_series(MetricKind::temperature, ramp(6))},
                {MetricKind::ph, make_series(MetricKind::ph, ramp(6), 600)}};
    try {
        make_windows(m, spec_hc(2, 1, {MetricKind::temperature, MetricKind::ph}));
        FAIL("expected alignment error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::alignment);
    }
    SeriesMap wrong_step{{MetricKind::temperature, make_series(MetricKind::temperature, ramp(6), 0, 60)}};
    CHECK_THROWS_AS(make_windows(wrong_step, spec_hc(2, 1)), Error);
}

TEST_CASE("window spec validation") {
    auto s = default_window_spec(MetricKind::ph);
    CHECK(s.history_steps == 3);
    CHECK(s.horizon_steps == 6);
    CHECK(s.step == Seconds{600});
    s.target_metric = MetricKind::tds;
    CHECK_THROWS_AS(s.validate(), Error);
    s = spec_hc(0, 1);
    CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("latest_input takes the last H buckets") {
    SeriesMap m{{MetricKind::temperature, make_series(MetricKind::temperature, ramp(8))}};
    CHECK(*latest_input(m, spec_hc(3, 2)) == std::vector<double>{5, 6, 7});
    auto v = ramp(8);
    v[6].reset();
    SeriesMap g{{MetricKind::temperature, make_series(MetricKind::temperature, v)}};
    CHECK_FALSE(latest_input(g, spec_hc(3, 2)).has_value());
}
