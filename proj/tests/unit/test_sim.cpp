#include <doctest.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <numbers>
#include <sstream>

#include "aquamon/error.hpp"
#include "aquamon/gateway/server.hpp"
#include "aquamon/sim/frame_sink.hpp"
#include "aquamon/sim/pond.hpp"

using namespace aquamon;
using namespace aquamon::sim;
using namespace std::chrono_literals;

namespace {

std::vector<SimSample> run(const PondParams& p, const ScenarioScript& s, std::uint64_t n) {
    PondSimulator pond(p, s);
    std::vector<SimSample> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(pond.next());
    return out;
}

std::string csv_of(const PondParams& p, const ScenarioScript& s, std::uint64_t n) {
    std::ostringstream out;
    CsvSink sink(out);
    const auto summary = run_scenario(p, s, sink, {.samples = n});
    REQUIRE_FALSE(summary.error);
    return out.str();
}

struct VectorSink : SampleSink {
    std::vector<SimSample> samples;
    std::size_t fail_after = SIZE_MAX;
    void emit(const SimSample& s) override {
        if (samples.size() == fail_after) throw Error(Errc::io, "sink went away");
        samples.push_back(s);
    }
};

}  // namespace

TEST_CASE("quiet pond sits on its setpoints") {
    const auto p = quiet_params();
    for (const auto& s : run(p, {}, 500)) {
        CHECK(s.values.get(MetricKind::temperature) == 28.0);
        CHECK(s.values.get(MetricKind::ph) == 7.5);
        CHECK(s.values.get(MetricKind::dissolved_oxygen) == 6.5);
        CHECK(s.values.get(MetricKind::tds) == 250.0);
        CHECK(s.values.get(MetricKind::nitrite) == 0.05);
        CHECK(s.values.get(MetricKind::nitrate) == 50.0);
        CHECK(s.values.get(MetricKind::ammonia) == 0.2);
        CHECK(s.values.get(MetricKind::turbidity) == 55.0);
        CHECK(s.values.get(MetricKind::population) == 50.0);
        CHECK(s.values.get(MetricKind::fish_length) == 7.11);
        CHECK(s.values.get(MetricKind::fish_weight) == 2.91);
        CHECK_FALSE(s.outlier);
    }
}

TEST_CASE("diurnal temperature spans mean plus and minus amplitude") {
    auto p = quiet_params();
    p.temp_amplitude = 2.0;
    double lo = 1e9, hi = -1e9;
    for (const auto& s : run(p, {}, 1440)) {
        const double t = *s.values.get(MetricKind::temperature);
        const double secs = static_cast<double>(to_epoch(s.timestamp) % 86400);
        CHECK(t == doctest::Approx(28.0 + 2.0 * std::sin(2.0 * std::numbers::pi * secs / 86400.0)).epsilon(1e-12));
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    CHECK(lo == doctest::Approx(26.0).epsilon(1e-12));
    CHECK(hi == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(lo >= 26.0 - 1e-12);
    CHECK(hi <= 30.0 + 1e-12);
}

TEST_CASE("DO follows the saturation curve") {
    auto p = quiet_params();
    p.temp_amplitude = 2.0;
    for (const auto& s : run(p, {}, 1440)) {
        const double t = *s.values.get(MetricKind::temperature);
        CHECK(*s.values.get(MetricKind::dissolved_oxygen) == doctest::Approx(6.5 - 0.2 * (t - 28.0)));
    }
}

TEST_CASE("same seed, same bytes") {
    PondParams p;
    p.seed = 7;
    const auto script = *builtin_scenario("spikes");
    const auto a = csv_of(p, script, 1440);
    const auto b = csv_of(p, script, 1440);
    CHECK(a == b);
    p.seed = 8;
    CHECK(csv_of(p, script, 1440) != a);
    CHECK(a.rfind("created_at,entry_id,temperature,turbidity,dissolved_o2,ph,ammonia,nitrate,population,"
                  "fish_length,fish_weight,tds,nitrite\n",
                  0) == 0);
    CHECK(a.find("2021-06-19:00:01:00,2,") != std::string::npos);
}

TEST_CASE("CSV output loads back as a dataset") {
    PondParams p;
    std::istringstream in(csv_of(p, *builtin_scenario("sensor_fault"), 180));
    const auto ds = load_dataset(in, "sim");
    REQUIRE(ds.records.size() == 180);
    CHECK_FALSE(ds.records[60].values.contains(MetricKind::dissolved_oxygen));
    CHECK(ds.records[59].values.contains(MetricKind::dissolved_oxygen));
    CHECK(ds.records[90].values.contains(MetricKind::dissolved_oxygen));
    const auto direct = simulate_records(p, *builtin_scenario("sensor_fault"), 180);
    for (std::size_t i = 0; i < direct.size(); ++i) CHECK(ds.records[i].values == direct[i].values);
}

TEST_CASE("do_crash pushes DO under 5 for its duration") {
    PondParams p;
    const auto script = *builtin_scenario("do_crash");
    const auto samples = run(p, script, 180);
    bool below = false;
    for (const auto& s : samples) {
        const auto off = s.timestamp - p.start;
        const auto v = s.values.get(MetricKind::dissolved_oxygen);
        if (off >= 20min && off < 80min && s.outlier != MetricKind::dissolved_oxygen) {
            CHECK(*v <= 5.0 - 1.5);
        }
        if (v && *v < 5.0) below = true;
    }
    CHECK(below);
    CHECK(samples[19].values.get(MetricKind::dissolved_oxygen) > 5.0);
    CHECK(samples[90].values.get(MetricKind::dissolved_oxygen) > 5.0);
}

TEST_CASE("outlier count follows the seeded trace") {
    PondParams p;
    p.outlier_probability = 0.05;
    p.seed = 1234;
    VectorSink sink;
    const auto summary = run_scenario(p, {}, sink, {.samples = 100});
    CHECK(summary.samples == 100);
    CHECK(summary.events_applied == 0);

    // Replay the outlier stream by hand.
    Rng trace(p.seed ^ kOutlierStreamSalt);
    std::uint64_t expected = 0;
    std::vector<std::optional<MetricKind>> hit(100);
    for (int i = 0; i < 100; ++i) {
        if (trace.bernoulli(p.outlier_probability)) {
            hit[i] = kAllMetrics[trace.below(kWaterMetricCount)];
            trace.uniform01();
            ++expected;
        }
    }
    CHECK(summary.outliers == expected);
    for (int i = 0; i < 100; ++i) CHECK(sink.samples[i].outlier == hit[i]);

    // Over many seeds the rate settles at p.
    std::uint64_t total = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        p.seed = seed;
        VectorSink s;
        total += run_scenario(p, {}, s, {.samples = 100}).outliers;
    }
    CHECK(static_cast<double>(total) / 200.0 == doctest::Approx(5.0).epsilon(0.1));
}

TEST_CASE("outliers replace emitted values inside setpoint x [3, 10]") {
    PondParams p;
    p.outlier_probability = 0.2;
    for (const auto& s : run(p, {}, 500)) {
        if (!s.outlier) continue;
        const double v = *s.values.get(*s.outlier);
        CHECK(v >= 3.0 * p.setpoint(*s.outlier));
        CHECK(v < 10.0 * p.setpoint(*s.outlier));
    }
}

TEST_CASE("dropping outliers recovers the clean stream") {
    PondParams noisy;
    noisy.outlier_probability = 0.05;
    PondParams clean = noisy;
    clean.outlier_probability = 0.0;
    const auto a = run(noisy, *builtin_scenario("spikes"), 1440);
    const auto b = run(clean, *builtin_scenario("spikes"), 1440);
    std::size_t outliers = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].outlier) {
            ++outliers;
            auto fixed = a[i].values;
            fixed.set(*a[i].outlier, *b[i].values.get(*a[i].outlier));
            CHECK(fixed == b[i].values);
        } else {
            CHECK(a[i].values == b[i].values);
        }
    }
    CHECK(outliers > 0);
}

TEST_CASE("nitrate ramp crosses the upper bound") {
    ScenarioScript script;
    script.duration = 2h;
    ScenarioEvent e;
    e.action = ActionType::ramp;
    e.metric = MetricKind::nitrate;
    e.rate_per_sample = 2.0;
    e.duration = 60min;
    script.events.push_back(e);
    const auto samples = run(quiet_params(), script, 120);
    CHECK(samples[0].values.get(MetricKind::nitrate) == 52.0);
    CHECK(samples[59].values.get(MetricKind::nitrate) == 50.0 + 2.0 * 60);
    CHECK(samples[119].values.get(MetricKind::nitrate) == 170.0);
    const auto verdict = check_metric(MetricKind::nitrate, *samples[59].values.get(MetricKind::nitrate), default_ranges());
    CHECK(verdict.status == RangeStatus::above);
}

TEST_CASE("spike is a jump that decays back") {
    ScenarioScript script;
    script.duration = 10h;
    ScenarioEvent e;
    e.at = 1h;
    e.metric = MetricKind::turbidity;
    e.magnitude = 40.0;
    script.events.push_back(e);
    auto p = quiet_params();
    const auto samples = run(p, script, 600);
    CHECK(samples[59].values.get(MetricKind::turbidity) == 55.0);
    CHECK(samples[60].values.get(MetricKind::turbidity) == 95.0);
    // Reversion time 3600 s: one hour later the excess is 40/e.
    CHECK(*samples[120].values.get(MetricKind::turbidity) == doctest::Approx(55.0 + 40.0 / std::numbers::e));
}

TEST_CASE("healthy week stays in range") {
    PondParams p;
    p.outlier_probability = 0.0;
    const auto ranges = default_ranges();
    std::size_t checked = 0, inside = 0;
    PondSimulator pond(p, *builtin_scenario("healthy"));
    for (int i = 0; i < 7 * 1440; ++i) {
        const auto s = pond.next();
        bool ok = true;
        s.values.for_each([&](MetricKind m, double v) {
            if (!is_water_metric(m)) return;
            if (check_metric(m, v, ranges).status != RangeStatus::in_range &&
                check_metric(m, v, ranges).status != RangeStatus::unchecked) {
                ok = false;
            }
        });
        ++checked;
        if (ok) ++inside;
    }
    CHECK(static_cast<double>(inside) / static_cast<double>(checked) >= 0.99);
}

TEST_CASE("scenario documents") {
    for (const auto& name : builtin_scenario_names()) {
        const auto s = *builtin_scenario(name);
        const auto back = scenario_from_json(to_json(s));
        CHECK(to_json(back) == to_json(s));
    }
    CHECK_FALSE(builtin_scenario("nope"));

    const auto s = load_scenario(R"({"name":"x","duration_s":7200,"events":[
        {"at_s":3600,"action":"do_crash","depth":2,"duration_s":600},
        {"at_s":60,"action":"spike","metric":"ph","magnitude":-1}]})");
    REQUIRE(s.events.size() == 2);
    CHECK(s.events[0].action == ActionType::spike);
    CHECK(s.events[1].metric == MetricKind::dissolved_oxygen);

    auto config_error = [](const char* text) {
        try {
            load_scenario(text);
        } catch (const Error& e) {
            CHECK(e.code() == Errc::config);
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(config_error(R"({"events":[]})").starts_with("scenario.duration_s"));
    CHECK(config_error(R"({"duration_s":10,"events":[{"at_s":1,"action":"melt"}]})").starts_with("scenario.events[0].action"));
    CHECK(config_error(R"({"duration_s":10,"events":[{"at_s":1,"action":"spike","metric":"population","magnitude":1}]})")
              .starts_with("scenario.events[0].metric"));
    CHECK(config_error(R"({"duration_s":10,"events":[{"at_s":20,"action":"spike","metric":"ph","magnitude":1}]})")
              .starts_with("scenario.events[0].at_s"));
    CHECK(config_error(R"({"duration_s":100,"events":[{"at_s":1,"action":"do_crash","depth":0,"duration_s":5}]})")
              .starts_with("scenario.events[0].depth"));
    CHECK(config_error(R"({"duration_s":100,"events":[{"at_s":1,"action":"ramp","metric":"ph","rate_per_sample":1}]})")
              .starts_with("scenario.events[0].duration_s"));
    CHECK(config_error(R"({"duration_s":100,"colour":"red"})").starts_with("scenario.colour"));
    CHECK(config_error(R"({"duration_s":1, "duration_s":2})") != "no error");
}

TEST_CASE("parameter validation") {
    PondParams p;
    p.outlier_probability = 1.0;
    CHECK_THROWS_AS(PondSimulator{p}, Error);
    p = PondParams{};
    p.noise_stddev[3] = -1.0;
    CHECK_THROWS_AS(PondSimulator{p}, Error);
    p = PondParams{};
    p.sample_period = Seconds{0};
    CHECK_THROWS_AS(PondSimulator{p}, Error);
}

TEST_CASE("sink failure returns a partial summary") {
    VectorSink sink;
    sink.fail_after = 37;
    const auto summary = run_scenario(PondParams{}, *builtin_scenario("do_crash"), sink);
    CHECK(summary.samples == 37);
    REQUIRE(summary.error);
    CHECK(*summary.error == "sink went away");
    CHECK(summary.to_json()["samples"] == 37);
}

TEST_CASE("paced run honours the speedup") {
    VectorSink sink;
    const auto t0 = std::chrono::steady_clock::now();
    run_scenario(PondParams{}, {}, sink, {.speedup = 6000.0, .samples = 11});
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    CHECK(sink.samples.size() == 11);
    CHECK(elapsed >= 95ms);
}

TEST_CASE("faulted metrics become self-test frames") {
    PondParams p;
    PondSimulator pond(p, *builtin_scenario("sensor_fault"));
    SimSample s;
    for (int i = 0; i <= 60; ++i) s = pond.next();
    const auto frames = sample_frames(s, 3);
    REQUIRE(frames.size() == kMetricCount);
    const auto& f = frames[metric_index(MetricKind::dissolved_oxygen)];
    CHECK(f.self_test_failed());
    CHECK(std::isnan(f.value));
    CHECK_NOTHROW(gateway::encode_frame(f));
    CHECK_FALSE(frames[0].self_test_failed());
}

TEST_CASE("frame sink feeds a gateway") {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<gateway::GatewayRecord> got;
    gateway::GatewayServer server({"127.0.0.1", 0}, [&](const gateway::GatewayRecord& r) {
        std::lock_guard lock(mu);
        got.push_back(r);
        cv.notify_all();
    }, 200ms);
    server.start();
    PondParams p;
    const auto expected = simulate_records(p, {}, 20);
    {
        FrameSink sink({"127.0.0.1", server.port()}, 9);
        const auto summary = run_scenario(p, {}, sink, {.samples = 20});
        CHECK_FALSE(summary.error);
        CHECK(sink.frames_sent() == 20 * kMetricCount);
    }
    std::unique_lock lock(mu);
    cv.wait_for(lock, 5s, [&] { return got.size() >= 20; });
    REQUIRE(got.size() == 20);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].node_id == 9);
        CHECK(got[i].record.timestamp == expected[i].timestamp);
        CHECK(got[i].record.values == expected[i].values);
    }
}
