// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: aquamon_acceptance <path to the aquamon CLI>

#include <httplib.h>

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "aquamon/error.hpp"
#include "aquamon/forecast/evaluate.hpp"
#include "aquamon/forecast/experiment.hpp"
#include "aquamon/forecast/model_io.hpp"
#include "aquamon/gateway/frame.hpp"
#include "aquamon/monitor/supervisor.hpp"
#include "aquamon/rng.hpp"
#include "aquamon/service/pipeline.hpp"
#include "aquamon/service/service.hpp"
#include "aquamon/sim/frame_sink.hpp"
#include "aquamon/sim/pond.hpp"
#include "fixtures.hpp"
#include "temp_dir.hpp"

using namespace aquamon;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int number;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool close_rel(double got, double want, double rel) { return std::abs(got - want) <= rel * std::abs(want); }

// 1 ------------------------------------------------------------------------

Outcome metrics_oracle() {
    const std::vector<double> y{10, 20, 40};
    const std::vector<double> yhat{11, 18, 80};
    const auto r = forecast::evaluate(yhat, y);
    const bool ok = close_rel(r.mae, 43.0 / 3.0, 1e-9) && close_rel(r.mse, 535.0, 1e-9) &&
                    close_rel(r.rmse, std::sqrt(535.0), 1e-9) && r.mape && close_rel(*r.mape, 40.0, 1e-9) &&
                    r.mdape && close_rel(*r.mdape, 10.0, 1e-9);
    return {ok, fmt("MAE=%.12g MSE=%.12g RMSE=%.12g MAPE=%.12g MdAPE=%.12g", r.mae, r.mse, r.rmse,
                    r.mape.value_or(NAN), r.mdape.value_or(NAN))};
}

// 2 ------------------------------------------------------------------------

Outcome mdape_robustness() {
    Rng rng(77);
    constexpr std::size_t n = 1000;
    std::vector<double> y(n), clean(n), ape(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = rng.uniform(1.0, 100.0);
        ape[i] = rng.uniform(0.0, 20.0);
        clean[i] = y[i] * (1.0 + (rng.bernoulli(0.5) ? 1 : -1) * ape[i] / 100.0);
    }
    // Recompute the APEs the evaluator will see, so the bounds are exact.
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 100.0 * std::abs(y[i] - clean[i]) / std::abs(y[i]);
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    auto corrupted = clean;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t k = 0; k < n / 20; ++k) {
        std::swap(idx[k], idx[k + rng.below(n - k)]);
        corrupted[idx[k]] = y[idx[k]] * (1.0 + rng.uniform(10.0, 50.0));  // APE >= 1000%
    }
    const auto a = forecast::evaluate(clean, y);
    const auto b = forecast::evaluate(corrupted, y);
    const bool ok = *b.mdape >= lo && *b.mdape <= hi && *b.mape - *a.mape >= 40.0;
    return {ok, fmt("clean APE [%.4f, %.4f], corrupted MdAPE %.4f, MAPE %.2f -> %.2f (+%.2f pp)", lo, hi, *b.mdape,
                    *a.mape, *b.mape, *b.mape - *a.mape)};
}

// 3 ------------------------------------------------------------------------

Outcome gradient_check() {
    double worst = 0.0;
    std::size_t sampled = 0;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        forecast::GradientCheckOptions opts;
        opts.epsilon = 1e-5;
        opts.sample_size = 64;
        opts.seed = seed;
        const auto r = forecast::seeded_gradient_check(seed, opts);
        worst = std::max(worst, r.discrepancy);
        sampled = r.sampled;
    }
    forecast::GradientCheckOptions mutant;
    mutant.epsilon = 1e-5;
    mutant.sample_size = 64;
    mutant.gradient = [](const forecast::CnnModel& m, const forecast::Window& w, std::span<double> g) {
        forecast::analytic_gradient(m, w, g);
        for (auto& x : g) x = -x;
    };
    const double flipped = forecast::seeded_gradient_check(1, mutant).discrepancy;
    const bool ok = sampled >= 50 && worst < 1e-4 && flipped >= 1e-4;
    return {ok, fmt("max discrepancy %.3e over 5 models x %zu parameters; sign-flipped mutant %.3f", worst, sampled,
                    flipped)};
}

// 4 ------------------------------------------------------------------------

Outcome forecast_skill() {
    sim::PondParams p;
    p.seed = 42;
    RawDataset ds;
    ds.source_name = "healthy-7d";
    ds.records = sim::simulate_records(p, *sim::builtin_scenario("healthy"));
    forecast::ExperimentOptions opts;
    opts.spec = forecast::default_window_spec(MetricKind::temperature);
    opts.hyper.seed = 1;
    const auto r = forecast::run_experiment(ds, opts);
    const auto& c = r.holdout.cnn;
    const auto& q = r.holdout.persistence;
    const bool ok = c.mdape && q.mdape && *c.mdape < *q.mdape && c.mae < q.mae;
    return {ok, fmt("H=%zu h=%zu step=%llds, %zu holdout windows: CNN MdAPE %.4f%% MAE %.4f vs persistence "
                    "MdAPE %.4f%% MAE %.4f",
                    opts.spec.history_steps, opts.spec.horizon_steps,
                    static_cast<long long>(opts.spec.step.count()), r.holdout.windows, c.mdape.value_or(NAN), c.mae,
                    q.mdape.value_or(NAN), q.mae)};
}

// 5 ------------------------------------------------------------------------

Outcome table_conformance() {
    testing::TempDir dir;
    service::RuntimeConfig cfg;
    cfg.gateway_listen.reset();
    cfg.data_dir = dir.str();
    cfg.resample_step = Seconds{10};
    cfg.forecast_cadence = Seconds{10};
    cfg.monitor.n_raise = 1;
    service::Pipeline p(cfg, {});
    for (const auto& r : testing::snapshot_dataset().records) p.ingest(r);
    p.flush();

    using monitor::Direction;
    const std::set<std::tuple<std::string, Direction, double>> want{{"dissolved_oxygen", Direction::below, 5.0},
                                                                    {"temperature", Direction::below, 25.0},
                                                                    {"turbidity", Direction::above, 80.0},
                                                                    {"nitrate", Direction::above, 100.0}};
    std::set<std::tuple<std::string, Direction, double>> got;
    bool messages_ok = true;
    std::size_t raised = 0;
    std::string listing;
    for (const auto& a : p.alerts()) {
        const std::string name(metric_name(a.metric));
        got.insert({name, a.direction, a.bound});
        ++raised;
        std::ostringstream bound;
        bound << a.bound;
        messages_ok &= a.message.find(name) != std::string::npos && a.message.find(bound.str()) != std::string::npos;
        listing += (listing.empty() ? "" : "; ") + a.message;
    }
    p.stop();
    return {got == want && messages_ok, fmt("%zu distinct (metric, direction) alerts in %zu raised: %s", got.size(), raised, listing.c_str())};
}

// 6 ------------------------------------------------------------------------

Outcome estop_dominance() {
    using namespace monitor;
    const auto ranges = default_ranges();
    MonitorConfig config;
    Rng rng(606);
    SystemState s;
    std::size_t violations = 0, latched = 0;
    constexpr int kSteps = 20000;
    auto random_command = [&](UtcSeconds now, const SystemState& st) -> Command {
        switch (rng.below(6)) {
            case 0: return EstopCommand{"random", "prop", now};
            case 1: return ResetCommand{"prop", now};
            case 2: {
                std::optional<Demand> d;
                if (!rng.bernoulli(0.3)) d = rng.bernoulli(0.5) ? Demand::on : Demand::off;
                return OverrideCommand{kAllActuators[rng.below(kActuatorCount)], d, "prop", now};
            }
            case 3: return AckCommand{1 + rng.below(st.next_alert_id + 1), "prop", now};
            default: {
                Readings r;
                for (auto m : kAllMetrics) {
                    if (is_water_metric(m) && rng.bernoulli(0.8)) r[m] = rng.uniform(0, 120);
                }
                return CycleCommand{r, {}, now};
            }
        }
    };
    for (int i = 0; i < kSteps; ++i) {
        try {
            s = apply_command(s, random_command(from_epoch(i), s), ranges, config).state;
        } catch (const Error&) {
        }
        violations += !estop_dominates(s);
        latched += s.estop_latched;
    }

    // The same through the threaded supervisor, with concurrent submitters.
    Supervisor sup(config, ranges);
    std::atomic<std::size_t> threaded_violations{0};
    std::vector<std::thread> workers;
    std::mutex rng_mu;
    for (int t = 0; t < 4; ++t) {
        workers.emplace_back([&, t] {
            for (int i = 0; i < 1000; ++i) {
                Command cmd;
                {
                    std::lock_guard lock(rng_mu);
                    cmd = random_command(from_epoch(kSteps + t * 1000 + i), *sup.snapshot());
                }
                try {
                    const auto tr = sup.execute(cmd);
                    threaded_violations += !estop_dominates(tr.state);
                } catch (const Error&) {
                }
                threaded_violations += !estop_dominates(*sup.snapshot());
            }
        });
    }
    for (auto& w : workers) w.join();
    sup.stop();

    // Crash and recovery: copy the log while the pipeline is still running.
    testing::TempDir live, crashed;
    service::RuntimeConfig cfg;
    cfg.gateway_listen.reset();
    cfg.data_dir = live.str();
    bool recovered_latched = false, recovered_dominates = false, torn_latched = false;
    {
        service::Pipeline p(cfg, {});
        p.set_override(ActuatorId::aerator, Demand::on, "ana");
        p.trigger_estop("crash test", "ana");
        std::filesystem::copy(live / "events.jsonl", crashed / "events.jsonl");
    }
    {
        std::ofstream torn(crashed / "events.jsonl", std::ios::app);
        torn << R"({"seq":999,"kind":"actu)";  // a write cut off by the crash
    }
    {
        auto c2 = cfg;
        c2.data_dir = crashed.str();
        service::Pipeline p(c2, {});
        recovered_latched = p.state()->estop_latched;
        recovered_dominates = estop_dominates(*p.state());
        torn_latched = p.log().open_report().dropped_lines == 1;
    }
    const bool ok = violations == 0 && latched > 1000 && threaded_violations == 0 && recovered_latched &&
                    recovered_dominates && torn_latched;
    return {ok, fmt("%d pure + 4000 threaded interleavings, %zu latched states, %zu + %zu violations; "
                    "after crash with torn tail: latched=%d, all off=%d",
                    kSteps, latched, violations, threaded_violations.load(), recovered_latched,
                    recovered_dominates)};
}

// 7 ------------------------------------------------------------------------

// Bitwise CRC straight from the polynomial definition.
std::uint16_t crc_reference(std::span<const std::uint8_t> bytes) {
    std::uint32_t reg = 0xFFFF;
    for (auto byte : bytes) {
        for (int bit = 7; bit >= 0; --bit) {
            const bool top = (reg >> 15) & 1;
            reg = (reg << 1) & 0xFFFF;
            if (((byte >> bit) & 1) != top) reg ^= 0x1021;
        }
    }
    return static_cast<std::uint16_t>(reg);
}

Outcome protocol_integrity() {
    using namespace gateway;
    const std::string check = "123456789";
    const std::span<const std::uint8_t> check_bytes(reinterpret_cast<const std::uint8_t*>(check.data()), check.size());
    const auto crc = crc16_ccitt_false(check_bytes);

    Rng rng(7007);
    std::size_t round_trip_failures = 0;
    for (int i = 0; i < 100000; ++i) {
        SensorFrame f;
        f.node_id = static_cast<std::uint16_t>(rng.below(65536));
        f.metric_id = static_cast<std::uint8_t>(rng.below(kMetricCount));
        f.flags = rng.bernoulli(0.1) ? kFlagSelfTestFailed : 0;
        f.timestamp = rng.next_u64();
        f.value = rng.bernoulli(0.5) ? rng.uniform(-1e6, 1e6) : std::bit_cast<double>(rng.next_u64());
        if (!std::isfinite(f.value) && !f.self_test_failed()) f.value = 0.25;
        const auto bytes = encode_frame(f);
        const auto r = decode_frame(bytes);
        const auto* g = std::get_if<SensorFrame>(&r);
        const bool same = g && g->node_id == f.node_id && g->metric_id == f.metric_id && g->flags == f.flags &&
                          g->timestamp == f.timestamp &&
                          std::bit_cast<std::uint64_t>(g->value) == std::bit_cast<std::uint64_t>(f.value);
        const std::span<const std::uint8_t> body(bytes.data() + 2, kFrameSize - 4);  // magic and CRC excluded
        const std::uint16_t trailer = static_cast<std::uint16_t>((bytes[kFrameSize - 2] << 8) | bytes[kFrameSize - 1]);
        round_trip_failures += !same || trailer != crc_reference(body);
    }

    const auto good = encode_frame(SensorFrame{3, 2, 0, 1'624'060'805, 4.505});
    std::size_t rejected = 0;
    for (std::size_t bit = 0; bit < kFrameSize * 8; ++bit) {
        auto b = good;
        b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        rejected += std::holds_alternative<FrameRejection>(decode_frame(b));
    }
    const bool ok = crc == 0x29B1 && crc_reference(check_bytes) == 0x29B1 && round_trip_failures == 0 &&
                    rejected == kFrameSize * 8;
    return {ok, fmt("CRC(\"123456789\")=0x%04X; 100000 round trips, %zu failures; %zu/%zu single-bit flips rejected",
                    crc, round_trip_failures, rejected, kFrameSize * 8)};
}

// 8 ------------------------------------------------------------------------

Outcome end_to_end() {
    testing::TempDir dir;
    service::RuntimeConfig cfg;
    cfg.gateway_listen = gateway::Endpoint{"127.0.0.1", 0};
    cfg.api_listen = {"127.0.0.1", 0};
    cfg.data_dir = dir.str();
    cfg.frame_flush_timeout = 500ms;
    service::Service svc(cfg);
    svc.start();

    sim::PondParams params;
    const auto script = *sim::builtin_scenario("do_crash");
    const auto crash_at = params.start + script.events.front().at;
    const auto step = cfg.resample_step;
    const auto first_crash_bucket = floor_to_step(crash_at, step);

    std::atomic<bool> stop{false};
    sim::RunSummary summary;
    std::thread feeder([&] {
        sim::FrameSink sink({"127.0.0.1", *svc.gateway_port()});
        sim::RunOptions opts;
        opts.speedup = 100.0;
        opts.should_stop = [&] { return stop.load(); };
        summary = sim::run_scenario(params, script, sink, opts);
    });

    std::optional<monitor::AlertEvent> alert;
    bool aerator_on = false;
    const auto deadline = std::chrono::steady_clock::now() + 55s;
    while (!alert && std::chrono::steady_clock::now() < deadline && !summary.error) {
        for (const auto& a : svc.pipeline().alerts(monitor::AlertState::active)) {
            if (a.metric == MetricKind::dissolved_oxygen && a.direction == monitor::Direction::below &&
                a.kind == monitor::AlertKind::live_out_of_range) {
                alert = a;
                aerator_on = svc.pipeline().state()->actuator(monitor::ActuatorId::aerator).demand == monitor::Demand::on;
            }
        }
        if (!alert) std::this_thread::sleep_for(20ms);
    }

    bool estop_ok = false, alert_persists = false;
    std::string estop_detail = "not attempted";
    if (alert) {
        httplib::Client client("127.0.0.1", svc.api_port());
        const auto res = client.Post("/api/estop", R"({"reason": "acceptance", "actor": "suite"})", "application/json");
        const auto act = client.Get("/api/actuators");
        const auto active = client.Get("/api/alerts?state=active");
        if (res && res->status == 200 && act && active) {
            const auto a = json::parse(act->body);
            const std::string aerator = a["actuators"]["aerator"].value("demand", "");
            estop_ok = a["estop_latched"] == true && aerator == "off";
            for (const auto& x : json::parse(active->body)) {
                alert_persists |= x["id"] == alert->id;
            }
            estop_detail = "latched, aerator " + aerator;
        }
    }
    stop = true;
    feeder.join();
    svc.stop();

    if (!alert) {
        return {false, fmt("no dissolved_oxygen alert before the deadline%s",
                           summary.error ? (": " + *summary.error).c_str() : "")};
    }
    const auto cycles = (alert->raised_at - first_crash_bucket) / step;
    const bool names = alert->message.find("dissolved_oxygen") != std::string::npos &&
                       alert->message.find("5") != std::string::npos;
    const bool ok = cycles <= 2 && names && alert->bound == 5.0 && aerator_on && estop_ok && alert_persists;
    return {ok, fmt("alert \"%s\" after %lld cycle(s) of crashed data, aerator on=%d; after e-stop: %s, alert "
                    "still active=%d",
                    alert->message.c_str(), static_cast<long long>(cycles), aerator_on, estop_detail.c_str(),
                    alert_persists)};
}

// 9 ------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& cli, const std::string& args) {
    const auto cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome determinism(const std::string& cli) {
    testing::TempDir dir;
    const auto d = [&](const char* name) { return "\"" + (dir / name).string() + "\""; };
    int rc = 0;
    rc |= run_cli(cli, "simulate --seed 11 --out " + d("a.csv"));
    rc |= run_cli(cli, "simulate --seed 11 --out " + d("b.csv"));
    const auto a = read_file(dir / "a.csv");
    const bool csv_same = !a.empty() && a == read_file(dir / "b.csv");

    rc |= run_cli(cli, "train --data " + d("a.csv") + " --seed 3 --out " + d("m1.aqmd"));
    rc |= run_cli(cli, "train --data " + d("a.csv") + " --seed 3 --out " + d("m2.aqmd"));
    const auto m1 = read_file(dir / "m1.aqmd");
    const auto m2 = read_file(dir / "m2.aqmd");
    const bool model_same = !m1.empty() && m1 == m2;
    const std::span<const std::uint8_t> m1_bytes(reinterpret_cast<const std::uint8_t*>(m1.data()), m1.size());

    // Frame streams, byte for byte.
    auto frame_stream = [] {
        sim::PondParams p;
        p.seed = 11;
        p.outlier_probability = 0.02;
        sim::PondSimulator pond(p, *sim::builtin_scenario("spikes"));
        std::string out;
        for (int i = 0; i < 1440; ++i) {
            for (const auto& f : sim::sample_frames(pond.next(), 1)) {
                const auto b = gateway::encode_frame(f);
                out.append(reinterpret_cast<const char*>(b.data()), b.size());
            }
        }
        return out;
    };
    const auto s1 = frame_stream();
    const bool frames_same = s1 == frame_stream();
    const bool ok = rc == 0 && csv_same && model_same && frames_same;
    return {ok, fmt("CLI exit codes %s; simulate CSV (%zu bytes) identical=%d; weight files crc32 %08x identical=%d; "
                    "frame stream (%zu bytes) identical=%d",
                    rc == 0 ? "all 0" : "nonzero", a.size(), csv_same, forecast::crc32_of(m1_bytes), model_same,
                    s1.size(), frames_same)};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: " << argv[0] << " <aquamon cli>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const std::vector<Criterion> criteria{
        {1, "metrics oracle", 1, metrics_oracle},
        {2, "MdAPE robustness", 1, mdape_robustness},
        {3, "gradient check", 30, gradient_check},
        {4, "forecast skill", 300, forecast_skill},
        {5, "range table conformance", 5, table_conformance},
        {6, "e-stop dominance", 60, estop_dominance},
        {7, "protocol integrity", 30, protocol_integrity},
        {8, "end-to-end do_crash", 60, end_to_end},
        {9, "determinism", 300, [&] { return determinism(cli); }},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = secs < c.budget_s;
        const bool pass = o.pass && in_budget;
        failed += !pass;
        std::printf("criterion %d (%s): %s  %.2fs/%gs  %s%s\n", c.number, c.name.c_str(), pass ? "PASS" : "FAIL", secs,
                    c.budget_s, o.detail.c_str(), in_budget ? "" : " [over time budget]");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
