#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <thread>

#include "aquamon/error.hpp"
#include "aquamon/service/api.hpp"
#include "aquamon/service/service.hpp"
#include "aquamon/sim/frame_sink.hpp"
#include "aquamon/sim/pond.hpp"
#include "fixtures.hpp"
#include "temp_dir.hpp"

using namespace aquamon;
using namespace aquamon::service;
using namespace std::chrono_literals;
using aquamon::testing::TempDir;
using nlohmann::json;

namespace {

struct Harness {
    TempDir dir;
    std::unique_ptr<Pipeline> pipeline;
    std::unique_ptr<ApiServer> api;
    std::unique_ptr<httplib::Client> client;

    Harness() {
        RuntimeConfig c;
        c.gateway_listen.reset();
        c.data_dir = dir.str();
        c.resample_step = Seconds{10};
        c.forecast_cadence = Seconds{10};
        c.monitor.n_raise = 1;
        PipelineOptions o;
        o.clock = [] { return from_epoch(1'700'000'000); };
        pipeline = std::make_unique<Pipeline>(c, ModelSet{}, o);
        api = std::make_unique<ApiServer>(*pipeline, gateway::Endpoint{"127.0.0.1", 0});
        api->start();
        client = std::make_unique<httplib::Client>("127.0.0.1", api->port());
        client->set_read_timeout(5, 0);
    }
    ~Harness() { api->stop(); }

    std::pair<int, json> get(const std::string& path) {
        auto r = client->Get(path);
        REQUIRE(r);
        return {r->status, json::parse(r->body)};
    }
    std::pair<int, json> post(const std::string& path, const std::string& body) {
        auto r = client->Post(path, body, "application/json");
        REQUIRE(r);
        return {r->status, json::parse(r->body)};
    }
    void load_snapshot_rows() {
        for (const auto& r : aquamon::testing::snapshot_dataset().records) pipeline->ingest(r);
        pipeline->flush();
    }
};

}  // namespace

TEST_CASE("read endpoints") {
    Harness h;
    auto [st, latest] = h.get("/api/readings/latest");
    CHECK(st == 200);
    CHECK(latest["last_bucket"].is_null());
    CHECK(latest["metrics"]["ph"]["value"].is_null());

    h.load_snapshot_rows();
    std::tie(st, latest) = h.get("/api/readings/latest");
    CHECK(latest["metrics"]["temperature"]["value"].is_number());
    CHECK(latest["metrics"].size() == kMetricCount);

    auto [hs, hist] = h.get("/api/history?metric=dissolved_oxygen");
    CHECK(hs == 200);
    CHECK(hist["buckets"].size() == h.pipeline->history(std::nullopt, std::nullopt).size());
    // [from, to): ISO and epoch forms both work.
    const auto first = hist["buckets"][0]["start"].get<std::string>();
    const auto next = to_epoch(parse_timestamp(first)) + 10;
    auto [hs2, hist2] = h.get("/api/history?metric=dissolved_oxygen&from=" + first + "&to=" + std::to_string(next));
    CHECK(hs2 == 200);
    CHECK(hist2["buckets"].size() == 1);

    auto [as, alerts] = h.get("/api/alerts?state=active");
    CHECK(as == 200);
    CHECK(alerts.size() == h.pipeline->alerts(monitor::AlertState::active).size());
    CHECK(h.get("/api/alerts").second.size() == h.pipeline->alerts().size());

    CHECK(h.get("/api/actuators").second["actuators"].size() == monitor::kActuatorCount);
    CHECK(h.get("/api/ranges").first == 200);
    CHECK(h.get("/api/forecasts/latest").first == 200);
    const auto health = h.get("/api/health").second;
    CHECK(health["status"] == "degraded");
    CHECK(health["degraded"]["no_forecast"] == true);
}

TEST_CASE("query errors") {
    Harness h;
    auto [s1, b1] = h.get("/api/history");
    CHECK(s1 == 422);
    CHECK(b1["error"]["field"] == "metric");
    CHECK(h.get("/api/history?metric=oxygen").first == 422);
    CHECK(h.get("/api/history?metric=ph&from=yesterday").first == 422);
    CHECK(h.get("/api/history?metric=ph&from=100&to=50").first == 422);
    CHECK(h.get("/api/alerts?state=open").first == 422);
    CHECK(h.get("/api/events?after=-1").first == 422);
}

TEST_CASE("commands and their status codes") {
    Harness h;
    h.load_snapshot_rows();

    auto [s, body] = h.post("/api/actuators/heater/override", R"({"demand": "on", "actor": "ana"})");
    CHECK(s == 200);
    CHECK(h.pipeline->state()->actuator(monitor::ActuatorId::heater).source == monitor::Source::operator_override);

    std::tie(s, body) = h.post("/api/actuators/heater/release", R"({"actor": "ana"})");
    CHECK(s == 200);
    CHECK(h.pipeline->state()->actuator(monitor::ActuatorId::heater).source == monitor::Source::automatic);

    auto del = h.client->Delete("/api/actuators/chiller/override", R"({"actor": "ana"})", "application/json");
    REQUIRE(del);
    CHECK(del->status == 200);

    std::tie(s, body) = h.post("/api/actuators/heater/override", R"({"demand": "on", "actor": "ana")");
    CHECK(s == 400);
    CHECK(body["error"]["code"] == "parse");
    std::tie(s, body) = h.post("/api/actuators/heater/override", R"({"demand": "maybe", "actor": "ana"})");
    CHECK(s == 422);
    CHECK(body["error"]["field"] == "demand");
    std::tie(s, body) = h.post("/api/actuators/heater/override", R"({"demand": "on"})");
    CHECK(s == 422);
    CHECK(body["error"]["field"] == "actor");
    std::tie(s, body) = h.post("/api/actuators/heater/override", R"({"demand": "on", "actor": "a", "x": 1})");
    CHECK(s == 422);
    std::tie(s, body) = h.post("/api/actuators/boiler/override", R"({"demand": "on", "actor": "ana"})");
    CHECK(s == 404);

    std::tie(s, body) = h.post("/api/alerts/999/ack", R"({"actor": "ana"})");
    CHECK(s == 404);
    const auto active = h.pipeline->alerts(monitor::AlertState::active);
    REQUIRE_FALSE(active.empty());
    const auto path = "/api/alerts/" + std::to_string(active.front().id) + "/ack";
    std::tie(s, body) = h.post(path, R"({"actor": "ana"})");
    CHECK(s == 200);
    std::tie(s, body) = h.post(path, R"({"actor": "ana"})");
    CHECK(s == 200);
    CHECK(body["events"].empty());

    std::tie(s, body) = h.post("/api/estop", R"({"reason": "leak", "actor": "ana"})");
    CHECK(s == 200);
    CHECK(body["estop_latched"] == true);
    std::tie(s, body) = h.post("/api/actuators/aerator/override", R"({"demand": "on", "actor": "ana"})");
    CHECK(s == 409);
    CHECK(body["error"]["code"] == "safety_rejection");
    const auto act = h.get("/api/actuators").second;
    CHECK(act["estop_latched"] == true);
    CHECK(act["estop_reason"] == "leak");
    std::tie(s, body) = h.post("/api/estop/reset", R"({"actor": "ben"})");
    CHECK(s == 200);
    CHECK(body["estop_latched"] == false);

    auto opt = h.client->Options("/api/estop");
    REQUIRE(opt);
    CHECK(opt->status == 204);
    CHECK(opt->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("events after K start at K+1") {
    Harness h;
    h.load_snapshot_rows();
    const auto total = h.pipeline->log().last_seq();
    REQUIRE(total > 5);
    auto [s, body] = h.get("/api/events?after=3&limit=2");
    CHECK(s == 200);
    CHECK(body["last_seq"] == total);
    REQUIRE(body["events"].size() == 2);
    CHECK(body["events"][0]["seq"] == 4);
    CHECK(body["events"][1]["seq"] == 5);
    CHECK(h.get("/api/events?after=" + std::to_string(total)).second["events"].empty());
}

TEST_CASE("event stream resumes after a cursor and pushes new entries") {
    Harness h;
    h.load_snapshot_rows();
    const auto start = h.pipeline->log().last_seq();

    std::string received;
    std::vector<std::uint64_t> ids;
    std::thread later([&] {
        std::this_thread::sleep_for(100ms);
        h.pipeline->trigger_estop("stream test", "ana");
    });
    httplib::Headers headers{{"Last-Event-ID", std::to_string(start - 2)}};
    auto res = h.client->Get("/api/events/stream", headers, [&](const char* data, std::size_t len) {
        received.append(data, len);
        ids.clear();
        std::size_t pos = 0;
        while ((pos = received.find("id: ", pos)) != std::string::npos) {
            ids.push_back(std::stoull(received.substr(pos + 4)));
            pos += 4;
        }
        return received.find("event: estop") == std::string::npos;
    });
    later.join();
    REQUIRE(ids.size() >= 3);
    CHECK(ids[0] == start - 1);
    CHECK(ids[1] == start);
    for (std::size_t i = 1; i < ids.size(); ++i) CHECK(ids[i] == ids[i - 1] + 1);
    const auto data_at = received.find("data: ", received.find("event: estop"));
    REQUIRE(data_at != std::string::npos);
    const auto line = received.substr(data_at + 6, received.find('\n', data_at) - data_at - 6);
    const auto doc = json::parse(line);
    CHECK(doc["kind"] == "estop");
    CHECK(doc["payload"].contains("estop"));
}

TEST_CASE("service: frames from the simulator reach the API") {
    TempDir dir;
    RuntimeConfig c;
    c.gateway_listen = gateway::Endpoint{"127.0.0.1", 0};
    c.api_listen = {"127.0.0.1", 0};
    c.data_dir = dir.str();
    c.frame_flush_timeout = 200ms;
    Service svc(c);
    svc.start();
    REQUIRE(svc.gateway_port());

    sim::FrameSink sink({"127.0.0.1", *svc.gateway_port()});
    sim::RunOptions opts;
    opts.samples = 30;
    const auto summary = sim::run_scenario(sim::PondParams{}, *sim::builtin_scenario("healthy"), sink, opts);
    CHECK_FALSE(summary.error);

    httplib::Client client("127.0.0.1", svc.api_port());
    json health;
    json latest;
    for (int i = 0; i < 200; ++i) {
        health = json::parse(client.Get("/api/health")->body);
        latest = json::parse(client.Get("/api/readings/latest")->body);
        if (health["gateway"]["records"] == 30 && latest["last_bucket"] == "2021-06-19T00:10:00Z") break;
        std::this_thread::sleep_for(20ms);
    }
    CHECK(health["gateway"]["frames"] == 30 * 11);
    // 30 one-minute samples: buckets 00:00 and 00:10 closed, 00:20 still open.
    CHECK(latest["last_bucket"] == "2021-06-19T00:10:00Z");
    CHECK(latest["metrics"]["temperature"]["status"] == "in_range");
    svc.stop();
}

TEST_CASE("service: replay file feeds the pipeline and reports completion") {
    TempDir dir;
    {
        std::ofstream out(dir / "pond.csv");
        sim::CsvSink sink(out);
        sim::RunOptions opts;
        opts.samples = 125;
        sim::run_scenario(sim::PondParams{}, *sim::builtin_scenario("healthy"), sink, opts);
    }
    RuntimeConfig c;
    c.gateway_listen.reset();
    c.api_listen = {"127.0.0.1", 0};
    c.data_dir = (dir / "data").string();
    c.replay_path = (dir / "pond.csv").string();
    Service svc(c);
    svc.start();
    for (int i = 0; i < 500 && !svc.replay_done(); ++i) std::this_thread::sleep_for(10ms);
    REQUIRE(svc.replay_done());
    // 125 minutes: 13 buckets, the last one flushed at the end of the file.
    CHECK(svc.pipeline().history(std::nullopt, std::nullopt).size() == 13);
    svc.stop();

    c.replay_path = (dir / "absent.csv").string();
    Service bad(c);
    bad.start();
    for (int i = 0; i < 500 && !bad.replay_done(); ++i) std::this_thread::sleep_for(10ms);
    std::size_t failures = 0;
    for (const auto& e : bad.pipeline().log().read_after(0)) {
        if (e.kind == EntryKind::system && e.payload.value("kind", "") == "replay_failed") ++failures;
    }
    CHECK(failures == 1);
    bad.stop();
}

TEST_CASE("service: busy port is a startup error") {
    TempDir dir;
    httplib::Server blocker;
    const int port = blocker.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    RuntimeConfig c;
    c.gateway_listen.reset();
    c.api_listen = {"127.0.0.1", static_cast<std::uint16_t>(port)};
    c.data_dir = dir.str();
    Service svc(c);
    try {
        svc.start();
        FAIL("expected startup error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::startup);
    }
}
