#include "aquamon/service/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "aquamon/error.hpp"
#include "aquamon/json_util.hpp"

namespace aquamon::service {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw Error(Errc::config, path + ": " + what); }

void only_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [k, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) fail(path + "." + k, "unknown field");
    }
}

const nlohmann::json* field(const nlohmann::json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::int64_t integer(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<std::int64_t>();
}

std::size_t positive(const nlohmann::json& v, const std::string& path) {
    const auto n = integer(v, path);
    if (n <= 0) fail(path, "must be > 0");
    return static_cast<std::size_t>(n);
}

std::string text(const nlohmann::json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

gateway::Endpoint endpoint(const nlohmann::json& v, const std::string& path) {
    try {
        return gateway::parse_endpoint(text(v, path));
    } catch (const Error& e) {
        if (e.code() != Errc::config || std::string_view(e.what()).starts_with(path)) throw;
        fail(path, e.what());
    }
}

MetricKind metric(const nlohmann::json& v, const std::string& path) {
    const auto name = text(v, path);
    const auto m = metric_from_name(name);
    if (!m) fail(path, "unknown metric '" + name + "'");
    return *m;
}

ModelEntry model_entry(const nlohmann::json& v, const std::string& path) {
    only_keys(v, {"metric", "path", "history_steps", "horizon_steps", "input_metrics"}, path);
    ModelEntry e;
    const auto* m = field(v, "metric");
    if (!m) fail(path + ".metric", "required");
    e.metric = metric(*m, path + ".metric");
    const auto* p = field(v, "path");
    if (!p) fail(path + ".path", "required");
    e.path = text(*p, path + ".path");
    if (const auto* h = field(v, "history_steps")) e.history_steps = positive(*h, path + ".history_steps");
    if (const auto* h = field(v, "horizon_steps")) e.horizon_steps = positive(*h, path + ".horizon_steps");
    if (const auto* in = field(v, "input_metrics")) {
        if (!in->is_array()) fail(path + ".input_metrics", "expected an array");
        std::vector<MetricKind> ms;
        for (std::size_t i = 0; i < in->size(); ++i) {
            ms.push_back(metric((*in)[i], path + ".input_metrics[" + std::to_string(i) + "]"));
        }
        e.input_metrics = std::move(ms);
    }
    return e;
}

}  // namespace

void RuntimeConfig::validate() const {
    if (resample_step.count() <= 0) fail("resample_step_s", "must be > 0");
    if (forecast_cadence.count() <= 0) fail("forecast.cadence_s", "must be > 0");
    if (forecast_cadence.count() % resample_step.count() != 0) {
        fail("forecast.cadence_s", "must be a multiple of resample_step_s");
    }
    if (frame_flush_timeout.count() <= 0) fail("gateway.flush_timeout_ms", "must be > 0");
    if (data_dir.empty()) fail("data_dir", "must not be empty");
    if (history_buckets == 0) fail("persistence.history_buckets", "must be > 0");
    if (snapshot_every == 0) fail("persistence.snapshot_every", "must be > 0");
    if (replay_speedup < 0.0) fail("replay.speedup", "must be >= 0");
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto path = "forecast.models[" + std::to_string(i) + "]";
        for (std::size_t j = 0; j < i; ++j) {
            if (models[j].metric == models[i].metric) fail(path + ".metric", "duplicate forecast target");
        }
        if (!is_water_metric(models[i].metric)) fail(path + ".metric", "not a water metric");
    }
    if (webhook_url && !webhook_url->starts_with("http://")) fail("webhook.url", "only http:// URLs are supported");
    try {
        monitor.validate();
    } catch (const Error& e) {
        fail("monitor", e.what());
    }
}

RuntimeConfig runtime_config_from_json(const nlohmann::json& doc) {
    only_keys(doc, {"gateway", "api", "data_dir", "resample_step_s", "forecast", "ranges", "monitor", "persistence",
                    "replay", "webhook"},
              "config");
    RuntimeConfig c;
    if (const auto* g = field(doc, "gateway")) {
        only_keys(*g, {"listen", "flush_timeout_ms"}, "gateway");
        if (const auto* l = field(*g, "listen")) {
            c.gateway_listen = l->is_null() ? std::nullopt : std::optional(endpoint(*l, "gateway.listen"));
        }
        if (const auto* t = field(*g, "flush_timeout_ms")) {
            c.frame_flush_timeout = std::chrono::milliseconds(positive(*t, "gateway.flush_timeout_ms"));
        }
    }
    if (const auto* a = field(doc, "api")) {
        only_keys(*a, {"listen"}, "api");
        if (const auto* l = field(*a, "listen")) c.api_listen = endpoint(*l, "api.listen");
    }
    if (const auto* d = field(doc, "data_dir")) c.data_dir = text(*d, "data_dir");
    if (const auto* s = field(doc, "resample_step_s")) c.resample_step = Seconds(positive(*s, "resample_step_s"));
    if (const auto* f = field(doc, "forecast")) {
        only_keys(*f, {"cadence_s", "models", "allow_missing_models"}, "forecast");
        if (const auto* s = field(*f, "cadence_s")) c.forecast_cadence = Seconds(positive(*s, "forecast.cadence_s"));
        if (const auto* a = field(*f, "allow_missing_models")) {
            if (!a->is_boolean()) fail("forecast.allow_missing_models", "expected true or false");
            c.allow_missing_models = a->get<bool>();
        }
        if (const auto* ms = field(*f, "models")) {
            if (!ms->is_array()) fail("forecast.models", "expected an array");
            for (std::size_t i = 0; i < ms->size(); ++i) {
                c.models.push_back(model_entry((*ms)[i], "forecast.models[" + std::to_string(i) + "]"));
            }
        }
    }
    if (const auto* r = field(doc, "ranges")) c.ranges = apply_range_overrides(default_ranges(), *r, "ranges");
    if (const auto* m = field(doc, "monitor")) c.monitor = monitor::monitor_config_from_json(*m, "monitor");
    if (const auto* p = field(doc, "persistence")) {
        only_keys(*p, {"history_buckets", "snapshot_every"}, "persistence");
        if (const auto* h = field(*p, "history_buckets")) c.history_buckets = positive(*h, "persistence.history_buckets");
        if (const auto* s = field(*p, "snapshot_every")) c.snapshot_every = positive(*s, "persistence.snapshot_every");
    }
    if (const auto* r = field(doc, "replay")) {
        only_keys(*r, {"path", "speedup"}, "replay");
        const auto* p = field(*r, "path");
        if (!p) fail("replay.path", "required");
        c.replay_path = text(*p, "replay.path");
        if (const auto* s = field(*r, "speedup")) {
            if (!s->is_number()) fail("replay.speedup", "expected a number");
            c.replay_speedup = s->get<double>();
        }
    }
    if (const auto* w = field(doc, "webhook")) {
        only_keys(*w, {"url"}, "webhook");
        if (const auto* u = field(*w, "url")) c.webhook_url = text(*u, "webhook.url");
    }
    c.validate();
    return c;
}

RuntimeConfig load_runtime_config(std::string_view text) {
    return runtime_config_from_json(parse_json_strict(text, "config"));
}

RuntimeConfig load_runtime_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::config, "config: cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_runtime_config(buf.str());
}

void apply_env_overrides(RuntimeConfig& config, const EnvLookup& env) {
    if (auto v = env("AQUAMON_GATEWAY_LISTEN")) {
        config.gateway_listen = v->empty() ? std::nullopt : std::optional(endpoint(*v, "AQUAMON_GATEWAY_LISTEN"));
    }
    if (auto v = env("AQUAMON_API_LISTEN")) config.api_listen = endpoint(*v, "AQUAMON_API_LISTEN");
    if (auto v = env("AQUAMON_DATA_DIR")) {
        if (v->empty()) fail("AQUAMON_DATA_DIR", "must not be empty");
        config.data_dir = *v;
    }
}

void apply_env_overrides(RuntimeConfig& config) {
    apply_env_overrides(config, [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (!v) return std::nullopt;
        return std::string(v);
    });
}

nlohmann::json to_json(const RuntimeConfig& c) {
    auto models = nlohmann::json::array();
    for (const auto& m : c.models) {
        nlohmann::json j{{"metric", metric_name(m.metric)}, {"path", m.path}};
        if (m.history_steps) j["history_steps"] = *m.history_steps;
        if (m.horizon_steps) j["horizon_steps"] = *m.horizon_steps;
        if (m.input_metrics) {
            auto in = nlohmann::json::array();
            for (auto im : *m.input_metrics) in.push_back(metric_name(im));
            j["input_metrics"] = in;
        }
        models.push_back(std::move(j));
    }
    // Same shape the parser accepts; a missing range is written as null.
    nlohmann::json ranges = nlohmann::json::object();
    for (std::size_t i = 0; i < kWaterMetricCount; ++i) {
        const auto m = kAllMetrics[i];
        const auto it = c.ranges.find(m);
        auto& slot = ranges[std::string(metric_name(m))];
        if (it == c.ranges.end()) {
            slot = nullptr;
            continue;
        }
        slot = nlohmann::json::object();
        if (it->second.lower) slot["lower"] = *it->second.lower;
        if (it->second.upper) slot["upper"] = *it->second.upper;
    }
    nlohmann::json j{
        {"gateway",
         {{"listen", c.gateway_listen ? nlohmann::json(gateway::to_string(*c.gateway_listen)) : nlohmann::json(nullptr)},
          {"flush_timeout_ms", c.frame_flush_timeout.count()}}},
        {"api", {{"listen", gateway::to_string(c.api_listen)}}},
        {"data_dir", c.data_dir},
        {"resample_step_s", c.resample_step.count()},
        {"forecast", {{"cadence_s", c.forecast_cadence.count()}, {"models", models}, {"allow_missing_models", c.allow_missing_models}}},
        {"ranges", ranges},
        {"monitor", monitor::to_json(c.monitor)},
        {"persistence", {{"history_buckets", c.history_buckets}, {"snapshot_every", c.snapshot_every}}},
    };
    if (c.replay_path) j["replay"] = {{"path", *c.replay_path}, {"speedup", c.replay_speedup}};
    if (c.webhook_url) j["webhook"] = {{"url", *c.webhook_url}};
    return j;
}

}  // namespace aquamon::service
