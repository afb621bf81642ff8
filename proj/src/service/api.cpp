#include "aquamon/service/api.hpp"

#include <charconv>

#include <httplib.h>

#include "aquamon/error.hpp"

namespace aquamon::service {

namespace {

using nlohmann::json;

// A request problem tied to one body or query field.
struct FieldError {
    int status;
    std::string code;
    std::string field;
    std::string message;
};

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                const std::string& field = {}) {
    json err{{"code", code}, {"message", message}};
    if (!field.empty()) err["field"] = field;
    send_json(res, status, {{"error", err}});
}

int status_for(Errc code) {
    switch (code) {
        case Errc::safety_rejection:
        case Errc::conflict: return 409;
        case Errc::not_found: return 404;
        case Errc::parse: return 400;
        case Errc::io: return 503;
        default: return 422;
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        auto doc = json::parse(req.body);
        if (!doc.is_object()) throw FieldError{422, "invalid_input", "", "body must be a JSON object"};
        return doc;
    } catch (const json::parse_error& e) {
        throw FieldError{400, "parse", "", std::string("malformed JSON body: ") + e.what()};
    }
}

std::string string_field(const json& body, const char* key, std::optional<std::string> fallback = std::nullopt) {
    const auto it = body.find(key);
    if (it == body.end() || it->is_null()) {
        if (fallback) return *fallback;
        throw FieldError{422, "invalid_input", key, std::string(key) + " is required"};
    }
    if (!it->is_string() || it->get<std::string>().empty()) {
        throw FieldError{422, "invalid_input", key, std::string(key) + " must be a non-empty string"};
    }
    return it->get<std::string>();
}

void only_fields(const json& body, std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, _] : body.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw FieldError{422, "invalid_input", k, "unknown field"};
        }
    }
}

std::optional<UtcSeconds> time_param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const auto v = req.get_param_value(key);
    std::int64_t epoch = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), epoch);
    if (ec == std::errc{} && ptr == v.data() + v.size()) return from_epoch(epoch);
    try {
        return parse_timestamp(v);
    } catch (const Error&) {
        throw FieldError{422, "invalid_input", key, "expected epoch seconds or an ISO-8601 UTC time"};
    }
}

std::uint64_t count_param(const httplib::Request& req, const char* key, std::uint64_t fallback) {
    if (!req.has_param(key)) return fallback;
    const auto v = req.get_param_value(key);
    std::uint64_t n = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
        throw FieldError{422, "invalid_input", key, "expected a non-negative integer"};
    }
    return n;
}

json transition_json(const monitor::Transition& t) {
    json events = json::array();
    for (const auto& e : t.events) events.push_back(monitor::to_json(e));
    return {{"events", events},
            {"estop_latched", t.state.estop_latched},
            {"actuators", monitor::actuators_to_json(t.state)}};
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const FieldError& e) {
            send_error(res, e.status, e.code, e.message, e.field);
        } catch (const Error& e) {
            send_error(res, status_for(e.code()), errc_name(e.code()), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

std::string sse_frame(const LogEntry& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(entry_kind_name(e.kind)) +
           "\ndata: " + to_json(e).dump() + "\n\n";
}

}  // namespace

ApiServer::ApiServer(Pipeline& pipeline, gateway::Endpoint listen)
    : pipeline_(pipeline), listen_(std::move(listen)), server_(std::make_unique<httplib::Server>()) {
    // httplib defaults to SO_REUSEPORT, which lets a second instance share the port.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::start() {
    const auto host = listen_.host.empty() ? std::string("0.0.0.0") : listen_.host;
    if (listen_.port == 0) {
        const int p = server_->bind_to_any_port(host);
        if (p <= 0) throw Error(Errc::startup, "cannot bind API to " + host);
        port_ = static_cast<std::uint16_t>(p);
    } else {
        if (!server_->bind_to_port(host, listen_.port)) {
            throw Error(Errc::startup, "cannot listen on " + gateway::to_string(listen_) + " for the API");
        }
        port_ = listen_.port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void ApiServer::stop() {
    if (stopping_.exchange(true)) return;
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

void ApiServer::routes() {
    auto& s = *server_;
    auto& p = pipeline_;

    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});
    s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/api/readings/latest", guarded([&p](const auto&, auto& res) { send_json(res, 200, p.latest_readings_json()); }));

    s.Get("/api/history", guarded([&p](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("metric")) throw FieldError{422, "invalid_input", "metric", "metric is required"};
        const auto m = metric_from_name(req.get_param_value("metric"));
        if (!m) throw FieldError{422, "invalid_input", "metric", "unknown metric"};
        const auto from = time_param(req, "from");
        const auto to = time_param(req, "to");
        if (from && to && *to < *from) throw FieldError{422, "invalid_input", "to", "to is before from"};
        send_json(res, 200, p.history_json(*m, from, to));
    }));

    s.Get("/api/forecasts/latest", guarded([&p](const auto&, auto& res) { send_json(res, 200, p.forecasts_json()); }));

    s.Get("/api/alerts", guarded([&p](const httplib::Request& req, httplib::Response& res) {
        std::optional<monitor::AlertState> filter;
        if (req.has_param("state")) {
            const auto v = req.get_param_value("state");
            bool known = v == "all";
            for (auto st : {monitor::AlertState::active, monitor::AlertState::acknowledged, monitor::AlertState::cleared}) {
                if (monitor::alert_state_name(st) == v) {
                    filter = st;
                    known = true;
                }
            }
            if (!known) throw FieldError{422, "invalid_input", "state", "expected active, acknowledged, cleared or all"};
        }
        send_json(res, 200, p.alerts_json(filter));
    }));

    s.Get("/api/actuators", guarded([&p](const auto&, auto& res) { send_json(res, 200, p.actuators_json()); }));
    s.Get("/api/health", guarded([&p](const auto&, auto& res) { send_json(res, 200, p.health_json()); }));
    s.Get("/api/ranges", guarded([&p](const auto&, auto& res) { send_json(res, 200, ranges_to_json(p.ranges())); }));
    s.Get("/api/state", guarded([&p](const auto&, auto& res) { send_json(res, 200, monitor::to_json(*p.state())); }));

    s.Post(R"(/api/alerts/(\d+)/ack)", guarded([&p](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        only_fields(body, {"actor"});
        const auto id = std::stoull(req.matches[1].str());
        send_json(res, 200, transition_json(p.acknowledge(id, string_field(body, "actor"))));
    }));

    auto actuator_of = [](const httplib::Request& req) {
        const auto id = monitor::actuator_from_name(req.matches[1].str());
        if (!id) throw Error(Errc::not_found, "unknown actuator '" + req.matches[1].str() + "'");
        return *id;
    };

    s.Post(R"(/api/actuators/([a-z_]+)/override)", guarded([&p, actuator_of](const httplib::Request& req, httplib::Response& res) {
        const auto id = actuator_of(req);
        const auto body = parse_body(req);
        only_fields(body, {"demand", "actor"});
        const auto d = string_field(body, "demand");
        if (d != "on" && d != "off") throw FieldError{422, "invalid_input", "demand", "expected \"on\" or \"off\""};
        const auto demand = d == "on" ? monitor::Demand::on : monitor::Demand::off;
        send_json(res, 200, transition_json(p.set_override(id, demand, string_field(body, "actor"))));
    }));

    auto release = guarded([&p, actuator_of](const httplib::Request& req, httplib::Response& res) {
        const auto id = actuator_of(req);
        const auto body = parse_body(req);
        only_fields(body, {"actor"});
        send_json(res, 200, transition_json(p.set_override(id, std::nullopt, string_field(body, "actor"))));
    });
    s.Post(R"(/api/actuators/([a-z_]+)/release)", release);
    s.Delete(R"(/api/actuators/([a-z_]+)/override)", release);

    s.Post("/api/estop", guarded([&p](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        only_fields(body, {"reason", "actor"});
        const auto reason = string_field(body, "reason", std::string("operator e-stop"));
        send_json(res, 200, transition_json(p.trigger_estop(reason, string_field(body, "actor"))));
    }));

    s.Post("/api/estop/reset", guarded([&p](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        only_fields(body, {"actor"});
        send_json(res, 200, transition_json(p.reset_estop(string_field(body, "actor"))));
    }));

    s.Get("/api/events", guarded([&p](const httplib::Request& req, httplib::Response& res) {
        const auto after = count_param(req, "after", 0);
        const auto limit = count_param(req, "limit", 1000);
        json out = json::array();
        for (const auto& e : p.log().read_after(after, limit)) out.push_back(to_json(e));
        send_json(res, 200, {{"last_seq", p.log().last_seq()}, {"events", out}});
    }));

    s.Get("/api/events/stream", guarded([this, &p](const httplib::Request& req, httplib::Response& res) {
        auto cursor = count_param(req, "after", 0);
        if (!req.has_param("after") && req.has_header("Last-Event-ID")) {
            const auto v = req.get_header_value("Last-Event-ID");
            std::from_chars(v.data(), v.data() + v.size(), cursor);
        }
        auto pos = std::make_shared<std::uint64_t>(cursor);
        auto idle = std::make_shared<int>(0);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, &p, pos, idle](std::size_t, httplib::DataSink& sink) {
            if (stopping_) return false;
            const auto batch = p.log().wait_after(*pos, std::chrono::milliseconds(250), 500);
            if (batch.empty()) {
                if (p.log().closed() || stopping_) return false;
                if (++*idle < 40) return true;
                *idle = 0;
                const std::string ping = ": keep-alive\n\n";
                return sink.write(ping.data(), ping.size());
            }
            *idle = 0;
            for (const auto& e : batch) {
                const auto frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) return false;
                *pos = e.seq;
            }
            return true;
        });
    }));
}

}  // namespace aquamon::service
