#include "aquamon/monitor/supervisor.hpp"

#include "aquamon/error.hpp"

namespace aquamon::monitor {

namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

}  // namespace

Transition apply_command(const SystemState& state, const Command& cmd, const RangeTable& ranges,
                         const MonitorConfig& config) {
    return std::visit(
        overloaded{
            [&](const CycleCommand& c) {
                return evaluate_cycle(state, c.readings, c.forecasts, ranges, config, c.now);
            },
            [&](const EstopCommand& c) { return trigger_estop(state, c.reason, c.actor, c.now); },
            [&](const ResetCommand& c) { return reset_estop(state, c.actor, c.now); },
            [&](const AckCommand& c) { return acknowledge_alert(state, c.alert_id, c.actor, c.now); },
            [&](const OverrideCommand& c) {
                return c.demand ? actuator_override(state, c.id, *c.demand, c.actor, c.now)
                                : release_override(state, c.id, c.actor, c.now);
            },
        },
        cmd);
}

Supervisor::Supervisor(MonitorConfig config, RangeTable ranges, SystemState initial, Sink sink)
    : config_(std::move(config)),
      ranges_(std::move(ranges)),
      sink_(std::move(sink)),
      state_(std::make_shared<const SystemState>(std::move(initial))) {
    config_.validate();
    worker_ = std::thread([this] { run(); });
}

Supervisor::~Supervisor() { stop(); }

std::future<Transition> Supervisor::submit(Command cmd) {
    Pending p{std::move(cmd), {}};
    auto fut = p.done.get_future();
    {
        std::lock_guard lock(queue_mu_);
        if (stopping_) throw Error(Errc::conflict, "supervisor is stopped");
        if (std::holds_alternative<EstopCommand>(p.cmd)) {
            safety_.push_back(std::move(p));
        } else {
            normal_.push_back(std::move(p));
        }
    }
    queue_cv_.notify_one();
    return fut;
}

Transition Supervisor::execute(Command cmd) { return submit(std::move(cmd)).get(); }

std::shared_ptr<const SystemState> Supervisor::snapshot() const {
    std::lock_guard lock(state_mu_);
    return state_;
}

void Supervisor::stop() {
    {
        std::lock_guard lock(queue_mu_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void Supervisor::run() {
    for (;;) {
        Pending p;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, [this] { return stopping_ || !safety_.empty() || !normal_.empty(); });
            auto& q = !safety_.empty() ? safety_ : normal_;
            if (q.empty()) return;
            p = std::move(q.front());
            q.pop_front();
        }
        const bool safety = std::holds_alternative<EstopCommand>(p.cmd);
        try {
            auto t = apply_command(*snapshot(), p.cmd, ranges_, config_);
            auto publish = [&] {
                std::lock_guard lock(state_mu_);
                state_ = std::make_shared<const SystemState>(t.state);
            };
            if (safety) {
                publish();
                if (sink_) sink_(t);
            } else {
                if (sink_) sink_(t);
                publish();
            }
            p.done.set_value(std::move(t));
        } catch (...) {
            p.done.set_exception(std::current_exception());
        }
    }
}

}  // namespace aquamon::monitor
