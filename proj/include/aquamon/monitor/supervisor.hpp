#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <thread>
#include <variant>

#include "aquamon/monitor/monitor.hpp"

namespace aquamon::monitor {

struct CycleCommand {
    Readings readings;
    std::vector<forecast::ForecastResult> forecasts;
    UtcSeconds now{};
};

struct EstopCommand {
    std::string reason;
    std::string actor;
    UtcSeconds now{};
};

struct ResetCommand {
    std::string actor;
    UtcSeconds now{};
};

struct AckCommand {
    std::uint64_t alert_id = 0;
    std::string actor;
    UtcSeconds now{};
};

// demand == nullopt releases the override.
struct OverrideCommand {
    ActuatorId id{};
    std::optional<Demand> demand;
    std::string actor;
    UtcSeconds now{};
};

using Command = std::variant<CycleCommand, EstopCommand, ResetCommand, AckCommand, OverrideCommand>;

// Applies one command to a state; the pure core of the supervisor.
Transition apply_command(const SystemState& state, const Command& cmd, const RangeTable& ranges,
                         const MonitorConfig& config);

// Single writer over SystemState. Commands run one at a time on a worker
// thread in submission order, except e-stop triggers, which jump ahead of
// every queued command. Readers take immutable snapshots.
class Supervisor {
public:
    // Called on the worker thread with every transition before its state is
    // published. A throwing sink rejects the command, except for an e-stop,
    // whose state is published regardless.
    using Sink = std::function<void(const Transition&)>;

    Supervisor(MonitorConfig config, RangeTable ranges, SystemState initial = {}, Sink sink = {});
    ~Supervisor();

    Supervisor(const Supervisor&) = delete;
    Supervisor& operator=(const Supervisor&) = delete;

    std::future<Transition> submit(Command cmd);
    // submit() and wait; rethrows command errors.
    Transition execute(Command cmd);

    std::shared_ptr<const SystemState> snapshot() const;
    const RangeTable& ranges() const { return ranges_; }
    const MonitorConfig& config() const { return config_; }

    // Finishes queued commands, then joins the worker. Later submits fail.
    void stop();

private:
    struct Pending {
        Command cmd;
        std::promise<Transition> done;
    };

    void run();

    const MonitorConfig config_;
    const RangeTable ranges_;
    Sink sink_;

    mutable std::mutex state_mu_;
    std::shared_ptr<const SystemState> state_;

    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<Pending> safety_;
    std::deque<Pending> normal_;
    bool stopping_ = false;
    std::thread worker_;
};

}  // namespace aquamon::monitor
