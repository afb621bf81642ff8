#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include <json.hpp>

#include "aquamon/dataset.hpp"
#include "aquamon/error.hpp"
#include "aquamon/forecast/experiment.hpp"
#include "aquamon/forecast/model_io.hpp"
#include "aquamon/service/service.hpp"
#include "aquamon/sim/frame_sink.hpp"
#include "aquamon/sim/pond.hpp"

using namespace aquamon;
using nlohmann::json;

namespace {

// Usage and configuration problems exit 2, everything else at runtime exits 1.
int exit_code_for(Errc code) {
    switch (code) {
        case Errc::io:
        case Errc::divergence:
        case Errc::encode:
        case Errc::conflict:
        case Errc::safety_rejection: return 1;
        default: return 2;
    }
}

struct Output {
    std::string format = "plain";
    bool document() const { return format == "document"; }
};

void add_format(CLI::App* cmd, Output& out) {
    cmd->add_option("--format", out.format, "Output format")
        ->check(CLI::IsMember({"plain", "document"}))
        ->capture_default_str();
}

MetricKind metric_arg(const std::string& name, const char* flag) {
    const auto m = metric_from_name(name);
    if (!m) throw Error(Errc::invalid_input, std::string(flag) + ": unknown metric '" + name + "'");
    return *m;
}

// --- ingest ---------------------------------------------------------------

struct IngestArgs {
    std::string data;
    std::string metric;
    long step = 600;
    std::size_t max_gap = 0;
    std::string out;
    Output fmt;
};

int run_ingest(const IngestArgs& a) {
    const auto ds = load_dataset_file(a.data);
    json per_metric = json::object();
    for (auto m : kAllMetrics) {
        std::size_t n = 0;
        for (const auto& r : ds.records) n += r.values.contains(m) ? 1 : 0;
        per_metric[std::string(metric_name(m))] = n;
    }
    json doc{{"source", ds.source_name},
             {"rows", ds.records.size()},
             {"rejected_rows", ds.rejected_rows.size()},
             {"first", format_iso8601(ds.records.front().timestamp)},
             {"last", format_iso8601(ds.records.back().timestamp)},
             {"values", per_metric},
             {"warnings", ds.warnings}};
    json rejected = json::array();
    for (const auto& r : ds.rejected_rows) rejected.push_back({{"line", r.line}, {"reason", r.reason}});
    doc["rejected"] = rejected;

    if (!a.metric.empty()) {
        const auto m = metric_arg(a.metric, "--metric");
        ResampleOptions ro;
        ro.step = Seconds{a.step};
        auto series = resample(ds, m, ro);
        if (a.max_gap > 0) series = fill_gaps(series, a.max_gap);
        doc["series"] = {{"metric", metric_name(m)},
                         {"step_s", a.step},
                         {"buckets", series.size()},
                         {"missing", series.missing_count()}};
        if (!a.out.empty()) {
            std::ofstream out(a.out);
            if (!out) throw Error(Errc::io, "cannot write " + a.out);
            write_series_csv(out, series);
            if (!out) throw Error(Errc::io, "write failed: " + a.out);
        }
    }

    if (a.fmt.document()) {
        std::cout << doc.dump(2) << "\n";
        return 0;
    }
    std::cout << "source:   " << ds.source_name << "\n"
              << "rows:     " << ds.records.size() << " (" << ds.rejected_rows.size() << " rejected)\n"
              << "span:     " << doc["first"].get<std::string>() << " .. " << doc["last"].get<std::string>() << "\n";
    for (const auto& r : ds.rejected_rows) std::cout << "  line " << r.line << ": " << r.reason << "\n";
    for (const auto& w : ds.warnings) std::cout << "warning:  " << w << "\n";
    std::cout << "values per metric:\n";
    for (const auto& [k, v] : per_metric.items()) std::cout << "  " << k << ": " << v.get<std::size_t>() << "\n";
    if (doc.contains("series")) {
        const auto& s = doc["series"];
        std::cout << "series:   " << s["metric"].get<std::string>() << " at " << a.step << " s, "
                  << s["buckets"].get<std::size_t>() << " buckets, " << s["missing"].get<std::size_t>() << " missing\n";
    }
    return 0;
}

// --- train / eval / gradcheck ---------------------------------------------

struct TrainArgs {
    std::string data;
    std::string metric = "temperature";
    std::vector<std::string> inputs;
    std::size_t history = 3;
    std::size_t horizon = 6;
    long step = 600;
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::size_t batch = 32;
    std::uint64_t seed = 1;
    double train_fraction = 0.8;
    std::size_t max_gap = 2;
    bool serial = false;
    std::string out;
    Output fmt;
};

std::string file_crc(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", forecast::crc32_of(bytes));
    return buf;
}

int run_train(const TrainArgs& a) {
    forecast::ExperimentOptions opts;
    opts.spec.target_metric = metric_arg(a.metric, "--metric");
    opts.spec.input_metrics.clear();
    opts.spec.input_metrics.push_back(opts.spec.target_metric);
    for (const auto& name : a.inputs) {
        const auto m = metric_arg(name, "--inputs");
        if (m != opts.spec.target_metric) opts.spec.input_metrics.push_back(m);
    }
    opts.spec.history_steps = a.history;
    opts.spec.horizon_steps = a.horizon;
    opts.spec.step = Seconds{a.step};
    opts.hyper.epochs = a.epochs;
    opts.hyper.lr = a.lr;
    opts.hyper.batch_size = a.batch;
    opts.hyper.seed = a.seed;
    opts.hyper.policy = a.serial ? forecast::kernels::Policy::serial : forecast::kernels::Policy::parallel;
    opts.train_fraction = a.train_fraction;
    opts.max_gap = a.max_gap;

    const auto ds = load_dataset_file(a.data);
    const auto r = forecast::run_experiment(ds, opts);
    forecast::save_model_file(r.training.model, a.out);
    const auto crc = file_crc(a.out);

    if (a.fmt.document()) {
        json doc{{"model", a.out},
                 {"file_crc32", crc},
                 {"version", r.training.model.version()},
                 {"train_windows", r.train_windows},
                 {"initial_loss", r.training.initial_loss},
                 {"final_loss", r.training.final_loss()},
                 {"epoch_loss", r.training.epoch_loss},
                 {"converged", r.converged()},
                 {"holdout", r.holdout.to_json()},
                 {"warnings", r.warnings}};
        std::cout << doc.dump(2) << "\n";
    } else {
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << "trained " << metric_name(opts.spec.target_metric) << " on " << r.train_windows
                  << " windows, loss " << r.training.initial_loss << " -> " << r.training.final_loss() << "\n"
                  << "holdout (" << r.holdout.windows << " windows):\n"
                  << r.holdout.table() << "wrote " << a.out << " (crc32 " << crc << ", version "
                  << r.training.model.version() << ")\n";
    }
    if (!r.converged()) {
        std::cerr << "error: training did not converge\n";
        return 1;
    }
    return 0;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::size_t max_gap = 2;
    Output fmt;
};

int run_eval(const EvalArgs& a) {
    const auto model = forecast::load_model_file(a.model);
    const auto ds = load_dataset_file(a.data);
    const auto series = forecast::prepare_series(ds, model.spec(), a.max_gap);
    const auto report = forecast::evaluate_on(model, series);
    if (a.fmt.document()) {
        auto doc = report.to_json();
        doc["model"] = a.model;
        doc["version"] = model.version();
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << metric_name(model.spec().target_metric) << " model " << model.version() << " on " << a.data
                  << " (" << report.windows << " windows):\n"
                  << report.table();
    }
    return 0;
}

struct GradcheckArgs {
    std::uint64_t seed = 7;
    std::size_t samples = 64;
    double epsilon = 1e-5;
    Output fmt;
};

int run_gradcheck(const GradcheckArgs& a) {
    forecast::GradientCheckOptions opts;
    opts.seed = a.seed;
    opts.sample_size = a.samples;
    opts.epsilon = a.epsilon;
    const auto r = forecast::seeded_gradient_check(a.seed, opts);
    const bool ok = r.discrepancy < 1e-4;
    if (a.fmt.document()) {
        std::cout << json{{"max_relative_discrepancy", r.discrepancy},
                          {"sampled", r.sampled},
                          {"parameters", r.parameters},
                          {"pass", ok}}
                         .dump(2)
                  << "\n";
    } else {
        std::cout << "max relative discrepancy " << r.discrepancy << " over " << r.sampled << " of " << r.parameters
                  << " parameters: " << (ok ? "ok" : "FAILED") << "\n";
    }
    return ok ? 0 : 1;
}

// --- simulate / replay ----------------------------------------------------

volatile std::sig_atomic_t g_interrupted = 0;

extern "C" void on_interrupt(int) { g_interrupted = 1; }

struct SinkArgs {
    std::string sink = "csv";
    std::string out = "-";
    std::string to = "127.0.0.1:7400";
    double speedup = 0.0;
    std::optional<std::uint64_t> samples;
    Output fmt;
};

void add_sink_options(CLI::App* cmd, SinkArgs& a) {
    cmd->add_option("--sink", a.sink, "csv or frames")->check(CLI::IsMember({"csv", "frames"}))->capture_default_str();
    cmd->add_option("--out", a.out, "CSV destination, - for stdout")->capture_default_str();
    cmd->add_option("--to", a.to, "Gateway address for frames")->capture_default_str();
    cmd->add_option("--speedup", a.speedup, "Pace at this multiple of real time; 0 runs unpaced")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--samples", a.samples, "Stop after this many samples");
    add_format(cmd, a.fmt);
}

template <class Run>
int with_sink(const SinkArgs& a, Run run) {
    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    sim::RunOptions opts;
    opts.speedup = a.speedup;
    opts.samples = a.samples;
    opts.should_stop = [] { return g_interrupted != 0; };

    sim::RunSummary summary;
    if (a.sink == "frames") {
        sim::FrameSink sink(gateway::parse_endpoint(a.to));
        summary = run(sink, opts);
    } else if (a.out == "-") {
        sim::CsvSink sink(std::cout);
        summary = run(sink, opts);
    } else {
        std::ofstream file(a.out, std::ios::binary);
        if (!file) throw Error(Errc::io, "cannot write " + a.out);
        sim::CsvSink sink(file);
        summary = run(sink, opts);
    }
    // The summary goes to stderr when the CSV itself is on stdout.
    std::ostream& info = (a.sink == "csv" && a.out == "-") ? std::cerr : std::cout;
    if (a.fmt.document()) {
        info << summary.to_json().dump(2) << "\n";
    } else {
        info << "samples " << summary.samples << ", outliers " << summary.outliers << ", events "
             << summary.events_applied << (summary.error ? ", failed: " + *summary.error : std::string()) << "\n";
    }
    return summary.error ? 1 : 0;
}

struct SimulateArgs {
    std::uint64_t seed = 42;
    std::string scenario = "healthy";
    std::optional<double> outlier_probability;
    SinkArgs sink;
};

int run_simulate(const SimulateArgs& a) {
    sim::ScenarioScript script;
    if (auto b = sim::builtin_scenario(a.scenario)) {
        script = *b;
    } else {
        std::ifstream in(a.scenario);
        if (!in) {
            std::string names;
            for (const auto& n : sim::builtin_scenario_names()) names += (names.empty() ? "" : ", ") + n;
            throw Error(Errc::config, "--scenario: '" + a.scenario + "' is neither a file nor one of " + names);
        }
        const std::string text((std::istreambuf_iterator<char>(in)), {});
        script = sim::load_scenario(text);
    }
    sim::PondParams params;
    params.seed = a.seed;
    if (a.outlier_probability) params.outlier_probability = *a.outlier_probability;
    params.validate();
    return with_sink(a.sink, [&](sim::SampleSink& sink, const sim::RunOptions& opts) {
        return sim::run_scenario(params, script, sink, opts);
    });
}

struct ReplayArgs {
    std::string data;
    SinkArgs sink;
};

int run_replay(const ReplayArgs& a) {
    const auto ds = load_dataset_file(a.data);
    return with_sink(a.sink, [&](sim::SampleSink& sink, const sim::RunOptions& opts) {
        return sim::replay_records(ds.records, sink, opts);
    });
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
    std::string config;
    std::string data_dir;
    std::string replay;
    std::optional<double> speedup;
    bool wall_clock = false;
};

int run_serve(const ServeArgs& a) {
    auto config = a.config.empty() ? service::RuntimeConfig{} : service::load_runtime_config_file(a.config);
    service::apply_env_overrides(config);
    if (!a.data_dir.empty()) config.data_dir = a.data_dir;
    if (!a.replay.empty()) config.replay_path = a.replay;
    if (a.speedup) config.replay_speedup = *a.speedup;
    config.validate();

    // Handle the signals on this thread only; workers inherit the mask.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    service::ServiceOptions opts;
    opts.wall_clock_close = a.wall_clock;
    service::Service svc(config, opts);
    svc.start();
    std::cout << "api listening on " << config.api_listen.host << ":" << svc.api_port() << "\n";
    if (const auto g = svc.gateway_port()) std::cout << "gateway listening on " << config.gateway_listen->host << ":" << *g << "\n";
    std::cout << "data in " << config.data_dir << std::endl;

    int sig = 0;
    sigwait(&set, &sig);
    std::cout << "shutting down (" << (sig == SIGINT ? "SIGINT" : "SIGTERM") << ")" << std::endl;
    svc.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aquamon: aquaculture water monitoring, forecasting and control"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "aquamon 0.1.0");

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Load a dataset CSV and report what it contains");
    c_ingest->add_option("--data", ingest.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    c_ingest->add_option("--metric", ingest.metric, "Also resample this metric");
    c_ingest->add_option("--step", ingest.step, "Resample step in seconds")->check(CLI::PositiveNumber)->capture_default_str();
    c_ingest->add_option("--max-gap", ingest.max_gap, "Interpolate interior gaps up to this many buckets")->capture_default_str();
    c_ingest->add_option("--out", ingest.out, "Write the resampled series here (needs --metric)");
    add_format(c_ingest, ingest.fmt);

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a forecaster and compare it with the baselines on a holdout");
    c_train->add_option("--data", train.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    c_train->add_option("--metric", train.metric, "Target metric")->capture_default_str();
    c_train->add_option("--inputs", train.inputs, "Extra input metrics")->delimiter(',');
    c_train->add_option("--history", train.history, "History steps (H)")->check(CLI::PositiveNumber)->capture_default_str();
    c_train->add_option("--horizon", train.horizon, "Horizon steps (h)")->check(CLI::PositiveNumber)->capture_default_str();
    c_train->add_option("--step", train.step, "Resample step in seconds")->check(CLI::PositiveNumber)->capture_default_str();
    c_train->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
    c_train->add_option("--lr", train.lr, "Learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
    c_train->add_option("--batch", train.batch, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
    c_train->add_option("--seed", train.seed, "Initialization and shuffling seed")->capture_default_str();
    c_train->add_option("--train-fraction", train.train_fraction, "Chronological training share")->capture_default_str();
    c_train->add_option("--max-gap", train.max_gap, "Interpolate interior gaps up to this many buckets")->capture_default_str();
    c_train->add_flag("--serial", train.serial, "Use the single-threaded kernels");
    c_train->add_option("--out", train.out, "Weight file to write")->required();
    add_format(c_train, train.fmt);

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Score a weight file and the baselines on a dataset");
    c_eval->add_option("--model", eval.model, "Weight file")->required()->check(CLI::ExistingFile);
    c_eval->add_option("--data", eval.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    c_eval->add_option("--max-gap", eval.max_gap, "Interpolate interior gaps up to this many buckets")->capture_default_str();
    add_format(c_eval, eval.fmt);

    GradcheckArgs grad;
    auto* c_grad = app.add_subcommand("gradcheck", "Compare backprop with finite differences; exit 0 below 1e-4");
    c_grad->add_option("--seed", grad.seed, "Model and window seed")->capture_default_str();
    c_grad->add_option("--samples", grad.samples, "Parameters to sample")->check(CLI::PositiveNumber)->capture_default_str();
    c_grad->add_option("--epsilon", grad.epsilon, "Finite-difference step")->capture_default_str();
    add_format(c_grad, grad.fmt);

    SimulateArgs simulate;
    auto* c_sim = app.add_subcommand("simulate", "Run the pond simulator into a CSV file or a gateway");
    c_sim->add_option("--seed", simulate.seed, "Simulator seed")->capture_default_str();
    c_sim->add_option("--scenario", simulate.scenario, "Built-in scenario name or scenario JSON file")->capture_default_str();
    c_sim->add_option("--outlier-probability", simulate.outlier_probability, "Per-sample outlier probability");
    add_sink_options(c_sim, simulate.sink);

    ReplayArgs replay;
    auto* c_replay = app.add_subcommand("replay", "Send a dataset CSV to a gateway or rewrite it");
    c_replay->add_option("--data", replay.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    replay.sink.sink = "frames";
    add_sink_options(c_replay, replay.sink);

    ServeArgs serve;
    auto* c_serve = app.add_subcommand("serve", "Run gateway, pipeline and API until SIGINT or SIGTERM");
    c_serve->add_option("--config", serve.config, "Runtime config JSON")->check(CLI::ExistingFile);
    c_serve->add_option("--data-dir", serve.data_dir, "Event log directory");
    c_serve->add_option("--replay", serve.replay, "Feed this dataset CSV into the pipeline")->check(CLI::ExistingFile);
    c_serve->add_option("--speedup", serve.speedup, "Replay pacing")->check(CLI::NonNegativeNumber);
    c_serve->add_flag("--wall-clock", serve.wall_clock, "Also close buckets on the wall clock");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*c_ingest) return run_ingest(ingest);
        if (*c_train) return run_train(train);
        if (*c_eval) return run_eval(eval);
        if (*c_grad) return run_gradcheck(grad);
        if (*c_sim) return run_simulate(simulate);
        if (*c_replay) return run_replay(replay);
        if (*c_serve) return run_serve(serve);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
