#include "aquamon/forecast/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aquamon/error.hpp"
#include "aquamon/rng.hpp"

namespace aquamon::forecast {

namespace {

struct Packed {
    std::vector<double> inputs;
    std::vector<double> targets;
    std::size_t n = 0;
};

Packed pack_normalized(const std::vector<Window>& windows, const CnnModel& model) {
    const auto& spec = model.spec();
    const std::size_t in_size = spec.history_steps * spec.channels();
    const std::size_t tc = spec.target_channel();
    Packed p;
    p.n = windows.size();
    p.inputs.reserve(p.n * in_size);
    p.targets.reserve(p.n * spec.horizon_steps);
    for (const auto& w : windows) {
        if (w.input.size() != in_size || w.target.size() != spec.horizon_steps) {
            throw Error(Errc::shape, "window shape does not match the window spec");
        }
        for (std::size_t k = 0; k < in_size; ++k) {
            p.inputs.push_back(model.normalizer.normalize(k % spec.channels(), w.input[k]));
        }
        for (double y : w.target) p.targets.push_back(model.normalizer.normalize(tc, y));
    }
    return p;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

}  // namespace

TrainResult train(const std::vector<Window>& windows, const WindowSpec& spec, const TrainHyper& hyper,
                  const ArchSpec& arch) {
    if (windows.empty()) throw Error(Errc::no_data, "train: no windows");
    if (!(hyper.lr >= 0.0) || !std::isfinite(hyper.lr)) throw Error(Errc::parameter, "train: lr must be >= 0");
    if (hyper.batch_size == 0) throw Error(Errc::parameter, "train: batch size must be positive");

    TrainResult result{CnnModel(spec, arch), 0.0, {}};
    auto& model = result.model;
    init_parameters(model, hyper.seed);
    model.normalizer = Normalizer::fit(windows, spec.channels());

    const auto data = pack_normalized(windows, model);
    const auto P = model.param_count();
    std::vector<double> grad(P), m(P, 0.0), v(P, 0.0);
    std::vector<std::size_t> order(data.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);

    auto net = kernels::NetView::of(model);
    result.initial_loss = kernels::dataset_loss(hyper.policy, net, data.inputs, data.targets);
    if (!std::isfinite(result.initial_loss)) throw Error(Errc::divergence, "non-finite loss before epoch 1");

    std::uint64_t t = 0;
    auto params = model.params();
    for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t b = 0; b < data.n; b += hyper.batch_size) {
            const std::size_t e = std::min(data.n, b + hyper.batch_size);
            std::span<const std::size_t> batch(order.data() + b, e - b);
            const double loss = kernels::batch_gradient(hyper.policy, net, data.inputs, data.targets, batch, grad);
            if (!std::isfinite(loss)) {
                throw Error(Errc::divergence, "non-finite training loss in epoch " + std::to_string(epoch));
            }
            ++t;
            const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
            for (std::size_t p = 0; p < P; ++p) {
                m[p] = hyper.beta1 * m[p] + (1.0 - hyper.beta1) * grad[p];
                v[p] = hyper.beta2 * v[p] + (1.0 - hyper.beta2) * grad[p] * grad[p];
                const double mhat = m[p] / c1;
                const double vhat = v[p] / c2;
                params[p] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.adam_eps);
            }
        }
        const double epoch_loss = kernels::dataset_loss(hyper.policy, net, data.inputs, data.targets);
        if (!std::isfinite(epoch_loss)) {
            throw Error(Errc::divergence, "non-finite training loss in epoch " + std::to_string(epoch));
        }
        result.epoch_loss.push_back(epoch_loss);
    }
    return result;
}

void analytic_gradient(const CnnModel& model, const Window& w, std::span<double> grad) {
    const auto net = kernels::NetView::of(model);
    kernels::Scratch s;
    s.reserve(net);
    std::fill(grad.begin(), grad.end(), 0.0);
    kernels::accumulate_sample_gradient(net, w.input.data(), w.target.data(), grad, s);
}

double window_loss(const CnnModel& model, const Window& w) {
    const auto out = forward(model, w.input);
    double l = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double e = out[j] - w.target[j];
        l += e * e;
    }
    return l / static_cast<double>(out.size());
}

double gradient_check(const CnnModel& model, const Window& window, const GradientCheckOptions& opts) {
    if (!(opts.epsilon >= 1e-7 && opts.epsilon <= 1e-3)) {
        throw Error(Errc::parameter, "gradient check epsilon must lie in [1e-7, 1e-3]");
    }
    const auto& spec = model.spec();
    Window w = window;
    if (w.input.size() != spec.history_steps * spec.channels() || w.target.size() != spec.horizon_steps) {
        throw Error(Errc::shape, "gradient check window does not match the model");
    }
    model.normalizer.normalize_input(w.input);
    for (auto& y : w.target) y = model.normalizer.normalize(spec.target_channel(), y);

    const std::size_t P = model.param_count();
    std::vector<double> ga(P);
    opts.gradient(model, w, ga);

    std::vector<std::size_t> idx(P);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(opts.seed);
    for (std::size_t i = P; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    idx.resize(std::min(P, std::max<std::size_t>(opts.sample_size, 50)));

    CnnModel probe = model;
    auto params = probe.params();
    double worst = 0.0;
    for (std::size_t p : idx) {
        const double orig = params[p];
        params[p] = orig + opts.epsilon;
        const double lp = window_loss(probe, w);
        params[p] = orig - opts.epsilon;
        const double lm = window_loss(probe, w);
        params[p] = orig;
        const double gfd = (lp - lm) / (2.0 * opts.epsilon);
        const double rel = std::abs(ga[p] - gfd) / std::max(1e-8, std::abs(ga[p]) + std::abs(gfd));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace aquamon::forecast
