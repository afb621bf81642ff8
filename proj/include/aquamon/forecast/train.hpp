#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "aquamon/forecast/kernels.hpp"
#include "aquamon/forecast/model.hpp"

namespace aquamon::forecast {

struct TrainHyper {
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    kernels::Policy policy = kernels::Policy::parallel;
};

struct TrainResult {
    CnnModel model;
    double initial_loss = 0.0;        // full-set MSE (normalized units) before the first step
    std::vector<double> epoch_loss;   // full-set MSE after each epoch
    double final_loss() const { return epoch_loss.empty() ? initial_loss : epoch_loss.back(); }
};

// Mini-batch Adam on MSE. The normalizer is fitted on `windows`, so pass the
// training split only. Identical inputs give bit-identical weights regardless
// of policy. Throws Errc::divergence naming the epoch on a non-finite loss.
TrainResult train(const std::vector<Window>& windows, const WindowSpec& spec, const TrainHyper& hyper,
                  const ArchSpec& arch = {});

// Analytic gradient of the per-window MSE with respect to every parameter,
// evaluated on an already-normalized window.
using GradientFn = std::function<void(const CnnModel&, const Window&, std::span<double>)>;

void analytic_gradient(const CnnModel& model, const Window& normalized_window, std::span<double> grad);

// Loss of one normalized window.
double window_loss(const CnnModel& model, const Window& normalized_window);

struct GradientCheckOptions {
    double epsilon = 1e-5;
    std::size_t sample_size = 64;
    std::uint64_t seed = 7;
    GradientFn gradient = analytic_gradient;
};

// Max over sampled parameters of |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|) with
// central differences. The window is normalized with the model's normalizer.
double gradient_check(const CnnModel& model, const Window& window, const GradientCheckOptions& opts = {});

}  // namespace aquamon::forecast
