#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aquamon/forecast/model.hpp"

// Numerical kernels behind the CNN. The serial variants are the reference
// implementation; the parallel variants (OpenMP) must produce bit-identical
// results, which the tests and the benchmark check.
namespace aquamon::forecast::kernels {

struct NetView {
    std::span<const LayerShape> layers;
    std::span<const double> params;
    std::size_t history = 0;
    std::size_t channels = 0;
    std::size_t horizon = 0;

    static NetView of(const CnnModel& model);
    std::size_t input_size() const { return history * channels; }
};

// Per-sample activations and gradients; reuse across calls on one thread.
class Scratch {
public:
    void reserve(const NetView& net);

    std::vector<std::vector<double>> pre;   // conv pre-activations per layer [out][H]
    std::vector<std::vector<double>> act;   // act[0] = input channel-major, act[l+1] = relu(pre[l])
    std::vector<std::vector<double>> dact;  // gradient w.r.t. act[l]
    std::vector<double> output;
    std::vector<double> dout;
};

// One sample: input is H x C time-major, output receives h values.
void forward_sample(const NetView& net, const double* input, double* output, Scratch& scratch);

// Adds the gradient of mean_k (y_k - target_k)^2 for one sample into grad
// and returns that loss.
double accumulate_sample_gradient(const NetView& net, const double* input, const double* target,
                                  std::span<double> grad, Scratch& scratch);

enum class Policy { serial, parallel };

namespace serial {

// Mean loss over the selected samples; grad receives the mean gradient.
double batch_gradient(const NetView& net, std::span<const double> inputs, std::span<const double> targets,
                      std::span<const std::size_t> indices, std::span<double> grad);

void predict_batch(const NetView& net, std::span<const double> inputs, std::span<double> outputs);

// Mean squared error over all samples.
double dataset_loss(const NetView& net, std::span<const double> inputs, std::span<const double> targets);

}  // namespace serial

namespace parallel {

double batch_gradient(const NetView& net, std::span<const double> inputs, std::span<const double> targets,
                      std::span<const std::size_t> indices, std::span<double> grad);

void predict_batch(const NetView& net, std::span<const double> inputs, std::span<double> outputs);

double dataset_loss(const NetView& net, std::span<const double> inputs, std::span<const double> targets);

}  // namespace parallel

double batch_gradient(Policy policy, const NetView& net, std::span<const double> inputs,
                      std::span<const double> targets, std::span<const std::size_t> indices,
                      std::span<double> grad);
void predict_batch(Policy policy, const NetView& net, std::span<const double> inputs,
                   std::span<double> outputs);
double dataset_loss(Policy policy, const NetView& net, std::span<const double> inputs,
                    std::span<const double> targets);

}  // namespace aquamon::forecast::kernels
