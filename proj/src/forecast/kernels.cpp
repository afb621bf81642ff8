#include "aquamon/forecast/kernels.hpp"

#include <algorithm>

namespace aquamon::forecast::kernels {

NetView NetView::of(const CnnModel& model) {
    NetView v;
    v.layers = model.layers();
    v.params = model.params();
    v.history = model.spec().history_steps;
    v.channels = model.spec().channels();
    v.horizon = model.spec().horizon_steps;
    return v;
}

void Scratch::reserve(const NetView& net) {
    const std::size_t conv_layers = net.layers.size() - 1;
    pre.resize(conv_layers);
    act.resize(conv_layers + 1);
    dact.resize(conv_layers + 1);
    act[0].resize(net.channels * net.history);
    dact[0].resize(net.channels * net.history);
    for (std::size_t l = 0; l < conv_layers; ++l) {
        const std::size_t n = net.layers[l].out * net.history;
        pre[l].resize(n);
        act[l + 1].resize(n);
        dact[l + 1].resize(n);
    }
    output.resize(net.horizon);
    dout.resize(net.horizon);
}

void forward_sample(const NetView& net, const double* input, double* output, Scratch& s) {
    const std::size_t H = net.history;
    const std::size_t C = net.channels;
    const std::size_t conv_layers = net.layers.size() - 1;
    const double* p = net.params.data();

    for (std::size_t t = 0; t < H; ++t) {
        for (std::size_t c = 0; c < C; ++c) s.act[0][c * H + t] = input[t * C + c];
    }

    for (std::size_t l = 0; l < conv_layers; ++l) {
        const auto& L = net.layers[l];
        const double* w = p + L.weight_offset;
        const double* b = p + L.bias_offset;
        const auto pad = static_cast<std::ptrdiff_t>(L.kernel / 2);
        const double* in = s.act[l].data();
        double* z = s.pre[l].data();
        double* a = s.act[l + 1].data();
        for (std::size_t o = 0; o < L.out; ++o) {
            for (std::size_t t = 0; t < H; ++t) {
                double acc = b[o];
                for (std::size_t i = 0; i < L.in; ++i) {
                    const double* wk = w + (o * L.in + i) * L.kernel;
                    for (std::size_t k = 0; k < L.kernel; ++k) {
                        const auto tt = static_cast<std::ptrdiff_t>(t + k) - pad;
                        if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(H)) continue;
                        acc += wk[k] * in[i * H + static_cast<std::size_t>(tt)];
                    }
                }
                z[o * H + t] = acc;
                a[o * H + t] = acc > 0.0 ? acc : 0.0;
            }
        }
    }

    const auto& D = net.layers.back();
    const double* w = p + D.weight_offset;
    const double* b = p + D.bias_offset;
    const double* flat = s.act[conv_layers].data();
    for (std::size_t j = 0; j < D.out; ++j) {
        double acc = b[j];
        const double* row = w + j * D.in;
        for (std::size_t q = 0; q < D.in; ++q) acc += row[q] * flat[q];
        output[j] = acc;
    }
}

double accumulate_sample_gradient(const NetView& net, const double* input, const double* target,
                                  std::span<double> grad, Scratch& s) {
    forward_sample(net, input, s.output.data(), s);

    const std::size_t H = net.history;
    const std::size_t h = net.horizon;
    const std::size_t conv_layers = net.layers.size() - 1;
    const double* p = net.params.data();
    double* g = grad.data();

    double loss = 0.0;
    const double inv_h = 1.0 / static_cast<double>(h);
    for (std::size_t j = 0; j < h; ++j) {
        const double e = s.output[j] - target[j];
        loss += e * e;
        s.dout[j] = 2.0 * e * inv_h;
    }
    loss *= inv_h;

    const auto& D = net.layers.back();
    {
        const double* w = p + D.weight_offset;
        double* gw = g + D.weight_offset;
        double* gb = g + D.bias_offset;
        const double* flat = s.act[conv_layers].data();
        double* dflat = s.dact[conv_layers].data();
        std::fill(dflat, dflat + D.in, 0.0);
        for (std::size_t j = 0; j < D.out; ++j) {
            const double d = s.dout[j];
            gb[j] += d;
            const double* row = w + j * D.in;
            double* grow = gw + j * D.in;
            for (std::size_t q = 0; q < D.in; ++q) {
                grow[q] += d * flat[q];
                dflat[q] += d * row[q];
            }
        }
    }

    for (std::size_t l = conv_layers; l-- > 0;) {
        const auto& L = net.layers[l];
        const double* w = p + L.weight_offset;
        double* gw = g + L.weight_offset;
        double* gb = g + L.bias_offset;
        const auto pad = static_cast<std::ptrdiff_t>(L.kernel / 2);
        const double* in = s.act[l].data();
        const double* z = s.pre[l].data();
        const double* da = s.dact[l + 1].data();
        double* din = s.dact[l].data();
        const bool need_din = l > 0;
        if (need_din) std::fill(din, din + L.in * H, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
            for (std::size_t t = 0; t < H; ++t) {
                if (!(z[o * H + t] > 0.0)) continue;
                const double dz = da[o * H + t];
                gb[o] += dz;
                for (std::size_t i = 0; i < L.in; ++i) {
                    const std::size_t base = (o * L.in + i) * L.kernel;
                    for (std::size_t k = 0; k < L.kernel; ++k) {
                        const auto tt = static_cast<std::ptrdiff_t>(t + k) - pad;
                        if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(H)) continue;
                        const std::size_t idx = i * H + static_cast<std::size_t>(tt);
                        gw[base + k] += dz * in[idx];
                        if (need_din) din[idx] += dz * w[base + k];
                    }
                }
            }
        }
    }
    return loss;
}

namespace serial {

double batch_gradient(const NetView& net, std::span<const double> inputs, std::span<const double> targets,
                      std::span<const std::size_t> indices, std::span<double> grad) {
    const std::size_t P = grad.size();
    const std::size_t in_size = net.input_size();
    std::fill(grad.begin(), grad.end(), 0.0);
    if (indices.empty()) return 0.0;

    Scratch s;
    s.reserve(net);
    std::vector<double> sample(P);
    double loss = 0.0;
    for (std::size_t idx : indices) {
        std::fill(sample.begin(), sample.end(), 0.0);
        loss += accumulate_sample_gradient(net, inputs.data() + idx * in_size,
                                           targets.data() + idx * net.horizon, sample, s);
        for (std::size_t p = 0; p < P; ++p) grad[p] += sample[p];
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    for (std::size_t p = 0; p < P; ++p) grad[p] *= inv;
    return loss * inv;
}

void predict_batch(const NetView& net, std::span<const double> inputs, std::span<double> outputs) {
    const std::size_t in_size = net.input_size();
    const std::size_t n = inputs.size() / in_size;
    Scratch s;
    s.reserve(net);
    for (std::size_t i = 0; i < n; ++i) {
        forward_sample(net, inputs.data() + i * in_size, outputs.data() + i * net.horizon, s);
    }
}

double dataset_loss(const NetView& net, std::span<const double> inputs, std::span<const double> targets) {
    const std::size_t in_size = net.input_size();
    const std::size_t n = inputs.size() / in_size;
    if (n == 0) return 0.0;
    Scratch s;
    s.reserve(net);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        forward_sample(net, inputs.data() + i * in_size, s.output.data(), s);
        double l = 0.0;
        for (std::size_t j = 0; j < net.horizon; ++j) {
            const double e = s.output[j] - targets[i * net.horizon + j];
            l += e * e;
        }
        loss += l / static_cast<double>(net.horizon);
    }
    return loss / static_cast<double>(n);
}

}  // namespace serial

namespace parallel {

double batch_gradient(const NetView& net, std::span<const double> inputs, std::span<const double> targets,
                      std::span<const std::size_t> indices, std::span<double> grad) {
    const std::size_t P = grad.size();
    const std::size_t in_size = net.input_size();
    const auto n = static_cast<std::ptrdiff_t>(indices.size());
    std::fill(grad.begin(), grad.end(), 0.0);
    if (n == 0) return 0.0;

    // Per-sample gradients for a chunk, then an in-order reduction into grad so
    // the summation order matches the serial kernel exactly.
    constexpr std::ptrdiff_t kChunk = 256;
    const std::ptrdiff_t rows = std::min(n, kChunk);
    std::vector<double> slab(static_cast<std::size_t>(rows) * P);
    std::vector<double> losses(static_cast<std::size_t>(n));
    for (std::ptrdiff_t begin = 0; begin < n; begin += kChunk) {
        const std::ptrdiff_t count = std::min(kChunk, n - begin);
        std::fill(slab.begin(), slab.end(), 0.0);
#pragma omp parallel
        {
            Scratch s;
            s.reserve(net);
#pragma omp for schedule(static)
            for (std::ptrdiff_t i = 0; i < count; ++i) {
                const std::size_t idx = indices[static_cast<std::size_t>(begin + i)];
                std::span<double> row(slab.data() + static_cast<std::size_t>(i) * P, P);
                losses[static_cast<std::size_t>(begin + i)] = accumulate_sample_gradient(
                    net, inputs.data() + idx * in_size, targets.data() + idx * net.horizon, row, s);
            }
        }
        constexpr std::size_t kBlock = 512;
        const auto blocks = static_cast<std::ptrdiff_t>((P + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t b = 0; b < blocks; ++b) {
            const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
            const std::size_t hi = std::min(P, lo + kBlock);
            for (std::ptrdiff_t i = 0; i < count; ++i) {
                const double* row = slab.data() + static_cast<std::size_t>(i) * P;
                for (std::size_t p = lo; p < hi; ++p) grad[p] += row[p];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t p = 0; p < P; ++p) grad[p] *= inv;
    double loss = 0.0;
    for (double l : losses) loss += l;
    return loss * inv;
}

void predict_batch(const NetView& net, std::span<const double> inputs, std::span<double> outputs) {
    const std::size_t in_size = net.input_size();
    const auto n = static_cast<std::ptrdiff_t>(inputs.size() / in_size);
#pragma omp parallel
    {
        Scratch s;
        s.reserve(net);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto u = static_cast<std::size_t>(i);
            forward_sample(net, inputs.data() + u * in_size, outputs.data() + u * net.horizon, s);
        }
    }
}

double dataset_loss(const NetView& net, std::span<const double> inputs, std::span<const double> targets) {
    const std::size_t in_size = net.input_size();
    const auto n = static_cast<std::ptrdiff_t>(inputs.size() / in_size);
    if (n == 0) return 0.0;
    std::vector<double> losses(static_cast<std::size_t>(n));
#pragma omp parallel
    {
        Scratch s;
        s.reserve(net);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto u = static_cast<std::size_t>(i);
            forward_sample(net, inputs.data() + u * in_size, s.output.data(), s);
            double l = 0.0;
            for (std::size_t j = 0; j < net.horizon; ++j) {
                const double e = s.output[j] - targets[u * net.horizon + j];
                l += e * e;
            }
            losses[u] = l / static_cast<double>(net.horizon);
        }
    }
    double loss = 0.0;
    for (double l : losses) loss += l;
    return loss / static_cast<double>(n);
}

}  // namespace parallel

double batch_gradient(Policy policy, const NetView& net, std::span<const double> inputs,
                      std::span<const double> targets, std::span<const std::size_t> indices,
                      std::span<double> grad) {
    return policy == Policy::serial ? serial::batch_gradient(net, inputs, targets, indices, grad)
                                    : parallel::batch_gradient(net, inputs, targets, indices, grad);
}

void predict_batch(Policy policy, const NetView& net, std::span<const double> inputs,
                   std::span<double> outputs) {
    if (policy == Policy::serial) {
        serial::predict_batch(net, inputs, outputs);
    } else {
        parallel::predict_batch(net, inputs, outputs);
    }
}

double dataset_loss(Policy policy, const NetView& net, std::span<const double> inputs,
                    std::span<const double> targets) {
    return policy == Policy::serial ? serial::dataset_loss(net, inputs, targets)
                                    : parallel::dataset_loss(net, inputs, targets);
}

}  // namespace aquamon::forecast::kernels
