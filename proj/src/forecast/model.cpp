#include "aquamon/forecast/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>

#include <zlib.h>

#include "aquamon/error.hpp"
#include "aquamon/forecast/kernels.hpp"
#include "aquamon/rng.hpp"

namespace aquamon::forecast {

void ArchSpec::validate() const {
    if (kernel_size == 0 || kernel_size % 2 == 0) {
        throw Error(Errc::parameter, "kernel size must be odd and positive");
    }
    for (auto c : conv_channels) {
        if (c == 0) throw Error(Errc::parameter, "conv layers need at least one channel");
    }
}

Normalizer Normalizer::identity(std::size_t channels) {
    return Normalizer{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

Normalizer Normalizer::fit(const std::vector<Window>& windows, std::size_t channels) {
    Normalizer n = identity(channels);
    if (windows.empty()) return n;
    std::vector<double> sum(channels, 0.0);
    std::size_t count = 0;
    for (const auto& w : windows) {
        for (std::size_t k = 0; k < w.input.size(); ++k) sum[k % channels] += w.input[k];
        count += w.input.size() / channels;
    }
    for (std::size_t c = 0; c < channels; ++c) n.mean[c] = sum[c] / static_cast<double>(count);
    std::vector<double> ss(channels, 0.0);
    for (const auto& w : windows) {
        for (std::size_t k = 0; k < w.input.size(); ++k) {
            const double d = w.input[k] - n.mean[k % channels];
            ss[k % channels] += d * d;
        }
    }
    for (std::size_t c = 0; c < channels; ++c) {
        const double sd = std::sqrt(ss[c] / static_cast<double>(count));
        n.stddev[c] = sd < kMinStddev ? 1.0 : sd;
    }
    return n;
}

void Normalizer::normalize_input(std::span<double> input) const {
    const std::size_t channels = mean.size();
    for (std::size_t k = 0; k < input.size(); ++k) input[k] = normalize(k % channels, input[k]);
}

std::vector<LayerShape> layer_layout(const WindowSpec& spec, const ArchSpec& arch) {
    spec.validate();
    arch.validate();
    std::vector<LayerShape> layers;
    std::size_t offset = 0;
    std::size_t in = spec.channels();
    for (auto out : arch.conv_channels) {
        LayerShape L{LayerType::conv1d, out, in, arch.kernel_size, offset, 0};
        offset += L.weight_count();
        L.bias_offset = offset;
        offset += out;
        layers.push_back(L);
        in = out;
    }
    LayerShape D{LayerType::dense, spec.horizon_steps, in * spec.history_steps, 1, offset, 0};
    offset += D.weight_count();
    D.bias_offset = offset;
    layers.push_back(D);
    return layers;
}

CnnModel::CnnModel(WindowSpec spec, ArchSpec arch)
    : normalizer(Normalizer::identity(spec.channels())),
      spec_(std::move(spec)),
      arch_(std::move(arch)),
      layers_(layer_layout(spec_, arch_)) {
    const auto& last = layers_.back();
    params_.assign(last.bias_offset + last.out, 0.0);
}

std::span<double> CnnModel::weights(std::size_t layer) {
    const auto& L = layers_.at(layer);
    return std::span<double>(params_).subspan(L.weight_offset, L.weight_count());
}

std::span<double> CnnModel::biases(std::size_t layer) {
    const auto& L = layers_.at(layer);
    return std::span<double>(params_).subspan(L.bias_offset, L.out);
}

std::span<const double> CnnModel::weights(std::size_t layer) const {
    const auto& L = layers_.at(layer);
    return std::span<const double>(params_).subspan(L.weight_offset, L.weight_count());
}

std::span<const double> CnnModel::biases(std::size_t layer) const {
    const auto& L = layers_.at(layer);
    return std::span<const double>(params_).subspan(L.bias_offset, L.out);
}

std::string CnnModel::fingerprint() const {
    uLong crc = crc32(0L, Z_NULL, 0);
    for (double p : params_) {
        const auto bits = std::bit_cast<std::uint64_t>(p);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        crc = crc32(crc, b, 8);
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

std::string CnnModel::version() const { return "aqmd" + std::to_string(kFormatVersion) + "-" + fingerprint(); }

void init_parameters(CnnModel& model, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& L = model.layers()[l];
        const double fan_in = static_cast<double>(L.in * L.kernel);
        const double fan_out = static_cast<double>(L.out * L.kernel);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& w : model.weights(l)) w = rng.uniform(-bound, bound);
        for (auto& b : model.biases(l)) b = 0.0;
    }
}

std::vector<double> forward(const CnnModel& model, std::span<const double> normalized_input) {
    const auto net = kernels::NetView::of(model);
    if (normalized_input.size() != net.input_size()) {
        throw Error(Errc::shape, "forward: expected " + std::to_string(net.input_size()) + " inputs (H=" +
                                     std::to_string(net.history) + " x C=" + std::to_string(net.channels) +
                                     "), got " + std::to_string(normalized_input.size()));
    }
    for (double v : normalized_input) {
        if (!std::isfinite(v)) throw Error(Errc::shape, "forward: input contains a non-finite value");
    }
    kernels::Scratch s;
    s.reserve(net);
    std::vector<double> out(net.horizon);
    kernels::forward_sample(net, normalized_input.data(), out.data(), s);
    return out;
}

std::vector<double> predict(const CnnModel& model, std::span<const double> raw_input) {
    std::vector<double> x(raw_input.begin(), raw_input.end());
    if (x.size() == model.spec().history_steps * model.spec().channels()) model.normalizer.normalize_input(x);
    auto z = forward(model, x);
    const auto tc = model.spec().target_channel();
    for (auto& v : z) v = model.normalizer.denormalize(tc, v);
    return z;
}

}  // namespace aquamon::forecast
