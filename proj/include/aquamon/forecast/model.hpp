#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aquamon/forecast/window.hpp"

namespace aquamon::forecast {

// Convolution stack followed by one dense head. Every conv layer uses the same
// odd kernel, stride 1, zero "same" padding and ReLU.
struct ArchSpec {
    std::vector<std::size_t> conv_channels{16, 32};
    std::size_t kernel_size = 3;

    void validate() const;
    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

enum class LayerType : std::uint8_t { conv1d = 1, dense = 2 };

// Weights are [out][in][kernel] for conv and [out][in] for dense (kernel = 1).
// The dense input is the last activation flattened channel-major (ch * H + t).
struct LayerShape {
    LayerType type = LayerType::conv1d;
    std::size_t out = 0;
    std::size_t in = 0;
    std::size_t kernel = 1;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;

    std::size_t weight_count() const { return out * in * kernel; }
    friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Normalizer identity(std::size_t channels);
    // Per-channel statistics over every input entry of the given windows.
    static Normalizer fit(const std::vector<Window>& windows, std::size_t channels);

    void normalize_input(std::span<double> input) const;
    double normalize(std::size_t channel, double v) const { return (v - mean[channel]) / stddev[channel]; }
    double denormalize(std::size_t channel, double z) const { return z * stddev[channel] + mean[channel]; }

    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

inline constexpr double kMinStddev = 1e-12;

class CnnModel {
public:
    static constexpr std::uint16_t kFormatVersion = 1;

    CnnModel(WindowSpec spec, ArchSpec arch = {});

    const WindowSpec& spec() const { return spec_; }
    const ArchSpec& arch() const { return arch_; }
    const std::vector<LayerShape>& layers() const { return layers_; }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    std::span<double> weights(std::size_t layer);
    std::span<double> biases(std::size_t layer);
    std::span<const double> weights(std::size_t layer) const;
    std::span<const double> biases(std::size_t layer) const;

    // CRC-32 of the parameter bytes, hex; identifies a trained instance.
    std::string fingerprint() const;
    std::string version() const;

    Normalizer normalizer;
    std::string trained_on;

private:
    WindowSpec spec_;
    ArchSpec arch_;
    std::vector<LayerShape> layers_;
    std::vector<double> params_;
};

// Layer table implied by a window spec and architecture.
std::vector<LayerShape> layer_layout(const WindowSpec& spec, const ArchSpec& arch);

// Glorot-uniform weights from a seeded generator, zero biases.
void init_parameters(CnnModel& model, std::uint64_t seed);

// Runs the network on an already-normalized H x C input, returning h normalized
// outputs. Throws Errc::shape on wrong size or non-finite entries.
std::vector<double> forward(const CnnModel& model, std::span<const double> normalized_input);

// Normalizes a raw window input, runs forward() and maps back to natural units.
std::vector<double> predict(const CnnModel& model, std::span<const double> raw_input);

}  // namespace aquamon::forecast
