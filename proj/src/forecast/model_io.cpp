#include "aquamon/forecast/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "aquamon/error.hpp"

namespace aquamon::forecast {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr std::uint8_t kMagic[4] = {'A', 'Q', 'M', 'D'};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t>& data() { return buf_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw Error(Errc::integrity, "model file truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const CnnModel& model) {
    const auto& spec = model.spec();
    Writer w;
    w.bytes(kMagic);
    w.u16(CnnModel::kFormatVersion);
    w.u32(static_cast<std::uint32_t>(spec.history_steps));
    w.u32(static_cast<std::uint32_t>(spec.horizon_steps));
    w.i64(spec.step.count());
    w.u8(static_cast<std::uint8_t>(spec.channels()));
    for (auto m : spec.input_metrics) w.u8(metric_id(m));
    w.u8(metric_id(spec.target_metric));
    for (std::size_t c = 0; c < spec.channels(); ++c) {
        w.f64(model.normalizer.mean[c]);
        w.f64(model.normalizer.stddev[c]);
    }
    w.u32(static_cast<std::uint32_t>(model.trained_on.size()));
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(model.trained_on.data()), model.trained_on.size()));
    w.u16(static_cast<std::uint16_t>(model.layers().size()));
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& L = model.layers()[l];
        w.u8(static_cast<std::uint8_t>(L.type));
        w.u32(static_cast<std::uint32_t>(L.out));
        w.u32(static_cast<std::uint32_t>(L.in));
        w.u32(static_cast<std::uint32_t>(L.kernel));
        for (double x : model.weights(l)) w.f64(x);
        for (double x : model.biases(l)) w.f64(x);
    }
    w.u32(crc32_of(w.data()));
    return std::move(w.data());
}

CnnModel deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 6 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
        throw Error(Errc::integrity, "not a model file (bad magic)");
    }
    const auto version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != CnnModel::kFormatVersion) {
        throw Error(Errc::version, "unsupported model format version " + std::to_string(version));
    }
    if (bytes.size() < 10) throw Error(Errc::integrity, "model file truncated");
    const auto body = bytes.first(bytes.size() - 4);
    Reader crc_reader(bytes.subspan(bytes.size() - 4));
    if (crc_reader.u32() != crc32_of(body)) throw Error(Errc::integrity, "model checksum mismatch");

    Reader r(body);
    r.take(6);
    WindowSpec spec;
    spec.history_steps = r.u32();
    spec.horizon_steps = r.u32();
    spec.step = Seconds{r.i64()};
    const std::size_t C = r.u8();
    spec.input_metrics.clear();
    for (std::size_t c = 0; c < C; ++c) {
        auto m = metric_from_id(r.u8());
        if (!m) throw Error(Errc::shape, "model file: unknown input metric id");
        spec.input_metrics.push_back(*m);
    }
    auto target = metric_from_id(r.u8());
    if (!target) throw Error(Errc::shape, "model file: unknown target metric id");
    spec.target_metric = *target;
    try {
        spec.validate();
    } catch (const Error& e) {
        throw Error(Errc::shape, std::string("model file: ") + e.what());
    }

    Normalizer norm = Normalizer::identity(C);
    for (std::size_t c = 0; c < C; ++c) {
        norm.mean[c] = r.f64();
        norm.stddev[c] = r.f64();
        if (!std::isfinite(norm.mean[c]) || !std::isfinite(norm.stddev[c]) || !(norm.stddev[c] > 0.0)) {
            throw Error(Errc::integrity, "model file: invalid normalizer");
        }
    }
    const auto prov_len = r.u32();
    const auto prov = r.take(prov_len);
    std::string trained_on(prov.begin(), prov.end());

    const std::size_t layer_count = r.u16();
    if (layer_count == 0) throw Error(Errc::shape, "model file: no layers");
    struct Header {
        LayerType type;
        std::size_t out, in, kernel;
        std::vector<double> weights, biases;
    };
    std::vector<Header> headers;
    std::size_t prev_out = C;
    for (std::size_t l = 0; l < layer_count; ++l) {
        Header h;
        h.type = static_cast<LayerType>(r.u8());
        h.out = r.u32();
        h.in = r.u32();
        h.kernel = r.u32();
        const bool last = l + 1 == layer_count;
        const auto where = "model file: layer " + std::to_string(l) + " ";
        if (last) {
            if (h.type != LayerType::dense || h.kernel != 1 || h.in != prev_out * spec.history_steps ||
                h.out != spec.horizon_steps) {
                throw Error(Errc::shape, where + "is not a dense head matching the window spec");
            }
        } else {
            if (h.type != LayerType::conv1d || h.in != prev_out || h.out == 0 || h.kernel % 2 == 0 ||
                (!headers.empty() && h.kernel != headers.front().kernel)) {
                throw Error(Errc::shape, where + "shape is inconsistent with the preceding layer");
            }
        }
        prev_out = h.out;
        const std::size_t count = h.out * h.in * h.kernel;
        if (count > r.remaining() / 8 || h.out > (r.remaining() / 8) - count) {
            throw Error(Errc::integrity, where + "payload truncated");
        }
        h.weights.resize(count);
        for (auto& x : h.weights) x = r.f64();
        h.biases.resize(h.out);
        for (auto& x : h.biases) x = r.f64();
        headers.push_back(std::move(h));
    }
    if (r.remaining() != 0) throw Error(Errc::integrity, "model file: trailing bytes before checksum");

    ArchSpec arch;
    arch.conv_channels.clear();
    arch.kernel_size = headers.size() > 1 ? headers.front().kernel : 3;
    for (std::size_t l = 0; l + 1 < headers.size(); ++l) arch.conv_channels.push_back(headers[l].out);

    CnnModel model(spec, arch);
    model.normalizer = std::move(norm);
    model.trained_on = std::move(trained_on);
    for (std::size_t l = 0; l < headers.size(); ++l) {
        std::copy(headers[l].weights.begin(), headers[l].weights.end(), model.weights(l).begin());
        std::copy(headers[l].biases.begin(), headers[l].biases.end(), model.biases(l).begin());
    }
    for (double p : model.params()) {
        if (!std::isfinite(p)) throw Error(Errc::integrity, "model file: non-finite weight");
    }
    return model;
}

void save_model(const CnnModel& model, std::ostream& sink) {
    const auto bytes = serialize_model(model);
    sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!sink) throw Error(Errc::io, "failed to write model");
}

CnnModel load_model(std::istream& source) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

void save_model_file(const CnnModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + path);
    save_model(model, out);
}

CnnModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path);
    return load_model(in);
}

}  // namespace aquamon::forecast
