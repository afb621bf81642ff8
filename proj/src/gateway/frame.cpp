#include "aquamon/gateway/frame.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "aquamon/error.hpp"

namespace aquamon::gateway {

namespace {

void put_be(std::uint8_t* out, std::uint64_t v, int n) {
    for (int i = n - 1; i >= 0; --i) {
        out[i] = static_cast<std::uint8_t>(v);
        v >>= 8;
    }
}

std::uint64_t get_be(const std::uint8_t* in, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | in[i];
    return v;
}

}  // namespace

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bytes) {
    std::uint16_t crc = 0xFFFF;
    for (std::uint8_t b : bytes) {
        crc ^= static_cast<std::uint16_t>(b << 8);
        for (int i = 0; i < 8; ++i) {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
        }
    }
    return crc;
}

std::string_view frame_error_name(FrameError e) {
    switch (e) {
        case FrameError::not_a_frame: return "not_a_frame";
        case FrameError::corrupted: return "corrupted";
        case FrameError::version: return "version";
        case FrameError::semantic: return "semantic";
    }
    return "?";
}

FrameBytes encode_frame(const SensorFrame& f) {
    if (f.metric_id >= kMetricCount) {
        throw Error(Errc::encode, "frame metric id " + std::to_string(f.metric_id) + " out of range");
    }
    if ((f.flags & ~kFlagSelfTestFailed) != 0) throw Error(Errc::encode, "frame uses reserved flag bits");
    if (!std::isfinite(f.value) && !f.self_test_failed()) {
        throw Error(Errc::encode, "non-finite frame value without the self-test flag");
    }
    FrameBytes b{};
    b[0] = kMagic0;
    b[1] = kMagic1;
    b[2] = kFrameVersion;
    put_be(&b[3], f.node_id, 2);
    b[5] = f.metric_id;
    b[6] = f.flags;
    put_be(&b[7], f.timestamp, 8);
    put_be(&b[15], std::bit_cast<std::uint64_t>(f.value), 8);
    put_be(&b[23], crc16_ccitt_false(std::span(b).subspan(2, 21)), 2);
    return b;
}

DecodeResult decode_frame(std::span<const std::uint8_t> b) {
    if (b.size() != kFrameSize) {
        return FrameRejection{FrameError::not_a_frame, "expected 25 bytes, got " + std::to_string(b.size())};
    }
    if (b[0] != kMagic0 || b[1] != kMagic1) return FrameRejection{FrameError::not_a_frame, "bad magic"};
    if (crc16_ccitt_false(b.subspan(2, 21)) != get_be(&b[23], 2)) {
        return FrameRejection{FrameError::corrupted, "CRC mismatch"};
    }
    if (b[2] != kFrameVersion) {
        return FrameRejection{FrameError::version, "unsupported frame version " + std::to_string(b[2])};
    }
    SensorFrame f;
    f.node_id = static_cast<std::uint16_t>(get_be(&b[3], 2));
    f.metric_id = b[5];
    f.flags = b[6];
    f.timestamp = get_be(&b[7], 8);
    f.value = std::bit_cast<double>(get_be(&b[15], 8));
    if (f.metric_id >= kMetricCount) {
        return FrameRejection{FrameError::semantic, "unknown metric id " + std::to_string(f.metric_id)};
    }
    if ((f.flags & ~kFlagSelfTestFailed) != 0) return FrameRejection{FrameError::semantic, "reserved flag bits set"};
    if (!std::isfinite(f.value) && !f.self_test_failed()) {
        return FrameRejection{FrameError::semantic, "non-finite value"};
    }
    return f;
}

void FrameScanner::discard(std::size_t n) {
    if (in_sync_) {
        ++stats_.resyncs;
        in_sync_ = false;
    }
    stats_.discarded_bytes += n;
    pos_ += n;
}

std::vector<SensorFrame> FrameScanner::feed(std::span<const std::uint8_t> chunk) {
    buf_.insert(buf_.end(), chunk.begin(), chunk.end());
    std::vector<SensorFrame> out;
    for (;;) {
        const std::size_t avail = buf_.size() - pos_;
        if (avail == 0) break;
        if (buf_[pos_] != kMagic0) {
            const auto next = std::find(buf_.begin() + static_cast<std::ptrdiff_t>(pos_), buf_.end(), kMagic0);
            discard(static_cast<std::size_t>(next - buf_.begin()) - pos_);
            continue;
        }
        if (avail < 2) break;
        if (buf_[pos_ + 1] != kMagic1) {
            discard(1);
            continue;
        }
        if (avail < kFrameSize) break;
        auto result = decode_frame(std::span(buf_).subspan(pos_, kFrameSize));
        if (auto* f = std::get_if<SensorFrame>(&result)) {
            out.push_back(*f);
            ++stats_.frames;
            in_sync_ = true;
            pos_ += kFrameSize;
        } else if (std::get<FrameRejection>(result).error == FrameError::corrupted) {
            ++stats_.crc_failures;
            discard(1);
        } else {
            ++stats_.rejected;
            in_sync_ = true;
            pos_ += kFrameSize;
        }
    }
    if (pos_ == buf_.size()) {
        buf_.clear();
        pos_ = 0;
    } else if (pos_ > 4096) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
        pos_ = 0;
    }
    return out;
}

RecordAssembler::RecordAssembler(Emit emit, std::chrono::milliseconds flush_timeout)
    : emit_(std::move(emit)), timeout_(flush_timeout) {}

void RecordAssembler::flush(std::map<Key, Group>::iterator it) {
    GatewayRecord r;
    r.node_id = it->first.first;
    r.record.timestamp = from_epoch(static_cast<std::int64_t>(it->first.second));
    r.record.values = it->second.values;
    groups_.erase(it);
    ++stats_.records;
    emit_(std::move(r));
}

void RecordAssembler::add(const SensorFrame& f, Clock::time_point now) {
    if (f.self_test_failed()) {
        ++stats_.self_test_dropped;
        return;
    }
    for (auto it = groups_.lower_bound({f.node_id, 0}); it != groups_.end() && it->first.first == f.node_id &&
                                                         it->first.second < f.timestamp;) {
        auto victim = it++;
        flush(victim);
    }
    auto [it, fresh] = groups_.try_emplace({f.node_id, f.timestamp});
    if (fresh) it->second.opened = now;
    const auto metric = *metric_from_id(f.metric_id);
    if (it->second.values.contains(metric)) ++stats_.duplicate_metrics;
    it->second.values.set(metric, f.value);
}

void RecordAssembler::poll(Clock::time_point now) {
    for (auto it = groups_.begin(); it != groups_.end();) {
        auto cur = it++;
        if (now - cur->second.opened >= timeout_) flush(cur);
    }
}

void RecordAssembler::close() {
    while (!groups_.empty()) flush(groups_.begin());
}

}  // namespace aquamon::gateway
