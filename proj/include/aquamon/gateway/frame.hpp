#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aquamon/dataset.hpp"

namespace aquamon::gateway {

// Wire frame, 25 bytes, multi-byte fields big-endian:
//   0-1 magic AC 51 | 2 version | 3-4 node | 5 metric | 6 flags
//   7-14 timestamp (epoch s) | 15-22 value (binary64) | 23-24 CRC-16 over 2..22
inline constexpr std::size_t kFrameSize = 25;
inline constexpr std::uint8_t kMagic0 = 0xAC;
inline constexpr std::uint8_t kMagic1 = 0x51;
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::uint8_t kFlagSelfTestFailed = 0x01;

using FrameBytes = std::array<std::uint8_t, kFrameSize>;

struct SensorFrame {
    std::uint16_t node_id = 0;
    std::uint8_t metric_id = 0;
    std::uint8_t flags = 0;
    std::uint64_t timestamp = 0;
    double value = 0.0;

    bool self_test_failed() const { return (flags & kFlagSelfTestFailed) != 0; }
    friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bytes);

// Throws Errc::encode when the frame violates its invariants (metric id,
// reserved flag bits, non-finite value without the self-test flag).
FrameBytes encode_frame(const SensorFrame& frame);

enum class FrameError : std::uint8_t { not_a_frame, corrupted, version, semantic };
std::string_view frame_error_name(FrameError e);

struct FrameRejection {
    FrameError error;
    std::string detail;
};

using DecodeResult = std::variant<SensorFrame, FrameRejection>;

// Checks magic, then CRC, then version, then field semantics. Inputs that are
// not exactly 25 bytes are not_a_frame.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

struct ScannerStats {
    std::uint64_t frames = 0;           // accepted
    std::uint64_t resyncs = 0;          // runs of discarded bytes
    std::uint64_t discarded_bytes = 0;
    std::uint64_t crc_failures = 0;
    std::uint64_t rejected = 0;         // CRC-valid frames refused for version or semantics
};

// Incremental frame extractor over an arbitrarily chunked byte stream.
// After corruption it skips ahead to the next magic that starts a
// CRC-valid frame.
class FrameScanner {
public:
    std::vector<SensorFrame> feed(std::span<const std::uint8_t> chunk);
    const ScannerStats& stats() const { return stats_; }
    std::size_t buffered() const { return buf_.size() - pos_; }

private:
    void discard(std::size_t n);

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    bool in_sync_ = true;
    ScannerStats stats_;
};

struct GatewayRecord {
    std::uint16_t node_id = 0;
    SampleRecord record;
};

struct AssemblerStats {
    std::uint64_t records = 0;
    std::uint64_t self_test_dropped = 0;
    std::uint64_t duplicate_metrics = 0;
};

// Groups frames sharing (node_id, timestamp) into one record. A group is
// emitted when its node sends a newer timestamp, when it has been open longer
// than the flush timeout, or on close().
class RecordAssembler {
public:
    using Clock = std::chrono::steady_clock;
    using Emit = std::function<void(GatewayRecord)>;

    RecordAssembler(Emit emit, std::chrono::milliseconds flush_timeout = std::chrono::seconds(2));

    void add(const SensorFrame& frame, Clock::time_point now = Clock::now());
    void poll(Clock::time_point now = Clock::now());
    void close();

    const AssemblerStats& stats() const { return stats_; }
    std::size_t open_groups() const { return groups_.size(); }

private:
    struct Group {
        MetricValues values;
        Clock::time_point opened;
    };
    using Key = std::pair<std::uint16_t, std::uint64_t>;

    void flush(std::map<Key, Group>::iterator it);

    Emit emit_;
    std::chrono::milliseconds timeout_;
    std::map<Key, Group> groups_;
    AssemblerStats stats_;
};

}  // namespace aquamon::gateway
