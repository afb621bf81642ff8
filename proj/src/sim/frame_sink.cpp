#include "aquamon/sim/frame_sink.hpp"

#include <limits>

namespace aquamon::sim {

std::vector<gateway::SensorFrame> sample_frames(const SimSample& s, std::uint16_t node_id) {
    std::vector<gateway::SensorFrame> out;
    out.reserve(kMetricCount);
    for (const auto m : kAllMetrics) {
        gateway::SensorFrame f;
        f.node_id = node_id;
        f.metric_id = metric_id(m);
        f.timestamp = static_cast<std::uint64_t>(to_epoch(s.timestamp));
        if (const auto v = s.values.get(m)) {
            f.value = *v;
        } else {
            f.flags = gateway::kFlagSelfTestFailed;
            f.value = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(f);
    }
    return out;
}

FrameSink::FrameSink(const gateway::Endpoint& to, std::uint16_t node_id) : sender_(to), node_id_(node_id) {}

void FrameSink::emit(const SimSample& s) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(kMetricCount * gateway::kFrameSize);
    for (const auto& f : sample_frames(s, node_id_)) {
        const auto b = gateway::encode_frame(f);
        bytes.insert(bytes.end(), b.begin(), b.end());
    }
    sender_.send_bytes(bytes);
    frames_ += kMetricCount;
}

void FrameSink::finish() { sender_.close(); }

}  // namespace aquamon::sim
