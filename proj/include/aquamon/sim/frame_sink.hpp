#pragma once

#include <cstdint>

#include "aquamon/gateway/server.hpp"
#include "aquamon/sim/pond.hpp"

namespace aquamon::sim {

// Writes one frame per metric for every sample. Faulted metrics go out as NaN
// with the self-test flag set.
class FrameSink : public SampleSink {
public:
    FrameSink(const gateway::Endpoint& to, std::uint16_t node_id = 1);

    void emit(const SimSample& s) override;
    void finish() override;

    std::uint64_t frames_sent() const { return frames_; }

private:
    gateway::FrameSender sender_;
    std::uint16_t node_id_;
    std::uint64_t frames_ = 0;
};

// Frames for one sample, in metric id order.
std::vector<gateway::SensorFrame> sample_frames(const SimSample& s, std::uint16_t node_id);

}  // namespace aquamon::sim
