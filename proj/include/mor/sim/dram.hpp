#pragma once

#include <algorithm>
#include <cstdint>

#include "mor/sim/config.hpp"

namespace mor::sim {

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

/// Single shared channel: requests are serialized through a bandwidth pipe
/// in whole bursts, then pay a fixed latency. Issue times must not decrease.
class DramPipe {
public:
    explicit DramPipe(const DramConfig& cfg) : cfg_(cfg) {}

    /// Returns the cycle at which the last byte is available to the requester.
    std::uint64_t request(std::uint64_t issue, std::uint64_t bytes) {
        if (bytes == 0 || cfg_.ideal)
            return issue;
        const std::uint64_t bw = cfg_.bandwidth_bytes_per_cycle;
        const std::uint64_t burst = ceil_div(bytes, cfg_.burst_bytes) * cfg_.burst_bytes;
        // Pipe position kept in byte slots so sub-cycle transfers pack densely.
        const std::uint64_t start = std::max(issue * bw, free_slot_);
        free_slot_ = start + burst;
        const std::uint64_t drained = ceil_div(free_slot_, bw);
        const std::uint64_t port = issue + ceil_div(bytes, cfg_.port_width_bytes);
        return std::max(drained, port) + cfg_.latency_cycles;
    }

private:
    DramConfig cfg_;
    std::uint64_t free_slot_ = 0;
};

} // namespace mor::sim
