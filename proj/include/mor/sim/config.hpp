#pragma once

#include <cstdint>
#include <string>

#include "mor/errors.hpp"

namespace mor::sim {

struct DramConfig {
    std::uint32_t port_width_bytes = 8; // per CU / binCU request port
    std::uint32_t burst_bytes = 64;
    std::uint32_t latency_cycles = 20;
    std::uint32_t bandwidth_bytes_per_cycle = 16;
    bool ideal = false; // transfers complete on issue

    friend bool operator==(const DramConfig&, const DramConfig&) = default;
};

struct AccelConfig {
    std::uint32_t num_cus = 8;
    std::uint32_t cu_width = 8; // int8 MACs per cycle per CU
    std::uint32_t num_bincus = 8;
    std::uint32_t bincu_width = 64; // 1-bit ops per cycle per binCU
    std::uint32_t input_sram_bytes = 16 * 1024;
    std::uint32_t binweight_sram_bytes = 2 * 1024;
    std::uint32_t cu_buffer_bytes = 1024;
    std::uint32_t member_fifo_entries = 256;
    double frequency_mhz = 1200.0;
    DramConfig dram;

    /// Same compute array, memory never stalls.
    static AccelConfig unconstrained_memory() {
        AccelConfig c;
        c.dram.ideal = true;
        c.dram.latency_cycles = 0;
        return c;
    }

    void validate() const {
        auto positive = [](std::uint64_t v, const char* name) {
            if (v < 1)
                throw ConfigError(std::string("accelerator config: ") + name + " must be >= 1");
        };
        positive(num_cus, "num_cus");
        positive(cu_width, "cu_width");
        positive(num_bincus, "num_bincus");
        positive(bincu_width, "bincu_width");
        positive(input_sram_bytes, "input_sram_bytes");
        positive(binweight_sram_bytes, "binweight_sram_bytes");
        positive(cu_buffer_bytes, "cu_buffer_bytes");
        positive(member_fifo_entries, "member_fifo_entries");
        positive(dram.port_width_bytes, "dram.port_width_bytes");
        positive(dram.burst_bytes, "dram.burst_bytes");
        positive(dram.bandwidth_bytes_per_cycle, "dram.bandwidth_bytes_per_cycle");
        if (!(frequency_mhz > 0.0))
            throw ConfigError("accelerator config: frequency_mhz must be > 0");
    }

    friend bool operator==(const AccelConfig&, const AccelConfig&) = default;
};

/// Energy per event in relative units.
struct CostModel {
    double mac = 1.0;
    double binary_op = 0.05;
    double input_sram_byte = 0.1;
    double binweight_sram_byte = 0.1;
    double cu_buffer_byte = 0.1;
    double dram_byte = 20.0;
    double static_per_cycle = 1.0;

    void validate() const {
        for (double v : {mac, binary_op, input_sram_byte, binweight_sram_byte, cu_buffer_byte, dram_byte,
                         static_per_cycle})
            if (!(v >= 0.0))
                throw ConfigError("cost model: every unit cost must be >= 0");
    }

    friend bool operator==(const CostModel&, const CostModel&) = default;
};

} // namespace mor::sim
