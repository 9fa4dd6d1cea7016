#pragma once

#include <span>
#include <vector>

#include "mor/hybrid.hpp"
#include "mor/sim/scheduler.hpp"

namespace mor::sim {

/// Energy by component, relative units.
struct EnergyBreakdown {
    double mac = 0;
    double binary = 0;
    double input_sram = 0;
    double binweight_sram = 0;
    double cu_buffer = 0;
    double dram = 0;
    double static_energy = 0;
    // Portion of the above spent on the prediction hardware: binCU ops,
    // binWeight SRAM and bitmap DRAM traffic. Not added again to the total.
    double predictor_overhead = 0;

    double dynamic() const { return mac + binary + input_sram + binweight_sram + cu_buffer + dram; }
    double total() const { return dynamic() + static_energy; }
};

inline EnergyBreakdown energy_report(const LayerStats& s, const CostModel& cost) {
    cost.validate();
    EnergyBreakdown e;
    e.mac = static_cast<double>(s.macs_executed) * cost.mac;
    e.binary = static_cast<double>(s.binary_ops) * cost.binary_op;
    e.input_sram = static_cast<double>(s.input_sram_bytes) * cost.input_sram_byte;
    e.binweight_sram = static_cast<double>(s.binweight_sram_bytes) * cost.binweight_sram_byte;
    e.cu_buffer = static_cast<double>(s.cu_buffer_bytes) * cost.cu_buffer_byte;
    e.dram = static_cast<double>(s.dram_read_bytes() + s.dram_write_bytes) * cost.dram_byte;
    e.static_energy = static_cast<double>(s.cycles) * cost.static_per_cycle;
    e.predictor_overhead =
        e.binary + e.binweight_sram + static_cast<double>(s.dram_bitmap_bytes) * cost.dram_byte;
    return e;
}

struct RunStats {
    std::uint64_t inputs = 0;
    std::vector<LayerStats> layers; // summed over inputs
    LayerStats total;
    std::vector<EnergyBreakdown> layer_energy;
    EnergyBreakdown energy;

    double seconds(const AccelConfig& cfg) const { return static_cast<double>(total.cycles) / (cfg.frequency_mhz * 1e6); }
};

struct SimOptions {
    bool predictor = true;
    double threshold = default_threshold;
    PredictorMode mode = PredictorMode::hybrid;
};

/// Simulates precomputed hybrid runs. With `predictor` false the decisions
/// are ignored and every neuron is evaluated in storage order.
inline RunStats simulate_runs(const QuantModel& model, const ClusterPlan& plan, std::span<const HybridResult> runs,
                              const AccelConfig& cfg, const CostModel& cost, bool predictor,
                              bool binary_skips = true) {
    cfg.validate();
    cost.validate();
    if (plan.layers.size() != model.layers.size())
        throw ConfigError("cluster plan does not match the model");
    RunStats rs;
    rs.layers.resize(model.layers.size());
    for (const auto& run : runs) {
        if (predictor && run.layers.size() != model.layers.size())
            throw StructuralError("simulate: prediction record does not match the model");
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            std::span<const Decision> d;
            if (predictor)
                d = run.layers[l].decisions;
            rs.layers[l] += schedule_layer(model.layers[l], plan.layers[l], d, cfg, nullptr, binary_skips);
        }
        rs.inputs++;
    }
    for (const auto& l : rs.layers) {
        rs.total += l;
        rs.layer_energy.push_back(energy_report(l, cost));
    }
    rs.energy = energy_report(rs.total, cost);
    return rs;
}

inline RunStats simulate(const HybridEngine& engine, std::span<const QuantTensor> inputs, const AccelConfig& cfg,
                         const CostModel& cost, const SimOptions& opt = {}) {
    HybridConfig hc;
    hc.threshold = opt.threshold;
    hc.predictor = opt.predictor;
    hc.mode = opt.mode;
    std::vector<HybridResult> runs;
    runs.reserve(inputs.size());
    for (const auto& x : inputs) {
        runs.push_back(engine.run(x, hc));
        runs.back().activations.layers.clear();
    }
    return simulate_runs(engine.model(), engine.plan(), runs, cfg, cost, opt.predictor,
                         opt.mode != PredictorMode::cluster_only);
}

} // namespace mor::sim
