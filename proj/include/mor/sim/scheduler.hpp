#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mor/clustering.hpp"
#include "mor/hybrid.hpp"
#include "mor/model.hpp"
#include "mor/sim/config.hpp"
#include "mor/sim/dram.hpp"

namespace mor::sim {

/// Event counters for one layer (or a sum of layers).
struct LayerStats {
    std::uint64_t cycles = 0;
    std::uint64_t macs_executed = 0;
    std::uint64_t macs_skipped = 0;
    std::uint64_t binary_ops = 0;
    std::uint64_t binary_evals = 0;
    std::uint64_t neurons_evaluated = 0; // output elements
    std::uint64_t neurons_skipped = 0;   // output elements
    std::uint64_t dram_weight_bytes = 0;
    std::uint64_t dram_bitmap_bytes = 0;
    std::uint64_t dram_input_bytes = 0;
    std::uint64_t dram_write_bytes = 0;
    std::uint64_t input_sram_bytes = 0;
    std::uint64_t binweight_sram_bytes = 0;
    std::uint64_t cu_buffer_bytes = 0;
    std::uint64_t cu_busy_cycles = 0;
    std::uint64_t bincu_busy_cycles = 0;
    std::uint64_t weight_fetches = 0;
    std::uint64_t blocks = 0;
    std::uint64_t fifo_stalls = 0;

    std::uint64_t dram_read_bytes() const { return dram_weight_bytes + dram_bitmap_bytes + dram_input_bytes; }

    LayerStats& operator+=(const LayerStats& o) {
        cycles += o.cycles;
        macs_executed += o.macs_executed;
        macs_skipped += o.macs_skipped;
        binary_ops += o.binary_ops;
        binary_evals += o.binary_evals;
        neurons_evaluated += o.neurons_evaluated;
        neurons_skipped += o.neurons_skipped;
        dram_weight_bytes += o.dram_weight_bytes;
        dram_bitmap_bytes += o.dram_bitmap_bytes;
        dram_input_bytes += o.dram_input_bytes;
        dram_write_bytes += o.dram_write_bytes;
        input_sram_bytes += o.input_sram_bytes;
        binweight_sram_bytes += o.binweight_sram_bytes;
        cu_buffer_bytes += o.cu_buffer_bytes;
        cu_busy_cycles += o.cu_busy_cycles;
        bincu_busy_cycles += o.bincu_busy_cycles;
        weight_fetches += o.weight_fetches;
        blocks += o.blocks;
        fifo_stalls += o.fifo_stalls;
        return *this;
    }

    friend bool operator==(const LayerStats&, const LayerStats&) = default;
};

enum class TraceKind : std::uint8_t { input_load, bitmap_load, mac, binary, zero_write };

struct TraceEvent {
    TraceKind kind;
    std::uint32_t unit; // CU or binCU index; 0 for memory events
    std::uint32_t neuron;
    std::uint32_t block;
    std::uint64_t start;
    std::uint64_t end;

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Consecutive output positions of one output row whose input footprint is
/// loaded into the input SRAM at once.
struct RowBlock {
    std::uint32_t first = 0;
    std::uint32_t count = 0;
    std::uint64_t input_bytes = 0;

    friend bool operator==(const RowBlock&, const RowBlock&) = default;
};

namespace detail {

inline std::uint64_t clipped(std::int64_t lo, std::int64_t hi, std::int64_t limit) {
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min(hi, limit);
    return hi > lo ? static_cast<std::uint64_t>(hi - lo) : 0;
}

inline std::uint64_t conv_footprint(const ConvGeometry& g, std::uint32_t row, std::uint32_t x0, std::uint32_t x1) {
    const std::int64_t s = g.stride, p = g.padding, k = g.kernel;
    const std::uint64_t rows = clipped(row * s - p, row * s - p + k, g.in_height);
    const std::uint64_t cols = clipped(x0 * s - p, x1 * s - p + k, g.in_width);
    return std::uint64_t{g.in_channels} * rows * cols;
}

} // namespace detail

/// Splits the output into row blocks: a whole output row when its input rows
/// fit, otherwise the longest runs of positions that do.
inline std::vector<RowBlock> row_blocks(const LayerDesc& layer, std::uint64_t sram_bytes) {
    std::vector<RowBlock> blocks;
    if (layer.kind == LayerKind::fc) {
        if (layer.fan_in > sram_bytes)
            throw ConfigError("input vector of " + std::to_string(layer.fan_in) + " bytes exceeds the input SRAM");
        blocks.push_back({0, 1, layer.fan_in});
        return blocks;
    }
    const auto& g = layer.conv;
    if (g.fan_in() > sram_bytes)
        throw ConfigError("convolution window of " + std::to_string(g.fan_in()) + " bytes exceeds the input SRAM");
    const std::uint32_t H = g.out_height(), W = g.out_width();
    for (std::uint32_t r = 0; r < H; ++r) {
        std::uint32_t x = 0;
        while (x < W) {
            std::uint32_t end = x + 1;
            while (end < W && detail::conv_footprint(g, r, x, end) <= sram_bytes)
                ++end;
            blocks.push_back({r * W + x, end - x, detail::conv_footprint(g, r, x, end - 1)});
            x = end;
        }
    }
    return blocks;
}

/// Runs one layer through the accelerator model. `decisions` holds the
/// hybrid decision for each output element; empty means predictor off.
/// When `binary_skips` is false skipped members were decided by the proxy
/// alone and occupy no binCU time.
inline LayerStats schedule_layer(const LayerDesc& layer, const LayerClusters& lc, std::span<const Decision> decisions,
                                 const AccelConfig& cfg, std::vector<TraceEvent>* trace = nullptr,
                                 bool binary_skips = true) {
    cfg.validate();
    LayerStats st;
    const std::uint32_t N = layer.out_features;
    if (N == 0 || layer.output_size() == 0)
        return st;
    const bool predictor = !decisions.empty();
    if (predictor && decisions.size() != layer.output_size())
        throw StructuralError("schedule_layer: decision count does not match the layer output");
    if (lc.neuron_count != N)
        throw StructuralError("schedule_layer: cluster plan does not match the layer");
    const NeuronRoles roles = check_partition(lc);

    const std::uint64_t K = layer.fan_in;
    if (K > cfg.cu_buffer_bytes)
        throw ConfigError("weight row of " + std::to_string(K) + " bytes exceeds the CU buffer");
    const std::uint64_t mac_cycles = ceil_div(K, cfg.cu_width);
    const std::uint64_t bin_cycles = ceil_div(K, cfg.bincu_width);
    const std::uint64_t sign_bytes = ceil_div(K, 8);
    const bool prefetch = 2 * K <= cfg.cu_buffer_bytes;
    const std::size_t P = layer.positions();
    const auto blocks = row_blocks(layer, cfg.input_sram_bytes);

    auto is_binary = [&](Decision d) {
        return d == Decision::binary_nonzero || (d == Decision::skipped && binary_skips);
    };

    // Members whose evaluation waits on the proxy.
    std::vector<std::uint8_t> gated(N, 0);
    std::uint64_t gated_count = 0;
    if (predictor) {
        for (std::uint32_t n = 0; n < N; ++n) {
            if (!roles.is_member(n))
                continue;
            for (std::size_t p = 0; p < P && !gated[n]; ++p) {
                const Decision d = decisions[n * P + p];
                gated[n] = d == Decision::proxy_nonzero || d == Decision::binary_nonzero || d == Decision::skipped;
            }
            gated_count += gated[n];
        }
    }

    std::vector<std::uint32_t> storage; // proxy table, then member table
    for (const auto& c : lc.clusters)
        storage.push_back(c.proxy);
    storage.insert(storage.end(), lc.singletons.begin(), lc.singletons.end());
    for (const auto& c : lc.clusters)
        storage.insert(storage.end(), c.members.begin(), c.members.end());

    DramPipe pipe(cfg.dram);
    auto emit = [&](TraceKind kind, std::uint32_t unit, std::uint32_t neuron, std::uint32_t block, std::uint64_t s,
                    std::uint64_t e) {
        if (trace)
            trace->push_back({kind, unit, neuron, block, s, e});
    };

    const std::uint64_t bitmap_layer_bytes = gated_count * sign_bytes;
    const bool preload = gated_count > 0 && bitmap_layer_bytes <= cfg.binweight_sram_bytes;
    if (gated_count > 0 && sign_bytes > cfg.binweight_sram_bytes)
        throw ConfigError("binary weight row exceeds the binWeight SRAM");
    std::uint64_t bitmap_ready = 0;
    if (preload) {
        bitmap_ready = pipe.request(0, bitmap_layer_bytes);
        st.dram_bitmap_bytes += bitmap_layer_bytes;
        st.binweight_sram_bytes += bitmap_layer_bytes;
        emit(TraceKind::bitmap_load, 0, 0, 0, 0, bitmap_ready);
    }

    std::vector<std::uint32_t> eval_count(N), bin_count(N);
    std::vector<std::uint8_t> in_fifo(N);
    std::uint64_t now = 0;

    for (std::uint32_t b = 0; b < blocks.size(); ++b) {
        const RowBlock& blk = blocks[b];
        const std::uint64_t loaded = pipe.request(now, blk.input_bytes);
        st.dram_input_bytes += blk.input_bytes;
        st.input_sram_bytes += blk.input_bytes;
        emit(TraceKind::input_load, 0, 0, b, now, loaded);
        now = loaded;
        st.blocks++;

        std::uint32_t open = N;
        std::deque<std::uint32_t> high, low, pending, bin_queue;
        std::uint64_t fifo = 0;

        auto zero_write = [&](std::uint32_t n) {
            emit(TraceKind::zero_write, 0, n, b, now, now);
            --open;
        };

        for (std::uint32_t n = 0; n < N; ++n) {
            eval_count[n] = bin_count[n] = 0;
            in_fifo[n] = 0;
            for (std::uint32_t p = blk.first; p < blk.first + blk.count; ++p) {
                const Decision d = predictor ? decisions[n * P + p] : Decision::base;
                eval_count[n] += evaluated(d);
                bin_count[n] += is_binary(d);
            }
            const std::uint64_t skipped = blk.count - eval_count[n];
            st.neurons_evaluated += eval_count[n];
            st.neurons_skipped += skipped;
            st.macs_skipped += skipped * K;
        }
        for (auto n : storage) {
            if (gated[n])
                continue;
            if (eval_count[n] == 0)
                zero_write(n);
            else if (predictor && roles.is_member(n))
                high.push_back(n);
            else
                low.push_back(n);
        }

        struct Unit {
            bool busy = false;
            std::uint32_t job = 0;
            std::uint64_t start = 0;
            std::uint64_t until = 0;
            bool has_next = false;
            std::uint32_t next = 0;
            std::uint64_t next_ready = 0;
        };
        std::vector<Unit> cus(cfg.num_cus), bincus(cfg.num_bincus);

        auto fetch = [&](std::uint32_t) {
            st.dram_weight_bytes += K;
            st.cu_buffer_bytes += K;
            st.weight_fetches++;
            return pipe.request(now, K);
        };
        auto pop_job = [&](std::uint32_t& n) {
            auto& q = high.empty() ? low : high;
            if (q.empty())
                return false;
            n = q.front();
            q.pop_front();
            if (in_fifo[n]) {
                in_fifo[n] = 0;
                --fifo;
            }
            return true;
        };
        auto start_cu = [&](Unit& u, std::uint32_t n, std::uint64_t ready) {
            const std::uint64_t macs = std::uint64_t{eval_count[n]} * K;
            u.busy = true;
            u.job = n;
            u.start = now;
            u.until = std::max(now + eval_count[n] * mac_cycles, ready);
            st.macs_executed += macs;
            st.cu_buffer_bytes += macs;
            st.input_sram_bytes += macs;
            st.cu_busy_cycles += u.until - now;
        };

        bool progress = true;
        while (open > 0) {
            for (std::uint32_t i = 0; i < cus.size(); ++i) {
                Unit& u = cus[i];
                if (!u.busy || u.until > now)
                    continue;
                u.busy = false;
                --open;
                emit(TraceKind::mac, i, u.job, b, u.start, u.until);
                if (predictor && roles.proxy_of[u.job] != NeuronRoles::none)
                    for (auto m : lc.clusters[roles.proxy_of[u.job]].members)
                        if (gated[m])
                            pending.push_back(m);
            }
            for (std::uint32_t i = 0; i < bincus.size(); ++i) {
                Unit& u = bincus[i];
                if (!u.busy || u.until > now)
                    continue;
                u.busy = false;
                emit(TraceKind::binary, i, u.job, b, u.start, u.until);
                if (eval_count[u.job] > 0) {
                    high.push_back(u.job);
                } else {
                    in_fifo[u.job] = 0;
                    --fifo;
                    zero_write(u.job);
                }
            }

            progress = true;
            while (progress) {
                progress = false;
                while (!pending.empty() && fifo < cfg.member_fifo_entries) {
                    const std::uint32_t m = pending.front();
                    pending.pop_front();
                    progress = true;
                    if (bin_count[m] > 0) {
                        in_fifo[m] = 1;
                        ++fifo;
                        bin_queue.push_back(m);
                    } else if (eval_count[m] > 0) {
                        in_fifo[m] = 1;
                        ++fifo;
                        high.push_back(m);
                    } else {
                        zero_write(m);
                    }
                }
                for (auto& u : bincus) {
                    if (u.busy || bin_queue.empty())
                        continue;
                    const std::uint32_t m = bin_queue.front();
                    bin_queue.pop_front();
                    progress = true;
                    const std::uint64_t evals = bin_count[m];
                    const std::uint64_t compute = evals * bin_cycles;
                    u.busy = true;
                    u.job = m;
                    u.start = now;
                    if (preload) {
                        u.until = std::max(now, bitmap_ready) + compute;
                    } else {
                        const std::uint64_t ready = pipe.request(now, sign_bytes);
                        st.dram_bitmap_bytes += sign_bytes;
                        st.binweight_sram_bytes += sign_bytes;
                        u.until = std::max(now + compute, ready);
                    }
                    st.binary_ops += evals * K;
                    st.binary_evals += evals;
                    st.input_sram_bytes += evals * sign_bytes;
                    st.binweight_sram_bytes += evals * sign_bytes;
                    st.bincu_busy_cycles += u.until - now;
                }
                for (auto& u : cus) {
                    if (u.busy)
                        continue;
                    std::uint32_t n;
                    if (u.has_next) {
                        u.has_next = false;
                        start_cu(u, u.next, u.next_ready);
                    } else if (pop_job(n)) {
                        start_cu(u, n, fetch(n));
                    } else {
                        continue;
                    }
                    progress = true;
                }
                if (prefetch)
                    for (auto& u : cus) {
                        std::uint32_t n;
                        if (u.busy && !u.has_next && pop_job(n)) {
                            u.has_next = true;
                            u.next = n;
                            u.next_ready = fetch(n);
                            progress = true;
                        }
                    }
            }
            if (!pending.empty())
                st.fifo_stalls++;

            if (open == 0)
                break;
            std::uint64_t next = UINT64_MAX;
            for (const auto& u : cus)
                if (u.busy)
                    next = std::min(next, u.until);
            for (const auto& u : bincus)
                if (u.busy)
                    next = std::min(next, u.until);
            if (next == UINT64_MAX)
                throw std::logic_error("schedule_layer: no runnable work but neurons remain");
            now = next;
        }
    }

    st.cycles = now;
    st.dram_write_bytes = layer.output_size();
    return st;
}

} // namespace mor::sim
