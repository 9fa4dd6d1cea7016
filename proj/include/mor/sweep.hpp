#pragma once

#include <algorithm>
#include <cstdio>
#include <future>
#include <ostream>
#include <span>
#include <vector>

#include "mor/hybrid.hpp"

namespace mor {

struct SweepRow {
    double threshold = 0;
    PredictorMode variant = PredictorMode::hybrid;
    std::uint64_t macs_total = 0;
    std::uint64_t macs_skipped = 0;
    double ops_saved_pct = 0;
    std::uint64_t top1_disagreements = 0;
    double top1_disagreement_pct = 0;
    OutcomeCounts counts;
};

struct SweepResult {
    std::size_t samples = 0;
    std::vector<SweepRow> rows; // descending threshold; hybrid before binary-only
};

inline std::size_t top1(const QuantTensor& t) {
    const auto d = t.data();
    return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

/// Skip counts and quadrants come from teacher-forced runs, where every
/// layer sees reference inputs; the top-1 metric uses propagated runs.
inline SweepResult run_sweep(const HybridEngine& engine, std::span<const QuantTensor> samples,
                             std::vector<double> thresholds, unsigned threads = 1) {
    if (thresholds.empty())
        throw ConfigError("sweep needs at least one threshold");
    if (samples.empty())
        throw ConfigError("sweep needs at least one sample");
    for (double t : thresholds)
        if (!(t >= 0.0 && t <= 1.0))
            throw ConfigError("thresholds must lie in [0, 1]");
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<std::size_t> ref_top1;
    for (const auto& x : samples)
        ref_top1.push_back(top1(forward_reference(engine.model(), x).layers.back().out));

    auto row_for = [&](double t, PredictorMode mode) {
        SweepRow row;
        row.threshold = t;
        row.variant = mode;
        HybridConfig forced;
        forced.threshold = t;
        forced.mode = mode;
        forced.oracle = true;
        forced.teacher_forcing = true;
        HybridConfig free = forced;
        free.oracle = false;
        free.teacher_forcing = false;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto r = engine.run(samples[i], forced);
            row.macs_skipped += r.macs_skipped();
            row.macs_total += r.macs_skipped() + r.macs_executed();
            row.counts += r.counts();
            const auto p = engine.run(samples[i], free);
            row.top1_disagreements += top1(p.activations.layers.back().out) != ref_top1[i];
        }
        row.ops_saved_pct = row.macs_total ? 100.0 * static_cast<double>(row.macs_skipped) / static_cast<double>(row.macs_total) : 0.0;
        row.top1_disagreement_pct = 100.0 * static_cast<double>(row.top1_disagreements) / static_cast<double>(samples.size());
        return row;
    };
    auto rows_for = [&](double t) {
        return std::vector<SweepRow>{row_for(t, PredictorMode::hybrid), row_for(t, PredictorMode::binary_only)};
    };

    SweepResult result;
    result.samples = samples.size();
    if (threads <= 1) {
        for (double t : thresholds)
            for (auto& r : rows_for(t))
                result.rows.push_back(r);
        return result;
    }
    std::vector<std::vector<SweepRow>> parts(thresholds.size());
    for (std::size_t start = 0; start < thresholds.size(); start += threads) {
        std::vector<std::future<std::vector<SweepRow>>> jobs;
        const std::size_t end = std::min<std::size_t>(start + threads, thresholds.size());
        for (std::size_t i = start; i < end; ++i)
            jobs.push_back(std::async(std::launch::async, rows_for, thresholds[i]));
        for (std::size_t i = start; i < end; ++i)
            parts[i] = jobs[i - start].get();
    }
    for (auto& p : parts)
        for (auto& r : p)
            result.rows.push_back(r);
    return result;
}

inline const char* variant_name(PredictorMode m) {
    switch (m) {
    case PredictorMode::hybrid:
        return "hybrid";
    case PredictorMode::binary_only:
        return "binary_only";
    case PredictorMode::cluster_only:
        return "cluster_only";
    }
    return "?";
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
    os << "threshold,variant,samples,macs_total,macs_skipped,ops_saved_pct,top1_disagreements,top1_disagreement_pct";
    for (std::size_t k = 0; k < outcome_kinds; ++k)
        os << ',' << outcome_name(static_cast<Outcome>(k));
    os << '\n';
    char buf[64];
    for (const auto& r : s.rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.threshold);
        os << buf << ',' << variant_name(r.variant) << ',' << s.samples << ',' << r.macs_total << ','
           << r.macs_skipped << ',';
        std::snprintf(buf, sizeof buf, "%.6f", r.ops_saved_pct);
        os << buf << ',' << r.top1_disagreements << ',';
        std::snprintf(buf, sizeof buf, "%.6f", r.top1_disagreement_pct);
        os << buf;
        for (std::size_t k = 0; k < outcome_kinds; ++k)
            os << ',' << r.counts[static_cast<Outcome>(k)];
        os << '\n';
    }
}

} // namespace mor
