#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "mor/io/stats_csv.hpp"

namespace mor {

/// One scope (layer or total) of a predictor-off vs predictor-on pair.
struct ComparisonRow {
    std::string scope;
    std::uint64_t cycles_off = 0;
    std::uint64_t cycles_on = 0;
    double speedup = 1.0;
    std::uint64_t macs_total = 0;
    std::uint64_t macs_skipped = 0;
    double energy_off = 0;
    double energy_on = 0;
    double energy_savings_pct = 0;
    double dynamic_off = 0;
    double dynamic_on = 0;
    double dynamic_savings_pct = 0;
    double predictor_overhead_pct = 0; // share of the predictor-on energy
};

struct Report {
    std::uint64_t model_hash = 0;
    double threshold = 0;
    std::vector<ComparisonRow> rows; // layers, then "total"
};

inline ComparisonRow compare_scope(std::string scope, const sim::LayerStats& off, const sim::EnergyBreakdown& eoff,
                                   const sim::LayerStats& on, const sim::EnergyBreakdown& eon) {
    ComparisonRow r;
    r.scope = std::move(scope);
    r.cycles_off = off.cycles;
    r.cycles_on = on.cycles;
    r.speedup = on.cycles == 0 ? 1.0 : static_cast<double>(off.cycles) / static_cast<double>(on.cycles);
    r.macs_total = on.macs_executed + on.macs_skipped;
    r.macs_skipped = on.macs_skipped;
    r.energy_off = eoff.total();
    r.energy_on = eon.total();
    r.energy_savings_pct = r.energy_off > 0 ? 100.0 * (1.0 - r.energy_on / r.energy_off) : 0.0;
    r.dynamic_off = eoff.dynamic();
    r.dynamic_on = eon.dynamic();
    r.dynamic_savings_pct = r.dynamic_off > 0 ? 100.0 * (1.0 - r.dynamic_on / r.dynamic_off) : 0.0;
    r.predictor_overhead_pct = r.energy_on > 0 ? 100.0 * eon.predictor_overhead / r.energy_on : 0.0;
    return r;
}

/// Pairs a baseline run with a predictor run of the same model.
inline Report compare_runs(const io::StatsRecord& off, const io::StatsRecord& on) {
    if (off.model_hash != on.model_hash)
        throw ConfigError("model hashes differ; refusing to compare runs of different models");
    if (off.layers.size() != on.layers.size())
        throw ConfigError("runs have different layer counts");
    if (off.inputs != on.inputs)
        throw ConfigError("runs cover different numbers of inputs");
    Report rep;
    rep.model_hash = on.model_hash;
    rep.threshold = on.threshold;
    for (std::size_t l = 0; l < on.layers.size(); ++l)
        rep.rows.push_back(compare_scope("layer" + std::to_string(l), off.layers[l], off.layer_energy[l],
                                         on.layers[l], on.layer_energy[l]));
    rep.rows.push_back(compare_scope("total", off.total, off.energy, on.total, on.energy));
    return rep;
}

inline void write_report_csv(std::ostream& os, const Report& rep) {
    os << "scope,cycles_off,cycles_on,speedup,macs_total,macs_skipped,energy_off,energy_on,energy_savings_pct,"
          "dynamic_off,dynamic_on,dynamic_savings_pct,predictor_overhead_pct\n";
    char buf[512];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%.4f,%llu,%llu,%.6g,%.6g,%.4f,%.6g,%.6g,%.4f,%.4f\n",
                      r.scope.c_str(), static_cast<unsigned long long>(r.cycles_off),
                      static_cast<unsigned long long>(r.cycles_on), r.speedup,
                      static_cast<unsigned long long>(r.macs_total), static_cast<unsigned long long>(r.macs_skipped),
                      r.energy_off, r.energy_on, r.energy_savings_pct, r.dynamic_off, r.dynamic_on,
                      r.dynamic_savings_pct, r.predictor_overhead_pct);
        os << buf;
    }
}

inline void write_report_text(std::ostream& os, const Report& rep) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "model %016llx  threshold %.3f\n", static_cast<unsigned long long>(rep.model_hash),
                  rep.threshold);
    os << buf;
    std::snprintf(buf, sizeof buf, "%-8s %12s %12s %8s %9s %9s %9s\n", "scope", "cycles off", "cycles on", "speedup",
                  "ops saved", "energy", "predictor");
    os << buf;
    for (const auto& r : rep.rows) {
        const double saved = r.macs_total ? 100.0 * static_cast<double>(r.macs_skipped) / static_cast<double>(r.macs_total) : 0.0;
        std::snprintf(buf, sizeof buf, "%-8s %12llu %12llu %7.2fx %8.1f%% %8.1f%% %8.2f%%\n", r.scope.c_str(),
                      static_cast<unsigned long long>(r.cycles_off), static_cast<unsigned long long>(r.cycles_on),
                      r.speedup, saved, r.energy_savings_pct, r.predictor_overhead_pct);
        os << buf;
    }
}

} // namespace mor
