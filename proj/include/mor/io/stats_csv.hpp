#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mor/errors.hpp"
#include "mor/sim/simulator.hpp"

namespace mor::io {

/// One simulation run as written to disk.
struct StatsRecord {
    std::uint64_t model_hash = 0;
    bool predictor = false;
    double threshold = 0.0;
    std::uint64_t inputs = 0;
    double frequency_mhz = 0.0;
    std::vector<sim::LayerStats> layers;
    std::vector<sim::EnergyBreakdown> layer_energy;
    sim::LayerStats total;
    sim::EnergyBreakdown energy;
};

inline StatsRecord make_record(const sim::RunStats& rs, std::uint64_t hash, bool predictor, double threshold,
                               const sim::AccelConfig& cfg) {
    return {hash, predictor, threshold, rs.inputs, cfg.frequency_mhz, rs.layers, rs.layer_energy, rs.total, rs.energy};
}

namespace detail {

using sim::EnergyBreakdown;
using sim::LayerStats;

inline constexpr std::array<std::pair<const char*, std::uint64_t LayerStats::*>, 19> counter_fields{{
    {"cycles", &LayerStats::cycles},
    {"macs_executed", &LayerStats::macs_executed},
    {"macs_skipped", &LayerStats::macs_skipped},
    {"binary_ops", &LayerStats::binary_ops},
    {"binary_evals", &LayerStats::binary_evals},
    {"neurons_evaluated", &LayerStats::neurons_evaluated},
    {"neurons_skipped", &LayerStats::neurons_skipped},
    {"dram_weight_bytes", &LayerStats::dram_weight_bytes},
    {"dram_bitmap_bytes", &LayerStats::dram_bitmap_bytes},
    {"dram_input_bytes", &LayerStats::dram_input_bytes},
    {"dram_write_bytes", &LayerStats::dram_write_bytes},
    {"input_sram_bytes", &LayerStats::input_sram_bytes},
    {"binweight_sram_bytes", &LayerStats::binweight_sram_bytes},
    {"cu_buffer_bytes", &LayerStats::cu_buffer_bytes},
    {"cu_busy_cycles", &LayerStats::cu_busy_cycles},
    {"bincu_busy_cycles", &LayerStats::bincu_busy_cycles},
    {"weight_fetches", &LayerStats::weight_fetches},
    {"blocks", &LayerStats::blocks},
    {"fifo_stalls", &LayerStats::fifo_stalls},
}};

inline constexpr std::array<std::pair<const char*, double EnergyBreakdown::*>, 8> energy_fields{{
    {"energy_mac", &EnergyBreakdown::mac},
    {"energy_binary", &EnergyBreakdown::binary},
    {"energy_input_sram", &EnergyBreakdown::input_sram},
    {"energy_binweight_sram", &EnergyBreakdown::binweight_sram},
    {"energy_cu_buffer", &EnergyBreakdown::cu_buffer},
    {"energy_dram", &EnergyBreakdown::dram},
    {"energy_static", &EnergyBreakdown::static_energy},
    {"energy_predictor", &EnergyBreakdown::predictor_overhead},
}};

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line, int base = 10) {
    T v{};
    const auto* end = s.data() + s.size();
    std::from_chars_result res;
    if constexpr (std::is_floating_point_v<T>)
        res = std::from_chars(s.data(), end, v);
    else
        res = std::from_chars(s.data(), end, v, base);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError("bad number '" + s + "' on line " + std::to_string(line), line);
    return v;
}

inline std::string header_row() {
    std::string h = "scope";
    for (const auto& [name, _] : counter_fields)
        h += std::string(",") + name;
    for (const auto& [name, _] : energy_fields)
        h += std::string(",") + name;
    return h + ",energy_dynamic,energy_total";
}

inline void write_row(std::ostream& os, const std::string& scope, const LayerStats& s, const EnergyBreakdown& e) {
    os << scope;
    for (const auto& [_, f] : counter_fields)
        os << ',' << s.*f;
    for (const auto& [_, f] : energy_fields)
        os << ',' << fmt_double(e.*f);
    os << ',' << fmt_double(e.dynamic()) << ',' << fmt_double(e.total()) << '\n';
}

} // namespace detail

/// Writes the record. Offsets in ParseError from read_stats are line numbers.
inline void write_stats(std::ostream& os, const StatsRecord& r) {
    os << "format,mor-stats-1\n";
    os << "model_hash," << detail::hex64(r.model_hash) << '\n';
    os << "predictor," << (r.predictor ? "on" : "off") << '\n';
    os << "threshold," << detail::fmt_double(r.threshold) << '\n';
    os << "inputs," << r.inputs << '\n';
    os << "frequency_mhz," << detail::fmt_double(r.frequency_mhz) << '\n';
    os << detail::header_row() << '\n';
    for (std::size_t l = 0; l < r.layers.size(); ++l)
        detail::write_row(os, "layer" + std::to_string(l), r.layers[l], r.layer_energy.at(l));
    detail::write_row(os, "total", r.total, r.energy);
}

inline std::string stats_to_string(const StatsRecord& r) {
    std::ostringstream os;
    write_stats(os, r);
    return os.str();
}

inline StatsRecord read_stats(std::istream& is) {
    StatsRecord r;
    std::string line;
    std::size_t n = 0;
    auto next = [&](const char* key) {
        if (!std::getline(is, line))
            throw ParseError(std::string("missing ") + key, n + 1);
        ++n;
        auto cells = detail::split(line);
        if (cells.size() != 2 || cells[0] != key)
            throw ParseError(std::string("expected ") + key + " on line " + std::to_string(n), n);
        return cells[1];
    };
    if (next("format") != "mor-stats-1")
        throw ParseError("unsupported stats format", 1);
    r.model_hash = detail::parse_number<std::uint64_t>(next("model_hash"), n, 16);
    const auto pred = next("predictor");
    if (pred != "on" && pred != "off")
        throw ParseError("predictor must be on or off", n);
    r.predictor = pred == "on";
    r.threshold = detail::parse_number<double>(next("threshold"), n);
    r.inputs = detail::parse_number<std::uint64_t>(next("inputs"), n);
    r.frequency_mhz = detail::parse_number<double>(next("frequency_mhz"), n);
    if (!std::getline(is, line) || line != detail::header_row())
        throw ParseError("unexpected column header", n + 1);
    ++n;
    bool have_total = false;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty())
            continue;
        if (have_total)
            throw ParseError("rows after the total row", n);
        const auto cells = detail::split(line);
        const std::size_t expect = 1 + detail::counter_fields.size() + detail::energy_fields.size() + 2;
        if (cells.size() != expect)
            throw ParseError("wrong column count on line " + std::to_string(n), n);
        sim::LayerStats s;
        sim::EnergyBreakdown e;
        std::size_t c = 1;
        for (const auto& [_, f] : detail::counter_fields)
            s.*f = detail::parse_number<std::uint64_t>(cells[c++], n);
        for (const auto& [_, f] : detail::energy_fields)
            e.*f = detail::parse_number<double>(cells[c++], n);
        if (cells[0] == "total") {
            r.total = s;
            r.energy = e;
            have_total = true;
        } else if (cells[0] == "layer" + std::to_string(r.layers.size())) {
            r.layers.push_back(s);
            r.layer_energy.push_back(e);
        } else {
            throw ParseError("unexpected scope '" + cells[0] + "'", n);
        }
    }
    if (!have_total)
        throw ParseError("missing total row", n);
    return r;
}

inline StatsRecord stats_from_string(const std::string& s) {
    std::istringstream is(s);
    return read_stats(is);
}

} // namespace mor::io
