#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "binary.hpp"
#include "errors.hpp"
#include "fixed.hpp"
#include "model.hpp"
#include "reference.hpp"
#include "regression.hpp"

namespace mor {

/// Fitted line from a neuron's binarized pre-ReLU value to its 8-bit one.
/// All three numbers are held at Q32.32 resolution, the precision they are
/// stored with in the model container.
struct PredictorParams {
    double c = 0.0; // Pearson coefficient
    double m = 0.0; // slope
    double b = 0.0; // intercept
    bool enabled = false;
    bool degenerate = true; // no usable fit (zero variance, or not a ReLU neuron)

    /// Whether the binary predictor may be used at threshold `t`. The
    /// comparison is strict so that t = 1 switches every neuron off.
    bool usable(double t) const { return !degenerate && c > t; }

    friend bool operator==(const PredictorParams&, const PredictorParams&) = default;
};

inline constexpr double default_threshold = 0.9;
inline constexpr std::size_t default_calibration_samples = 1024;

/// Per-layer, per-neuron predictor parameters plus the threshold that
/// derived their `enabled` flags.
struct PredictorTable {
    double threshold = default_threshold;
    std::vector<std::vector<PredictorParams>> layers;

    const PredictorParams& at(std::size_t layer, std::size_t neuron) const { return layers.at(layer).at(neuron); }

    /// Re-derives every enabled flag for a new threshold.
    void rethreshold(double t) {
        threshold = t;
        for (auto& layer : layers)
            for (auto& p : layer)
                p.enabled = p.usable(t);
    }

    friend bool operator==(const PredictorTable&, const PredictorTable&) = default;
};

/// Paired series for one neuron: binary and pre-batch-norm 8-bit dot products.
struct CalibrationTrace {
    std::vector<std::int32_t> p_bin;
    std::vector<std::int32_t> p_base;

    std::size_t size() const { return p_bin.size(); }
};

inline PredictorParams params_from_moments(const MomentAccumulator& acc, double threshold) {
    PredictorParams p;
    if (acc.count() < 2)
        return p;
    const Correlation corr = acc.correlation();
    if (corr.degenerate)
        return p;
    const LineFit fit = acc.fit();
    p.c = q32::quantize(corr.c);
    p.m = q32::quantize(fit.slope);
    p.b = q32::quantize(fit.intercept);
    p.degenerate = false;
    p.enabled = p.usable(threshold);
    return p;
}

inline PredictorParams fit_trace(const CalibrationTrace& trace, double threshold) {
    if (trace.p_bin.size() != trace.p_base.size())
        throw StructuralError("calibration trace series differ in length");
    if (trace.size() < 2)
        throw StructuralError("calibration trace needs at least two points");
    MomentAccumulator acc;
    for (std::size_t i = 0; i < trace.size(); ++i)
        acc.add(trace.p_bin[i], trace.p_base[i]);
    return params_from_moments(acc, threshold);
}

/// Sign-packed weight rows of every layer; built once per model.
struct BinaryWeights {
    std::vector<std::vector<PackedSigns>> layers;

    explicit BinaryWeights(const QuantModel& model) {
        layers.resize(model.layers.size());
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const auto& layer = model.layers[l];
            layers[l].reserve(layer.out_features);
            for (std::size_t n = 0; n < layer.out_features; ++n)
                layers[l].emplace_back(layer.weight_row(n));
        }
    }
};

namespace detail {

/// Runs the reference network on every sample and hands each ReLU-layer
/// (layer, neuron, p_bin, p_base) tuple to `sink`. Sample order, then
/// layer, position, neuron: fixed, so consumers see a deterministic stream.
template <typename Sink>
void for_each_calibration_pair(const QuantModel& model, const BinaryWeights& bw, std::span<const QuantTensor> samples,
                               Sink&& sink) {
    std::vector<std::int8_t> window;
    PackedSigns window_signs;
    for (const auto& sample : samples) {
        const ActivationRecord rec = forward_reference(model, sample);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const auto& layer = model.layers[l];
            if (!layer.has_relu)
                continue;
            const QuantTensor& in = l == 0 ? sample : rec.layers[l - 1].out;
            window.resize(layer.fan_in);
            for (std::size_t p = 0; p < layer.positions(); ++p) {
                gather_window(layer, in.data(), p, window);
                window_signs.assign(window);
                for (std::size_t n = 0; n < layer.out_features; ++n)
                    sink(l, n, binary_dot(bw.layers[l][n], window_signs), dot_product(layer.weight_row(n), window));
            }
        }
    }
}

} // namespace detail

/// Profiles the model over `samples` and fits (c, m, b) per ReLU neuron
/// (per filter for CONV, pooled over positions). Non-ReLU neurons get
/// disabled, degenerate parameters.
inline PredictorTable calibrate_model(const QuantModel& model, std::span<const QuantTensor> samples,
                                      double threshold = default_threshold) {
    if (samples.empty())
        throw ConfigError("calibration needs a non-empty sample set");
    if (samples.size() < 2)
        throw ConfigError("calibration needs at least two samples");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("threshold must lie in [0, 1]");
    validate(model);

    const BinaryWeights bw(model);
    std::vector<std::vector<MomentAccumulator>> moments(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        moments[l].resize(model.layers[l].out_features);

    detail::for_each_calibration_pair(model, bw, samples,
                                      [&](std::size_t l, std::size_t n, std::int32_t pbin, std::int32_t pbase) {
                                          moments[l][n].add(pbin, pbase);
                                      });

    PredictorTable table;
    table.threshold = threshold;
    table.layers.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        table.layers[l].resize(model.layers[l].out_features);
        if (!model.layers[l].has_relu)
            continue;
        for (std::size_t n = 0; n < model.layers[l].out_features; ++n)
            table.layers[l][n] = params_from_moments(moments[l][n], threshold);
    }
    return table;
}

/// Full calibration series of a single neuron, for inspection and tests.
inline CalibrationTrace collect_trace(const QuantModel& model, std::span<const QuantTensor> samples,
                                      std::size_t layer, std::size_t neuron) {
    validate(model);
    if (layer >= model.layers.size() || neuron >= model.layers[layer].out_features)
        throw StructuralError("collect_trace: neuron out of range");
    const BinaryWeights bw(model);
    CalibrationTrace trace;
    detail::for_each_calibration_pair(model, bw, samples,
                                      [&](std::size_t l, std::size_t n, std::int32_t pbin, std::int32_t pbase) {
                                          if (l == layer && n == neuron) {
                                              trace.p_bin.push_back(pbin);
                                              trace.p_base.push_back(pbase);
                                          }
                                      });
    return trace;
}

/// Histogram of correlation coefficients over enabled-candidate neurons,
/// `bins` equal-width buckets across [-1, 1].
inline std::vector<std::size_t> correlation_histogram(const PredictorTable& table, std::size_t bins = 10) {
    std::vector<std::size_t> hist(bins, 0);
    for (const auto& layer : table.layers)
        for (const auto& p : layer) {
            if (p.degenerate)
                continue;
            auto bin = static_cast<std::size_t>((p.c + 1.0) / 2.0 * static_cast<double>(bins));
            hist[std::min(bin, bins - 1)]++;
        }
    return hist;
}

} // namespace mor
