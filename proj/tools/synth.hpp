#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "mor/model.hpp"
#include "mor/tensor.hpp"

namespace mor::tools {

struct SynthOptions {
    std::uint32_t groups = 16;
    std::uint32_t per_group = 16;
    std::uint32_t fan_in = 255;
    double negative_weight_prob = 0.6;
    double positive_input_prob = 0.6;
    std::uint32_t tail = 4; // non-ReLU outputs after the clustered layer; 0 for none
};

struct SynthWorkload {
    QuantModel model;
    std::vector<QuantTensor> samples;
};

/// Groups of neurons sharing one sign pattern and differing only in scale,
/// fed with +-5 inputs. Every group member is an exact multiple of the
/// group pattern, so clusters form at 0 degrees and the binary dot product
/// predicts the sign of each pre-activation exactly.
inline SynthWorkload sparse_workload(std::uint64_t seed, std::size_t samples, const SynthOptions& o = {}) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution neg(o.negative_weight_prob), pos(o.positive_input_prob);
    std::uniform_int_distribution<int> mult(1, 3), code(-127, 127);
    const std::uint32_t n = o.groups * o.per_group;

    LayerDesc layer;
    layer.out_features = n;
    layer.fan_in = o.fan_in;
    layer.weights.reserve(std::size_t{n} * o.fan_in);
    for (std::uint32_t g = 0; g < o.groups; ++g) {
        std::vector<int> pattern(o.fan_in);
        for (auto& s : pattern)
            s = neg(rng) ? -1 : 1;
        for (std::uint32_t j = 0; j < o.per_group; ++j) {
            const int k = 10 * mult(rng);
            for (int s : pattern)
                layer.weights.push_back(static_cast<std::int8_t>(s * k));
        }
    }
    SynthWorkload w;
    w.model.input_shape = {o.fan_in};
    w.model.layers.push_back(std::move(layer));
    if (o.tail > 0) {
        LayerDesc tail;
        tail.out_features = o.tail;
        tail.fan_in = n;
        tail.has_relu = false;
        tail.requant_shift = static_cast<std::uint8_t>(std::min(20.0, std::ceil(std::log2(n * 127.0 * 3))));
        for (std::size_t i = 0; i < std::size_t{o.tail} * n; ++i)
            tail.weights.push_back(static_cast<std::int8_t>(code(rng)));
        w.model.layers.push_back(std::move(tail));
    }
    validate(w.model);
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<std::int8_t> x(o.fan_in);
        for (auto& v : x)
            v = pos(rng) ? 5 : -5;
        w.samples.emplace_back(w.model.input_shape, std::move(x));
    }
    return w;
}

/// Dense random FC stack with uniformly drawn codes.
inline SynthWorkload random_workload(std::uint64_t seed, std::size_t samples, std::vector<std::uint32_t> widths) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> code(-127, 127);
    if (widths.size() < 2)
        throw ConfigError("random workload needs an input width and at least one layer");
    SynthWorkload w;
    w.model.input_shape = {widths[0]};
    for (std::size_t l = 1; l < widths.size(); ++l) {
        LayerDesc layer;
        layer.out_features = widths[l];
        layer.fan_in = widths[l - 1];
        layer.has_relu = l + 1 < widths.size();
        layer.requant_shift = static_cast<std::uint8_t>(std::ceil(std::log2(std::sqrt(double(layer.fan_in)) * 127.0)));
        for (std::size_t i = 0; i < std::size_t{layer.out_features} * layer.fan_in; ++i)
            layer.weights.push_back(static_cast<std::int8_t>(code(rng)));
        w.model.layers.push_back(std::move(layer));
    }
    validate(w.model);
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<std::int8_t> x(widths[0]);
        for (auto& v : x)
            v = static_cast<std::int8_t>(code(rng));
        w.samples.emplace_back(w.model.input_shape, std::move(x));
    }
    return w;
}

} // namespace mor::tools
