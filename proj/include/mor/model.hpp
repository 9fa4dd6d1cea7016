#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fixed.hpp"
#include "tensor.hpp"

namespace mor {

enum class LayerKind : std::uint8_t { fc = 0, conv = 1 };

/// Longest dot product the int32 accumulator is specified for.
inline constexpr std::size_t max_fan_in = std::size_t{1} << 15;

struct ConvGeometry {
    std::uint32_t in_channels = 0;
    std::uint32_t in_height = 0;
    std::uint32_t in_width = 0;
    std::uint32_t kernel = 1;
    std::uint32_t stride = 1;
    std::uint32_t padding = 0;

    std::uint32_t out_height() const { return extent(in_height); }
    std::uint32_t out_width() const { return extent(in_width); }
    std::uint32_t fan_in() const { return in_channels * kernel * kernel; }

    friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;

private:
    std::uint32_t extent(std::uint32_t in) const {
        const std::int64_t span = std::int64_t{in} + 2 * std::int64_t{padding} - kernel;
        return span < 0 ? 0 : static_cast<std::uint32_t>(span / stride + 1);
    }
};

/// Per-channel batch-norm statistics in Q16.16.
struct BnChannel {
    Fixed mean;
    Fixed stddev;
    Fixed gamma = Fixed::from_int(1);
    Fixed beta;

    friend bool operator==(const BnChannel&, const BnChannel&) = default;
};

struct LayerDesc {
    LayerKind kind = LayerKind::fc;
    std::uint32_t out_features = 0; // neurons (FC) or filters (CONV)
    std::uint32_t fan_in = 0;       // weights per neuron
    std::vector<std::int8_t> weights; // out_features x fan_in, row-major
    ConvGeometry conv;                // CONV only
    std::optional<std::vector<BnChannel>> bn;
    bool has_relu = true;
    // Layer whose output is added before ReLU; -1 is the model input.
    std::optional<std::int32_t> residual_from;
    std::uint8_t requant_shift = 0;
    Scale weight_scale;

    bool has_residual() const { return residual_from.has_value(); }

    std::span<const std::int8_t> weight_row(std::size_t neuron) const {
        return std::span<const std::int8_t>(weights).subspan(neuron * fan_in, fan_in);
    }

    /// Output positions per neuron: 1 for FC, Ho*Wo for CONV.
    std::size_t positions() const {
        return kind == LayerKind::fc ? 1 : std::size_t{conv.out_height()} * conv.out_width();
    }

    std::size_t output_size() const { return positions() * out_features; }

    Shape output_shape() const {
        if (kind == LayerKind::fc)
            return {out_features};
        return {out_features, conv.out_height(), conv.out_width()};
    }

    std::size_t macs() const { return output_size() * fan_in; }

    friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct QuantModel {
    Shape input_shape;
    Scale input_scale;
    std::vector<LayerDesc> layers;

    /// Shape of the tensor consumed by layer `l` (or produced when l == -1).
    Shape activation_shape(std::int64_t l) const {
        return l < 0 ? input_shape : layers.at(static_cast<std::size_t>(l)).output_shape();
    }

    std::size_t total_macs() const {
        std::size_t total = 0;
        for (const auto& layer : layers)
            total += layer.macs();
        return total;
    }

    friend bool operator==(const QuantModel&, const QuantModel&) = default;
};

inline void validate_layer(const LayerDesc& layer, const Shape& in_shape, std::size_t index) {
    const std::string where = "layer " + std::to_string(index) + ": ";
    if (layer.out_features == 0 || layer.fan_in == 0)
        throw StructuralError(where + "empty layer");
    if (layer.fan_in > max_fan_in)
        throw StructuralError(where + "fan-in exceeds accumulator range");
    if (layer.weights.size() != std::size_t{layer.out_features} * layer.fan_in)
        throw StructuralError(where + "weight count does not match out_features x fan_in");
    for (auto w : layer.weights)
        if (w == -128)
            throw StructuralError(where + "weight code -128 is not representable (symmetric int8)");
    if (layer.weight_scale.den <= 0)
        throw InvalidParameter(where + "weight scale denominator must be positive");
    if (layer.requant_shift > 31)
        throw InvalidParameter(where + "requant shift out of range");

    if (layer.kind == LayerKind::fc) {
        if (numel(in_shape) != layer.fan_in)
            throw StructuralError(where + "input size does not match FC fan-in");
    } else {
        const auto& g = layer.conv;
        if (in_shape != Shape{g.in_channels, g.in_height, g.in_width})
            throw StructuralError(where + "input shape does not match CONV geometry");
        if (g.kernel == 0 || g.stride == 0)
            throw StructuralError(where + "kernel and stride must be positive");
        if (g.fan_in() != layer.fan_in)
            throw StructuralError(where + "fan-in must equal channels x kernel^2");
        if (g.out_height() == 0 || g.out_width() == 0)
            throw StructuralError(where + "kernel larger than padded input");
    }

    if (layer.bn) {
        if (layer.bn->size() != layer.out_features)
            throw StructuralError(where + "one batch-norm channel per neuron required");
        for (const auto& ch : *layer.bn)
            if (ch.stddev.raw <= 0)
                throw InvalidParameter(where + "batch-norm sigma must be positive");
    }
}

/// Checks the shape chain and residual wiring; throws StructuralError.
inline void validate(const QuantModel& model) {
    if (model.input_shape.empty() || numel(model.input_shape) == 0)
        throw StructuralError("model input shape is empty");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        validate_layer(layer, model.activation_shape(static_cast<std::int64_t>(l) - 1), l);
        if (layer.residual_from) {
            const auto src = *layer.residual_from;
            if (src < -1 || src >= static_cast<std::int64_t>(l))
                throw StructuralError("layer " + std::to_string(l) + ": residual source must precede consumer");
            if (model.activation_shape(src) != layer.output_shape())
                throw StructuralError("layer " + std::to_string(l) + ": residual shape mismatch");
        }
    }
}

} // namespace mor
