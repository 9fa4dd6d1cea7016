#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "errors.hpp"
#include "fixed.hpp"
#include "model.hpp"
#include "tensor.hpp"

namespace mor {

/// Exact int8 x int8 dot product with 32-bit accumulation.
inline std::int32_t dot_product(std::span<const std::int8_t> weights, std::span<const std::int8_t> inputs) {
    if (weights.size() != inputs.size())
        throw StructuralError("dot_product: length mismatch");
    if (weights.empty())
        throw StructuralError("dot_product: empty vectors");
    std::int32_t acc = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        acc += std::int32_t{weights[i]} * std::int32_t{inputs[i]};
    return acc;
}

/// Batch norm folded into one affine map over the accumulator:
///   out = floor((acc * 2^16 * gamma + beta * sigma - mu * gamma) / sigma)
/// with every term a raw Q16.16 integer, so the result is the exact
/// Q16.16 floor of ((acc - mu) / sigma) * gamma + beta. Floor keeps the
/// sign of the real value, which is what the zero test needs.
struct BnAffine {
    std::int64_t gain = 0;
    int128 offset = 0;
    std::int64_t divisor = 1;

    static BnAffine fold(const BnChannel& ch) {
        if (ch.stddev.raw <= 0)
            throw InvalidParameter("batch-norm sigma must be positive");
        BnAffine f;
        f.gain = ch.gamma.raw;
        f.offset = int128{ch.beta.raw} * ch.stddev.raw - int128{ch.mean.raw} * ch.gamma.raw;
        f.divisor = ch.stddev.raw;
        return f;
    }

    Fixed apply(std::int32_t acc) const {
        const int128 num = int128{acc} * Fixed::one * gain + offset;
        return Fixed::from_raw(static_cast<std::int64_t>(floor_div(num, divisor)));
    }
};

inline Fixed apply_batchnorm(std::int32_t acc, const BnChannel& bn) { return BnAffine::fold(bn).apply(acc); }

/// Real-valued batch norm used on regression estimates.
inline double apply_batchnorm_real(double x, const BnChannel& bn) {
    if (bn.stddev.raw <= 0)
        throw InvalidParameter("batch-norm sigma must be positive");
    return (x - bn.mean.to_double()) / bn.stddev.to_double() * bn.gamma.to_double() + bn.beta.to_double();
}

template <typename T>
constexpr T relu(T x) {
    return x < T{} ? T{} : x;
}

/// Post-activation value to the int8 code fed to the next layer:
/// round-half-up of value / 2^shift, saturated to [-127, 127].
inline std::int8_t requantize(Fixed value, std::uint8_t shift) {
    const int bits = Fixed::frac_bits + shift;
    const std::int64_t half = std::int64_t{1} << (bits - 1);
    const std::int64_t q = static_cast<std::int64_t>(floor_div(int128{value.raw} + half, int128{1} << bits));
    return static_cast<std::int8_t>(std::clamp<std::int64_t>(q, -127, 127));
}

/// Copies the input window seen by output position `pos` into `out`
/// (length fan_in). FC layers have a single window: the flattened input.
/// CONV windows are ordered (channel, ky, kx) with zero padding.
inline void gather_window(const LayerDesc& layer, std::span<const std::int8_t> input, std::size_t pos,
                          std::span<std::int8_t> out) {
    if (layer.kind == LayerKind::fc) {
        std::copy(input.begin(), input.end(), out.begin());
        return;
    }
    const auto& g = layer.conv;
    const std::size_t oy = pos / g.out_width();
    const std::size_t ox = pos % g.out_width();
    const std::int64_t y0 = static_cast<std::int64_t>(oy * g.stride) - g.padding;
    const std::int64_t x0 = static_cast<std::int64_t>(ox * g.stride) - g.padding;
    std::size_t k = 0;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        const std::size_t plane = c * g.in_height * g.in_width;
        for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
            const std::int64_t y = y0 + ky;
            for (std::int64_t kx = 0; kx < g.kernel; ++kx, ++k) {
                const std::int64_t x = x0 + kx;
                const bool inside = y >= 0 && x >= 0 && y < g.in_height && x < g.in_width;
                out[k] = inside ? input[plane + static_cast<std::size_t>(y) * g.in_width + static_cast<std::size_t>(x)] : 0;
            }
        }
    }
}

/// Per-layer evaluation helper: folds batch norm once and evaluates
/// single output elements. Shared by the reference and hybrid engines so
/// both produce bit-identical values for evaluated neurons.
class LayerEvaluator {
public:
    explicit LayerEvaluator(const LayerDesc& layer) : layer_(&layer) {
        if (layer.bn) {
            folded_.reserve(layer.bn->size());
            for (const auto& ch : *layer.bn)
                folded_.push_back(BnAffine::fold(ch));
        }
    }

    const LayerDesc& layer() const { return *layer_; }

    /// Pre-batch-norm accumulator of one neuron on one window.
    std::int32_t accumulate(std::size_t neuron, std::span<const std::int8_t> window) const {
        return dot_product(layer_->weight_row(neuron), window);
    }

    /// ReLU input: BN(acc) + residual, in Q16.16.
    Fixed pre_activation(std::size_t neuron, std::int32_t acc, std::int8_t residual) const {
        Fixed v = folded_.empty() ? Fixed::from_int(acc) : folded_[neuron].apply(acc);
        if (layer_->residual_from)
            v = v + Fixed::from_int(residual);
        return v;
    }

    std::int8_t output_code(Fixed pre) const {
        return requantize(layer_->has_relu ? relu(pre) : pre, layer_->requant_shift);
    }

private:
    const LayerDesc* layer_;
    std::vector<BnAffine> folded_;
};

/// Pre-activations and outputs of one layer. Element (neuron n, position p)
/// lives at index n * positions + p.
struct LayerActivation {
    std::vector<Fixed> pre;
    QuantTensor out;

    friend bool operator==(const LayerActivation&, const LayerActivation&) = default;
};

struct ActivationRecord {
    std::vector<LayerActivation> layers;

    friend bool operator==(const ActivationRecord&, const ActivationRecord&) = default;
};

/// Residual operand of layer `l` given the activations computed so far.
inline const QuantTensor* residual_operand(const QuantModel& model, std::size_t l, const QuantTensor& input,
                                           std::span<const LayerActivation> done) {
    const auto& layer = model.layers[l];
    if (!layer.residual_from)
        return nullptr;
    return *layer.residual_from < 0 ? &input : &done[static_cast<std::size_t>(*layer.residual_from)].out;
}

inline LayerActivation forward_layer(const LayerDesc& layer, const QuantTensor& input, const QuantTensor* residual,
                                     Scale out_scale = {}) {
    if (layer.kind == LayerKind::fc && input.size() != layer.fan_in)
        throw StructuralError("forward_layer: input size does not match fan-in");
    if (layer.kind == LayerKind::conv && input.size() != numel({layer.conv.in_channels, layer.conv.in_height,
                                                                layer.conv.in_width}))
        throw StructuralError("forward_layer: input size does not match CONV geometry");
    if (layer.has_residual() && (residual == nullptr || residual->size() != layer.output_size()))
        throw StructuralError("forward_layer: residual operand missing or mis-shaped");

    const LayerEvaluator eval(layer);
    const std::size_t positions = layer.positions();
    LayerActivation act;
    act.pre.resize(layer.output_size());
    act.out = QuantTensor::zeros(layer.output_shape(), out_scale);

    std::vector<std::int8_t> window(layer.fan_in);
    for (std::size_t p = 0; p < positions; ++p) {
        gather_window(layer, input.data(), p, window);
        for (std::size_t n = 0; n < layer.out_features; ++n) {
            const std::size_t idx = n * positions + p;
            const std::int8_t res = residual ? (*residual)[idx] : std::int8_t{0};
            const Fixed pre = eval.pre_activation(n, eval.accumulate(n, window), res);
            act.pre[idx] = pre;
            act.out[idx] = eval.output_code(pre);
        }
    }
    return act;
}

/// Plain reference inference: every neuron evaluated at 8-bit precision.
inline ActivationRecord forward_reference(const QuantModel& model, const QuantTensor& input) {
    if (input.shape() != model.input_shape)
        throw StructuralError("forward_reference: input shape does not match model");
    ActivationRecord rec;
    rec.layers.reserve(model.layers.size());
    const QuantTensor* current = &input;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const QuantTensor* res = residual_operand(model, l, input, rec.layers);
        rec.layers.push_back(forward_layer(model.layers[l], *current, res, input.scale()));
        current = &rec.layers.back().out;
    }
    return rec;
}

/// Fraction of ReLU inputs that are negative across all ReLU layers.
inline double negative_relu_input_fraction(const QuantModel& model, const ActivationRecord& rec) {
    std::size_t neg = 0, total = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (!model.layers[l].has_relu)
            continue;
        for (auto v : rec.layers[l].pre) {
            neg += v.negative();
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(neg) / static_cast<double>(total);
}

} // namespace mor
