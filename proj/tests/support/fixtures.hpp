#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mor/model.hpp"
#include "mor/reference.hpp"
#include "mor/tensor.hpp"

namespace mor::testing {

using Rng = std::mt19937_64;
using boost::multiprecision::cpp_rational;
using boost::multiprecision::cpp_int;

inline std::vector<std::int8_t> random_codes(Rng& rng, std::size_t n, int lo = -127, int hi = 127) {
    std::uniform_int_distribution<int> d(lo, hi);
    std::vector<std::int8_t> v(n);
    for (auto& x : v)
        x = static_cast<std::int8_t>(d(rng));
    return v;
}

inline LayerDesc make_fc(std::uint32_t out, std::uint32_t in, std::vector<std::int8_t> w, bool relu = true) {
    LayerDesc l;
    l.kind = LayerKind::fc;
    l.out_features = out;
    l.fan_in = in;
    l.weights = std::move(w);
    l.has_relu = relu;
    return l;
}

inline LayerDesc make_conv(std::uint32_t filters, ConvGeometry g, std::vector<std::int8_t> w, bool relu = true) {
    LayerDesc l;
    l.kind = LayerKind::conv;
    l.out_features = filters;
    l.conv = g;
    l.fan_in = g.fan_in();
    l.weights = std::move(w);
    l.has_relu = relu;
    return l;
}

inline std::vector<BnChannel> random_bn(Rng& rng, std::size_t n, double acc_scale) {
    std::uniform_real_distribution<double> mu(-acc_scale, acc_scale), sigma(0.25 * acc_scale + 1, acc_scale + 2),
        gamma(0.2, 3.0), beta(-8.0, 8.0);
    std::vector<BnChannel> bn(n);
    for (auto& ch : bn) {
        ch.mean = Fixed::from_double(mu(rng));
        ch.stddev = Fixed::from_double(sigma(rng));
        ch.gamma = Fixed::from_double(gamma(rng));
        ch.beta = Fixed::from_double(beta(rng));
    }
    return bn;
}

struct RandomModelOptions {
    std::size_t min_layers = 2;
    std::size_t max_layers = 5;
    std::size_t max_neurons = 256;
    bool allow_conv = true;
    bool allow_bn = true;
    bool allow_residual = true;
};

/// Random valid model: optional CONV stem followed by FC layers, with
/// batch norm, residuals and a non-ReLU tail drawn at random.
inline QuantModel random_model(Rng& rng, const RandomModelOptions& opt = {}) {
    std::uniform_int_distribution<std::size_t> layers_d(opt.min_layers, opt.max_layers);
    std::bernoulli_distribution coin(0.5);
    const std::size_t n_layers = layers_d(rng);
    QuantModel m;

    const bool conv_stem = opt.allow_conv && coin(rng);
    std::size_t conv_layers = conv_stem ? std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(2, n_layers - 1))(rng) : 0;
    Shape shape;
    if (conv_stem) {
        const std::uint32_t c = std::uniform_int_distribution<std::uint32_t>(1, 4)(rng);
        const std::uint32_t hw = std::uniform_int_distribution<std::uint32_t>(4, 7)(rng);
        shape = {c, hw, hw};
    } else {
        shape = {std::uniform_int_distribution<std::size_t>(4, 96)(rng)};
    }
    m.input_shape = shape;

    for (std::size_t l = 0; l < n_layers; ++l) {
        LayerDesc layer;
        const bool last = l + 1 == n_layers;
        if (l < conv_layers) {
            ConvGeometry g;
            g.in_channels = static_cast<std::uint32_t>(shape[0]);
            g.in_height = static_cast<std::uint32_t>(shape[1]);
            g.in_width = static_cast<std::uint32_t>(shape[2]);
            g.kernel = std::min(std::uniform_int_distribution<std::uint32_t>(1, 3)(rng),
                                std::min(g.in_height, g.in_width));
            g.stride = std::uniform_int_distribution<std::uint32_t>(1, 2)(rng);
            g.padding = std::uniform_int_distribution<std::uint32_t>(0, g.kernel / 2)(rng);
            const std::uint32_t filters = std::uniform_int_distribution<std::uint32_t>(2, 16)(rng);
            layer = make_conv(filters, g, random_codes(rng, std::size_t{filters} * g.fan_in()));
        } else {
            const auto in = static_cast<std::uint32_t>(numel(shape));
            const auto out = static_cast<std::uint32_t>(
                std::uniform_int_distribution<std::size_t>(2, opt.max_neurons)(rng));
            layer = make_fc(out, in, random_codes(rng, std::size_t{out} * in));
        }
        layer.has_relu = !(last && coin(rng));
        // Keep activations in range: roughly divide by sqrt(fan_in) * 127 / 8.
        const double acc_scale = 40.0 * std::sqrt(static_cast<double>(layer.fan_in)) * 64.0;
        if (opt.allow_bn && coin(rng)) {
            layer.bn = random_bn(rng, layer.out_features, acc_scale);
        } else {
            const int bits = static_cast<int>(std::log2(acc_scale / 32.0));
            layer.requant_shift = static_cast<std::uint8_t>(std::clamp(bits, 0, 20));
        }
        const Shape out_shape = layer.output_shape();
        if (opt.allow_residual && coin(rng)) {
            std::vector<std::int32_t> candidates;
            for (std::int64_t src = -1; src < static_cast<std::int64_t>(l); ++src)
                if (m.activation_shape(src) == out_shape)
                    candidates.push_back(static_cast<std::int32_t>(src));
            if (!candidates.empty())
                layer.residual_from = candidates[rng() % candidates.size()];
        }
        m.layers.push_back(std::move(layer));
        shape = out_shape;
    }
    validate(m);
    return m;
}

inline QuantTensor random_input(Rng& rng, const Shape& shape, int lo = -127, int hi = 127) {
    return QuantTensor(shape, random_codes(rng, numel(shape), lo, hi));
}

inline std::vector<QuantTensor> random_inputs(Rng& rng, const Shape& shape, std::size_t n, int lo = -127,
                                              int hi = 127) {
    std::vector<QuantTensor> v;
    for (std::size_t i = 0; i < n; ++i)
        v.push_back(random_input(rng, shape, lo, hi));
    return v;
}

// ---------------------------------------------------------------------------
// Independent oracles: naive loops and exact rational arithmetic.

inline cpp_rational q16(Fixed f) { return cpp_rational(f.raw, 65536); }

inline cpp_int floor_rational(const cpp_rational& r) {
    cpp_int n = boost::multiprecision::numerator(r), d = boost::multiprecision::denominator(r);
    cpp_int q = n / d;
    if (n % d != 0 && n < 0)
        q -= 1;
    return q;
}

/// Exact ((acc - mu) / sigma) * gamma + beta as a rational.
inline cpp_rational bn_rational(std::int64_t acc, const BnChannel& ch) {
    return (cpp_rational(acc) - q16(ch.mean)) / q16(ch.stddev) * q16(ch.gamma) + q16(ch.beta);
}

struct NaiveLayerResult {
    std::vector<cpp_rational> pre;
    std::vector<std::int8_t> out;
};

inline std::int8_t naive_requant(const cpp_rational& v, bool relu, unsigned shift) {
    cpp_rational x = (relu && v < 0) ? cpp_rational(0) : v;
    x /= cpp_rational(cpp_int(1) << shift);
    cpp_int q = floor_rational(x + cpp_rational(1, 2));
    if (q > 127)
        q = 127;
    if (q < -127)
        q = -127;
    return static_cast<std::int8_t>(q.convert_to<int>());
}

inline NaiveLayerResult naive_layer(const LayerDesc& L, const std::vector<std::int8_t>& in,
                                    const std::vector<std::int8_t>* res) {
    NaiveLayerResult r;
    const std::size_t P = L.positions();
    r.pre.resize(L.out_features * P);
    r.out.resize(L.out_features * P);
    for (std::size_t f = 0; f < L.out_features; ++f) {
        for (std::size_t p = 0; p < P; ++p) {
            std::int64_t acc = 0;
            if (L.kind == LayerKind::fc) {
                for (std::size_t k = 0; k < L.fan_in; ++k)
                    acc += std::int64_t{L.weights[f * L.fan_in + k]} * in[k];
            } else {
                const auto& g = L.conv;
                const long oy = static_cast<long>(p / g.out_width()), ox = static_cast<long>(p % g.out_width());
                for (long c = 0; c < g.in_channels; ++c)
                    for (long ky = 0; ky < g.kernel; ++ky)
                        for (long kx = 0; kx < g.kernel; ++kx) {
                            const long y = oy * g.stride + ky - g.padding;
                            const long x = ox * g.stride + kx - g.padding;
                            if (y < 0 || x < 0 || y >= static_cast<long>(g.in_height) ||
                                x >= static_cast<long>(g.in_width))
                                continue;
                            const auto w = L.weights[f * L.fan_in + (c * g.kernel + ky) * g.kernel + kx];
                            acc += std::int64_t{w} * in[(c * g.in_height + y) * g.in_width + x];
                        }
            }
            cpp_rational v = L.bn ? bn_rational(acc, (*L.bn)[f]) : cpp_rational(acc);
            const std::size_t idx = f * P + p;
            if (res)
                v += (*res)[idx];
            r.pre[idx] = v;
            r.out[idx] = naive_requant(v, L.has_relu, L.requant_shift);
        }
    }
    return r;
}

/// Whole-model naive oracle; returns each layer's output codes.
inline std::vector<NaiveLayerResult> naive_forward(const QuantModel& m, const QuantTensor& input) {
    std::vector<NaiveLayerResult> out;
    const std::vector<std::int8_t> x0(input.data().begin(), input.data().end());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& L = m.layers[l];
        const std::vector<std::int8_t>& in = l == 0 ? x0 : out[l - 1].out;
        const std::vector<std::int8_t>* res = nullptr;
        if (L.residual_from)
            res = *L.residual_from < 0 ? &x0 : &out[static_cast<std::size_t>(*L.residual_from)].out;
        out.push_back(naive_layer(L, in, res));
    }
    return out;
}

} // namespace mor::testing

namespace mor::testing {

/// Layer whose neurons come in groups of parallel weight vectors, all of
/// the form scale * sign_pattern(group). Fed with inputs of constant
/// magnitude, each neuron's 8-bit dot product is an exact multiple of its
/// binary dot product (c = 1), and the closest neighbour of every neuron
/// sits in its own group at 0 degrees.
struct AffineFixture {
    QuantModel model;
    std::size_t groups = 0;
    std::size_t per_group = 0;
    std::int8_t input_magnitude = 5;
    double positive_input_prob = 0.5;
    std::vector<std::vector<std::int8_t>> patterns;

    QuantTensor sample(Rng& rng) const {
        std::bernoulli_distribution pos(positive_input_prob);
        const std::size_t k = model.layers[0].fan_in;
        std::vector<std::int8_t> x(k);
        for (auto& v : x)
            v = pos(rng) ? input_magnitude : static_cast<std::int8_t>(-input_magnitude);
        return QuantTensor(model.input_shape, std::move(x));
    }

    std::vector<QuantTensor> samples(Rng& rng, std::size_t n) const {
        std::vector<QuantTensor> v;
        for (std::size_t i = 0; i < n; ++i)
            v.push_back(sample(rng));
        return v;
    }
};

/// `fan_in` should be odd so binary dot products (and hence outputs) are never 0.
inline AffineFixture affine_fixture(Rng& rng, std::size_t groups, std::size_t per_group, std::uint32_t fan_in,
                                    double negative_weight_prob = 0.5, double positive_input_prob = 0.5,
                                    bool with_tail = false) {
    AffineFixture fx;
    fx.groups = groups;
    fx.per_group = per_group;
    fx.positive_input_prob = positive_input_prob;
    std::bernoulli_distribution neg(negative_weight_prob);
    std::uniform_int_distribution<int> mult(1, 3);
    const auto n = static_cast<std::uint32_t>(groups * per_group);
    std::vector<std::int8_t> w;
    w.reserve(std::size_t{n} * fan_in);
    for (std::size_t g = 0; g < groups; ++g) {
        std::vector<std::int8_t> pat(fan_in);
        for (auto& s : pat)
            s = neg(rng) ? -1 : 1;
        fx.patterns.push_back(pat);
        for (std::size_t j = 0; j < per_group; ++j) {
            const int k = 10 * mult(rng);
            for (auto s : pat)
                w.push_back(static_cast<std::int8_t>(s * k));
        }
    }
    fx.model.input_shape = {fan_in};
    auto layer = make_fc(n, fan_in, std::move(w));
    fx.model.layers.push_back(layer);
    if (with_tail)
        fx.model.layers.push_back(make_fc(4, n, random_codes(rng, 4 * std::size_t{n}), false));
    validate(fx.model);
    return fx;
}

} // namespace mor::testing

namespace mor::testing {

/// High-sparsity workload: parallel weight groups (0 degree clusters, c = 1)
/// with inputs biased so most pre-activations are negative.
inline AffineFixture sparse_workload(Rng& rng, std::size_t groups = 16, std::size_t per_group = 16,
                                     std::uint32_t fan_in = 255) {
    return affine_fixture(rng, groups, per_group, fan_in, 0.6, 0.6, true);
}

} // namespace mor::testing
