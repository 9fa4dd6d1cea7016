#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mor/calibration.hpp"
#include "mor/clustering.hpp"
#include "mor/io/bytes.hpp"
#include "mor/model.hpp"

namespace mor::io {

inline constexpr std::uint16_t container_version = 1;
inline constexpr std::uint8_t little_endian_tag = 1;

/// Model plus the optional offline products stored with it.
struct ModelBundle {
    QuantModel model;
    std::optional<ClusterPlan> plan;
    std::optional<PredictorTable> table;

    friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

/// Seven-bit magnitudes then one sign bit per weight, as one LSB-first
/// bitstream of exactly `w.size()` bytes.
inline std::vector<std::uint8_t> pack_member_row(std::span<const std::int8_t> w) {
    const std::size_t K = w.size();
    std::vector<std::uint8_t> out(K, 0);
    auto put_bit = [&](std::size_t bit, bool v) {
        if (v)
            out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    };
    for (std::size_t j = 0; j < K; ++j) {
        if (w[j] == -128)
            throw StructuralError("weight code -128 cannot be stored in seven bits");
        const unsigned mag = static_cast<unsigned>(w[j] < 0 ? -w[j] : w[j]);
        for (unsigned b = 0; b < 7; ++b)
            put_bit(7 * j + b, (mag >> b) & 1u);
        put_bit(7 * K + j, w[j] < 0);
    }
    return out;
}

/// Inverse of pack_member_row. Returns false for a negative zero.
inline bool unpack_member_row(std::span<const std::uint8_t> in, std::span<std::int8_t> w) {
    const std::size_t K = w.size();
    auto bit = [&](std::size_t i) { return (in[i / 8] >> (i % 8)) & 1u; };
    for (std::size_t j = 0; j < K; ++j) {
        unsigned mag = 0;
        for (unsigned b = 0; b < 7; ++b)
            mag |= bit(7 * j + b) << b;
        const bool neg = bit(7 * K + j);
        if (neg && mag == 0)
            return false;
        w[j] = static_cast<std::int8_t>(neg ? -static_cast<int>(mag) : static_cast<int>(mag));
    }
    return true;
}

namespace detail {

enum : std::uint8_t { header_clustered = 1, header_calibrated = 2 };
enum : std::uint8_t { layer_relu = 1, layer_bn = 2, layer_residual = 4 };
enum : std::uint8_t { param_enabled = 1, param_degenerate = 2 };

inline void check_bundle(const ModelBundle& b) {
    validate(b.model);
    if (b.model.input_shape.size() > 255)
        throw StructuralError("input rank exceeds 255");
    if (b.plan)
        validate_plan(*b.plan, b.model);
    if (b.table) {
        if (b.table->layers.size() != b.model.layers.size())
            throw StructuralError("predictor table does not match the model");
        for (std::size_t l = 0; l < b.model.layers.size(); ++l)
            if (b.table->layers[l].size() != b.model.layers[l].out_features)
                throw StructuralError("predictor table does not cover layer " + std::to_string(l));
    }
    for (const auto& c : b.plan ? b.plan->layers : std::vector<LayerClusters>{})
        for (const auto& cl : c.clusters)
            if (cl.members.size() > 0xFFFF)
                throw StructuralError("cluster larger than 65535 members");
}

} // namespace detail

inline std::vector<std::uint8_t> serialize(const ModelBundle& b) {
    detail::check_bundle(b);
    const QuantModel& m = b.model;
    ByteWriter w;
    w.tag("MORK");
    w.put<std::uint16_t>(container_version);
    w.put<std::uint8_t>(little_endian_tag);
    w.put<std::uint8_t>((b.plan ? detail::header_clustered : 0) | (b.table ? detail::header_calibrated : 0));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.layers.size()));
    w.put<double>(b.table ? b.table->threshold : 0.0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(m.input_shape.size()));
    w.put<std::uint8_t>(0);
    w.put<std::uint16_t>(0);
    w.put<std::int32_t>(m.input_scale.num);
    w.put<std::int32_t>(m.input_scale.den);
    for (auto d : m.input_shape)
        w.put<std::uint32_t>(static_cast<std::uint32_t>(d));

    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const LayerDesc& L = m.layers[l];
        const LayerClusters lc = b.plan ? b.plan->layers[l] : LayerClusters::all_singletons(L.out_features);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(L.kind));
        w.put<std::uint8_t>((L.has_relu ? detail::layer_relu : 0) | (L.bn ? detail::layer_bn : 0) |
                            (L.has_residual() ? detail::layer_residual : 0));
        w.put<std::uint8_t>(L.requant_shift);
        w.put<std::uint8_t>(0);
        w.put<std::int32_t>(L.residual_from.value_or(0));
        w.put<std::uint32_t>(L.out_features);
        w.put<std::uint32_t>(L.fan_in);
        for (auto v : {L.conv.in_channels, L.conv.in_height, L.conv.in_width, L.conv.kernel, L.conv.stride,
                       L.conv.padding})
            w.put<std::uint32_t>(v);
        w.put<std::int32_t>(L.weight_scale.num);
        w.put<std::int32_t>(L.weight_scale.den);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(lc.clusters.size() + lc.singletons.size()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(lc.member_count()));

        for (const auto& c : lc.clusters) {
            w.put<std::uint32_t>(c.proxy);
            w.put<std::uint16_t>(static_cast<std::uint16_t>(c.members.size()));
            w.bytes(L.weight_row(c.proxy));
        }
        for (auto s : lc.singletons) {
            w.put<std::uint32_t>(s);
            w.put<std::uint16_t>(0);
            w.bytes(L.weight_row(s));
        }
        for (const auto& c : lc.clusters)
            for (auto mem : c.members) {
                w.bytes(pack_member_row(L.weight_row(mem)));
                w.put<std::uint32_t>(mem);
            }
        if (b.table)
            for (const auto& p : b.table->layers[l]) {
                w.put<std::int64_t>(q32::encode(p.c));
                w.put<std::int64_t>(q32::encode(p.m));
                w.put<std::int64_t>(q32::encode(p.b));
                w.put<std::uint8_t>((p.enabled ? detail::param_enabled : 0) |
                                    (p.degenerate ? detail::param_degenerate : 0));
            }
        if (L.bn)
            for (const auto& ch : *L.bn)
                for (auto f : {ch.mean, ch.stddev, ch.gamma, ch.beta})
                    w.put<std::int64_t>(f.raw);
    }
    return w.take();
}

inline ModelBundle deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_tag("MORK", "magic");
    const std::size_t version_at = r.offset();
    if (r.get<std::uint16_t>("version") != container_version)
        r.fail("unsupported container version", version_at);
    if (r.get<std::uint8_t>("endianness tag") != little_endian_tag)
        r.fail("unsupported endianness tag", version_at + 2);
    const std::size_t flags_at = r.offset();
    const auto flags = r.get<std::uint8_t>("header flags");
    if (flags & ~(detail::header_clustered | detail::header_calibrated))
        r.fail("unknown header flags", flags_at);
    const auto layer_count = r.get<std::uint32_t>("layer count");
    const auto threshold = r.get<double>("threshold");
    const auto rank = r.get<std::uint8_t>("input rank");
    r.get<std::uint8_t>("reserved");
    r.get<std::uint16_t>("reserved");

    ModelBundle b;
    QuantModel& m = b.model;
    m.input_scale.num = r.get<std::int32_t>("input scale");
    m.input_scale.den = r.get<std::int32_t>("input scale");
    for (unsigned i = 0; i < rank; ++i)
        m.input_shape.push_back(r.get<std::uint32_t>("input dims"));

    if (flags & detail::header_clustered)
        b.plan.emplace();
    if (flags & detail::header_calibrated) {
        b.table.emplace();
        b.table->threshold = threshold;
    }

    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::size_t layer_at = r.offset();
        LayerDesc L;
        const auto kind = r.get<std::uint8_t>("layer kind");
        if (kind > 1)
            r.fail("unknown layer kind", layer_at);
        L.kind = static_cast<LayerKind>(kind);
        const auto lflags = r.get<std::uint8_t>("layer flags");
        if (lflags & ~(detail::layer_relu | detail::layer_bn | detail::layer_residual))
            r.fail("unknown layer flags", layer_at + 1);
        L.has_relu = lflags & detail::layer_relu;
        L.requant_shift = r.get<std::uint8_t>("requant shift");
        r.get<std::uint8_t>("reserved");
        const auto residual = r.get<std::int32_t>("residual source");
        if (lflags & detail::layer_residual)
            L.residual_from = residual;
        L.out_features = r.get<std::uint32_t>("neuron count");
        L.fan_in = r.get<std::uint32_t>("fan-in");
        for (auto* v : {&L.conv.in_channels, &L.conv.in_height, &L.conv.in_width, &L.conv.kernel, &L.conv.stride,
                        &L.conv.padding})
            *v = r.get<std::uint32_t>("conv geometry");
        L.weight_scale.num = r.get<std::int32_t>("weight scale");
        L.weight_scale.den = r.get<std::int32_t>("weight scale");
        const std::size_t counts_at = r.offset();
        const auto proxy_count = r.get<std::uint32_t>("proxy count");
        const auto member_count = r.get<std::uint32_t>("member count");
        const std::uint64_t N = L.out_features, K = L.fan_in;
        if (K > max_fan_in)
            r.fail("fan-in exceeds the accumulator limit", layer_at + 12);
        if (std::uint64_t{proxy_count} + member_count != N)
            r.fail("proxy and member counts do not add up to the neuron count", counts_at);
        // Cheap bound before allocating: every row holds at least K bytes.
        if (N * K > r.remaining())
            r.fail("layer weights exceed the remaining input", counts_at);

        L.weights.assign(N * K, 0);
        std::vector<std::uint8_t> seen(N, 0);
        auto claim = [&](std::uint32_t idx, std::size_t at) {
            if (idx >= N)
                r.fail("neuron index out of range", at);
            if (seen[idx]++)
                r.fail("neuron stored twice", at);
        };
        LayerClusters lc;
        lc.neuron_count = L.out_features;
        std::vector<std::uint16_t> sizes;
        std::uint64_t announced = 0;
        for (std::uint32_t i = 0; i < proxy_count; ++i) {
            const std::size_t row_at = r.offset();
            const auto idx = r.get<std::uint32_t>("proxy index");
            const auto size = r.get<std::uint16_t>("cluster size");
            claim(idx, row_at);
            const auto row = r.bytes(K, "proxy weights");
            for (std::size_t j = 0; j < K; ++j) {
                const auto v = static_cast<std::int8_t>(row[j]);
                if (v == -128)
                    r.fail("weight code -128", row_at + 6 + j);
                L.weights[idx * K + j] = v;
            }
            if (size > 0) {
                if (!lc.singletons.empty())
                    r.fail("cluster proxy stored after a singleton", row_at);
                lc.clusters.push_back({idx, {}});
                sizes.push_back(size);
                announced += size;
            } else {
                lc.singletons.push_back(idx);
            }
        }
        if (announced != member_count)
            r.fail("cluster sizes do not add up to the member count", counts_at + 4);
        std::size_t cluster = 0;
        std::vector<std::int8_t> row(K);
        for (std::uint32_t i = 0; i < member_count; ++i) {
            const std::size_t row_at = r.offset();
            const auto packed = r.bytes(K, "member weights");
            const auto idx = r.get<std::uint32_t>("member index");
            claim(idx, row_at + K);
            if (!unpack_member_row(packed, row))
                r.fail("negative zero weight in member row", row_at);
            std::copy(row.begin(), row.end(), L.weights.begin() + static_cast<std::ptrdiff_t>(idx * K));
            while (lc.clusters[cluster].members.size() == sizes[cluster])
                ++cluster;
            auto& members = lc.clusters[cluster].members;
            if (!members.empty() && members.back() >= idx)
                r.fail("cluster members not in ascending order", row_at + K);
            members.push_back(idx);
        }
        if (b.plan)
            b.plan->layers.push_back(std::move(lc));
        else if (member_count != 0)
            r.fail("member rows in an unclustered container", counts_at + 4);

        if (b.table) {
            auto& params = b.table->layers.emplace_back(N);
            for (auto& p : params) {
                p.c = q32::decode(r.get<std::int64_t>("predictor c"));
                p.m = q32::decode(r.get<std::int64_t>("predictor m"));
                p.b = q32::decode(r.get<std::int64_t>("predictor b"));
                const std::size_t pf_at = r.offset();
                const auto pf = r.get<std::uint8_t>("predictor flags");
                if (pf & ~(detail::param_enabled | detail::param_degenerate))
                    r.fail("unknown predictor flags", pf_at);
                p.enabled = pf & detail::param_enabled;
                p.degenerate = pf & detail::param_degenerate;
            }
        }
        if (lflags & detail::layer_bn) {
            auto& bn = L.bn.emplace(N);
            for (auto& ch : bn)
                for (auto* f : {&ch.mean, &ch.stddev, &ch.gamma, &ch.beta})
                    *f = Fixed::from_raw(r.get<std::int64_t>("batch norm"));
        }
        m.layers.push_back(std::move(L));
        try {
            validate_layer(m.layers.back(), m.activation_shape(static_cast<std::int64_t>(l) - 1), l);
        } catch (const std::exception& e) {
            r.fail(std::string("invalid layer: ") + e.what(), layer_at);
        }
    }
    if (r.remaining() != 0)
        r.fail("trailing bytes after the last layer");
    try {
        validate(m);
    } catch (const std::exception& e) {
        r.fail(std::string("invalid model: ") + e.what(), 0);
    }
    return b;
}

inline void save_model(const std::string& path, const ModelBundle& b) { write_file(path, serialize(b)); }

inline ModelBundle load_model(const std::string& path) { return deserialize(read_file(path)); }

/// Fingerprint of a serialized container.
inline std::uint64_t model_hash(const ModelBundle& b) { return fnv1a64(serialize(b)); }

} // namespace mor::io
