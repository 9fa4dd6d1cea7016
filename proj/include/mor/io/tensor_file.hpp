#pragma once

#include <span>
#include <string>
#include <vector>

#include "mor/io/bytes.hpp"
#include "mor/tensor.hpp"

namespace mor::io {

inline constexpr std::uint8_t dtype_int8 = 1;

/// Raw contents of a tensor file. The first dimension counts samples.
struct TensorFile {
    Shape shape;
    std::vector<std::int8_t> data;

    friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

inline std::vector<std::uint8_t> serialize_tensor(const TensorFile& t) {
    if (t.shape.empty() || t.shape.size() > 255)
        throw StructuralError("tensor rank must lie in [1, 255]");
    if (numel(t.shape) != t.data.size())
        throw StructuralError("tensor data length does not match shape");
    ByteWriter w;
    w.tag("MORT");
    w.put<std::uint8_t>(dtype_int8);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    w.put<std::uint16_t>(0);
    w.put<std::uint64_t>(t.data.size());
    for (auto d : t.shape) {
        if (d > 0xFFFFFFFFu)
            throw StructuralError("tensor dimension exceeds 32 bits");
        w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.bytes(std::span<const std::int8_t>(t.data));
    return w.take();
}

inline TensorFile deserialize_tensor(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_tag("MORT", "magic");
    if (r.get<std::uint8_t>("dtype") != dtype_int8)
        r.fail("unsupported dtype", 4);
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0)
        r.fail("rank must be at least 1", 5);
    if (r.get<std::uint16_t>("reserved") != 0)
        r.fail("reserved field must be zero", 6);
    const auto count = r.get<std::uint64_t>("element count");
    TensorFile t;
    std::uint64_t product = 1;
    bool overflow = false;
    for (unsigned i = 0; i < rank; ++i) {
        const std::uint64_t d = r.get<std::uint32_t>("dims");
        t.shape.push_back(d);
        if (d != 0 && product > UINT64_MAX / d)
            overflow = true;
        else
            product *= d;
    }
    if (overflow || product != count)
        r.fail("element count does not match dims", 8);
    const auto body = r.bytes(count, "tensor data");
    t.data.assign(reinterpret_cast<const std::int8_t*>(body.data()),
                  reinterpret_cast<const std::int8_t*>(body.data()) + body.size());
    if (r.remaining() != 0)
        r.fail("trailing bytes after tensor data");
    return t;
}

/// Packs equally shaped samples under a leading sample dimension.
inline TensorFile stack_samples(std::span<const QuantTensor> samples) {
    if (samples.empty())
        throw ConfigError("no samples to store");
    TensorFile t;
    t.shape.push_back(samples.size());
    t.shape.insert(t.shape.end(), samples[0].shape().begin(), samples[0].shape().end());
    for (const auto& s : samples) {
        if (s.shape() != samples[0].shape())
            throw StructuralError("samples differ in shape");
        t.data.insert(t.data.end(), s.data().begin(), s.data().end());
    }
    return t;
}

inline std::vector<QuantTensor> split_samples(const TensorFile& t, Scale scale = {}) {
    if (t.shape.size() < 2)
        throw StructuralError("sample file needs a leading sample dimension");
    const Shape inner(t.shape.begin() + 1, t.shape.end());
    const std::size_t n = numel(inner);
    std::vector<QuantTensor> out;
    for (std::size_t i = 0; i < t.shape[0]; ++i)
        out.emplace_back(inner, std::vector<std::int8_t>(t.data.begin() + static_cast<std::ptrdiff_t>(i * n),
                                                         t.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)),
                         scale);
    return out;
}

inline void save_tensor(const std::string& path, const TensorFile& t) { write_file(path, serialize_tensor(t)); }
inline TensorFile load_tensor(const std::string& path) { return deserialize_tensor(read_file(path)); }

} // namespace mor::io
