#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "errors.hpp"

namespace mor {

/// Sign of an int8 code as used by the binarized network: 0 maps to +1.
constexpr std::int8_t sign_of(std::int8_t v) { return v < 0 ? std::int8_t{-1} : std::int8_t{1}; }

inline std::vector<std::int8_t> binarize_vector(std::span<const std::int8_t> v) {
    std::vector<std::int8_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = sign_of(v[i]);
    return out;
}

/// Dot product of two +/-1 vectors.
inline std::int32_t binary_dot(std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
    if (a.size() != b.size())
        throw StructuralError("binary_dot: length mismatch");
    if (a.empty())
        throw StructuralError("binary_dot: empty vectors");
    std::int32_t acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += (sign_of(a[i]) == sign_of(b[i])) ? 1 : -1;
    return acc;
}

/// Sign bits packed 64 per word; bit set means negative.
class PackedSigns {
public:
    PackedSigns() = default;

    explicit PackedSigns(std::span<const std::int8_t> v) { assign(v); }

    void assign(std::span<const std::int8_t> v) {
        size_ = v.size();
        words_.assign((size_ + 63) / 64, 0);
        for (std::size_t i = 0; i < size_; ++i)
            if (v[i] < 0)
                words_[i / 64] |= std::uint64_t{1} << (i % 64);
    }

    std::size_t size() const noexcept { return size_; }
    std::span<const std::uint64_t> words() const noexcept { return words_; }

    bool negative(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }

private:
    std::size_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

/// XNOR/popcount form: n - 2 * popcount(a xor b).
inline std::int32_t binary_dot(const PackedSigns& a, const PackedSigns& b) {
    if (a.size() != b.size())
        throw StructuralError("binary_dot: length mismatch");
    if (a.size() == 0)
        throw StructuralError("binary_dot: empty vectors");
    const auto wa = a.words();
    const auto wb = b.words();
    std::int32_t differ = 0;
    for (std::size_t i = 0; i < wa.size(); ++i)
        differ += std::popcount(wa[i] ^ wb[i]);
    return static_cast<std::int32_t>(a.size()) - 2 * differ;
}

} // namespace mor
