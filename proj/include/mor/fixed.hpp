#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>

namespace mor {

using int128 = __int128;

/// Floor division for signed 128-bit operands, `den` must be positive.
constexpr int128 floor_div(int128 num, int128 den) {
    int128 q = num / den;
    if ((num % den != 0) && (num < 0))
        --q;
    return q;
}

/// Signed Q16.16 value stored in 64 bits so accumulators never wrap.
/// Used for batch-norm outputs and pre-ReLU activations.
struct Fixed {
    static constexpr int frac_bits = 16;
    static constexpr std::int64_t one = std::int64_t{1} << frac_bits;

    std::int64_t raw = 0;

    static constexpr Fixed from_raw(std::int64_t r) { return Fixed{r}; }
    static constexpr Fixed from_int(std::int64_t v) { return Fixed{v * one}; }
    static Fixed from_double(double v) { return Fixed{static_cast<std::int64_t>(std::llround(v * one))}; }

    constexpr double to_double() const { return static_cast<double>(raw) / one; }

    constexpr bool negative() const { return raw < 0; }

    friend constexpr Fixed operator+(Fixed a, Fixed b) { return Fixed{a.raw + b.raw}; }
    friend constexpr Fixed operator-(Fixed a, Fixed b) { return Fixed{a.raw - b.raw}; }
    friend constexpr auto operator<=>(Fixed, Fixed) = default;
};

/// Q32.32 encoding used for the predictor parameter table.
namespace q32 {

inline constexpr int frac_bits = 32;
inline constexpr double scale = 4294967296.0;

inline std::int64_t encode(double v) {
    const double s = v * scale;
    constexpr double lim = 9.2e18;
    if (!(s < lim))
        return std::numeric_limits<std::int64_t>::max();
    if (!(s > -lim))
        return std::numeric_limits<std::int64_t>::min();
    return static_cast<std::int64_t>(std::llround(s));
}

inline constexpr double decode(std::int64_t raw) { return static_cast<double>(raw) / scale; }

/// Round-trip a double through the table encoding.
inline double quantize(double v) { return decode(encode(v)); }

} // namespace q32

} // namespace mor
