#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "errors.hpp"

namespace mor {

/// Sign quadrant of (C.A, C.B) for a random input direction C.
enum class SignRegion : std::uint8_t { pp = 0, mm = 1, pm = 2, mp = 3 };

inline constexpr std::array<SignRegion, 4> all_sign_regions{SignRegion::pp, SignRegion::mm, SignRegion::pm,
                                                            SignRegion::mp};

/// Angle in degrees between two vectors. Evaluated as
/// 2 atan2(|a^ - b^|, |a^ + b^|) on the normalized vectors, which equals
/// arccos(a.b / |a||b|) but stays accurate near 0 and 180 degrees.
template <typename T>
double cosine_angle(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw StructuralError("cosine_angle: length mismatch");
    double na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0)
        throw InvalidParameter("cosine_angle: zero-norm vector has no angle");
    if constexpr (std::is_integral_v<T>) {
        // Exact collinearity test, so parallel integer rows get exactly 0.
        __int128 dot = 0, ia = 0, ib = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += static_cast<__int128>(a[i]) * b[i];
            ia += static_cast<__int128>(a[i]) * a[i];
            ib += static_cast<__int128>(b[i]) * b[i];
        }
        if (dot * dot == ia * ib)
            return dot > 0 ? 0.0 : 180.0;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    double diff = 0, sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]) / na, y = static_cast<double>(b[i]) / nb;
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * 180.0 / std::numbers::pi;
}

inline double cosine_angle(std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
    return cosine_angle<std::int8_t>(a, b);
}

/// Probability that a direction drawn uniformly from the unit sphere lands
/// in `region` for two vectors `theta_deg` apart: theta/360 for the mixed
/// sign regions, 1/2 - theta/360 for the same-sign ones.
inline double sign_region_probability(double theta_deg, SignRegion region) {
    if (!(theta_deg >= 0.0 && theta_deg <= 180.0))
        throw DomainError("sign_region_probability: theta must lie in [0, 180]");
    const double mixed = theta_deg / 360.0;
    return (region == SignRegion::pm || region == SignRegion::mp) ? mixed : 0.5 - mixed;
}

struct RegionFrequencies {
    std::array<double, 4> freq{}; // indexed by SignRegion
    std::size_t samples = 0;

    double operator[](SignRegion r) const { return freq[static_cast<std::size_t>(r)]; }
};

/// Empirical check of the sign-region law. Two unit vectors A, B with angle
/// theta are placed in a random 2-plane of R^dim; C is a standard Gaussian
/// vector, whose direction is uniform on the sphere (normalizing C would not
/// change any sign). Ties C.x == 0 count as positive.
inline RegionFrequencies monte_carlo_sign_probability(double theta_deg, std::size_t dim, std::size_t n_samples,
                                                      std::uint64_t seed) {
    if (!(theta_deg >= 0.0 && theta_deg <= 180.0))
        throw DomainError("monte_carlo_sign_probability: theta must lie in [0, 180]");
    if (dim < 2)
        throw DomainError("monte_carlo_sign_probability: dim must be at least 2");
    if (n_samples == 0)
        throw DomainError("monte_carlo_sign_probability: need at least one sample");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto normalize = [](std::vector<double>& v) {
        double s = 0;
        for (double x : v)
            s += x * x;
        s = std::sqrt(s);
        for (double& x : v)
            x /= s;
    };

    std::vector<double> a(dim), u(dim), b(dim), c(dim);
    for (auto& x : a)
        x = gauss(rng);
    normalize(a);
    double proj = 0;
    do {
        for (auto& x : u)
            x = gauss(rng);
        proj = 0;
        for (std::size_t i = 0; i < dim; ++i)
            proj += u[i] * a[i];
        for (std::size_t i = 0; i < dim; ++i)
            u[i] -= proj * a[i];
        double s = 0;
        for (double x : u)
            s += x * x;
        if (s > 1e-12)
            break;
    } while (true);
    normalize(u);

    const double rad = theta_deg * std::numbers::pi / 180.0;
    // Exact endpoints so parallel / antiparallel placements carry no residue.
    const double cs = theta_deg == 0.0 ? 1.0 : theta_deg == 180.0 ? -1.0 : theta_deg == 90.0 ? 0.0 : std::cos(rad);
    const double sn = (theta_deg == 0.0 || theta_deg == 180.0) ? 0.0 : theta_deg == 90.0 ? 1.0 : std::sin(rad);
    for (std::size_t i = 0; i < dim; ++i)
        b[i] = cs * a[i] + sn * u[i];

    std::array<std::size_t, 4> counts{};
    for (std::size_t s = 0; s < n_samples; ++s) {
        double ca = 0, cb = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double g = gauss(rng);
            ca += g * a[i];
            cb += g * b[i];
        }
        const bool pa = ca >= 0.0, pb = cb >= 0.0;
        const SignRegion r = pa ? (pb ? SignRegion::pp : SignRegion::pm) : (pb ? SignRegion::mp : SignRegion::mm);
        counts[static_cast<std::size_t>(r)]++;
    }

    RegionFrequencies out;
    out.samples = n_samples;
    for (std::size_t i = 0; i < 4; ++i)
        out.freq[i] = static_cast<double>(counts[i]) / static_cast<double>(n_samples);
    return out;
}

/// Histogram of angles in `bin_deg`-wide buckets over [0, 180].
inline std::vector<std::size_t> angle_histogram(std::span<const double> angles, double bin_deg = 10.0) {
    const auto bins = static_cast<std::size_t>(std::ceil(180.0 / bin_deg));
    std::vector<std::size_t> hist(bins, 0);
    for (double a : angles) {
        auto i = static_cast<std::size_t>(a / bin_deg);
        hist[std::min(i, bins - 1)]++;
    }
    return hist;
}

} // namespace mor
