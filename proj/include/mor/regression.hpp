#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include "errors.hpp"
#include "fixed.hpp"

namespace mor {

struct Correlation {
    double c = 0.0;
    bool degenerate = false; // zero variance on either side; c is then 0
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw StructuralError("pearson: series length mismatch");
    if (x.size() < 2)
        throw StructuralError("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        return {0.0, true};
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

inline LineFit linfit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw StructuralError("linfit: series length mismatch");
    if (x.size() < 2)
        throw StructuralError("linfit: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        sxx += dx * dx;
        sxy += dx * (y[i] - my);
    }
    if (sxx == 0.0)
        throw DegenerateFit("linfit: regressor has zero variance");
    const double m = sxy / sxx;
    return {m, my - m * mx};
}

/// Streaming first/second moments of an integer series pair, kept exact in
/// 128-bit integers so the result does not depend on accumulation order.
class MomentAccumulator {
public:
    void add(std::int64_t x, std::int64_t y) {
        ++n_;
        sx_ += x;
        sy_ += y;
        sxx_ += int128{x} * x;
        syy_ += int128{y} * y;
        sxy_ += int128{x} * y;
    }

    std::int64_t count() const { return n_; }

    Correlation correlation() const {
        if (n_ < 2)
            throw StructuralError("pearson: need at least two points");
        const int128 cxx = centered_xx(), cyy = centered_yy();
        if (cxx == 0 || cyy == 0)
            return {0.0, true};
        const long double c =
            static_cast<long double>(centered_xy()) /
            std::sqrt(static_cast<long double>(cxx) * static_cast<long double>(cyy));
        return {std::clamp(static_cast<double>(c), -1.0, 1.0), false};
    }

    LineFit fit() const {
        if (n_ < 2)
            throw StructuralError("linfit: need at least two points");
        const int128 cxx = centered_xx();
        if (cxx == 0)
            throw DegenerateFit("linfit: regressor has zero variance");
        const long double m = static_cast<long double>(centered_xy()) / static_cast<long double>(cxx);
        const long double b =
            (static_cast<long double>(sy_) - m * static_cast<long double>(sx_)) / static_cast<long double>(n_);
        return {static_cast<double>(m), static_cast<double>(b)};
    }

private:
    // n * sum(a b) - sum(a) sum(b): n^2 times the centered co-moment.
    int128 centered_xx() const { return int128{n_} * sxx_ - sx_ * sx_; }
    int128 centered_yy() const { return int128{n_} * syy_ - sy_ * sy_; }
    int128 centered_xy() const { return int128{n_} * sxy_ - sx_ * sy_; }

    std::int64_t n_ = 0;
    int128 sx_ = 0, sy_ = 0, sxx_ = 0, syy_ = 0, sxy_ = 0;
};

} // namespace mor
