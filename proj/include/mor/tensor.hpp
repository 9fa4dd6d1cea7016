#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "errors.hpp"

namespace mor {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Rational scale binding integer codes to real values: real = code * num / den.
struct Scale {
    std::int32_t num = 1;
    std::int32_t den = 1;

    friend bool operator==(const Scale&, const Scale&) = default;
};

/// Dense int8 tensor in row-major order.
class QuantTensor {
public:
    QuantTensor() = default;

    QuantTensor(Shape shape, std::vector<std::int8_t> data, Scale scale = {})
        : shape_(std::move(shape)), data_(std::move(data)), scale_(scale) {
        if (data_.size() != numel(shape_))
            throw StructuralError("tensor data length does not match shape");
        if (scale_.den <= 0)
            throw InvalidParameter("tensor scale denominator must be positive");
    }

    static QuantTensor zeros(Shape shape, Scale scale = {}) {
        std::vector<std::int8_t> data(numel(shape), 0);
        return QuantTensor(std::move(shape), std::move(data), scale);
    }

    const Shape& shape() const noexcept { return shape_; }
    const Scale& scale() const noexcept { return scale_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const std::int8_t> data() const noexcept { return data_; }
    std::span<std::int8_t> data() noexcept { return data_; }

    std::int8_t operator[](std::size_t i) const { return data_[i]; }
    std::int8_t& operator[](std::size_t i) { return data_[i]; }

    friend bool operator==(const QuantTensor&, const QuantTensor&) = default;

private:
    Shape shape_;
    std::vector<std::int8_t> data_;
    Scale scale_;
};

/// Symmetric int8 code for a real value; -128 is never produced so the
/// magnitude always fits in seven bits.
inline std::int8_t quantize_symmetric(double value, double step) {
    const double q = std::nearbyint(value / step);
    if (q > 127.0)
        return 127;
    if (q < -127.0)
        return -127;
    return static_cast<std::int8_t>(q);
}

} // namespace mor
