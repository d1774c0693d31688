#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thermofuse/error.hpp"

namespace thermofuse {

/// Dense row-major 2D field. Pixel (row, col) lives at index row * width + col.
template <typename T>
class Image {
public:
    using value_type = T;

    Image() = default;
    Image(std::size_t height, std::size_t width, T fill = T{})
        : height_(height), width_(width), data_(height * width, fill) {}
    Image(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_) {
            throw ShapeError("image data size " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(height_) + "x" +
                             std::to_string(width_));
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * width_ + col]; }
    const T& operator()(std::size_t row, std::size_t col) const noexcept {
        return data_[row * width_ + col];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Edge-replicate access for signed coordinates.
    const T& clamped(std::ptrdiff_t row, std::ptrdiff_t col) const noexcept {
        const auto r = std::clamp<std::ptrdiff_t>(row, 0, static_cast<std::ptrdiff_t>(height_) - 1);
        const auto c = std::clamp<std::ptrdiff_t>(col, 0, static_cast<std::ptrdiff_t>(width_) - 1);
        return data_[static_cast<std::size_t>(r) * width_ + static_cast<std::size_t>(c)];
    }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }
    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * width_, width_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * width_, width_}; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    template <typename U>
    bool same_shape(const Image<U>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    bool operator==(const Image&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

/// Real-valued map: temperatures in °C, gray levels, coefficient planes.
using Map = Image<double>;
/// Validity mask, nonzero = valid.
using Mask = Image<std::uint8_t>;

using TemperatureMap = Map;
using GrayFrame = Map;

template <typename A, typename B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
    }
}

inline Mask full_mask(std::size_t height, std::size_t width) { return Mask(height, width, 1); }

inline std::size_t count_valid(const Mask& m) {
    return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](auto v) { return v != 0; }));
}

/// Bilinear sample at continuous (y, x), pixel centres on integer coordinates.
/// Coordinates outside the centre hull are clamped (edge replicate).
inline double sample_bilinear(const Map& img, double y, double x) {
    const double ymax = static_cast<double>(img.height() - 1);
    const double xmax = static_cast<double>(img.width() - 1);
    y = std::clamp(y, 0.0, ymax);
    x = std::clamp(x, 0.0, xmax);
    auto y0 = static_cast<std::size_t>(std::floor(y));
    auto x0 = static_cast<std::size_t>(std::floor(x));
    if (img.height() > 1 && y0 == img.height() - 1) --y0;
    if (img.width() > 1 && x0 == img.width() - 1) --x0;
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
    const double top = img(y0, x0) * (1.0 - fx) + img(y0, x1) * fx;
    const double bottom = img(y1, x0) * (1.0 - fx) + img(y1, x1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

}  // namespace thermofuse
