#pragma once

#include "koa/error.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace koa {

/// Row-major 2-D pixel grid. Indexing is (column x, row y).
template <typename T>
class Grid {
public:
    Grid() = default;

    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<size_t>(width) * static_cast<size_t>(height), fill) {
        require(width > 0 && height > 0, ErrorCode::invalid_argument,
                "grid dimensions must be positive");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
    const T& at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using MaskGrid = Grid<uint8_t>;   // binary, 0 or 1
using FloatGrid = Grid<float>;    // unit-interval intensities
using PixelGrid = Grid<uint16_t>; // raw integer intensities

/// 2-D point in pixel coordinates.
struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

/// Integer pixel location (column, row).
struct PixelPoint {
    int x = 0;
    int y = 0;

    bool operator==(const PixelPoint&) const = default;
};

/// Axis-aligned box, half-open nowhere: corners are inclusive coordinates.
struct Box {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const noexcept { return x1 - x0; }
    double height() const noexcept { return y1 - y0; }
    double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }

    bool operator==(const Box&) const = default;
};

} // namespace koa
