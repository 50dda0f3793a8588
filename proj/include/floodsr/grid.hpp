#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "floodsr/error.hpp"

namespace floodsr {

/// Row-major 2-D raster with origin at the top-left; (i, j) = (row, col).
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), cells_(rows * cols, fill) {}
    Grid(std::size_t rows, std::size_t cols, std::vector<T> cells)
        : rows_(rows), cols_(cols), cells_(std::move(cells)) {
        if (cells_.size() != rows_ * cols_) {
            fail(ErrorKind::ShapeMismatch,
                 "grid payload has " + std::to_string(cells_.size()) + " cells, expected " +
                     std::to_string(rows_ * cols_));
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return cells_.size(); }
    bool empty() const noexcept { return cells_.empty(); }

    T& operator()(std::size_t i, std::size_t j) noexcept { return cells_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const noexcept { return cells_[i * cols_ + j]; }
    T& operator[](std::size_t k) noexcept { return cells_[k]; }
    const T& operator[](std::size_t k) const noexcept { return cells_[k]; }

    std::vector<T>& cells() noexcept { return cells_; }
    const std::vector<T>& cells() const noexcept { return cells_; }

    bool same_shape(const Grid& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    template <typename U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return rows_ == other.rows() && cols_ == other.cols();
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.cells_ == b.cells_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> cells_;
};

/// Cells are 0 (dry) or 1 (inundated).
using BinaryGrid = Grid<std::uint8_t>;
/// Water fractions, pixel-on probabilities, or spectral indices.
using FractionGrid = Grid<float>;
/// Normalized elevations.
using ElevationGrid = Grid<float>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        fail(ErrorKind::ShapeMismatch,
             std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                 " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

/// Ratio between FIM and WFM resolution.
struct ScaleFactor {
    int f = 10;

    explicit constexpr ScaleFactor(int factor = 10) : f(factor) {}
};

/// Open interval (lo, hi) of WFM fractions used for evaluation.
struct BandLimits {
    double lo = 0.25;
    double hi = 0.85;

    bool contains(double v) const noexcept { return v > lo && v < hi; }
};

void validate(const ScaleFactor& scale);
void validate(const BandLimits& band);

}  // namespace floodsr
