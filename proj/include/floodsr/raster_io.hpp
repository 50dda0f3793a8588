#pragma once

#include <filesystem>
#include <vector>

#include "floodsr/grid.hpp"

namespace floodsr {

/// Reads a P5 PGM with maxval 255; byte 0 -> dry, 255 -> inundated.
BinaryGrid read_binary_grid(const std::filesystem::path& path);
/// Writes "P5\n<cols> <rows>\n255\n" followed by one byte per cell.
void write_binary_grid(const BinaryGrid& grid, const std::filesystem::path& path);

/// WFG1: "WFG1 <rows> <cols>\n" then rows*cols little-endian binary32 values.
FractionGrid read_fraction_grid(const std::filesystem::path& path);
void write_fraction_grid(const FractionGrid& grid, const std::filesystem::path& path);

/// Plain 8-bit grayscale PGM, used by the renderer.
void write_gray_image(const Grid<std::uint8_t>& pixels, const std::filesystem::path& path);

template <typename T>
struct Tile {
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    Grid<T> grid;
};

/// Non-overlapping row-major tiling; dimensions must divide evenly.
template <typename T>
std::vector<Tile<T>> tile(const Grid<T>& grid, std::size_t tile_rows, std::size_t tile_cols) {
    if (tile_rows == 0 || tile_cols == 0 || grid.rows() % tile_rows != 0 ||
        grid.cols() % tile_cols != 0) {
        fail(ErrorKind::IndivisibleDimensions,
             "cannot tile " + std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()) +
                 " into " + std::to_string(tile_rows) + "x" + std::to_string(tile_cols));
    }
    std::vector<Tile<T>> tiles;
    tiles.reserve((grid.rows() / tile_rows) * (grid.cols() / tile_cols));
    for (std::size_t r0 = 0; r0 < grid.rows(); r0 += tile_rows) {
        for (std::size_t c0 = 0; c0 < grid.cols(); c0 += tile_cols) {
            Grid<T> part(tile_rows, tile_cols);
            for (std::size_t i = 0; i < tile_rows; ++i) {
                for (std::size_t j = 0; j < tile_cols; ++j) part(i, j) = grid(r0 + i, c0 + j);
            }
            tiles.push_back({r0, c0, std::move(part)});
        }
    }
    return tiles;
}

/// Copy of the top-left rows x cols window.
template <typename T>
Grid<T> crop(const Grid<T>& grid, std::size_t rows, std::size_t cols) {
    if (rows > grid.rows() || cols > grid.cols()) {
        fail(ErrorKind::ShapeMismatch, "crop window exceeds grid");
    }
    Grid<T> out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out(i, j) = grid(i, j);
    }
    return out;
}

}  // namespace floodsr
