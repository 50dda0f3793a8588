#pragma once

#include <cstddef>
#include <vector>

namespace floodsr {

/// Channel-major (C, H, W) activation volume for a single image.
template <typename T>
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int channels, int height, int width, T fill = T{})
        : c(channels), h(height), w(width),
          data(static_cast<std::size_t>(channels) * height * width, fill) {}

    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const noexcept { return data.size(); }

    T* channel(int ch) noexcept { return data.data() + ch * plane(); }
    const T* channel(int ch) const noexcept { return data.data() + ch * plane(); }

    T& operator()(int ch, int y, int x) noexcept { return data[(ch * plane()) + y * w + x]; }
    const T& operator()(int ch, int y, int x) const noexcept { return data[(ch * plane()) + y * w + x]; }
};

}  // namespace floodsr
