#pragma once

#include "tactile/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tactile {

// Row-major interleaved image. Pixel (x, y) has its center at integer
// coordinates (x, y); channel c of that pixel lives at (y * width + x) * C + c.
template <typename T, int C>
class Image {
  public:
    using value_type = T;
    static constexpr int channels = C;

    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height * C, fill) {
        if (width < 0 || height < 0) throw DataError("negative image dimensions");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    // Frame sequence number (only meaningful for camera frames).
    int index = 0;

    T& at(int x, int y, int c = 0) { return data_[offset(x, y) + c]; }
    const T& at(int x, int y, int c = 0) const { return data_[offset(x, y) + c]; }

    T* pixel(int x, int y) { return data_.data() + offset(x, y); }
    const T* pixel(int x, int y) const { return data_.data() + offset(x, y); }

    // Clamp-to-edge access.
    const T& clamped(int x, int y, int c = 0) const {
        x = std::clamp(x, 0, width_ - 1);
        y = std::clamp(y, 0, height_ - 1);
        return at(x, y, c);
    }

    bool contains(double x, double y) const {
        return x >= 0.0 && y >= 0.0 && x <= width_ - 1.0 && y <= height_ - 1.0;
    }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    bool same_size(int w, int h) const { return w == width_ && h == height_; }
    template <typename U, int D>
    bool same_size(const Image<U, D>& other) const {
        return other.width() == width_ && other.height() == height_;
    }

    bool operator==(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ && data_ == other.data_;
    }

  private:
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * C;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using Frame = Image<std::uint8_t, 3>;
using GrayFrame = Image<std::uint8_t, 1>;
using FrameF = Image<float, 3>;
using GrayFrameF = Image<float, 1>;
using BinaryMask = Image<std::uint8_t, 1>;  // 0 or 1 per pixel

// Round-and-clamp conversion used whenever a float value lands in an 8-bit image.
template <typename T>
inline T saturate(double v) {
    if constexpr (std::is_same_v<T, std::uint8_t>) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    } else if constexpr (std::is_same_v<T, std::uint16_t>) {
        return static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L));
    } else {
        return static_cast<T>(v);
    }
}

template <typename To, typename From, int C>
Image<To, C> convert(const Image<From, C>& src) {
    Image<To, C> out(src.width(), src.height());
    out.index = src.index;
    auto in = src.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) dst[i] = saturate<To>(static_cast<double>(in[i]));
    return out;
}

// Bilinear sample with clamp-to-edge borders.
template <typename T, int C>
inline double sample_bilinear(const Image<T, C>& img, double x, double y, int c = 0) {
    x = std::clamp(x, 0.0, img.width() - 1.0);
    y = std::clamp(y, 0.0, img.height() - 1.0);
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ax = x - x0;
    const double ay = y - y0;
    const double top = (1.0 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c);
    const double bot = (1.0 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c);
    return (1.0 - ay) * top + ay * bot;
}

// Netpbm I/O: binary P6 (RGB), P5 (gray, 8 or 16 bit).
Frame read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Frame& frame);
GrayFrame read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayFrame& frame);
Image<std::uint16_t, 1> read_pgm16(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const Image<std::uint16_t, 1>& frame);

}  // namespace tactile
