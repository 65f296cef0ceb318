#pragma once

#include "tactile/image.hpp"

#include <cmath>
#include <vector>

namespace tactile {

// Normalized 1-D Gaussian taps, radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian blur, clamp-to-edge borders.
template <typename T, int C>
Image<T, C> gaussian_blur(const Image<T, C>& src, double sigma) {
    if (!(sigma > 0)) throw DataError("gaussian_blur: sigma must be positive");
    const auto taps = gaussian_kernel(sigma);
    const std::vector<float> kernel(taps.begin(), taps.end());
    const int radius = static_cast<int>(kernel.size() / 2);
    const int w = src.width();
    const int h = src.height();
    Image<float, C> tmp(w, h);
    std::vector<float> row(static_cast<std::size_t>(w + 2 * radius) * C);
    for (int y = 0; y < h; ++y) {
        const T* in = src.pixel(0, y);
        for (int x = -radius; x < w + radius; ++x) {
            const T* p = in + static_cast<std::ptrdiff_t>(std::clamp(x, 0, w - 1)) * C;
            for (int c = 0; c < C; ++c) row[static_cast<std::size_t>(x + radius) * C + c] = static_cast<float>(p[c]);
        }
        float* out = tmp.pixel(0, y);
        for (int i = 0; i < w * C; ++i) {
            float acc = 0.0f;
            for (int k = 0; k <= 2 * radius; ++k) acc += kernel[k] * row[static_cast<std::size_t>(i + k * C)];
            out[i] = acc;
        }
    }
    Image<T, C> dst(w, h);
    dst.index = src.index;
    std::vector<const float*> rows(static_cast<std::size_t>(2 * radius + 1));
    std::vector<float> acc(static_cast<std::size_t>(w) * C);
    for (int y = 0; y < h; ++y) {
        for (int k = -radius; k <= radius; ++k) rows[k + radius] = tmp.pixel(0, std::clamp(y + k, 0, h - 1));
        std::fill(acc.begin(), acc.end(), 0.0f);
        for (int k = 0; k <= 2 * radius; ++k) {
            const float* r = rows[k];
            const float wk = kernel[k];
            for (int i = 0; i < w * C; ++i) acc[i] += wk * r[i];
        }
        T* out = dst.pixel(0, y);
        for (int i = 0; i < w * C; ++i) out[i] = saturate<T>(acc[i]);
    }
    return dst;
}

// Blackens every pixel outside the centered circle whose diameter is the frame height.
template <typename T, int C>
Image<T, C> circular_mask(const Image<T, C>& src) {
    Image<T, C> out = src;
    const double cx = (src.width() - 1) / 2.0;
    const double cy = (src.height() - 1) / 2.0;
    const double r = src.height() / 2.0;
    for (int y = 0; y < src.height(); ++y) {
        const double dy2 = (y - cy) * (y - cy);
        for (int x = 0; x < src.width(); ++x) {
            if ((x - cx) * (x - cx) + dy2 > r * r) {
                T* p = out.pixel(x, y);
                for (int c = 0; c < C; ++c) p[c] = T{};
            }
        }
    }
    return out;
}

// Unsharp mask: in + amount * (in - blur(in, sigma)), clamped to [0, 255].
template <typename T, int C>
Image<T, C> sharpen(const Image<T, C>& src, double amount, double sigma) {
    if (!(amount >= 0)) throw DataError("sharpen: amount must be non-negative");
    if (amount == 0) return src;
    // Blur in float so the 8-bit path sharpens against an unrounded low-pass.
    const Image<float, C> low = gaussian_blur(convert<float>(src), sigma);
    Image<T, C> out(src.width(), src.height());
    out.index = src.index;
    auto in = src.data();
    auto lp = low.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double v = in[i] + amount * (static_cast<double>(in[i]) - lp[i]);
        dst[i] = saturate<T>(std::clamp(v, 0.0, 255.0));
    }
    return out;
}

// Luma 0.299 R + 0.587 G + 0.114 B (rounded for 8-bit frames).
template <typename T>
Image<T, 1> to_gray(const Image<T, 3>& src) {
    Image<T, 1> out(src.width(), src.height());
    out.index = src.index;
    auto in = src.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double v = 0.299 * in[3 * i] + 0.587 * in[3 * i + 1] + 0.114 * in[3 * i + 2];
        dst[i] = saturate<T>(v);
    }
    return out;
}

enum class MarkerKind { Black, White };

const char* to_string(MarkerKind kind);

struct MarkerConfig {
    double t_low = 70.0;
    double t_high = 200.0;
    double min_area = 4.0;    // px^2
    double max_area = 400.0;  // px^2
    int kernel_radius = 1;
    int max_markers = 1000;

    void validate() const;
};

struct MarkerSet {
    MarkerKind kind = MarkerKind::Black;
    Points2 centroids;
    std::vector<double> areas;

    std::size_t size() const { return centroids.size(); }
};

BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask morph_open(const BinaryMask& mask, int radius);
BinaryMask morph_close(const BinaryMask& mask, int radius);

// 8-connected components; each entry lists linear pixel indices.
std::vector<std::vector<int>> connected_components(const BinaryMask& mask);

template <typename T>
BinaryMask binarize(const Image<T, 1>& gray, MarkerKind kind, const MarkerConfig& cfg) {
    BinaryMask out(gray.width(), gray.height());
    auto in = gray.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double v = in[i];
        dst[i] = (kind == MarkerKind::Black ? v < cfg.t_low : v > cfg.t_high) ? 1 : 0;
    }
    return out;
}

// Threshold followed by morphological open then close.
template <typename T>
BinaryMask segment_markers(const Image<T, 1>& gray, MarkerKind kind, const MarkerConfig& cfg) {
    cfg.validate();
    return morph_close(morph_open(binarize(gray, kind, cfg), cfg.kernel_radius), cfg.kernel_radius);
}

// Area-filtered, intensity-weighted centroids of the segmented components.
// When `accepted` is given it receives the pixels of the kept components.
template <typename T>
MarkerSet extract_markers(const Image<T, 1>& gray, MarkerKind kind, const MarkerConfig& cfg,
                          BinaryMask* accepted = nullptr) {
    const BinaryMask seg = segment_markers(gray, kind, cfg);
    if (accepted) *accepted = BinaryMask(gray.width(), gray.height());
    MarkerSet set;
    set.kind = kind;
    const int w = gray.width();
    auto px = gray.data();
    for (const auto& comp : connected_components(seg)) {
        const auto area = static_cast<double>(comp.size());
        if (area < cfg.min_area || area > cfg.max_area) continue;
        double sw = 0, sx = 0, sy = 0, bx = 0, by = 0;
        for (int idx : comp) {
            const double v = px[static_cast<std::size_t>(idx)];
            const double wgt = std::max(0.0, kind == MarkerKind::Black ? cfg.t_low - v : v - cfg.t_high);
            const double x = idx % w;
            const double y = idx / w;
            sw += wgt;
            sx += wgt * x;
            sy += wgt * y;
            bx += x;
            by += y;
        }
        set.centroids.push_back(sw > 0 ? Vec2(sx / sw, sy / sw) : Vec2(bx / area, by / area));
        set.areas.push_back(area);
        if (accepted)
            for (int idx : comp) accepted->data()[static_cast<std::size_t>(idx)] = 1;
    }
    if (static_cast<int>(set.size()) > cfg.max_markers)
        throw DataError("extract_markers: " + std::to_string(set.size()) + " " + to_string(kind) +
                        " components exceed max_markers=" + std::to_string(cfg.max_markers) +
                        " (over-segmentation)");
    return set;
}

void write_markers_csv(const std::filesystem::path& path, const std::vector<MarkerSet>& sets);

}  // namespace tactile
