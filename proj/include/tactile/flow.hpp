#pragma once

#include "tactile/image.hpp"
#include "tactile/imageproc.hpp"

#include <filesystem>

namespace tactile {

struct FlowConfig {
    int window = 21;  // px, odd
    int levels = 3;
    int max_iters = 30;
    double eps = 0.01;     // px
    double min_eig = 1e-4; // smallest structure-tensor eigenvalue / window area, intensities in [0, 1]

    void validate() const;
};

enum class TrackStatus : std::uint8_t { Tracked, Lost };

struct FlowField {
    Points2 origins;
    Points2 displacements;
    std::vector<TrackStatus> status;

    std::size_t size() const { return origins.size(); }
    std::size_t tracked_count() const;
    // Mean displacement magnitude over tracked points (0 when none are tracked).
    double mean_magnitude() const;
};

// Level 0 is the input; each further level is blur(sigma = 1) then 2x decimation.
template <typename T>
std::vector<Image<T, 1>> build_pyramid(const Image<T, 1>& img, int levels) {
    if (levels < 1) throw DataError("build_pyramid: levels must be >= 1");
    const int min_side = (1 << (levels - 1)) * 8;
    if (img.width() < min_side || img.height() < min_side)
        throw DataError("build_pyramid: image too small for " + std::to_string(levels) + " levels");
    std::vector<Image<T, 1>> pyr;
    pyr.push_back(img);
    for (int l = 1; l < levels; ++l) {
        const Image<T, 1> blurred = gaussian_blur(pyr.back(), 1.0);
        Image<T, 1> half(blurred.width() / 2, blurred.height() / 2);
        for (int y = 0; y < half.height(); ++y)
            for (int x = 0; x < half.width(); ++x) half.at(x, y) = blurred.at(2 * x, 2 * y);
        pyr.push_back(std::move(half));
    }
    return pyr;
}

// Pyramid with intensities scaled to [0, 1] and central-difference gradients,
// computed once per frame and reused as `prev` for the next frame pair.
struct FlowPyramid {
    std::vector<GrayFrameF> levels;
    std::vector<GrayFrameF> grad_x;
    std::vector<GrayFrameF> grad_y;
};

template <typename T>
FlowPyramid make_flow_pyramid(const Image<T, 1>& img, int levels) {
    FlowPyramid fp;
    for (auto& lvl : build_pyramid(convert<float>(img), levels)) {
        for (auto& v : lvl.storage()) v /= 255.0f;
        GrayFrameF gx(lvl.width(), lvl.height());
        GrayFrameF gy(lvl.width(), lvl.height());
        for (int y = 0; y < lvl.height(); ++y) {
            for (int x = 0; x < lvl.width(); ++x) {
                gx.at(x, y) = 0.5f * (lvl.clamped(x + 1, y) - lvl.clamped(x - 1, y));
                gy.at(x, y) = 0.5f * (lvl.clamped(x, y + 1) - lvl.clamped(x, y - 1));
            }
        }
        fp.levels.push_back(std::move(lvl));
        fp.grad_x.push_back(std::move(gx));
        fp.grad_y.push_back(std::move(gy));
    }
    return fp;
}

// Coarse-to-fine iterative Lucas-Kanade. Failures are reported per point.
FlowField lk_track(const FlowPyramid& prev, const FlowPyramid& next, const Points2& points,
                   const FlowConfig& cfg);

template <typename T>
FlowField lk_track(const Image<T, 1>& prev, const Image<T, 1>& next, const Points2& points,
                   const FlowConfig& cfg) {
    cfg.validate();
    return lk_track(make_flow_pyramid(prev, cfg.levels), make_flow_pyramid(next, cfg.levels), points, cfg);
}

void write_flow_csv(const std::filesystem::path& path, const FlowField& flow);

}  // namespace tactile
