#pragma once

#include "tactile/core.hpp"
#include "tactile/image.hpp"

#include <filesystem>
#include <optional>

namespace tactile {

struct CameraIntrinsics {
    double fx = 160.0;
    double fy = 160.0;
    double cx = 240.0;
    double cy = 240.0;
    int width = 480;
    int height = 480;

    void validate() const;
    Mat3 matrix() const;
};

// Brown-Conrady (k1, k2, p1, p2, k3). All zeros is the ideal pinhole.
struct DistortionCoefficients {
    double k1 = 0.0;
    double k2 = 0.0;
    double k3 = 0.0;
    double p1 = 0.0;
    double p2 = 0.0;

    bool is_zero() const { return k1 == 0 && k2 == 0 && k3 == 0 && p1 == 0 && p2 == 0; }
    void validate() const;
};

struct DomeGeometry {
    double radius = 10.0;              // mm
    Vec3 center = Vec3(0.0, 0.0, 12.0);  // camera frame, mm
    double fov_deg = 160.0;

    void validate() const;
    // Point of the sphere nearest to the camera along the optical axis.
    Vec3 apex() const;
};

// Dots on the dome that image onto a regular pixel grid.
struct DotPattern {
    struct Arc {
        int from;
        int to;
        double length_mm;
    };

    std::vector<Eigen::Vector2i> grid;  // (i, j) grid index of each dot
    Points3 dots3d;                      // mm
    Points2 dots2d;                      // px
    std::vector<Arc> neighbor_arcs;      // right and down neighbors
    double grid_step = 0.0;

    std::size_t size() const { return dots3d.size(); }
};

// Applies the distortion polynomial to normalized image coordinates.
template <typename S>
Eigen::Matrix<S, 2, 1> distort_normalized(const Eigen::Matrix<S, 2, 1>& xy,
                                          const DistortionCoefficients& d) {
    const S x = xy.x();
    const S y = xy.y();
    const S r2 = x * x + y * y;
    const S radial = S(1) + S(d.k1) * r2 + S(d.k2) * r2 * r2 + S(d.k3) * r2 * r2 * r2;
    const S xd = x * radial + S(2 * d.p1) * x * y + S(d.p2) * (r2 + S(2) * x * x);
    const S yd = y * radial + S(d.p1) * (r2 + S(2) * y * y) + S(2 * d.p2) * x * y;
    return {xd, yd};
}

// Jacobian of distort_normalized with respect to (x, y).
Eigen::Matrix2d distortion_jacobian(const Vec2& xy, const DistortionCoefficients& d);

// Inverts the distortion polynomial by Newton iteration.
Vec2 undistort_normalized(const Vec2& distorted, const DistortionCoefficients& d);

template <typename S>
Eigen::Matrix<S, 2, 1> project(const Eigen::Matrix<S, 3, 1>& p, const CameraIntrinsics& intr,
                               const DistortionCoefficients& dist) {
    if (!(p.z() > S(0))) throw DomainError("project: point has non-positive depth");
    const Eigen::Matrix<S, 2, 1> xy(p.x() / p.z(), p.y() / p.z());
    const Eigen::Matrix<S, 2, 1> d = distort_normalized(xy, dist);
    return {S(intr.fx) * d.x() + S(intr.cx), S(intr.fy) * d.y() + S(intr.cy)};
}

inline Vec2 project(const Vec3& p, const CameraIntrinsics& intr) {
    return project(p, intr, DistortionCoefficients{});
}

// Ray direction (x, y, 1) of a distorted pixel.
Vec3 pixel_ray(const Vec2& px, const CameraIntrinsics& intr, const DistortionCoefficients& dist);

// Nearest intersection of the ray t * dir (t > 0) with the dome sphere.
std::optional<Vec3> intersect_dome(const Vec3& dir, const DomeGeometry& dome);

// Great-circle distance between two points on the dome.
double geodesic_arc(const Vec3& a, const Vec3& b, const DomeGeometry& dome);

// Destination-indexed remap grid: for every ideal (undistorted) pixel, the
// location in the distorted capture it is sampled from.
struct UndistortMap {
    int width = 0;
    int height = 0;
    std::vector<float> src_x;
    std::vector<float> src_y;
    std::vector<std::uint8_t> in_bounds;

    Vec2 source(int x, int y) const {
        const auto i = static_cast<std::size_t>(y) * width + x;
        return {src_x[i], src_y[i]};
    }
    bool valid(int x, int y) const { return in_bounds[static_cast<std::size_t>(y) * width + x] != 0; }
    std::size_t out_of_bounds_count() const;
};

UndistortMap undistort_map(const CameraIntrinsics& intr, const DistortionCoefficients& dist);

// Bilinear resampling through the map; out-of-bounds sources become black.
template <typename T, int C>
Image<T, C> undistort_frame(const Image<T, C>& frame, const UndistortMap& map) {
    if (!frame.same_size(map.width, map.height))
        throw DataError("undistort_frame: frame size does not match remap grid");
    Image<T, C> out(map.width, map.height);
    out.index = frame.index;
    const int w = frame.width();
    const int h = frame.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto i = static_cast<std::size_t>(y) * w + x;
            if (!map.in_bounds[i]) continue;
            const double sx = map.src_x[i];
            const double sy = map.src_y[i];
            const int x0 = std::min(static_cast<int>(sx), w - 1);
            const int y0 = std::min(static_cast<int>(sy), h - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double ax = sx - x0;
            const double ay = sy - y0;
            const T* p00 = frame.pixel(x0, y0);
            const T* p10 = frame.pixel(x1, y0);
            const T* p01 = frame.pixel(x0, y1);
            const T* p11 = frame.pixel(x1, y1);
            T* dst = out.pixel(x, y);
            for (int c = 0; c < C; ++c) {
                const double top = p00[c] + ax * (double(p10[c]) - p00[c]);
                const double bot = p01[c] + ax * (double(p11[c]) - p01[c]);
                dst[c] = saturate<T>(top + ay * (bot - top));
            }
        }
    }
    return out;
}

// Casts the ideal ray through every node of a regular grid in the captured
// image (anchored at the principal point; a node's step x step cell must fit
// inside the frame) and keeps the nearer intersection with the dome.
DotPattern generate_dome_pattern(const CameraIntrinsics& intr, const DistortionCoefficients& dist,
                                 const DomeGeometry& dome, double grid_step);

void write_pattern_csv(const std::filesystem::path& path, const DotPattern& pattern);
void write_pattern_svg(const std::filesystem::path& path, const DotPattern& pattern,
                       const CameraIntrinsics& intr, double dot_radius_px);

}  // namespace tactile
