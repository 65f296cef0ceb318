#include "tactile/camera.hpp"

#include <fstream>
#include <iomanip>
#include <map>

namespace tactile {

void CameraIntrinsics::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
        throw ConfigError("camera: principal point must lie inside the image");
}

Mat3 CameraIntrinsics::matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
}

void DistortionCoefficients::validate() const {
    for (double v : {k1, k2, k3, p1, p2})
        if (!std::isfinite(v)) throw ConfigError("distortion: coefficients must be finite");
}

void DomeGeometry::validate() const {
    if (!(radius > 0)) throw ConfigError("dome: radius must be positive");
    if (!(fov_deg > 0 && fov_deg < 180)) throw ConfigError("dome: fov must be in (0, 180) degrees");
    if (!(apex().z() > 0)) throw ConfigError("dome: apex must lie in front of the camera");
}

Vec3 DomeGeometry::apex() const { return center - radius * Vec3::UnitZ(); }

Eigen::Matrix2d distortion_jacobian(const Vec2& xy, const DistortionCoefficients& d) {
    const double x = xy.x();
    const double y = xy.y();
    const double r2 = x * x + y * y;
    const double radial = 1 + d.k1 * r2 + d.k2 * r2 * r2 + d.k3 * r2 * r2 * r2;
    const double dradial = d.k1 + 2 * d.k2 * r2 + 3 * d.k3 * r2 * r2;  // d radial / d r2
    Eigen::Matrix2d j;
    j(0, 0) = radial + x * dradial * 2 * x + 2 * d.p1 * y + d.p2 * 6 * x;
    j(0, 1) = x * dradial * 2 * y + 2 * d.p1 * x + d.p2 * 2 * y;
    j(1, 0) = y * dradial * 2 * x + d.p1 * 2 * x + 2 * d.p2 * y;
    j(1, 1) = radial + y * dradial * 2 * y + d.p1 * 6 * y + 2 * d.p2 * x;
    return j;
}

Vec2 undistort_normalized(const Vec2& distorted, const DistortionCoefficients& d) {
    if (d.is_zero()) return distorted;
    Vec2 x = distorted;
    for (int iter = 0; iter < 100; ++iter) {
        const Vec2 r = distort_normalized(x, d) - distorted;
        const Vec2 step = distortion_jacobian(x, d).partialPivLu().solve(r);
        x -= step;
        if (step.norm() < 1e-16 * (1.0 + x.norm())) break;
    }
    return x;
}

Vec3 pixel_ray(const Vec2& px, const CameraIntrinsics& intr, const DistortionCoefficients& dist) {
    const Vec2 xd((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy);
    const Vec2 xy = undistort_normalized(xd, dist);
    return {xy.x(), xy.y(), 1.0};
}

std::optional<Vec3> intersect_dome(const Vec3& dir, const DomeGeometry& dome) {
    // |t d - c|^2 = R^2  ->  (d.d) t^2 - 2 (d.c) t + (c.c - R^2) = 0
    const double a = dir.squaredNorm();
    const double b = dir.dot(dome.center);
    const double c = dome.center.squaredNorm() - dome.radius * dome.radius;
    const double disc = b * b - a * c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    // Numerically stable near root.
    const double q = b + (b >= 0 ? sq : -sq);
    double t_near = c / q;
    double t_far = q / a;
    if (t_near > t_far) std::swap(t_near, t_far);
    const double t = t_near > 0 ? t_near : t_far;
    if (!(t > 0)) return std::nullopt;
    return Vec3(t * dir);
}

double geodesic_arc(const Vec3& a, const Vec3& b, const DomeGeometry& dome) {
    const Vec3 u = a - dome.center;
    const Vec3 v = b - dome.center;
    // atan2 form is accurate for nearly coincident points, where acos is not.
    const double angle = std::atan2(u.cross(v).norm(), u.dot(v));
    return dome.radius * angle;
}

std::size_t UndistortMap::out_of_bounds_count() const {
    return static_cast<std::size_t>(std::count(in_bounds.begin(), in_bounds.end(), 0));
}

UndistortMap undistort_map(const CameraIntrinsics& intr, const DistortionCoefficients& dist) {
    intr.validate();
    UndistortMap map;
    map.width = intr.width;
    map.height = intr.height;
    const auto n = static_cast<std::size_t>(intr.width) * intr.height;
    map.src_x.resize(n);
    map.src_y.resize(n);
    map.in_bounds.resize(n);
    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            const Vec2 ideal((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy);
            const Vec2 d = distort_normalized(ideal, dist);
            const double sx = intr.fx * d.x() + intr.cx;
            const double sy = intr.fy * d.y() + intr.cy;
            const auto i = static_cast<std::size_t>(y) * intr.width + x;
            map.src_x[i] = static_cast<float>(sx);
            map.src_y[i] = static_cast<float>(sy);
            map.in_bounds[i] = (sx >= 0 && sy >= 0 && sx <= intr.width - 1 && sy <= intr.height - 1) ? 1 : 0;
        }
    }
    return map;
}

DotPattern generate_dome_pattern(const CameraIntrinsics& intr, const DistortionCoefficients& dist,
                                 const DomeGeometry& dome, double grid_step) {
    intr.validate();
    dist.validate();
    dome.validate();
    if (!(grid_step >= 2.0)) throw ConfigError("pattern: grid_step must be at least 2 px");

    DotPattern pattern;
    pattern.grid_step = grid_step;
    const double half = grid_step / 2.0;
    const int i_min = static_cast<int>(std::ceil((half - intr.cx) / grid_step));
    const int i_max = static_cast<int>(std::floor((intr.width - half - intr.cx) / grid_step));
    const int j_min = static_cast<int>(std::ceil((half - intr.cy) / grid_step));
    const int j_max = static_cast<int>(std::floor((intr.height - half - intr.cy) / grid_step));
    const double cos_half_fov = std::cos(deg2rad(dome.fov_deg / 2.0));

    std::map<std::pair<int, int>, int> index_of;
    for (int j = j_min; j <= j_max; ++j) {
        for (int i = i_min; i <= i_max; ++i) {
            const Vec2 node(intr.cx + i * grid_step, intr.cy + j * grid_step);
            const Vec3 ray = pixel_ray(node, intr, dist);
            if (ray.normalized().z() < cos_half_fov) continue;
            const auto hit = intersect_dome(ray, dome);
            if (!hit) continue;
            index_of[{i, j}] = static_cast<int>(pattern.dots3d.size());
            pattern.grid.emplace_back(i, j);
            pattern.dots3d.push_back(*hit);
            pattern.dots2d.push_back(node);
        }
    }
    for (std::size_t k = 0; k < pattern.grid.size(); ++k) {
        const auto& g = pattern.grid[k];
        for (const auto& [di, dj] : {std::pair{1, 0}, std::pair{0, 1}}) {
            const auto it = index_of.find({g.x() + di, g.y() + dj});
            if (it == index_of.end()) continue;
            pattern.neighbor_arcs.push_back(
                {static_cast<int>(k), it->second,
                 geodesic_arc(pattern.dots3d[k], pattern.dots3d[static_cast<std::size_t>(it->second)], dome)});
        }
    }
    return pattern;
}

void write_pattern_csv(const std::filesystem::path& path, const DotPattern& pattern) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "i,j,X_mm,Y_mm,Z_mm,u_px,v_px\n" << std::setprecision(17);
    for (std::size_t k = 0; k < pattern.size(); ++k) {
        const auto& p = pattern.dots3d[k];
        const auto& q = pattern.dots2d[k];
        out << pattern.grid[k].x() << ',' << pattern.grid[k].y() << ',' << p.x() << ',' << p.y() << ','
            << p.z() << ',' << q.x() << ',' << q.y() << '\n';
    }
}

void write_pattern_svg(const std::filesystem::path& path, const DotPattern& pattern,
                       const CameraIntrinsics& intr, double dot_radius_px) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << intr.width << "\" height=\""
        << intr.height << "\" viewBox=\"0 0 " << intr.width << ' ' << intr.height << "\">\n"
        << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "  <circle cx=\"" << intr.cx << "\" cy=\"" << intr.cy << "\" r=\"" << intr.height / 2.0
        << "\" fill=\"none\" stroke=\"#999\" stroke-width=\"0.5\"/>\n";
    out << std::setprecision(10);
    for (const auto& q : pattern.dots2d)
        out << "  <circle cx=\"" << q.x() << "\" cy=\"" << q.y() << "\" r=\"" << dot_radius_px
            << "\" fill=\"black\"/>\n";
    out << "</svg>\n";
}

}  // namespace tactile
