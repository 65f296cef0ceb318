#pragma once

#include "tactile/image.hpp"

#include <array>
#include <filesystem>

namespace tactile {

// Channel c (R, G, B) is lit by directions[c]: I_c = gain_c max(0, n . l_c) + ambient_c.
struct LightConfig {
    std::array<Vec3, 3> directions;
    Vec3 gain = Vec3::Constant(130.0);
    Vec3 ambient = Vec3::Constant(10.0);

    // Three lights at 120 degree azimuth spacing, elevated `tilt_deg` above the
    // elastomer base plane.
    static LightConfig from_tilt(double tilt_deg = 85.0, double first_azimuth_deg = 90.0);

    Mat3 matrix() const;  // rows are light directions
    double condition_number() const;
    void validate() const;
};

Vec3 shade(const Vec3& normal, const LightConfig& lights);

enum class NormalState : std::uint8_t { Invalid = 0, Valid = 1, Shadowed = 2 };

struct NormalMap {
    Image<float, 3> normals;
    Image<std::uint8_t, 1> state;

    NormalMap() = default;
    NormalMap(int w, int h) : normals(w, h), state(w, h, static_cast<std::uint8_t>(NormalState::Invalid)) {}
    int width() const { return normals.width(); }
    int height() const { return normals.height(); }
    bool valid(int x, int y) const { return state.at(x, y) == static_cast<std::uint8_t>(NormalState::Valid); }
    Vec3 normal(int x, int y) const {
        const float* p = normals.pixel(x, y);
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, const Vec3& n, NormalState s) {
        float* p = normals.pixel(x, y);
        p[0] = static_cast<float>(n.x());
        p[1] = static_cast<float>(n.y());
        p[2] = static_cast<float>(n.z());
        state.at(x, y) = static_cast<std::uint8_t>(s);
    }
    std::size_t valid_count() const;
};

struct NormalsConfig {
    double min_norm = 0.1;           // solution norm below this is invalid
    double albedo_tolerance = 0.1;   // |norm - 1| above this is invalid (marker pixels)
    double saturation = 254.5;       // channel at or above: saturated
    double min_normal_z = 0.05;

    void validate() const;
};

template <typename T>
NormalMap normals_from_rgb(const Image<T, 3>& frame, const LightConfig& lights, const NormalsConfig& cfg = {}) {
    lights.validate();
    cfg.validate();
    const Mat3 inv = lights.matrix().inverse();
    NormalMap map(frame.width(), frame.height());
    for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
            const T* px = frame.pixel(x, y);
            const Vec3 i(px[0], px[1], px[2]);
            if ((i.array() >= cfg.saturation).any()) continue;
            if ((i.array() <= lights.ambient.array() + 0.5).any()) {
                map.set(x, y, Vec3::Zero(), NormalState::Shadowed);
                continue;
            }
            const Vec3 n = inv * ((i - lights.ambient).array() / lights.gain.array()).matrix();
            const double norm = n.norm();
            if (norm < cfg.min_norm || std::abs(norm - 1.0) > cfg.albedo_tolerance) continue;
            const Vec3 u = n / norm;
            if (u.z() < cfg.min_normal_z) continue;
            map.set(x, y, u, NormalState::Valid);
        }
    }
    return map;
}

// Inverse-distance interpolation of shadowed pixels from valid neighbors.
void fill_shadowed(NormalMap& map, int radius = 3);

// Unit normals of a height field given its slopes p = dz/dx, q = dz/dy.
NormalMap normals_from_gradients(const Image<double, 1>& p, const Image<double, 1>& q);

struct HeightMap {
    Image<double, 1> height;           // mm
    Image<std::uint8_t, 1> valid;      // 1 where the normal was valid
    double pitch = 0.05;               // mm per px

    int width() const { return height.width(); }
    int height_px() const { return height.height(); }
    double at(int x, int y) const { return height.at(x, y); }
    // Pixels above `threshold_mm` (valid ones only).
    std::size_t area_above(double threshold_mm) const;
    double max_height() const;
};

struct IntegrationConfig {
    double omega = 1.9;        // SOR relaxation factor
    double tolerance = 1e-8;   // relative residual
    int max_sweeps = 20000;    // fine-level sweeps
    bool multigrid = true;     // nest the relaxation in a V-cycle hierarchy
    int smoothing_sweeps = 2;

    void validate() const;
};

struct IntegrationStats {
    int sweeps = 0;
    int cycles = 0;
    double relative_residual = 0;
};

// Solves the discrete Poisson equation (Neumann boundary) for the height
// whose forward differences best match the pixel-pair averaged gradients.
// Edges touching invalid pixels carry zero gradient, so holes are filled
// harmonically. Output is zero mean over valid pixels.
HeightMap integrate_normals(const NormalMap& normals, double pitch, const IntegrationConfig& cfg = {},
                            IntegrationStats* stats = nullptr);

// RMS over interior pixels of div(p, q) - Laplacian(z), both in the solver's
// discretization, divided by the RMS of the divergence.
double poisson_relative_residual(const NormalMap& normals, const HeightMap& hm);

void write_heightmap_csv(const std::filesystem::path& path, const HeightMap& hm);
// 16-bit PGM with value = (h - offset) / scale; returns (scale, offset).
std::pair<double, double> write_heightmap_pgm16(const std::filesystem::path& path, const HeightMap& hm);

}  // namespace tactile
