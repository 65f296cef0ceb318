#include "tactile/sim.hpp"

#include "tactile/serialize.hpp"

#include <fstream>
#include <random>

namespace tactile {

using namespace json_schema;

SensorModel SensorModel::make_default(double grid_step_px) {
    SensorModel m;
    const DotPattern full = generate_dome_pattern(m.intrinsics, m.distortion, m.dome, grid_step_px);
    m.dots = select_black_dots(full, m.intrinsics, m.platform, 20.0, 45.0);
    return m;
}

void SensorModel::validate() const {
    intrinsics.validate();
    distortion.validate();
    dome.validate();
    platform.validate();
    stiffness.validate();
    lights.validate();
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
    if (!(centroid_jitter_px >= 0.0)) throw ConfigError("centroid jitter must be non-negative");
    if (!(black_dot_radius_px > 0.0)) throw ConfigError("black dot radius must be positive");
    if (!(white_marker_radius_mm > 0.0)) throw ConfigError("white marker radius must be positive");
    if (!(pitch_mm_per_px > 0.0)) throw ConfigError("height grid pitch must be positive");
    if (supersample < 1 || supersample > 16) throw ConfigError("supersample must lie in [1, 16]");
    if (dots.dots3d.size() != dots.dots2d.size()) throw ConfigError("dot pattern is inconsistent");
}

DotPattern select_black_dots(const DotPattern& pattern, const CameraIntrinsics& intr,
                             const PlatformModel& platform, double edge_margin_px, double keep_out_px) {
    const Vec2 mask_center((intr.width - 1) / 2.0, (intr.height - 1) / 2.0);
    const double mask_radius = intr.height / 2.0;
    std::array<Vec2, 4> whites;
    for (std::size_t k = 0; k < 4; ++k) whites[k] = project(platform.rest_pose * platform.s1[k], intr);

    DotPattern out;
    out.grid_step = pattern.grid_step;
    std::vector<int> remap(pattern.size(), -1);
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const Vec2 ideal = project(pattern.dots3d[i], intr);
        if ((ideal - mask_center).norm() > mask_radius - edge_margin_px) continue;
        bool near_white = false;
        for (const auto& w : whites) near_white = near_white || (ideal - w).norm() < keep_out_px;
        if (near_white) continue;
        remap[i] = static_cast<int>(out.size());
        out.grid.push_back(pattern.grid[i]);
        out.dots3d.push_back(pattern.dots3d[i]);
        out.dots2d.push_back(pattern.dots2d[i]);
    }
    for (const auto& a : pattern.neighbor_arcs) {
        const int f = remap[static_cast<std::size_t>(a.from)];
        const int t = remap[static_cast<std::size_t>(a.to)];
        if (f >= 0 && t >= 0) out.neighbor_arcs.push_back({f, t, a.length_mm});
    }
    return out;
}

std::string to_string(IndenterShape s) {
    switch (s) {
        case IndenterShape::Sphere: return "sphere";
        case IndenterShape::Cylinder: return "cylinder";
        case IndenterShape::Box: return "box";
    }
    return "unknown";
}

std::string to_string(HardnessClass h) { return h == HardnessClass::Soft ? "soft" : "hard"; }

void ContactScenario::validate() const {
    if (wrenches.empty()) throw ConfigError("scenario needs at least one frame");
    if (depths.size() != wrenches.size()) throw ConfigError("scenario depth and wrench trajectories differ in length");
    for (std::size_t k = 0; k < depths.size(); ++k)
        if (!(depths[k] >= 0.0) || !std::isfinite(depths[k]))
            throw ConfigError("scenario depth at frame " + std::to_string(k) + " must be finite and non-negative");
    for (const auto& w : wrenches)
        if (!w.vector().allFinite()) throw ConfigError("scenario wrench must be finite");
    if (wrenches.front().vector().norm() != 0.0 || depths.front() != 0.0)
        throw ConfigError("scenario must start at zero load (frame 0 is the reference)");
    if (!(indenter.radius_mm > 0.0)) throw ConfigError("indenter radius must be positive");
    if (!((indenter.half_size_mm.array() > 0.0).all())) throw ConfigError("box half size must be positive");
    if (!(indenter.edge_width_mm > 0.0)) throw ConfigError("indenter edge width must be positive");
    if (!(indenter.polar_deg >= 0.0 && indenter.polar_deg < 90.0))
        throw ConfigError("contact polar angle must lie in [0, 90) deg");
    if (!(compliance_mm_per_n >= 0.0)) throw ConfigError("contact compliance must be non-negative");
}

double profile_value(Profile p, int k, int n) {
    if (n <= 1) return 0.0;
    const double t = static_cast<double>(k) / (n - 1);
    switch (p) {
        case Profile::Ramp: return t;
        case Profile::Triangle: return 1.0 - std::abs(2.0 * t - 1.0);
        case Profile::Hold: return std::min(1.0, 2.0 * t);
        case Profile::Sine: return std::sin(kPi * t);
    }
    return 0.0;
}

namespace {

Profile profile_from_string(const std::string& s, const std::string& pointer) {
    if (s == "ramp") return Profile::Ramp;
    if (s == "triangle") return Profile::Triangle;
    if (s == "hold") return Profile::Hold;
    if (s == "sine") return Profile::Sine;
    fail(pointer, "unknown profile '" + s + "' (ramp, triangle, hold, sine)");
}

}  // namespace

ContactScenario make_scenario(int frames, const Vec6& peak_wrench, double peak_depth_mm, Profile profile,
                              const Indenter& indenter, HardnessClass hardness, double compliance_mm_per_n) {
    if (frames < 1) throw ConfigError("scenario needs at least one frame");
    ContactScenario sc;
    sc.indenter = indenter;
    sc.hardness = hardness;
    sc.compliance_mm_per_n = compliance_mm_per_n;
    for (int k = 0; k < frames; ++k) {
        const double s = profile_value(profile, k, frames);
        sc.wrenches.push_back(Wrench::from_vector(s * peak_wrench));
        sc.depths.push_back(s * peak_depth_mm);
    }
    sc.validate();
    return sc;
}

ContactScenario scenario_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"version", "frames", "wrench", "depth", "indenter", "hardness"}, "");
    const int version = integer(j, "version", "");
    if (version != 1) fail("/version", "unsupported scenario version " + std::to_string(version));
    const int frames = integer(j, "frames", "");
    if (frames < 1) fail("/frames", "must be at least 1");

    ContactScenario sc;
    if (!j.contains("wrench")) fail("/wrench", "missing");
    const auto& jw = j.at("wrench");
    reject_unknown_keys(jw, {"profile", "peak", "per_frame"}, "/wrench");
    if (jw.contains("per_frame")) {
        const auto& pf = jw.at("per_frame");
        if (!pf.is_array() || pf.size() != static_cast<std::size_t>(frames))
            fail("/wrench/per_frame", "expected one 6-vector per frame");
        for (std::size_t k = 0; k < pf.size(); ++k) {
            const auto v = numbers(pf[k], 6, "/wrench/per_frame/" + std::to_string(k));
            sc.wrenches.push_back(Wrench::from_vector(Eigen::Map<const Vec6>(v.data())));
        }
        if (sc.wrenches.front().vector().norm() != 0.0) fail("/wrench/per_frame/0", "frame 0 must carry zero load");
    } else {
        const Profile p = profile_from_string(string_or(jw, "profile", "ramp", "/wrench"), "/wrench/profile");
        if (!jw.contains("peak")) fail("/wrench/peak", "missing");
        const auto v = numbers(jw.at("peak"), 6, "/wrench/peak");
        for (int k = 0; k < frames; ++k)
            sc.wrenches.push_back(Wrench::from_vector(profile_value(p, k, frames) * Eigen::Map<const Vec6>(v.data())));
    }

    if (j.contains("depth")) {
        const auto& jd = j.at("depth");
        reject_unknown_keys(jd, {"profile", "peak_mm", "per_frame"}, "/depth");
        if (jd.contains("per_frame")) {
            const auto& pf = jd.at("per_frame");
            sc.depths = numbers(pf, static_cast<std::size_t>(frames), "/depth/per_frame");
            for (std::size_t k = 0; k < sc.depths.size(); ++k)
                if (sc.depths[k] < 0.0) fail("/depth/per_frame/" + std::to_string(k), "must be non-negative");
            if (sc.depths.front() != 0.0) fail("/depth/per_frame/0", "frame 0 must have zero depth");
        } else {
            const Profile p = profile_from_string(string_or(jd, "profile", "ramp", "/depth"), "/depth/profile");
            const double peak = number(jd, "peak_mm", "/depth");
            if (peak < 0.0) fail("/depth/peak_mm", "must be non-negative");
            for (int k = 0; k < frames; ++k) sc.depths.push_back(profile_value(p, k, frames) * peak);
        }
    } else {
        sc.depths.assign(static_cast<std::size_t>(frames), 0.0);
    }

    if (j.contains("indenter")) {
        const auto& ji = j.at("indenter");
        reject_unknown_keys(ji, {"shape", "radius_mm", "half_size_mm", "edge_width_mm", "polar_deg", "azimuth_deg"},
                            "/indenter");
        const std::string shape = string_or(ji, "shape", "sphere", "/indenter");
        if (shape == "sphere")
            sc.indenter.shape = IndenterShape::Sphere;
        else if (shape == "cylinder")
            sc.indenter.shape = IndenterShape::Cylinder;
        else if (shape == "box")
            sc.indenter.shape = IndenterShape::Box;
        else
            fail("/indenter/shape", "unknown shape '" + shape + "' (sphere, cylinder, box)");
        sc.indenter.radius_mm = number_or(ji, "radius_mm", sc.indenter.radius_mm, "/indenter");
        if (!(sc.indenter.radius_mm > 0.0)) fail("/indenter/radius_mm", "must be positive");
        if (ji.contains("half_size_mm")) {
            const auto v = numbers(ji.at("half_size_mm"), 2, "/indenter/half_size_mm");
            sc.indenter.half_size_mm = Vec2(v[0], v[1]);
            if (!(v[0] > 0.0 && v[1] > 0.0)) fail("/indenter/half_size_mm", "must be positive");
        }
        sc.indenter.edge_width_mm = number_or(ji, "edge_width_mm", sc.indenter.edge_width_mm, "/indenter");
        if (!(sc.indenter.edge_width_mm > 0.0)) fail("/indenter/edge_width_mm", "must be positive");
        sc.indenter.polar_deg = number_or(ji, "polar_deg", 0.0, "/indenter");
        if (!(sc.indenter.polar_deg >= 0.0 && sc.indenter.polar_deg < 90.0))
            fail("/indenter/polar_deg", "must lie in [0, 90)");
        sc.indenter.azimuth_deg = number_or(ji, "azimuth_deg", 0.0, "/indenter");
    }

    if (j.contains("hardness")) {
        const auto& jh = j.at("hardness");
        reject_unknown_keys(jh, {"class", "compliance_mm_per_n"}, "/hardness");
        const std::string cls = string_or(jh, "class", "hard", "/hardness");
        if (cls == "soft")
            sc.hardness = HardnessClass::Soft;
        else if (cls == "hard")
            sc.hardness = HardnessClass::Hard;
        else
            fail("/hardness/class", "expected 'soft' or 'hard'");
        sc.compliance_mm_per_n =
            number_or(jh, "compliance_mm_per_n", sc.hardness == HardnessClass::Soft ? 0.05 : 0.005, "/hardness");
        if (sc.compliance_mm_per_n < 0.0) fail("/hardness/compliance_mm_per_n", "must be non-negative");
    }
    sc.validate();
    return sc;
}

nlohmann::json scenario_to_json(const ContactScenario& sc) {
    nlohmann::json wr = nlohmann::json::array();
    for (const auto& w : sc.wrenches) {
        const Vec6 v = w.vector();
        wr.push_back(std::vector<double>(v.data(), v.data() + 6));
    }
    return {{"version", 1},
            {"frames", sc.frames()},
            {"wrench", {{"per_frame", wr}}},
            {"depth", {{"per_frame", sc.depths}}},
            {"indenter",
             {{"shape", to_string(sc.indenter.shape)},
              {"radius_mm", sc.indenter.radius_mm},
              {"half_size_mm", {sc.indenter.half_size_mm.x(), sc.indenter.half_size_mm.y()}},
              {"edge_width_mm", sc.indenter.edge_width_mm},
              {"polar_deg", sc.indenter.polar_deg},
              {"azimuth_deg", sc.indenter.azimuth_deg}}},
            {"hardness", {{"class", to_string(sc.hardness)}, {"compliance_mm_per_n", sc.compliance_mm_per_n}}}};
}

ContactScenario load_scenario(const std::filesystem::path& path) { return scenario_from_json(read_json(path)); }

Vec3 dome_point(const DomeGeometry& dome, double polar_deg, double azimuth_deg) {
    const double th = deg2rad(polar_deg), ph = deg2rad(azimuth_deg);
    return dome.center + dome.radius * Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), -std::cos(th));
}

Vec3 tangential_displacement(const Vec3& contact, double depth_mm, double compliance_mm_per_n,
                             double indenter_radius_mm, const Vec3& marker, const DomeGeometry& dome,
                             const DeformationParams& params) {
    if (depth_mm <= 0.0) return Vec3::Zero();
    const Vec3 n = (marker - dome.center).normalized();
    Vec3 v = marker - contact;
    v -= v.dot(n) * n;
    const double len = v.norm();
    if (len < 1e-12) return Vec3::Zero();
    const double spread = 1.0 + compliance_mm_per_n / params.reference_compliance;
    const double a = params.amplitude / spread;
    const double sigma = params.sigma_scale * indenter_radius_mm * spread;
    const double g = geodesic_arc(contact, marker, dome);
    return (a * depth_mm * std::exp(-(g / sigma) * (g / sigma)) / len) * v;
}

namespace {

double smoothstep(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * (3.0 - 2.0 * t);
}

double smoothstep_slope(double t) { return (t <= 0.0 || t >= 1.0) ? 0.0 : 6.0 * t * (1.0 - t); }

// Plateau of value 1 falling to 0 across [half - w/2, half + w/2].
std::pair<double, double> plateau(double r, double half, double w) {
    const double t = (r - (half - 0.5 * w)) / w;
    return {1.0 - smoothstep(t), -smoothstep_slope(t) / w};
}

}  // namespace

Vec3 Indentation::evaluate(double u, double v) const {
    if (!active) return Vec3::Zero();
    const double x = (u - center_px.x()) * pitch;
    const double y = (v - center_px.y()) * pitch;
    switch (shape) {
        case IndenterShape::Sphere: {
            const double r2 = x * x + y * y;
            const double a2 = radius * radius - (radius - depth) * (radius - depth);
            if (r2 >= a2) return Vec3::Zero();
            const double s = std::sqrt(radius * radius - r2);
            return {s - (radius - depth), -x / s, -y / s};
        }
        case IndenterShape::Cylinder: {
            const double r = std::sqrt(x * x + y * y);
            const auto [h, dh] = plateau(r, radius, edge_width);
            if (r < 1e-12) return {depth * h, 0.0, 0.0};
            return {depth * h, depth * dh * x / r, depth * dh * y / r};
        }
        case IndenterShape::Box: {
            const auto [hx, dhx] = plateau(std::abs(x), half_size.x(), edge_width);
            const auto [hy, dhy] = plateau(std::abs(y), half_size.y(), edge_width);
            const double sx = x < 0 ? -1.0 : 1.0, sy = y < 0 ? -1.0 : 1.0;
            return {depth * hx * hy, depth * dhx * sx * hy, depth * hx * dhy * sy};
        }
    }
    return Vec3::Zero();
}

double Indentation::reach_px() const {
    if (!active) return 0.0;
    switch (shape) {
        case IndenterShape::Sphere:
            return std::sqrt(radius * radius - (radius - depth) * (radius - depth)) / pitch + 1.0;
        case IndenterShape::Cylinder: return (radius + 0.5 * edge_width) / pitch + 1.0;
        case IndenterShape::Box: return (half_size.array() + 0.5 * edge_width).matrix().norm() / pitch + 1.0;
    }
    return 0.0;
}

Indentation make_indentation(const SensorModel& model, const ContactScenario& sc, int frame) {
    Indentation ind;
    ind.pitch = model.pitch_mm_per_px;
    const double d = sc.depths.at(static_cast<std::size_t>(frame));
    if (d <= 0.0 || sc.indenter.polar_deg > 0.5 * model.dome.fov_deg) return ind;
    ind.active = true;
    ind.shape = sc.indenter.shape;
    ind.center_px = project(dome_point(model.dome, sc.indenter.polar_deg, sc.indenter.azimuth_deg), model.intrinsics);
    // A compliant object absorbs part of the travel and spreads the load.
    const double fn = std::abs(sc.wrenches[static_cast<std::size_t>(frame)].force.z());
    const double give = std::min(sc.compliance_mm_per_n * fn, 0.8 * d);
    const double spread = (d + give) / (d - give);
    ind.depth = d - give;
    ind.radius = sc.indenter.radius_mm * (ind.shape == IndenterShape::Sphere ? spread : 1.0);
    ind.half_size = sc.indenter.half_size_mm;
    ind.edge_width = sc.indenter.edge_width_mm * spread;
    if (ind.shape == IndenterShape::Sphere) ind.depth = std::min(ind.depth, 0.9 * ind.radius);
    return ind;
}

PoseDelta compliance_delta(const StiffnessMatrix& s, const Wrench& w) {
    PoseDelta d;
    d.v = s.k.ldlt().solve(w.vector());
    return d;
}

namespace {

double indenter_spread_radius(const Indenter& ind) {
    return ind.shape == IndenterShape::Box ? ind.half_size_mm.maxCoeff() : ind.radius_mm;
}

}  // namespace

SensorRenderer::SensorRenderer(SensorModel model) : model_(std::move(model)) {
    model_.validate();
    const auto& in = model_.intrinsics;
    const std::size_t n = static_cast<std::size_t>(in.width) * in.height;
    ideal_.resize(n);
    jacobian_.resize(n);
    const Eigen::Matrix2d f = Eigen::Vector2d(in.fx, in.fy).asDiagonal();
    const Eigen::Matrix2d finv = Eigen::Vector2d(1.0 / in.fx, 1.0 / in.fy).asDiagonal();
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
            const Vec2 nd((x - in.cx) / in.fx, (y - in.cy) / in.fy);
            const Vec2 nu = undistort_normalized(nd, model_.distortion);
            const std::size_t i = static_cast<std::size_t>(y) * in.width + x;
            ideal_[i] = Vec2(in.fx * nu.x() + in.cx, in.fy * nu.y() + in.cy);
            jacobian_[i] = f * distortion_jacobian(nu, model_.distortion).inverse() * finv;
        }
}

HeightMap SensorRenderer::height_map(const ContactScenario& sc, int frame) const {
    const auto& in = model_.intrinsics;
    const Indentation ind = make_indentation(model_, sc, frame);
    HeightMap hm;
    hm.pitch = model_.pitch_mm_per_px;
    hm.height = Image<double, 1>(in.width, in.height, 0.0);
    hm.valid = Image<std::uint8_t, 1>(in.width, in.height, 0);
    const Vec2 mc((in.width - 1) / 2.0, (in.height - 1) / 2.0);
    const double mr = in.height / 2.0;
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
            hm.valid.at(x, y) = (Vec2(x, y) - mc).norm() <= mr;
            hm.height.at(x, y) = ind.evaluate(x, y).x();
        }
    return hm;
}

Frame SensorRenderer::render(const ContactScenario& sc, int k, FrameTruth* truth, const RenderOptions& opts) const {
    if (k < 0 || k >= sc.frames()) throw DataError("frame index outside the scenario");
    const auto& m = model_;
    const auto& in = m.intrinsics;
    const int W = in.width, H = in.height;
    const std::size_t npx = static_cast<std::size_t>(W) * H;
    std::mt19937_64 rng(m.seed ^ static_cast<std::uint64_t>(k));
    std::normal_distribution<double> gauss(0.0, 1.0);

    const Wrench& wrench = sc.wrenches[static_cast<std::size_t>(k)];
    const PoseDelta delta = compliance_delta(m.stiffness, wrench);
    const Pose6D pose = apply_delta(m.platform.rest_pose, delta);
    const Indentation ind = make_indentation(m, sc, k);

    // Shading of the elastomer.
    std::vector<Vec3> color(npx, shade(Vec3::UnitZ(), m.lights));
    if (ind.active) {
        const double reach = ind.reach_px();
        for (std::size_t i = 0; i < npx; ++i) {
            const Vec2& p = ideal_[i];
            if ((p - ind.center_px).norm() > reach) continue;
            const Vec3 e = ind.evaluate(p.x(), p.y());
            color[i] = shade(Vec3(-e.y(), -e.z(), 1.0).normalized(), m.lights);
        }
    }

    auto draw_jitter = [&]() -> Vec2 {
        if (m.centroid_jitter_px <= 0.0) return Vec2::Zero();
        const double jx = gauss(rng);
        const double jy = gauss(rng);
        return m.centroid_jitter_px * Vec2(jx, jy);
    };

    const int S = m.supersample;
    const double inv_s2 = 1.0 / (S * S);
    auto subsample = [S](int i) { return (i + 0.5) / S - 0.5; };
    auto blend = [&](int x, int y, double coverage, const Vec3& c) {
        if (coverage <= 0.0) return;
        Vec3& dst = color[static_cast<std::size_t>(y) * W + x];
        dst = (1.0 - coverage) * dst + coverage * c;
    };

    // White markers: exact disc on the posed platform plane.
    std::array<Vec2, 4> white_ideal;
    const Vec3 plane_n = pose.q * Vec3::UnitZ();
    for (std::size_t j = 0; j < 4; ++j) {
        const Vec3 center = pose * m.platform.s1[j];
        white_ideal[j] = project(center, in);
        const Vec2 jitter = draw_jitter();
        const Vec2 cd = project(center, in, m.distortion) + jitter;
        const double rb = 1.5 * in.fx * m.white_marker_radius_mm / center.z() + 2.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(cd.x() - rb)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(cd.x() + rb)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cd.y() - rb)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(cd.y() + rb)));
        const double plane_d = plane_n.dot(center);
        const double r2 = m.white_marker_radius_mm * m.white_marker_radius_mm;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                int hits = 0;
                for (int sy = 0; sy < S; ++sy)
                    for (int sx = 0; sx < S; ++sx) {
                        const Vec2 o = Vec2(subsample(sx), subsample(sy)) - jitter;
                        const Vec2 u = ideal_[i] + jacobian_[i] * o;
                        const Vec3 ray((u.x() - in.cx) / in.fx, (u.y() - in.cy) / in.fy, 1.0);
                        const double den = plane_n.dot(ray);
                        if (std::abs(den) < 1e-12) continue;
                        const double t = plane_d / den;
                        if (t > 0.0 && (t * ray - center).squaredNorm() <= r2) ++hits;
                    }
                blend(x, y, hits * inv_s2, m.white_color);
            }
    }

    // Black dots advected by the elastomer deformation.
    const bool deformed = ind.active;
    const Vec3 contact = dome_point(m.dome, sc.indenter.polar_deg, sc.indenter.azimuth_deg);
    Points2 black_ideal;
    black_ideal.reserve(m.dots.size());
    const double rr = m.black_dot_radius_px;
    for (std::size_t j = 0; j < m.dots.size(); ++j) {
        Vec3 p = m.dots.dots3d[j];
        if (deformed) {
            const Vec3 u = tangential_displacement(contact, ind.depth, sc.compliance_mm_per_n,
                                                   indenter_spread_radius(sc.indenter), p, m.dome);
            p = m.dome.center + m.dome.radius * (p + u - m.dome.center).normalized();
        }
        black_ideal.push_back(project(p, in));
        const Vec2 jitter = draw_jitter();
        const Vec2 cd = project(p, in, m.distortion) + jitter;
        const int x0 = std::max(0, static_cast<int>(std::floor(cd.x() - rr - 1)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(cd.x() + rr + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cd.y() - rr - 1)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(cd.y() + rr + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                int hits = 0;
                for (int sy = 0; sy < S; ++sy)
                    for (int sx = 0; sx < S; ++sx) {
                        const double dx = x + subsample(sx) - cd.x(), dy = y + subsample(sy) - cd.y();
                        hits += dx * dx + dy * dy <= rr * rr;
                    }
                blend(x, y, hits * inv_s2, m.black_color);
            }
    }

    Frame frame(W, H);
    frame.index = k;
    auto& data = frame.storage();
    for (std::size_t i = 0; i < npx; ++i)
        for (int c = 0; c < 3; ++c) {
            double v = color[i](c);
            if (m.noise_sigma > 0.0) v += m.noise_sigma * gauss(rng);
            data[i * 3 + static_cast<std::size_t>(c)] = saturate<std::uint8_t>(v);
        }

    if (truth) {
        FrameTruth& t = *truth;
        t.index = k;
        t.wrench = wrench;
        t.wrench.saturated = wrench.force.norm() > kDefaultMaxForce;
        t.delta = delta;
        t.pose = pose;
        t.white_px = white_ideal;
        t.black_px = black_ideal;
        t.black_displacement_px.clear();
        for (std::size_t j = 0; j < m.dots.size(); ++j)
            t.black_displacement_px.push_back(black_ideal[j] - project(m.dots.dots3d[j], in));
        t.depth_mm = sc.depths[static_cast<std::size_t>(k)];
        t.peak_height_mm = ind.active ? ind.depth : 0.0;
        t.contact_area_px = 0;
        if (ind.active) {
            const double reach = ind.reach_px();
            const int x0 = std::max(0, static_cast<int>(ind.center_px.x() - reach));
            const int x1 = std::min(W - 1, static_cast<int>(ind.center_px.x() + reach) + 1);
            const int y0 = std::max(0, static_cast<int>(ind.center_px.y() - reach));
            const int y1 = std::min(H - 1, static_cast<int>(ind.center_px.y() + reach) + 1);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) t.contact_area_px += ind.evaluate(x, y).x() > kContactHeightMm;
        }
        if (opts.keep_height_maps)
            t.height = height_map(sc, k);
        else
            t.height.reset();
    }
    return frame;
}

SimulatedSequence render_sequence(const SensorModel& model, const ContactScenario& sc, const RenderOptions& opts) {
    sc.validate();
    const SensorRenderer renderer(model);
    SimulatedSequence seq;
    seq.frames.reserve(static_cast<std::size_t>(sc.frames()));
    seq.truth.resize(static_cast<std::size_t>(sc.frames()));
    for (int k = 0; k < sc.frames(); ++k)
        seq.frames.push_back(renderer.render(sc, k, &seq.truth[static_cast<std::size_t>(k)], opts));
    return seq;
}

nlohmann::json truth_to_json(const FrameTruth& t) {
    nlohmann::json whites = nlohmann::json::array();
    for (const auto& w : t.white_px) whites.push_back({w.x(), w.y()});
    return {{"index", t.index},
            {"wrench", wrench_to_json(t.wrench)},
            {"delta", delta_to_json(t.delta)},
            {"pose", pose_to_json(t.pose)},
            {"white_px", whites},
            {"black_markers", t.black_px.size()},
            {"depth_mm", t.depth_mm},
            {"peak_height_mm", t.peak_height_mm},
            {"contact_area_px", t.contact_area_px}};
}

void write_truth_csv(const std::filesystem::path& path, const FrameTruth& t) {
    std::ostringstream out;
    out.precision(10);
    out << "id,x_px,y_px,dx_px,dy_px\n";
    for (std::size_t j = 0; j < t.black_px.size(); ++j)
        out << j << ',' << t.black_px[j].x() << ',' << t.black_px[j].y() << ',' << t.black_displacement_px[j].x()
            << ',' << t.black_displacement_px[j].y() << '\n';
    write_text_atomic(path, out.str());
}

}  // namespace tactile
