#include "tactile/pipeline.hpp"

#include "tactile/serialize.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace tactile {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

Preprocessed preprocess(const Frame& frame, const UndistortMap& map, const PipelineConfig& cfg, bool with_color) {
    Preprocessed out;
    const FrameF f = convert<float>(frame);
    // Luma, the remap and the blur are all linear, so the gray path may take
    // luma first; only the sharpening clamp does not commute.
    out.gray = sharpen(circular_mask(gaussian_blur(undistort_frame(to_gray(f), map), cfg.blur_sigma)),
                       cfg.sharpen_amount, cfg.sharpen_sigma);
    out.gray.index = frame.index;
    if (with_color) {
        out.color = circular_mask(gaussian_blur(undistort_frame(f, map), cfg.blur_sigma));
        out.color.index = frame.index;
    }
    return out;
}

FrameF preprocess_color(const Frame& frame, const UndistortMap& map, const PipelineConfig& cfg) {
    FrameF color = circular_mask(gaussian_blur(undistort_frame(convert<float>(frame), map), cfg.blur_sigma));
    color.index = frame.index;
    return color;
}

ImagePoints4 order_white_markers(const Points2& centroids, const CameraIntrinsics& intr) {
    if (centroids.size() != 4) throw DataError("expected exactly four white markers");
    const std::array<Vec2, 4> pts{centroids[0], centroids[1], centroids[2], centroids[3]};
    const auto idx = angular_order(pts, Vec2(intr.cx, intr.cy));
    ImagePoints4 out;
    for (std::size_t i = 0; i < 4; ++i) out[i] = pts[static_cast<std::size_t>(idx[i])];
    return out;
}

ShapeResult recover_shape(const FrameF& color, const PipelineConfig& cfg) {
    NormalMap nm = normals_from_rgb(color, cfg.lights, cfg.normals);
    // Masked-out pixels read as shadow; keep them out of the fill.
    const double mx = (color.width() - 1) / 2.0, my = (color.height() - 1) / 2.0;
    const double mr = color.height() / 2.0;
    for (int y = 0; y < nm.height(); ++y)
        for (int x = 0; x < nm.width(); ++x)
            if ((x - mx) * (x - mx) + (y - my) * (y - my) > mr * mr) nm.set(x, y, Vec3::Zero(), NormalState::Invalid);
    fill_shadowed(nm, cfg.fill_radius);

    ShapeResult r;
    r.valid_normals = nm.valid_count();
    r.height = integrate_normals(nm, cfg.pitch, cfg.integration, &r.stats);
    std::vector<double> vals;
    vals.reserve(r.valid_normals);
    for (int y = 0; y < nm.height(); ++y)
        for (int x = 0; x < nm.width(); ++x)
            if (r.height.valid.at(x, y)) vals.push_back(r.height.height.at(x, y));
    if (vals.empty()) return r;
    auto mid = vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2);
    std::nth_element(vals.begin(), mid, vals.end());
    const double base = *mid;
    r.contact_area_px = r.height.area_above(base + cfg.contact_threshold_mm);
    r.peak_height_mm = std::max(0.0, r.height.max_height() - base);
    return r;
}

SequenceProcessor::SequenceProcessor(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    stiffness_ = cfg_.stiffness();
    map_ = undistort_map(cfg_.intrinsics, cfg_.distortion);
}

FrameResult SequenceProcessor::process(const Frame& frame, bool with_shape) {
    if (!frame.same_size(cfg_.intrinsics.width, cfg_.intrinsics.height))
        throw DataError("frame size " + std::to_string(frame.width()) + "x" + std::to_string(frame.height()) +
                        " does not match the camera");
    const auto t0 = std::chrono::steady_clock::now();
    FrameResult r;
    r.index = frames_;
    const bool shape = with_shape && cfg_.shape_enabled;
    const Preprocessed pre = preprocess(frame, map_, cfg_, false);
    FlowPyramid pyr = make_flow_pyramid(pre.gray, cfg_.flow.levels);

    // Black markers.
    if (frames_ == 0) {
        try {
            ref_black_ = extract_markers(pre.gray, MarkerKind::Black, cfg_.markers).centroids;
        } catch (const DataError& e) {
            r.flags.push_back(std::string("black: ") + e.what());
            ref_black_.clear();
        }
        alive_.resize(ref_black_.size());
        std::iota(alive_.begin(), alive_.end(), 0);
        current_ = ref_black_;
        r.flow.origins = current_;
        r.flow.displacements.assign(current_.size(), Vec2::Zero());
        r.flow.status.assign(current_.size(), TrackStatus::Tracked);
    } else {
        r.flow = lk_track(prev_pyr_, pyr, current_, cfg_.flow);
        std::vector<int> alive;
        Points2 cur;
        for (std::size_t i = 0; i < alive_.size(); ++i) {
            if (r.flow.status[i] != TrackStatus::Tracked) continue;
            alive.push_back(alive_[i]);
            cur.push_back(current_[i] + r.flow.displacements[i]);
        }
        if (alive.size() < alive_.size())
            r.flags.push_back("black: " + std::to_string(alive_.size() - alive.size()) + " markers lost");
        alive_ = std::move(alive);
        current_ = std::move(cur);
    }
    prev_pyr_ = std::move(pyr);
    r.black_ids = alive_;
    r.black_px = current_;
    double sum = 0.0;
    for (std::size_t i = 0; i < alive_.size(); ++i) {
        const Vec2 d = current_[i] - ref_black_[static_cast<std::size_t>(alive_[i])];
        r.black_from_reference.push_back(d);
        sum += d.norm();
    }
    r.mean_black_displacement_px = alive_.empty() ? 0.0 : sum / static_cast<double>(alive_.size());

    // White markers, pose and wrench.
    try {
        const MarkerSet whites = extract_markers(pre.gray, MarkerKind::White, cfg_.markers);
        r.white_count = whites.size();
        if (whites.size() == 4) {
            r.white_px = order_white_markers(whites.centroids, cfg_.intrinsics);
        } else {
            r.flags.push_back("white: found " + std::to_string(whites.size()) + " markers, expected 4");
        }
    } catch (const DataError& e) {
        r.flags.push_back(std::string("white: ") + e.what());
    }
    if (r.white_px) {
        try {
            const PnpSolution sol = solve_planar_pnp_detailed(cfg_.platform, *r.white_px, cfg_.intrinsics, cfg_.pnp);
            r.pose = sol.pose;
            r.reprojection_rms = sol.rms;
        } catch (const PnpConvergenceError& e) {
            r.pose = e.best();
            r.reprojection_rms = e.residual();
            r.flags.push_back(std::string("pnp: ") + e.what());
        } catch (const DegenerateError& e) {
            r.flags.push_back(std::string("pnp: ") + e.what());
        }
    }
    if (frames_ == 0) {
        ref_pose_ = r.pose;
        ref_white_ = r.white_px;
    }
    if (r.pose && ref_pose_) {
        r.delta = pose_delta(*r.pose, *ref_pose_);
        r.wrench = wrench_from_pose(r.delta, stiffness_, cfg_.max_force);
        if (r.wrench->saturated) r.flags.push_back("wrench: force exceeds the measurable range");
    }
    r.core_ms = elapsed_ms(t0);

    if (shape) {
        const auto t1 = std::chrono::steady_clock::now();
        try {
            r.shape = recover_shape(preprocess_color(frame, map_, cfg_), cfg_);
        } catch (const ConvergenceError& e) {
            r.flags.push_back(std::string("shape: ") + e.what());
        }
        r.shape_ms = elapsed_ms(t1);
    }
    last_gray_ = pre.gray;
    ++frames_;
    return r;
}

void draw_line(Frame& img, const Vec2& a, const Vec2& b, const std::array<std::uint8_t, 3>& color) {
    const double len = (b - a).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
    for (int s = 0; s <= steps; ++s) {
        const Vec2 p = a + (b - a) * (static_cast<double>(s) / steps);
        const int x = static_cast<int>(std::lround(p.x())), y = static_cast<int>(std::lround(p.y()));
        if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
        std::copy(color.begin(), color.end(), img.pixel(x, y));
    }
}

void draw_arrow(Frame& img, const Vec2& from, const Vec2& to, const std::array<std::uint8_t, 3>& color) {
    draw_line(img, from, to, color);
    const Vec2 d = to - from;
    const double len = d.norm();
    if (len < 1.0) return;
    const Vec2 u = d / len;
    const Vec2 n(-u.y(), u.x());
    const double head = std::min(6.0, 0.4 * len);
    draw_line(img, to, to - head * u + 0.5 * head * n, color);
    draw_line(img, to, to - head * u - 0.5 * head * n, color);
}

Frame render_overlay(const Frame& undistorted, const FrameResult& r, const SequenceProcessor& proc) {
    Frame out = undistorted;
    const auto& cfg = proc.config();
    for (std::size_t i = 0; i < r.black_ids.size(); ++i) {
        const Vec2 p0 = proc.reference_black()[static_cast<std::size_t>(r.black_ids[i])];
        draw_arrow(out, p0, p0 + cfg.flow_arrow_scale * r.black_from_reference[i], {255, 255, 0});
    }
    if (proc.reference_white() && r.white_px) {
        for (std::size_t i = 0; i < 4; ++i) {
            const Vec2 p0 = (*proc.reference_white())[i];
            draw_arrow(out, p0, p0 + cfg.pose_arrow_scale * ((*r.white_px)[i] - p0), {255, 0, 0});
        }
    }
    if (r.pose) {
        const Pose6D& p = *r.pose;
        Vec3 c = Vec3::Zero();
        for (const auto& s : cfg.platform.s1) c += s / 4.0;
        const Vec2 o = project(Vec3(p * c), cfg.intrinsics);
        const std::array<std::array<std::uint8_t, 3>, 3> colors{{{255, 0, 0}, {0, 255, 0}, {0, 0, 255}}};
        for (int a = 0; a < 3; ++a) {
            const Vec3 tip = p * Vec3(c + 3.0 * Vec3::Unit(a));
            if (tip.z() > 0.0) draw_line(out, o, project(tip, cfg.intrinsics), colors[static_cast<std::size_t>(a)]);
        }
    }
    return out;
}

nlohmann::json frame_result_to_json(const FrameResult& r) {
    nlohmann::json j;
    j["index"] = r.index;
    j["flags"] = r.flags;
    j["white_count"] = r.white_count;
    if (r.white_px) {
        nlohmann::json w = nlohmann::json::array();
        for (const auto& p : *r.white_px) w.push_back({p.x(), p.y()});
        j["white_px"] = w;
    }
    j["pose"] = r.pose ? pose_to_json(*r.pose) : nlohmann::json(nullptr);
    j["reprojection_rms_px"] = r.reprojection_rms;
    j["delta"] = delta_to_json(r.delta);
    j["wrench"] = r.wrench ? wrench_to_json(*r.wrench) : nlohmann::json(nullptr);
    j["black_tracked"] = r.black_ids.size();
    j["black_mean_displacement_px"] = r.mean_black_displacement_px;
    j["flow_mean_magnitude_px"] = r.flow.mean_magnitude();
    if (r.shape) {
        j["shape"] = {{"valid_normals", r.shape->valid_normals},
                      {"contact_area_px", r.shape->contact_area_px},
                      {"peak_height_mm", r.shape->peak_height_mm},
                      {"sweeps", r.shape->stats.sweeps},
                      {"relative_residual", r.shape->stats.relative_residual}};
    }
    return j;
}

SensorModel sensor_model_from_config(const PipelineConfig& cfg) {
    SensorModel m;
    m.intrinsics = cfg.intrinsics;
    m.distortion = cfg.distortion;
    m.dome = cfg.dome;
    m.platform = cfg.platform;
    m.stiffness = cfg.stiffness();
    m.lights = cfg.lights;
    m.noise_sigma = cfg.noise_sigma;
    m.centroid_jitter_px = cfg.centroid_jitter_px;
    m.seed = cfg.seed;
    m.pitch_mm_per_px = cfg.pitch;
    const DotPattern full = generate_dome_pattern(m.intrinsics, m.distortion, m.dome, cfg.pattern_grid_step);
    const double px = m.intrinsics.width / 480.0;
    m.dots = select_black_dots(full, m.intrinsics, m.platform, 20.0 * px, 45.0 * px);
    m.validate();
    return m;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace tactile
