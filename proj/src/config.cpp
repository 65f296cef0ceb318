#include "tactile/config.hpp"

#include "tactile/serialize.hpp"

namespace tactile {

using namespace json_schema;

StiffnessMatrix PipelineConfig::stiffness() const {
    switch (stiffness_source) {
        case StiffnessSource::Diagonal: return diagonal_stiffness(stiffness_diagonal);
        case StiffnessSource::Matrix: return stiffness_matrix;
        case StiffnessSource::Springs: return ideal_spring_stiffness(springs);
    }
    return diagonal_stiffness(stiffness_diagonal);
}

void PipelineConfig::validate() const {
    intrinsics.validate();
    distortion.validate();
    dome.validate();
    if (!(pattern_grid_step >= 2.0)) throw ConfigError("pattern: grid_step_px must be >= 2");
    if (!(pattern_dot_radius > 0.0)) throw ConfigError("pattern: dot_radius_px must be positive");
    if (!(blur_sigma > 0.0)) throw ConfigError("preprocess: blur_sigma must be positive");
    if (!(sharpen_amount >= 0.0)) throw ConfigError("preprocess: sharpen_amount must be non-negative");
    if (!(sharpen_sigma > 0.0)) throw ConfigError("preprocess: sharpen_sigma must be positive");
    markers.validate();
    flow.validate();
    pnp.validate();
    platform.validate();
    if (stiffness_source == StiffnessSource::Springs) springs.validate();
    stiffness().validate();
    if (!(max_force > 0.0)) throw ConfigError("stiffness: max_force_n must be positive");
    lights.validate();
    normals.validate();
    integration.validate();
    if (!(pitch > 0.0)) throw ConfigError("shape: pitch_mm must be positive");
    if (fill_radius < 1) throw ConfigError("shape: fill_radius must be >= 1");
    if (!(contact_threshold_mm > 0.0)) throw ConfigError("shape: contact_threshold_mm must be positive");
    if (!(flow_arrow_scale > 0.0) || !(pose_arrow_scale > 0.0))
        throw ConfigError("overlay: arrow scales must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("sim: noise_sigma must be non-negative");
    if (!(centroid_jitter_px >= 0.0)) throw ConfigError("sim: centroid_jitter_px must be non-negative");
    if (!(learning_rate >= 0.0)) throw ConfigError("hardness: learning_rate must be non-negative");
    if (epochs < 1) throw ConfigError("hardness: epochs must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("hardness: train_fraction must lie in (0, 1)");
}

namespace {

Vec3 vec3(const nlohmann::json& j, const std::string& pointer) {
    const auto v = numbers(j, 3, pointer);
    return {v[0], v[1], v[2]};
}

// Runs `check`, re-throwing its ConfigError prefixed with `pointer`.
template <typename F>
void checked(const std::string& pointer, F&& check) {
    try {
        check();
    } catch (const ConfigError& e) {
        fail(pointer, e.what());
    }
}

}  // namespace

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    reject_unknown_keys(j,
                        {"version", "paths", "camera", "distortion", "dome", "pattern", "preprocess", "markers",
                         "flow", "pnp", "platform", "stiffness", "shape", "overlay", "sim", "hardness"},
                        "");
    const int version = integer(j, "version", "");
    if (version != kConfigVersion) fail("/version", "unsupported config version " + std::to_string(version));

    if (j.contains("paths")) {
        const auto& s = j.at("paths");
        const std::string p = "/paths";
        reject_unknown_keys(s, {"out_dir", "frames_dir", "scenario", "samples", "manifest"}, p);
        c.paths.out_dir = string_or(s, "out_dir", "", p);
        c.paths.frames_dir = string_or(s, "frames_dir", "", p);
        c.paths.scenario = string_or(s, "scenario", "", p);
        c.paths.samples = string_or(s, "samples", "", p);
        c.paths.manifest = string_or(s, "manifest", "", p);
    }
    if (j.contains("camera")) {
        const auto& s = j.at("camera");
        const std::string p = "/camera";
        reject_unknown_keys(s, {"fx", "fy", "cx", "cy", "width", "height"}, p);
        c.intrinsics.fx = number_or(s, "fx", c.intrinsics.fx, p);
        c.intrinsics.fy = number_or(s, "fy", c.intrinsics.fy, p);
        c.intrinsics.cx = number_or(s, "cx", c.intrinsics.cx, p);
        c.intrinsics.cy = number_or(s, "cy", c.intrinsics.cy, p);
        c.intrinsics.width = integer_or(s, "width", c.intrinsics.width, p);
        c.intrinsics.height = integer_or(s, "height", c.intrinsics.height, p);
        checked(p, [&] { c.intrinsics.validate(); });
    }
    if (j.contains("distortion")) {
        const auto& s = j.at("distortion");
        const std::string p = "/distortion";
        reject_unknown_keys(s, {"k1", "k2", "k3", "p1", "p2"}, p);
        c.distortion.k1 = number_or(s, "k1", c.distortion.k1, p);
        c.distortion.k2 = number_or(s, "k2", c.distortion.k2, p);
        c.distortion.k3 = number_or(s, "k3", c.distortion.k3, p);
        c.distortion.p1 = number_or(s, "p1", c.distortion.p1, p);
        c.distortion.p2 = number_or(s, "p2", c.distortion.p2, p);
    }
    if (j.contains("dome")) {
        const auto& s = j.at("dome");
        const std::string p = "/dome";
        reject_unknown_keys(s, {"radius_mm", "center_mm", "fov_deg"}, p);
        c.dome.radius = number_or(s, "radius_mm", c.dome.radius, p);
        if (s.contains("center_mm")) c.dome.center = vec3(s.at("center_mm"), p + "/center_mm");
        c.dome.fov_deg = number_or(s, "fov_deg", c.dome.fov_deg, p);
        checked(p, [&] { c.dome.validate(); });
    }
    if (j.contains("pattern")) {
        const auto& s = j.at("pattern");
        const std::string p = "/pattern";
        reject_unknown_keys(s, {"grid_step_px", "dot_radius_px"}, p);
        c.pattern_grid_step = number_or(s, "grid_step_px", c.pattern_grid_step, p);
        if (!(c.pattern_grid_step >= 2.0)) fail(p + "/grid_step_px", "must be >= 2");
        c.pattern_dot_radius = number_or(s, "dot_radius_px", c.pattern_dot_radius, p);
        if (!(c.pattern_dot_radius > 0.0)) fail(p + "/dot_radius_px", "must be positive");
    }
    if (j.contains("preprocess")) {
        const auto& s = j.at("preprocess");
        const std::string p = "/preprocess";
        reject_unknown_keys(s, {"blur_sigma", "sharpen_amount", "sharpen_sigma"}, p);
        c.blur_sigma = number_or(s, "blur_sigma", c.blur_sigma, p);
        if (!(c.blur_sigma > 0.0)) fail(p + "/blur_sigma", "must be positive");
        c.sharpen_amount = number_or(s, "sharpen_amount", c.sharpen_amount, p);
        if (!(c.sharpen_amount >= 0.0)) fail(p + "/sharpen_amount", "must be non-negative");
        c.sharpen_sigma = number_or(s, "sharpen_sigma", c.sharpen_sigma, p);
        if (!(c.sharpen_sigma > 0.0)) fail(p + "/sharpen_sigma", "must be positive");
    }
    if (j.contains("markers")) {
        const auto& s = j.at("markers");
        const std::string p = "/markers";
        reject_unknown_keys(s, {"t_low", "t_high", "min_area", "max_area", "kernel_radius", "max_markers"}, p);
        auto& m = c.markers;
        m.t_low = number_or(s, "t_low", m.t_low, p);
        m.t_high = number_or(s, "t_high", m.t_high, p);
        m.min_area = number_or(s, "min_area", m.min_area, p);
        m.max_area = number_or(s, "max_area", m.max_area, p);
        m.kernel_radius = integer_or(s, "kernel_radius", m.kernel_radius, p);
        m.max_markers = integer_or(s, "max_markers", m.max_markers, p);
        checked(p, [&] { m.validate(); });
    }
    if (j.contains("flow")) {
        const auto& s = j.at("flow");
        const std::string p = "/flow";
        reject_unknown_keys(s, {"window", "levels", "max_iters", "eps", "min_eig"}, p);
        auto& f = c.flow;
        f.window = integer_or(s, "window", f.window, p);
        f.levels = integer_or(s, "levels", f.levels, p);
        f.max_iters = integer_or(s, "max_iters", f.max_iters, p);
        f.eps = number_or(s, "eps", f.eps, p);
        f.min_eig = number_or(s, "min_eig", f.min_eig, p);
        checked(p, [&] { f.validate(); });
    }
    if (j.contains("pnp")) {
        const auto& s = j.at("pnp");
        const std::string p = "/pnp";
        reject_unknown_keys(s, {"initial_damping", "damping_factor", "max_iters", "min_step"}, p);
        auto& q = c.pnp;
        q.initial_damping = number_or(s, "initial_damping", q.initial_damping, p);
        q.damping_factor = number_or(s, "damping_factor", q.damping_factor, p);
        q.max_iters = integer_or(s, "max_iters", q.max_iters, p);
        q.min_step = number_or(s, "min_step", q.min_step, p);
        checked(p, [&] { q.validate(); });
    }
    if (j.contains("platform")) {
        const auto& s = j.at("platform");
        const std::string p = "/platform";
        reject_unknown_keys(s, {"markers_mm", "rest_pose"}, p);
        if (s.contains("markers_mm")) {
            const auto& a = s.at("markers_mm");
            if (!a.is_array() || a.size() != 4) fail(p + "/markers_mm", "expected four 3-vectors");
            for (std::size_t i = 0; i < 4; ++i) c.platform.s1[i] = vec3(a[i], p + "/markers_mm/" + std::to_string(i));
        }
        if (s.contains("rest_pose")) c.platform.rest_pose = pose_from_json(s.at("rest_pose"), p + "/rest_pose");
        checked(p, [&] { c.platform.validate(); });
    }
    if (j.contains("stiffness")) {
        const auto& s = j.at("stiffness");
        const std::string p = "/stiffness";
        reject_unknown_keys(s, {"source", "diagonal", "matrix", "springs", "max_force_n"}, p);
        const std::string src = string_or(s, "source", "diagonal", p);
        if (src == "diagonal")
            c.stiffness_source = StiffnessSource::Diagonal;
        else if (src == "matrix")
            c.stiffness_source = StiffnessSource::Matrix;
        else if (src == "springs")
            c.stiffness_source = StiffnessSource::Springs;
        else
            fail(p + "/source", "expected 'diagonal', 'matrix' or 'springs'");
        if (s.contains("diagonal")) {
            const auto v = numbers(s.at("diagonal"), 6, p + "/diagonal");
            c.stiffness_diagonal = Eigen::Map<const Vec6>(v.data());
            if ((c.stiffness_diagonal.array() <= 0.0).any()) fail(p + "/diagonal", "entries must be positive");
        }
        if (s.contains("matrix")) c.stiffness_matrix = stiffness_from_json(s.at("matrix"), p + "/matrix");
        if (s.contains("springs")) {
            const auto& sp = s.at("springs");
            const std::string q = p + "/springs";
            reject_unknown_keys(sp, {"positions_mm", "rate_n_per_mm", "shear_fraction"}, q);
            if (sp.contains("positions_mm")) {
                const auto& a = sp.at("positions_mm");
                if (!a.is_array()) fail(q + "/positions_mm", "expected an array of 2-vectors");
                c.springs.positions.clear();
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const auto v = numbers(a[i], 2, q + "/positions_mm/" + std::to_string(i));
                    c.springs.positions.emplace_back(v[0], v[1]);
                }
            }
            c.springs.rate = number_or(sp, "rate_n_per_mm", c.springs.rate, q);
            c.springs.shear_fraction = number_or(sp, "shear_fraction", c.springs.shear_fraction, q);
        }
        c.max_force = number_or(s, "max_force_n", c.max_force, p);
        if (!(c.max_force > 0.0)) fail(p + "/max_force_n", "must be positive");
        checked(p, [&] {
            if (c.stiffness_source == StiffnessSource::Springs) c.springs.validate();
            c.stiffness().validate();
        });
    }
    if (j.contains("shape")) {
        const auto& s = j.at("shape");
        const std::string p = "/shape";
        reject_unknown_keys(s,
                            {"enabled", "light_tilt_deg", "light_gain", "ambient", "min_norm", "albedo_tolerance",
                             "omega", "tolerance", "max_sweeps", "multigrid", "pitch_mm", "fill_radius",
                             "contact_threshold_mm"},
                            p);
        c.shape_enabled = boolean_or(s, "enabled", c.shape_enabled, p);
        c.light_tilt_deg = number_or(s, "light_tilt_deg", c.light_tilt_deg, p);
        if (!(c.light_tilt_deg > 0.0 && c.light_tilt_deg < 90.0)) fail(p + "/light_tilt_deg", "must lie in (0, 90)");
        const Vec3 gain = c.lights.gain, ambient = c.lights.ambient;
        c.lights = LightConfig::from_tilt(c.light_tilt_deg);
        c.lights.gain = s.contains("light_gain") ? vec3(s.at("light_gain"), p + "/light_gain") : gain;
        c.lights.ambient = s.contains("ambient") ? vec3(s.at("ambient"), p + "/ambient") : ambient;
        c.normals.min_norm = number_or(s, "min_norm", c.normals.min_norm, p);
        c.normals.albedo_tolerance = number_or(s, "albedo_tolerance", c.normals.albedo_tolerance, p);
        c.integration.omega = number_or(s, "omega", c.integration.omega, p);
        c.integration.tolerance = number_or(s, "tolerance", c.integration.tolerance, p);
        c.integration.max_sweeps = integer_or(s, "max_sweeps", c.integration.max_sweeps, p);
        c.integration.multigrid = boolean_or(s, "multigrid", c.integration.multigrid, p);
        c.pitch = number_or(s, "pitch_mm", c.pitch, p);
        if (!(c.pitch > 0.0)) fail(p + "/pitch_mm", "must be positive");
        c.fill_radius = integer_or(s, "fill_radius", c.fill_radius, p);
        if (c.fill_radius < 1) fail(p + "/fill_radius", "must be >= 1");
        c.contact_threshold_mm = number_or(s, "contact_threshold_mm", c.contact_threshold_mm, p);
        if (!(c.contact_threshold_mm > 0.0)) fail(p + "/contact_threshold_mm", "must be positive");
        checked(p, [&] {
            c.lights.validate();
            c.normals.validate();
            c.integration.validate();
        });
    }
    if (j.contains("overlay")) {
        const auto& s = j.at("overlay");
        const std::string p = "/overlay";
        reject_unknown_keys(s, {"enabled", "flow_arrow_scale", "pose_arrow_scale"}, p);
        c.overlay = boolean_or(s, "enabled", c.overlay, p);
        c.flow_arrow_scale = number_or(s, "flow_arrow_scale", c.flow_arrow_scale, p);
        if (!(c.flow_arrow_scale > 0.0)) fail(p + "/flow_arrow_scale", "must be positive");
        c.pose_arrow_scale = number_or(s, "pose_arrow_scale", c.pose_arrow_scale, p);
        if (!(c.pose_arrow_scale > 0.0)) fail(p + "/pose_arrow_scale", "must be positive");
    }
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        const std::string p = "/sim";
        reject_unknown_keys(s, {"noise_sigma", "centroid_jitter_px", "seed"}, p);
        c.noise_sigma = number_or(s, "noise_sigma", c.noise_sigma, p);
        if (!(c.noise_sigma >= 0.0)) fail(p + "/noise_sigma", "must be non-negative");
        c.centroid_jitter_px = number_or(s, "centroid_jitter_px", c.centroid_jitter_px, p);
        if (!(c.centroid_jitter_px >= 0.0)) fail(p + "/centroid_jitter_px", "must be non-negative");
        if (s.contains("seed")) {
            if (!s.at("seed").is_number_unsigned()) fail(p + "/seed", "expected a non-negative integer");
            c.seed = s.at("seed").get<std::uint64_t>();
        }
    }
    if (j.contains("hardness")) {
        const auto& s = j.at("hardness");
        const std::string p = "/hardness";
        reject_unknown_keys(s, {"learning_rate", "epochs", "last5_pooling", "train_fraction"}, p);
        c.learning_rate = number_or(s, "learning_rate", c.learning_rate, p);
        if (!(c.learning_rate >= 0.0)) fail(p + "/learning_rate", "must be non-negative");
        c.epochs = integer_or(s, "epochs", c.epochs, p);
        if (c.epochs < 1) fail(p + "/epochs", "must be >= 1");
        c.last5_pooling = boolean_or(s, "last5_pooling", c.last5_pooling, p);
        c.train_fraction = number_or(s, "train_fraction", c.train_fraction, p);
        if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) fail(p + "/train_fraction", "must lie in (0, 1)");
    }
    c.validate();
    return c;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
    auto v3 = [](const Vec3& v) { return std::vector<double>{v.x(), v.y(), v.z()}; };
    nlohmann::json markers = nlohmann::json::array();
    for (const auto& s : c.platform.s1) markers.push_back(v3(s));
    nlohmann::json springs = nlohmann::json::array();
    for (const auto& s : c.springs.positions) springs.push_back({s.x(), s.y()});
    const char* src = c.stiffness_source == StiffnessSource::Diagonal ? "diagonal"
                      : c.stiffness_source == StiffnessSource::Matrix ? "matrix"
                                                                      : "springs";
    return {
        {"version", kConfigVersion},
        {"paths",
         {{"out_dir", c.paths.out_dir},
          {"frames_dir", c.paths.frames_dir},
          {"scenario", c.paths.scenario},
          {"samples", c.paths.samples},
          {"manifest", c.paths.manifest}}},
        {"camera",
         {{"fx", c.intrinsics.fx},
          {"fy", c.intrinsics.fy},
          {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy},
          {"width", c.intrinsics.width},
          {"height", c.intrinsics.height}}},
        {"distortion",
         {{"k1", c.distortion.k1},
          {"k2", c.distortion.k2},
          {"k3", c.distortion.k3},
          {"p1", c.distortion.p1},
          {"p2", c.distortion.p2}}},
        {"dome", {{"radius_mm", c.dome.radius}, {"center_mm", v3(c.dome.center)}, {"fov_deg", c.dome.fov_deg}}},
        {"pattern", {{"grid_step_px", c.pattern_grid_step}, {"dot_radius_px", c.pattern_dot_radius}}},
        {"preprocess",
         {{"blur_sigma", c.blur_sigma}, {"sharpen_amount", c.sharpen_amount}, {"sharpen_sigma", c.sharpen_sigma}}},
        {"markers",
         {{"t_low", c.markers.t_low},
          {"t_high", c.markers.t_high},
          {"min_area", c.markers.min_area},
          {"max_area", c.markers.max_area},
          {"kernel_radius", c.markers.kernel_radius},
          {"max_markers", c.markers.max_markers}}},
        {"flow",
         {{"window", c.flow.window},
          {"levels", c.flow.levels},
          {"max_iters", c.flow.max_iters},
          {"eps", c.flow.eps},
          {"min_eig", c.flow.min_eig}}},
        {"pnp",
         {{"initial_damping", c.pnp.initial_damping},
          {"damping_factor", c.pnp.damping_factor},
          {"max_iters", c.pnp.max_iters},
          {"min_step", c.pnp.min_step}}},
        {"platform", {{"markers_mm", markers}, {"rest_pose", pose_to_json(c.platform.rest_pose)}}},
        {"stiffness",
         {{"source", src},
          {"diagonal", std::vector<double>(c.stiffness_diagonal.data(), c.stiffness_diagonal.data() + 6)},
          {"matrix", stiffness_to_json(c.stiffness_matrix)},
          {"springs",
           {{"positions_mm", springs},
            {"rate_n_per_mm", c.springs.rate},
            {"shear_fraction", c.springs.shear_fraction}}},
          {"max_force_n", c.max_force}}},
        {"shape",
         {{"enabled", c.shape_enabled},
          {"light_tilt_deg", c.light_tilt_deg},
          {"light_gain", v3(c.lights.gain)},
          {"ambient", v3(c.lights.ambient)},
          {"min_norm", c.normals.min_norm},
          {"albedo_tolerance", c.normals.albedo_tolerance},
          {"omega", c.integration.omega},
          {"tolerance", c.integration.tolerance},
          {"max_sweeps", c.integration.max_sweeps},
          {"multigrid", c.integration.multigrid},
          {"pitch_mm", c.pitch},
          {"fill_radius", c.fill_radius},
          {"contact_threshold_mm", c.contact_threshold_mm}}},
        {"overlay",
         {{"enabled", c.overlay},
          {"flow_arrow_scale", c.flow_arrow_scale},
          {"pose_arrow_scale", c.pose_arrow_scale}}},
        {"sim", {{"noise_sigma", c.noise_sigma}, {"centroid_jitter_px", c.centroid_jitter_px}, {"seed", c.seed}}},
        {"hardness",
         {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"last5_pooling", c.last5_pooling},
          {"train_fraction", c.train_fraction}}},
    };
}

PipelineConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json(path)); }

}  // namespace tactile
