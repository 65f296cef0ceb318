#pragma once

#include "tactile/camera.hpp"
#include "tactile/flow.hpp"
#include "tactile/imageproc.hpp"
#include "tactile/pose.hpp"
#include "tactile/shape.hpp"
#include "tactile/wrench.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace tactile {

inline constexpr int kConfigVersion = 1;

enum class StiffnessSource { Diagonal, Matrix, Springs };

struct PipelineConfig {
    // Optional defaults for command inputs/outputs; command-line flags win.
    struct Paths {
        std::string out_dir;
        std::string frames_dir;
        std::string scenario;
        std::string samples;
        std::string manifest;
    } paths;

    CameraIntrinsics intrinsics;
    DistortionCoefficients distortion{-0.05, 0.002, 0.0, 0.0005, -0.0003};
    DomeGeometry dome;
    double pattern_grid_step = 24.0;  // px
    double pattern_dot_radius = 3.5;  // px, SVG export

    double blur_sigma = 1.0;
    double sharpen_amount = 0.5;
    double sharpen_sigma = 1.0;
    MarkerConfig markers;
    FlowConfig flow;
    PnpConfig pnp;
    PlatformModel platform;

    StiffnessSource stiffness_source = StiffnessSource::Diagonal;
    Vec6 stiffness_diagonal = (Vec6() << 20, 20, 10, 400, 400, 300).finished();
    StiffnessMatrix stiffness_matrix;
    SpringLayout springs;
    double max_force = kDefaultMaxForce;

    bool shape_enabled = true;
    LightConfig lights = LightConfig::from_tilt();
    double light_tilt_deg = 85.0;
    NormalsConfig normals;
    IntegrationConfig integration;
    double pitch = 0.05;  // mm per px of the height map
    int fill_radius = 3;
    double contact_threshold_mm = 0.02;

    bool overlay = true;
    double flow_arrow_scale = 3.0;
    double pose_arrow_scale = 10.0;

    // Simulator.
    double noise_sigma = 0.0;
    double centroid_jitter_px = 0.0;
    std::uint64_t seed = 0;

    // Hardness experiment.
    double learning_rate = 0.001;
    int epochs = 200;
    bool last5_pooling = false;
    double train_fraction = 0.8;

    StiffnessMatrix stiffness() const;
    void validate() const;
};

// Missing keys keep their defaults; unknown keys and out-of-range values are
// rejected with a ConfigError naming the JSON pointer.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace tactile
