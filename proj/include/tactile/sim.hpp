#pragma once

#include "tactile/camera.hpp"
#include "tactile/pose.hpp"
#include "tactile/shape.hpp"
#include "tactile/wrench.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace tactile {

// Elastomer height above which a grid pixel counts as in contact.
inline constexpr double kContactHeightMm = 0.02;

struct SensorModel {
    CameraIntrinsics intrinsics;
    DistortionCoefficients distortion{-0.05, 0.002, 0.0, 0.0005, -0.0003};
    DomeGeometry dome;
    DotPattern dots;  // black markers at rest
    PlatformModel platform;
    StiffnessMatrix stiffness = diagonal_stiffness((Vec6() << 20, 20, 10, 400, 400, 300).finished());
    LightConfig lights = LightConfig::from_tilt();
    double noise_sigma = 0.0;         // gray levels, per channel
    double centroid_jitter_px = 0.0;  // per marker and frame, Gaussian
    std::uint64_t seed = 0;

    // Appearance. The physical 0.4 mm dots would be tens of pixels wide this
    // close to the lens, so black dots are drawn at a fixed pixel radius.
    double black_dot_radius_px = 3.5;
    double white_marker_radius_mm = 0.6;
    Vec3 black_color = Vec3::Constant(30.0);
    Vec3 white_color = Vec3::Constant(235.0);
    double pitch_mm_per_px = 0.05;  // elastomer height grid
    int supersample = 4;

    // Default sensor with the dot pattern thinned around the mask edge and
    // the white markers.
    static SensorModel make_default(double grid_step_px = 24.0);
    void validate() const;
};

// Keeps pattern dots at least `edge_margin_px` inside the circular mask and
// `keep_out_px` away from every white marker at rest (ideal image coordinates).
DotPattern select_black_dots(const DotPattern& pattern, const CameraIntrinsics& intr,
                             const PlatformModel& platform, double edge_margin_px, double keep_out_px);

enum class IndenterShape { Sphere, Cylinder, Box };
enum class HardnessClass { Soft = 0, Hard = 1 };

std::string to_string(IndenterShape s);
std::string to_string(HardnessClass h);

struct Indenter {
    IndenterShape shape = IndenterShape::Sphere;
    double radius_mm = 5.0;                 // sphere / cylinder
    Vec2 half_size_mm = Vec2(3.0, 3.0);     // box
    double edge_width_mm = 1.0;             // cylinder / box rim
    double polar_deg = 0.0;                 // contact point, from the dome apex
    double azimuth_deg = 0.0;
};

struct ContactScenario {
    std::vector<Wrench> wrenches;  // applied, one per frame
    std::vector<double> depths;    // indenter travel, mm, one per frame
    Indenter indenter;
    HardnessClass hardness = HardnessClass::Hard;
    double compliance_mm_per_n = 0.005;

    int frames() const { return static_cast<int>(wrenches.size()); }
    void validate() const;
};

// Shape of a scalar trajectory over n frames, zero at frame 0 and 1 at the peak.
enum class Profile { Ramp, Triangle, Hold, Sine };
double profile_value(Profile p, int k, int n);

ContactScenario make_scenario(int frames, const Vec6& peak_wrench, double peak_depth_mm, Profile profile,
                              const Indenter& indenter = {}, HardnessClass hardness = HardnessClass::Hard,
                              double compliance_mm_per_n = 0.005);

// JSON schema version 1; violations raise ConfigError naming the JSON pointer.
ContactScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ContactScenario& sc);
ContactScenario load_scenario(const std::filesystem::path& path);

struct DeformationParams {
    double amplitude = 0.15;               // tangential mm per mm of indentation
    double reference_compliance = 0.02;    // mm/N; soft objects spread the load
    double sigma_scale = 1.5;              // Gaussian width per indenter radius
};

// Tangent-plane displacement (camera frame, mm) of the dome point `marker`
// for an indentation of `depth_mm` centered at `contact` on the dome.
Vec3 tangential_displacement(const Vec3& contact, double depth_mm, double compliance_mm_per_n,
                             double indenter_radius_mm, const Vec3& marker, const DomeGeometry& dome,
                             const DeformationParams& params = {});

// Point of the dome at polar angle (from the apex) and azimuth.
Vec3 dome_point(const DomeGeometry& dome, double polar_deg, double azimuth_deg);

// Analytic elastomer height field on the ideal image grid.
struct Indentation {
    bool active = false;
    IndenterShape shape = IndenterShape::Sphere;
    Vec2 center_px = Vec2::Zero();
    double pitch = 0.05;
    double depth = 0.0;       // gel depth after object compliance, mm
    double radius = 0.0;      // effective sphere or cylinder radius, mm
    Vec2 half_size = Vec2::Zero();
    double edge_width = 1.0;  // mm

    // (height mm, dh/dx, dh/dy) at ideal pixel (u, v); slopes are per mm.
    Vec3 evaluate(double u, double v) const;
    // Pixel radius beyond which the height is zero.
    double reach_px() const;
};

Indentation make_indentation(const SensorModel& model, const ContactScenario& sc, int frame);

struct FrameTruth {
    int index = 0;
    Wrench wrench;
    PoseDelta delta;
    Pose6D pose;
    std::array<Vec2, 4> white_px;   // ideal image
    Points2 black_px;               // ideal image
    Points2 black_displacement_px;  // relative to frame 0
    double depth_mm = 0.0;          // commanded indenter travel
    double peak_height_mm = 0.0;
    std::size_t contact_area_px = 0;
    std::optional<HeightMap> height;
};

struct RenderOptions {
    bool keep_height_maps = false;
};

struct SimulatedSequence {
    std::vector<Frame> frames;
    std::vector<FrameTruth> truth;
};

class SensorRenderer {
  public:
    explicit SensorRenderer(SensorModel model);

    const SensorModel& model() const { return model_; }
    Frame render(const ContactScenario& sc, int frame, FrameTruth* truth = nullptr,
                 const RenderOptions& opts = {}) const;
    // Ground-truth height on the ideal grid for one frame.
    HeightMap height_map(const ContactScenario& sc, int frame) const;

  private:
    SensorModel model_;
    // Per distorted pixel: ideal pixel position and d(ideal)/d(distorted).
    std::vector<Vec2> ideal_;
    std::vector<Eigen::Matrix2d> jacobian_;
};

SimulatedSequence render_sequence(const SensorModel& model, const ContactScenario& sc,
                                  const RenderOptions& opts = {});

// Pose reached under `w` through the compliance S^-1.
PoseDelta compliance_delta(const StiffnessMatrix& s, const Wrench& w);

nlohmann::json truth_to_json(const FrameTruth& t);
void write_truth_csv(const std::filesystem::path& path, const FrameTruth& t);

}  // namespace tactile
