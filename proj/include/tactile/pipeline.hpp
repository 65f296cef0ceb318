#pragma once

#include "tactile/config.hpp"
#include "tactile/sim.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tactile {

struct Preprocessed {
    FrameF color;      // undistorted, blurred, masked: input to shape recovery
    GrayFrameF gray;   // sharpened luma: input to marker detection and flow
};

// undistort -> blur -> mask, then sharpen -> gray. The color image is only
// produced when requested.
Preprocessed preprocess(const Frame& frame, const UndistortMap& map, const PipelineConfig& cfg,
                        bool with_color = true);
// The color half of preprocess: undistort -> blur -> mask.
FrameF preprocess_color(const Frame& frame, const UndistortMap& map, const PipelineConfig& cfg);

// Orders four white-marker centroids by angle around the principal point,
// the correspondence convention of PlatformModel::s1.
ImagePoints4 order_white_markers(const Points2& centroids, const CameraIntrinsics& intr);

struct ShapeResult {
    HeightMap height;
    std::size_t valid_normals = 0;
    std::size_t contact_area_px = 0;
    double peak_height_mm = 0.0;
    IntegrationStats stats;
};

// Normals, shadow fill, integration, and contact statistics relative to the
// median height of the valid domain (the undeformed surface level).
ShapeResult recover_shape(const FrameF& color, const PipelineConfig& cfg);

struct FrameResult {
    int index = 0;
    std::vector<std::string> flags;  // marker-count and solver anomalies

    // White markers and platform pose.
    std::size_t white_count = 0;
    std::optional<ImagePoints4> white_px;
    std::optional<Pose6D> pose;
    double reprojection_rms = 0.0;
    PoseDelta delta;
    std::optional<Wrench> wrench;

    // Black markers: flow against the previous frame, positions of the
    // markers still tracked, and their displacement from the reference.
    FlowField flow;
    std::vector<int> black_ids;         // index into the reference marker list
    Points2 black_px;
    Points2 black_from_reference;
    double mean_black_displacement_px = 0.0;

    std::optional<ShapeResult> shape;

    double core_ms = 0.0;   // undistort through wrench
    double shape_ms = 0.0;
};

// Stateful per-sequence processor; the first frame becomes the reference F0.
class SequenceProcessor {
  public:
    explicit SequenceProcessor(PipelineConfig cfg);

    FrameResult process(const Frame& frame, bool with_shape = true);

    const PipelineConfig& config() const { return cfg_; }
    const UndistortMap& undistort() const { return map_; }
    bool has_reference() const { return frames_ > 0; }
    const Points2& reference_black() const { return ref_black_; }
    const std::optional<Pose6D>& reference_pose() const { return ref_pose_; }
    const std::optional<ImagePoints4>& reference_white() const { return ref_white_; }
    const GrayFrameF& last_gray() const { return last_gray_; }

  private:
    PipelineConfig cfg_;
    StiffnessMatrix stiffness_;
    UndistortMap map_;
    int frames_ = 0;
    Points2 ref_black_;
    std::optional<Pose6D> ref_pose_;
    std::optional<ImagePoints4> ref_white_;
    std::vector<int> alive_;
    Points2 current_;
    FlowPyramid prev_pyr_;
    GrayFrameF last_gray_;
};

// Fig.-7 style overlay on the undistorted frame: yellow arrows from each
// reference black marker along its displacement, red arrows from each
// reference white marker, platform axes in RGB.
Frame render_overlay(const Frame& undistorted, const FrameResult& r, const SequenceProcessor& proc);

void draw_line(Frame& img, const Vec2& a, const Vec2& b, const std::array<std::uint8_t, 3>& color);
void draw_arrow(Frame& img, const Vec2& from, const Vec2& to, const std::array<std::uint8_t, 3>& color);

// Timings are left out so identical inputs give identical files.
nlohmann::json frame_result_to_json(const FrameResult& r);

// Simulator model matching the camera, dome, platform, stiffness, lights and
// noise settings of the config.
SensorModel sensor_model_from_config(const PipelineConfig& cfg);

// All .ppm files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

}  // namespace tactile
