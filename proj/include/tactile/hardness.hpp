#pragma once

#include "tactile/pipeline.hpp"
#include "tactile/sim.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace tactile {

class FeatureError : public DataError {
  public:
    FeatureError(const std::string& what, int frame) : DataError(what), frame_(frame) {}
    int frame() const { return frame_; }

  private:
    int frame_;
};

inline constexpr int kSelectedFrames = 10;

// round(i (N-1) / 9) for i = 0..9.
std::array<int, kSelectedFrames> select_frames(int n);

// Rows: |F| (N), mean cumulative black-marker displacement (px), contact
// area (px^2), one per selected frame.
struct SequenceFeatures {
    Eigen::Matrix<double, kSelectedFrames, 3> rows = Eigen::Matrix<double, kSelectedFrames, 3>::Zero();
    std::array<int, kSelectedFrames> frames{};
};

// `results` holds one entry per frame of the sequence in order; the selected
// frames need a wrench and a shape result.
SequenceFeatures extract_features(const std::vector<FrameResult>& results);

enum class Pooling { Mean, Last5 };
Vec3 pool(const SequenceFeatures& f, Pooling p);

struct TrainConfig {
    double learning_rate = 0.001;
    int epochs = 200;
    std::uint64_t seed = 0;
    Pooling pooling = Pooling::Mean;
};

struct HardnessModel {
    Vec3 weights = Vec3::Zero();
    double bias = 0.0;
    Vec3 mean = Vec3::Zero();  // standardization of pooled features
    Vec3 scale = Vec3::Ones();
    Pooling pooling = Pooling::Mean;
    int epochs = 0;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    std::vector<double> loss_history;  // full-batch loss after each epoch

    Vec3 standardize(const Vec3& pooled) const;
    double score(const SequenceFeatures& f) const;
};

// Seeded initial weights and bias.
std::pair<Vec3, double> initial_parameters(std::uint64_t seed);

// Mean binary cross-entropy of sigmoid(X w + b) against labels in {0, 1};
// rows of X are standardized pooled features.
double bce_loss(const Vec3& w, double b, const Eigen::MatrixX3d& x, const Eigen::VectorXd& y);
// Gradient of bce_loss; returns (dL/dw, dL/db).
std::pair<Vec3, double> bce_gradient(const Vec3& w, double b, const Eigen::MatrixX3d& x, const Eigen::VectorXd& y);

// Per-sample SGD on shuffled data; labels 0 = soft, 1 = hard.
HardnessModel train(const std::vector<SequenceFeatures>& data, const std::vector<int>& labels,
                    const TrainConfig& cfg);

struct Classification {
    HardnessClass label = HardnessClass::Soft;
    double probability = 0.5;  // of hard
};

Classification classify(const HardnessModel& model, const SequenceFeatures& f);

struct Metrics {
    std::size_t true_soft = 0, false_hard = 0, false_soft = 0, true_hard = 0;
    double accuracy = 0.0;
    double precision = 0.0;  // of the hard class
    double recall = 0.0;
    double loss = 0.0;
};

Metrics evaluate(const HardnessModel& model, const std::vector<SequenceFeatures>& data,
                 const std::vector<int>& labels);

nlohmann::json model_to_json(const HardnessModel& m);
HardnessModel model_from_json(const nlohmann::json& j);
nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json features_to_json(const SequenceFeatures& f);

// Simulated dataset: sphere presses with random wrench trajectories, soft or
// hard objects, travel proportional to the normal load.
struct DatasetConfig {
    int sequences = 500;
    int frames = 20;
    double min_force_n = 2.0;
    double max_force_n = 10.0;
    double travel_mm_per_n = 0.1;
    double max_polar_deg = 8.0;
    double soft_compliance = 0.05;
    double hard_compliance = 0.005;
    std::uint64_t seed = 0;
};

std::vector<ContactScenario> make_dataset(const DatasetConfig& cfg);

// The same sensor imaged at 1/factor resolution: focal lengths, principal
// point and image size shrink, the height-map pitch grows.
PipelineConfig downscaled_config(const PipelineConfig& cfg, int factor);

// Renders a scenario and runs the pipeline, computing shape only on the
// selected frames.
SequenceFeatures simulate_features(const SensorRenderer& renderer, const PipelineConfig& cfg,
                                   const ContactScenario& sc);
// Runs the pipeline over recorded frames.
SequenceFeatures process_features(const std::vector<Frame>& frames, const PipelineConfig& cfg);

struct ManifestEntry {
    std::filesystem::path path;  // scenario JSON or a directory of frames
    HardnessClass label = HardnessClass::Soft;
};

// {"version": 1, "sequences": [{"path": ..., "label": "soft"|"hard"}]};
// relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
nlohmann::json manifest_to_json(const std::vector<ManifestEntry>& entries);

// Deterministic stratified split; returns (train, test) indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const std::vector<int>& labels,
                                                                            double train_fraction,
                                                                            std::uint64_t seed);

}  // namespace tactile
