#include "tactile/hardness.hpp"

#include "tactile/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tactile {

using namespace json_schema;

std::array<int, kSelectedFrames> select_frames(int n) {
    if (n < kSelectedFrames)
        throw DataError("sequence has " + std::to_string(n) + " frames; at least " +
                        std::to_string(kSelectedFrames) + " are needed");
    std::array<int, kSelectedFrames> idx{};
    for (int i = 0; i < kSelectedFrames; ++i)
        idx[i] = static_cast<int>(std::lround(static_cast<double>(i) * (n - 1) / (kSelectedFrames - 1)));
    return idx;
}

SequenceFeatures extract_features(const std::vector<FrameResult>& results) {
    SequenceFeatures f;
    f.frames = select_frames(static_cast<int>(results.size()));
    for (int i = 0; i < kSelectedFrames; ++i) {
        const int k = f.frames[i];
        const FrameResult& r = results[static_cast<std::size_t>(k)];
        if (!r.wrench) throw FeatureError("frame " + std::to_string(k) + ": no wrench estimate", k);
        if (!r.shape) throw FeatureError("frame " + std::to_string(k) + ": no shape result", k);
        f.rows(i, 0) = r.wrench->force.norm();
        f.rows(i, 1) = r.mean_black_displacement_px;
        f.rows(i, 2) = static_cast<double>(r.shape->contact_area_px);
    }
    if (!f.rows.allFinite()) throw DataError("non-finite sequence features");
    return f;
}

Vec3 pool(const SequenceFeatures& f, Pooling p) {
    if (p == Pooling::Last5) return f.rows.bottomRows<5>().colwise().mean().transpose();
    return f.rows.colwise().mean().transpose();
}

Vec3 HardnessModel::standardize(const Vec3& pooled) const {
    return (pooled - mean).cwiseQuotient(scale);
}

double HardnessModel::score(const SequenceFeatures& f) const {
    return weights.dot(standardize(pool(f, pooling))) + bias;
}

namespace {

double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

// -log sigmoid(s) without overflow.
double softplus_neg(double s) { return s > 0.0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s)); }

}  // namespace

std::pair<Vec3, double> initial_parameters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.01);
    Vec3 w;
    for (int i = 0; i < 3; ++i) w[i] = g(rng);
    return {w, 0.0};
}

double bce_loss(const Vec3& w, double b, const Eigen::MatrixX3d& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size()) throw DataError("feature and label counts differ");
    if (x.rows() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double s = x.row(i).dot(w) + b;
        sum += y[i] * softplus_neg(s) + (1.0 - y[i]) * softplus_neg(-s);
    }
    return sum / static_cast<double>(x.rows());
}

std::pair<Vec3, double> bce_gradient(const Vec3& w, double b, const Eigen::MatrixX3d& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size()) throw DataError("feature and label counts differ");
    Vec3 gw = Vec3::Zero();
    double gb = 0.0;
    if (x.rows() == 0) return {gw, gb};
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double e = sigmoid(x.row(i).dot(w) + b) - y[i];
        gw += e * x.row(i).transpose();
        gb += e;
    }
    const double n = static_cast<double>(x.rows());
    return {gw / n, gb / n};
}

HardnessModel train(const std::vector<SequenceFeatures>& data, const std::vector<int>& labels,
                    const TrainConfig& cfg) {
    if (data.size() != labels.size()) throw DataError("feature and label counts differ");
    if (!(cfg.learning_rate >= 0.0) || cfg.epochs < 0) throw ConfigError("invalid training configuration");
    std::size_t hard = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw DataError("labels must be 0 (soft) or 1 (hard)");
        hard += static_cast<std::size_t>(l);
    }
    if (hard == 0 || hard == labels.size()) throw DataError("training needs both soft and hard sequences");

    HardnessModel m;
    m.pooling = cfg.pooling;
    m.epochs = cfg.epochs;
    m.learning_rate = cfg.learning_rate;
    m.seed = cfg.seed;

    const Eigen::Index n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixX3d raw(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) raw.row(i) = pool(data[static_cast<std::size_t>(i)], cfg.pooling).transpose();
    m.mean = raw.colwise().mean().transpose();
    const Eigen::MatrixX3d centered = raw.rowwise() - m.mean.transpose();
    m.scale = (centered.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
    for (int c = 0; c < 3; ++c)
        if (!(m.scale[c] > 1e-12)) m.scale[c] = 1.0;
    Eigen::MatrixX3d x(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = m.standardize(raw.row(i).transpose()).transpose();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)];

    std::tie(m.weights, m.bias) = initial_parameters(cfg.seed);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (int e = 0; e < cfg.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index i : order) {
            const double err = sigmoid(x.row(i).dot(m.weights) + m.bias) - y[i];
            m.weights -= cfg.learning_rate * err * x.row(i).transpose();
            m.bias -= cfg.learning_rate * err;
        }
        m.loss_history.push_back(bce_loss(m.weights, m.bias, x, y));
    }
    m.final_loss = m.loss_history.empty() ? bce_loss(m.weights, m.bias, x, y) : m.loss_history.back();
    if (!m.weights.allFinite() || !std::isfinite(m.bias))
        throw ConvergenceError("hardness training diverged", m.final_loss);
    return m;
}

Classification classify(const HardnessModel& model, const SequenceFeatures& f) {
    Classification c;
    c.probability = sigmoid(model.score(f));
    c.label = c.probability >= 0.5 ? HardnessClass::Hard : HardnessClass::Soft;
    return c;
}

Metrics evaluate(const HardnessModel& model, const std::vector<SequenceFeatures>& data,
                 const std::vector<int>& labels) {
    if (data.size() != labels.size()) throw DataError("feature and label counts differ");
    Metrics m;
    if (data.empty()) return m;
    Eigen::MatrixX3d x(static_cast<Eigen::Index>(data.size()), 3);
    Eigen::VectorXd y(x.rows());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool hard = classify(model, data[i]).label == HardnessClass::Hard;
        if (labels[i] == 1) hard ? ++m.true_hard : ++m.false_soft;
        else hard ? ++m.false_hard : ++m.true_soft;
        x.row(static_cast<Eigen::Index>(i)) = model.standardize(pool(data[i], model.pooling)).transpose();
        y[static_cast<Eigen::Index>(i)] = labels[i];
    }
    m.accuracy = static_cast<double>(m.true_hard + m.true_soft) / static_cast<double>(data.size());
    const std::size_t predicted_hard = m.true_hard + m.false_hard;
    const std::size_t actual_hard = m.true_hard + m.false_soft;
    m.precision = predicted_hard ? static_cast<double>(m.true_hard) / static_cast<double>(predicted_hard) : 0.0;
    m.recall = actual_hard ? static_cast<double>(m.true_hard) / static_cast<double>(actual_hard) : 0.0;
    m.loss = bce_loss(model.weights, model.bias, x, y);
    return m;
}

namespace {

std::string to_string(Pooling p) { return p == Pooling::Last5 ? "last5" : "mean"; }

nlohmann::json vec_json(const Vec3& v) { return {v[0], v[1], v[2]}; }

Vec3 vec_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) fail(std::string("/") + key, "missing");
    const auto v = numbers(j.at(key), 3, std::string("/") + key);
    return Vec3(v[0], v[1], v[2]);
}

}  // namespace

nlohmann::json model_to_json(const HardnessModel& m) {
    return {{"version", 1},
            {"features", {"force_n", "black_displacement_px", "contact_area_px"}},
            {"pooling", to_string(m.pooling)},
            {"weights", vec_json(m.weights)},
            {"bias", m.bias},
            {"mean", vec_json(m.mean)},
            {"scale", vec_json(m.scale)},
            {"epochs", m.epochs},
            {"learning_rate", m.learning_rate},
            {"seed", m.seed},
            {"final_loss", m.final_loss}};
}

HardnessModel model_from_json(const nlohmann::json& j) {
    require_object(j, "");
    reject_unknown_keys(j, {"version", "features", "pooling", "weights", "bias", "mean", "scale", "epochs",
                            "learning_rate", "seed", "final_loss"},
                        "");
    if (integer(j, "version", "") != 1) fail("/version", "unsupported model version");
    HardnessModel m;
    const std::string pooling = string_or(j, "pooling", "mean", "");
    if (pooling == "mean") m.pooling = Pooling::Mean;
    else if (pooling == "last5") m.pooling = Pooling::Last5;
    else fail("/pooling", "expected \"mean\" or \"last5\"");
    m.weights = vec_from(j, "weights");
    m.bias = number(j, "bias", "");
    m.mean = vec_from(j, "mean");
    m.scale = vec_from(j, "scale");
    if (!(m.scale.array() > 0.0).all()) fail("/scale", "must be positive");
    m.epochs = integer_or(j, "epochs", 0, "");
    m.learning_rate = number_or(j, "learning_rate", 0.0, "");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) fail("/seed", "expected a non-negative integer");
        m.seed = j.at("seed").get<std::uint64_t>();
    }
    m.final_loss = number_or(j, "final_loss", 0.0, "");
    return m;
}

nlohmann::json metrics_to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"loss", m.loss},
            {"confusion",
             {{"true_soft", m.true_soft},
              {"false_hard", m.false_hard},
              {"false_soft", m.false_soft},
              {"true_hard", m.true_hard}}}};
}

nlohmann::json features_to_json(const SequenceFeatures& f) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < kSelectedFrames; ++i)
        rows.push_back({{"frame", f.frames[i]},
                        {"force_n", f.rows(i, 0)},
                        {"black_displacement_px", f.rows(i, 1)},
                        {"contact_area_px", f.rows(i, 2)}});
    return rows;
}

std::vector<ContactScenario> make_dataset(const DatasetConfig& cfg) {
    if (cfg.sequences < 2) throw ConfigError("dataset needs at least two sequences");
    if (cfg.frames < kSelectedFrames) throw ConfigError("dataset sequences need at least 10 frames");
    if (!(cfg.min_force_n > 0.0 && cfg.max_force_n >= cfg.min_force_n))
        throw ConfigError("dataset force range is invalid");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    const Profile profiles[] = {Profile::Ramp, Profile::Triangle, Profile::Hold, Profile::Sine};

    std::vector<ContactScenario> out;
    out.reserve(static_cast<std::size_t>(cfg.sequences));
    for (int s = 0; s < cfg.sequences; ++s) {
        const HardnessClass cls = s % 2 ? HardnessClass::Hard : HardnessClass::Soft;
        const double fn = uniform(cfg.min_force_n, cfg.max_force_n);
        Vec6 peak;
        peak << uniform(-0.3, 0.3) * fn, uniform(-0.3, 0.3) * fn, -fn, uniform(-20.0, 20.0),
            uniform(-20.0, 20.0), uniform(-15.0, 15.0);
        Indenter ind;
        ind.polar_deg = uniform(0.0, cfg.max_polar_deg);
        ind.azimuth_deg = uniform(0.0, 360.0);
        const Profile profile = profiles[static_cast<std::size_t>(uniform(0.0, 4.0)) % 4];
        out.push_back(make_scenario(cfg.frames, peak, cfg.travel_mm_per_n * fn, profile, ind, cls,
                                    cls == HardnessClass::Soft ? cfg.soft_compliance : cfg.hard_compliance));
    }
    return out;
}

PipelineConfig downscaled_config(const PipelineConfig& cfg, int factor) {
    if (factor < 1) throw ConfigError("downscale factor must be >= 1");
    PipelineConfig c = cfg;
    const double f = factor;
    c.intrinsics.fx /= f;
    c.intrinsics.fy /= f;
    c.intrinsics.cx /= f;
    c.intrinsics.cy /= f;
    c.intrinsics.width /= factor;
    c.intrinsics.height /= factor;
    c.pitch *= f;
    c.validate();
    return c;
}

namespace {

template <class FrameSource>
SequenceFeatures run_sequence(int n, const PipelineConfig& cfg, FrameSource&& frame) {
    const auto selected = select_frames(n);
    SequenceProcessor proc(cfg);
    std::vector<FrameResult> results;
    results.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const bool want_shape = std::find(selected.begin(), selected.end(), k) != selected.end();
        results.push_back(proc.process(frame(k), want_shape));
    }
    return extract_features(results);
}

}  // namespace

SequenceFeatures simulate_features(const SensorRenderer& renderer, const PipelineConfig& cfg,
                                   const ContactScenario& sc) {
    return run_sequence(sc.frames(), cfg, [&](int k) { return renderer.render(sc, k); });
}

SequenceFeatures process_features(const std::vector<Frame>& frames, const PipelineConfig& cfg) {
    return run_sequence(static_cast<int>(frames.size()), cfg,
                        [&](int k) -> const Frame& { return frames[static_cast<std::size_t>(k)]; });
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    const nlohmann::json j = read_json(path);
    require_object(j, "");
    reject_unknown_keys(j, {"version", "sequences"}, "");
    if (integer(j, "version", "") != 1) fail("/version", "unsupported manifest version");
    if (!j.contains("sequences") || !j.at("sequences").is_array()) fail("/sequences", "expected an array");
    std::vector<ManifestEntry> out;
    const auto base = path.parent_path();
    for (std::size_t i = 0; i < j.at("sequences").size(); ++i) {
        const auto& e = j.at("sequences")[i];
        const std::string p = "/sequences/" + std::to_string(i);
        require_object(e, p);
        reject_unknown_keys(e, {"path", "label"}, p);
        if (!e.contains("path") || !e.at("path").is_string()) fail(p + "/path", "expected a string");
        if (!e.contains("label") || !e.at("label").is_string()) fail(p + "/label", "expected a string");
        ManifestEntry m;
        m.path = e.at("path").get<std::string>();
        if (m.path.is_relative()) m.path = base / m.path;
        const std::string label = e.at("label").get<std::string>();
        if (label == "soft") m.label = HardnessClass::Soft;
        else if (label == "hard") m.label = HardnessClass::Hard;
        else fail(p + "/label", "expected \"soft\" or \"hard\"");
        out.push_back(std::move(m));
    }
    return out;
}

nlohmann::json manifest_to_json(const std::vector<ManifestEntry>& entries) {
    nlohmann::json seq = nlohmann::json::array();
    for (const auto& e : entries) seq.push_back({{"path", e.path.generic_string()}, {"label", to_string(e.label)}});
    return {{"version", 1}, {"sequences", seq}};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const std::vector<int>& labels,
                                                                            double train_fraction,
                                                                            std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) members.push_back(i);
        std::shuffle(members.begin(), members.end(), rng);
        const auto cut = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(members.size())));
        train_idx.insert(train_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cut));
        test_idx.insert(test_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(cut), members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {train_idx, test_idx};
}

}  // namespace tactile
