#include "tactile/hardness.hpp"
#include "tactile/serialize.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace tactile;
namespace fs = std::filesystem;

namespace {

// Rows ramp from zero; hard sequences push markers further and spread less.
SequenceFeatures synthetic(bool hard, std::mt19937_64& rng, double margin = 1.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SequenceFeatures f;
    f.frames = select_frames(20);
    const double force = 2 + 8 * u(rng);
    const double disp = force * (hard ? 0.26 : 0.26 - 0.2 * margin) * (0.9 + 0.2 * u(rng));
    const double area = force * (hard ? 250 : 250 + 150 * margin) * (0.9 + 0.2 * u(rng));
    for (int i = 0; i < kSelectedFrames; ++i) {
        const double s = i / 9.0;
        f.rows.row(i) << s * force, s * disp, s * area;
    }
    return f;
}

struct Data {
    std::vector<SequenceFeatures> x;
    std::vector<int> y;
};

Data synthetic_set(int n, std::uint64_t seed, double margin = 1.0) {
    std::mt19937_64 rng(seed);
    Data d;
    for (int i = 0; i < n; ++i) {
        d.y.push_back(i % 2);
        d.x.push_back(synthetic(i % 2, rng, margin));
    }
    return d;
}

Eigen::MatrixX3d standardized(const HardnessModel& m, const Data& d) {
    Eigen::MatrixX3d x(static_cast<Eigen::Index>(d.x.size()), 3);
    for (std::size_t i = 0; i < d.x.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) = m.standardize(pool(d.x[i], m.pooling)).transpose();
    return x;
}

Eigen::VectorXd labels(const Data& d) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(d.y.size()));
    for (std::size_t i = 0; i < d.y.size(); ++i) y[static_cast<Eigen::Index>(i)] = d.y[i];
    return y;
}

// Rosenblatt perceptron on z-scored pooled features; converging proves
// separability.
bool perceptron_separable(const Data& d, int max_epochs = 100000) {
    Eigen::MatrixX3d x(static_cast<Eigen::Index>(d.x.size()), 3);
    for (std::size_t i = 0; i < d.x.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = pool(d.x[i], Pooling::Mean).transpose();
    const Eigen::RowVector3d mu = x.colwise().mean();
    x.rowwise() -= mu;
    const Eigen::RowVector3d sd = (x.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
    x = x.array().rowwise() / sd.array();
    Eigen::Vector4d w = Eigen::Vector4d::Zero();
    for (int e = 0; e < max_epochs; ++e) {
        int mistakes = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            Eigen::Vector4d xi;
            xi << x.row(i).transpose(), 1.0;
            const double t = d.y[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
            if (t * w.dot(xi) <= 0) {
                w += t * xi;
                ++mistakes;
            }
        }
        if (mistakes == 0) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("select_frames") {
    const std::array<int, 10> expect{0, 7, 13, 20, 26, 33, 39, 46, 52, 59};
    CHECK(select_frames(60) == expect);
    const std::array<int, 10> ten{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(select_frames(10) == ten);
    CHECK(select_frames(20)[9] == 19);
    CHECK_THROWS_AS(select_frames(9), DataError);
}

TEST_CASE("extract_features: missing modality names the frame") {
    std::vector<FrameResult> results(10);
    for (auto& r : results) {
        r.wrench = Wrench{};
        r.shape = ShapeResult{};
    }
    results[4].shape.reset();
    try {
        extract_features(results);
        FAIL("expected FeatureError");
    } catch (const FeatureError& e) {
        CHECK(e.frame() == 4);
    }
    results[4].shape = ShapeResult{};
    results[7].wrench.reset();
    CHECK_THROWS_AS(extract_features(results), FeatureError);
}

TEST_CASE("simulator features: zero contact and agreement with ground truth") {
    const PipelineConfig cfg = downscaled_config(PipelineConfig{}, 2);
    const SensorRenderer renderer(sensor_model_from_config(cfg));

    const SequenceFeatures zero = simulate_features(renderer, cfg, make_scenario(10, Vec6::Zero(), 0.0, Profile::Ramp));
    CHECK(zero.rows.cwiseAbs().maxCoeff() == 0.0);

    DatasetConfig dc;
    dc.sequences = 4;
    dc.frames = 10;
    dc.seed = 5;
    for (const auto& sc : make_dataset(dc)) {
        const SequenceFeatures f = simulate_features(renderer, cfg, sc);
        for (int i = 0; i < kSelectedFrames; ++i) {
            FrameTruth t;
            renderer.render(sc, f.frames[static_cast<std::size_t>(i)], &t);
            double disp = 0;
            for (const auto& d : t.black_displacement_px) disp += d.norm() / static_cast<double>(t.black_displacement_px.size());
            const double force = t.wrench.force.norm(), area = static_cast<double>(t.contact_area_px);
            CHECK(std::abs(f.rows(i, 0) - force) <= 0.03 * force + 0.1);
            CHECK(std::abs(f.rows(i, 1) - disp) <= 0.06 * disp + 0.02);
            CHECK(std::abs(f.rows(i, 2) - area) <= 0.2 * area + 50);
        }
    }
}

TEST_CASE("pool: mean and last five") {
    SequenceFeatures f;
    for (int i = 0; i < kSelectedFrames; ++i) f.rows.row(i) << i, 2 * i, 3 * i;
    CHECK((pool(f, Pooling::Mean) - Vec3(4.5, 9, 13.5)).norm() < 1e-12);
    CHECK((pool(f, Pooling::Last5) - Vec3(7, 14, 21)).norm() < 1e-12);
}

TEST_CASE("train: separable data reaches 100% within 200 epochs") {
    const Data d = synthetic_set(200, 1);
    REQUIRE(perceptron_separable(d));
    TrainConfig cfg;
    cfg.seed = 3;
    const HardnessModel m = train(d.x, d.y, cfg);
    CHECK(m.loss_history.size() == 200);
    CHECK(evaluate(m, d.x, d.y).accuracy == 1.0);
}

TEST_CASE("train: zero learning rate keeps the initial weights") {
    const Data d = synthetic_set(40, 2);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 5;
    cfg.seed = 11;
    const HardnessModel m = train(d.x, d.y, cfg);
    const auto [w0, b0] = initial_parameters(11);
    CHECK(m.weights == w0);
    CHECK(m.bias == b0);
}

TEST_CASE("train: loss is non-increasing below the stability bound") {
    const Data d = synthetic_set(100, 3, 0.3);
    double lr = 0.1;
    bool monotone = false;
    for (int attempt = 0; attempt < 20 && !monotone; ++attempt, lr /= 2) {
        TrainConfig cfg;
        cfg.learning_rate = lr;
        cfg.epochs = 100;
        const HardnessModel m = train(d.x, d.y, cfg);
        monotone = true;
        for (std::size_t e = 1; e < m.loss_history.size(); ++e)
            monotone = monotone && m.loss_history[e] <= m.loss_history[e - 1] + 1e-12;
    }
    CHECK(monotone);
    CHECK(lr > 1e-5);
}

TEST_CASE("classify: zero weights give probability one half") {
    HardnessModel m;
    std::mt19937_64 rng(4);
    const Classification c = classify(m, synthetic(true, rng));
    CHECK(c.probability == 0.5);
    CHECK(c.label == HardnessClass::Hard);
}

TEST_CASE("bce_gradient matches central differences") {
    const Data d = synthetic_set(30, 5, 0.2);
    TrainConfig cfg;
    cfg.epochs = 0;
    const HardnessModel base = train(d.x, d.y, cfg);
    const Eigen::MatrixX3d x = standardized(base, d);
    const Eigen::VectorXd y = labels(d);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 w(g(rng), g(rng), g(rng));
        const double b = g(rng);
        const auto [gw, gb] = bce_gradient(w, b, x, y);
        Eigen::Vector4d analytic, numeric;
        analytic << gw, gb;
        const double h = 1e-6;
        for (int k = 0; k < 4; ++k) {
            Vec3 wp = w, wm = w;
            double bp = b, bm = b;
            if (k < 3) {
                wp[k] += h;
                wm[k] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            numeric[k] = (bce_loss(wp, bp, x, y) - bce_loss(wm, bm, x, y)) / (2 * h);
        }
        CHECK((analytic - numeric).norm() <= 1e-6 * std::max(analytic.norm(), 1e-3));
    }
}

TEST_CASE("train: deterministic under a fixed seed") {
    const Data d = synthetic_set(60, 7);
    TrainConfig cfg;
    cfg.seed = 99;
    cfg.epochs = 30;
    const HardnessModel a = train(d.x, d.y, cfg), b = train(d.x, d.y, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
    CHECK(a.loss_history == b.loss_history);
    cfg.seed = 100;
    CHECK(train(d.x, d.y, cfg).weights != a.weights);
}

TEST_CASE("scaling every feature by a positive constant preserves score order") {
    const Data d = synthetic_set(80, 8, 0.4);
    Data scaled = d;
    for (auto& f : scaled.x) f.rows *= 37.5;
    TrainConfig cfg;
    cfg.seed = 5;
    const HardnessModel a = train(d.x, d.y, cfg), b = train(scaled.x, scaled.y, cfg);
    std::vector<double> sa, sb;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        sa.push_back(a.score(d.x[i]));
        sb.push_back(b.score(scaled.x[i]));
    }
    for (std::size_t i = 0; i < sa.size(); ++i)
        for (std::size_t j = 0; j < sa.size(); ++j)
            if (std::abs(sa[i] - sa[j]) > 1e-6) CHECK((sa[i] < sa[j]) == (sb[i] < sb[j]));
}

TEST_CASE("balanced duplication leaves test decisions unchanged") {
    const Data d = synthetic_set(200, 9, 0.6);
    const auto [tr, te] = split_indices(d.y, 0.8, 1);
    Data train_set, dup;
    for (auto i : tr) {
        train_set.x.push_back(d.x[i]);
        train_set.y.push_back(d.y[i]);
    }
    dup = train_set;
    const std::size_t soft = static_cast<std::size_t>(std::find(d.y.begin(), d.y.end(), 0) - d.y.begin());
    const std::size_t hard = static_cast<std::size_t>(std::find(d.y.begin(), d.y.end(), 1) - d.y.begin());
    for (int k = 0; k < 3; ++k) {
        dup.x.push_back(d.x[soft]);
        dup.y.push_back(0);
        dup.x.push_back(d.x[hard]);
        dup.y.push_back(1);
    }
    TrainConfig cfg;
    const HardnessModel a = train(train_set.x, train_set.y, cfg), b = train(dup.x, dup.y, cfg);
    for (auto i : te) CHECK(classify(a, d.x[i]).label == classify(b, d.x[i]).label);
}

TEST_CASE("train: input errors") {
    Data d = synthetic_set(10, 10);
    std::vector<int> all_soft(d.y.size(), 0);
    CHECK_THROWS_AS(train(d.x, all_soft, TrainConfig{}), DataError);
    d.y.pop_back();
    CHECK_THROWS_AS(train(d.x, d.y, TrainConfig{}), DataError);
}

TEST_CASE("model JSON round trip") {
    const Data d = synthetic_set(40, 11);
    TrainConfig cfg;
    cfg.pooling = Pooling::Last5;
    cfg.epochs = 10;
    cfg.seed = 0xfedcba9876543210ULL;
    const HardnessModel m = train(d.x, d.y, cfg);
    const HardnessModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    CHECK(back.weights == m.weights);
    CHECK(back.bias == m.bias);
    CHECK(back.mean == m.mean);
    CHECK(back.scale == m.scale);
    CHECK(back.pooling == Pooling::Last5);
    CHECK(back.seed == m.seed);
    for (const auto& f : d.x) CHECK(back.score(f) == m.score(f));
    nlohmann::json bad = model_to_json(m);
    bad["pooling"] = "max";
    CHECK_THROWS_AS(model_from_json(bad), ConfigError);
}

TEST_CASE("evaluate: confusion counts and precision/recall") {
    HardnessModel m;
    m.weights = Vec3(1, 0, 0);
    m.mean = Vec3(5, 0, 0);
    std::vector<SequenceFeatures> x(4);
    for (int i = 0; i < 4; ++i) x[static_cast<std::size_t>(i)].rows.col(0).setConstant(i < 2 ? 1.0 : 9.0);
    const Metrics r = evaluate(m, x, {0, 1, 1, 1});  // predictions: soft, soft, hard, hard
    CHECK(r.true_soft == 1);
    CHECK(r.false_soft == 1);
    CHECK(r.true_hard == 2);
    CHECK(r.false_hard == 0);
    CHECK(r.accuracy == 0.75);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("split_indices: stratified, disjoint, deterministic") {
    std::vector<int> y;
    for (int i = 0; i < 500; ++i) y.push_back(i % 2);
    const auto [tr, te] = split_indices(y, 0.8, 4);
    CHECK(tr.size() == 400);
    CHECK(te.size() == 100);
    int hard_test = 0;
    for (auto i : te) hard_test += y[i];
    CHECK(hard_test == 50);
    std::vector<bool> seen(500, false);
    for (auto i : tr) seen[i] = true;
    for (auto i : te) CHECK_FALSE(seen[i]);
    CHECK(split_indices(y, 0.8, 4).first == tr);
}

TEST_CASE("manifest: relative paths resolve against the manifest directory") {
    const fs::path dir = fs::temp_directory_path() / "tactile_test_manifest";
    fs::create_directories(dir);
    write_json(dir / "m.json", {{"version", 1},
                                {"sequences", {{{"path", "a.json"}, {"label", "soft"}}, {{"path", "/abs/b"}, {"label", "hard"}}}}});
    const auto entries = load_manifest(dir / "m.json");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].path == dir / "a.json");
    CHECK(entries[0].label == HardnessClass::Soft);
    CHECK(entries[1].path == fs::path("/abs/b"));
    write_json(dir / "bad.json", {{"version", 1}, {"sequences", {{{"path", "a"}, {"label", "squishy"}}}}});
    CHECK_THROWS_AS(load_manifest(dir / "bad.json"), ConfigError);
    fs::remove_all(dir);
}
