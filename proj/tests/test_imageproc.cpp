#include "tactile/imageproc.hpp"
#include "tactile/pipeline.hpp"
#include "tactile/sim.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace tactile;

namespace {

// Anti-aliased disc by 8x8 supersampling.
template <typename Img>
void paint_disc(Img& img, double cx, double cy, double r, double inside, double outside_ok = -1) {
    for (int y = static_cast<int>(cy - r - 2); y <= static_cast<int>(cy + r + 2); ++y)
        for (int x = static_cast<int>(cx - r - 2); x <= static_cast<int>(cx + r + 2); ++x) {
            if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
            int hits = 0;
            for (int sy = 0; sy < 8; ++sy)
                for (int sx = 0; sx < 8; ++sx) {
                    const double px = x - 0.5 + (sx + 0.5) / 8, py = y - 0.5 + (sy + 0.5) / 8;
                    hits += (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
                }
            const double cov = hits / 64.0;
            if (cov == 0 && outside_ok < 0) continue;
            const double bg = img.at(x, y);
            img.at(x, y) = static_cast<typename Img::value_type>(std::lround(cov * inside + (1 - cov) * bg));
        }
}

BinaryMask random_mask(int w, int h, unsigned seed, double density) {
    BinaryMask m(w, h, 0);
    std::mt19937 rng(seed);
    std::bernoulli_distribution b(density);
    for (auto& v : m.storage()) v = b(rng);
    return m;
}

}  // namespace

TEST_CASE("gaussian_blur: constant image stays constant") {
    GrayFrame g(64, 48, 93);
    CHECK(gaussian_blur(g, 1.7).storage() == g.storage());
    Frame f(40, 30, 200);
    CHECK(gaussian_blur(f, 2.0).storage() == f.storage());
}

TEST_CASE("gaussian_blur: kernel radius is ceil(3 sigma)") {
    CHECK(gaussian_kernel(1.0).size() == 7);
    CHECK(gaussian_kernel(1.5).size() == 11);
    CHECK(gaussian_kernel(0.4).size() == 5);
}

TEST_CASE("gaussian_blur: impulse response matches the 2-D kernel") {
    GrayFrameF g(41, 41, 0.0f);
    g.at(20, 20) = 1.0f;
    const GrayFrameF b = gaussian_blur(g, 1.0);
    double norm = 0;
    for (int k = -3; k <= 3; ++k) norm += std::exp(-0.5 * k * k);
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            const double w = std::exp(-0.5 * (dx * dx + dy * dy)) / (norm * norm);
            CHECK(b.at(20 + dx, 20 + dy) == doctest::Approx(w).epsilon(1e-5));
        }
    CHECK(std::abs(b.at(20, 20) - 0.1592) < 1e-3);
}

TEST_CASE("gaussian_blur: two passes of sigma equal one pass of sigma*sqrt(2)") {
    GrayFrame g(96, 96, 0);
    std::mt19937 rng(2);
    for (auto& v : g.storage()) v = static_cast<std::uint8_t>(rng() % 256);
    g = gaussian_blur(g, 1.0);  // band-limit so rounding does not dominate
    const GrayFrame twice = gaussian_blur(gaussian_blur(g, 1.5), 1.5);
    const GrayFrame once = gaussian_blur(g, 1.5 * std::sqrt(2.0));
    double se = 0;
    int n = 0;
    for (int y = 10; y < 86; ++y)
        for (int x = 10; x < 86; ++x) {
            const double d = double(twice.at(x, y)) - double(once.at(x, y));
            se += d * d;
            ++n;
        }
    CHECK(std::sqrt(se / n) <= 1.0);
}

TEST_CASE("circular_mask: disc of diameter height, idempotent") {
    Frame f(480, 480, 255);
    const Frame m = circular_mask(f);
    CHECK(m.at(0, 0, 0) == 0);
    CHECK(m.at(479, 479, 2) == 0);
    CHECK(m.at(240, 240, 1) == 255);
    std::size_t lit = 0, expect = 0;
    for (int y = 0; y < 480; ++y)
        for (int x = 0; x < 480; ++x) {
            lit += m.at(x, y, 0) == 255;
            expect += std::hypot(x - 239.5, y - 239.5) <= 240.0;
        }
    CHECK(lit == expect);
    CHECK(circular_mask(m).storage() == m.storage());
}

TEST_CASE("sharpen: identity cases") {
    GrayFrame g(50, 40, 0);
    std::mt19937 rng(9);
    for (auto& v : g.storage()) v = static_cast<std::uint8_t>(rng() % 256);
    CHECK(sharpen(g, 0.0, 1.0).storage() == g.storage());
    GrayFrame c(50, 40, 120);
    CHECK(sharpen(c, 3.0, 2.0).storage() == c.storage());
    CHECK_THROWS_AS(sharpen(g, -1.0, 1.0), DataError);
}

TEST_CASE("sharpen: step-edge overshoot matches the 1-D unsharp formula") {
    GrayFrameF g(100, 20, 50.0f);
    for (int y = 0; y < 20; ++y)
        for (int x = 50; x < 100; ++x) g.at(x, y) = 150.0f;
    const GrayFrameF s = sharpen(g, 1.0, 1.0);
    double norm = 0;
    for (int k = -3; k <= 3; ++k) norm += std::exp(-0.5 * k * k);
    for (int x = 44; x < 56; ++x) {
        double blurred = 0;
        for (int k = -3; k <= 3; ++k) blurred += std::exp(-0.5 * k * k) / norm * (x + k >= 50 ? 150.0 : 50.0);
        const double in = x >= 50 ? 150.0 : 50.0;
        CHECK(s.at(x, 10) == doctest::Approx(in + (in - blurred)).epsilon(1e-5));
    }
}

TEST_CASE("to_gray: luma weights and rounding") {
    Frame f(3, 1);
    const std::uint8_t px[3][3] = {{255, 255, 255}, {0, 255, 0}, {77, 77, 77}};
    for (int x = 0; x < 3; ++x)
        for (int c = 0; c < 3; ++c) f.at(x, 0, c) = px[x][c];
    const GrayFrame g = to_gray(f);
    CHECK(g.at(0, 0) == 255);
    CHECK(g.at(1, 0) == 150);
    CHECK(g.at(2, 0) == 77);
}

TEST_CASE("extract_markers: uniform frame has no markers") {
    GrayFrame g(120, 120, 128);
    MarkerConfig cfg;
    CHECK(extract_markers(g, MarkerKind::Black, cfg).size() == 0);
    CHECK(extract_markers(g, MarkerKind::White, cfg).size() == 0);
}

TEST_CASE("extract_markers: white disc centroid") {
    GrayFrame g(300, 300, 128);
    paint_disc(g, 100.5, 200.5, 4.0, 250.0);
    const MarkerSet s = extract_markers(g, MarkerKind::White, MarkerConfig{});
    REQUIRE(s.size() == 1);
    CHECK((s.centroids[0] - Vec2(100.5, 200.5)).norm() < 0.1);
}

TEST_CASE("extract_markers: integer translation moves centroids exactly") {
    GrayFrame a(200, 200, 128);
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(30, 150);
    for (int k = 0; k < 12; ++k) paint_disc(a, u(rng), u(rng), 3.2, 10.0);
    const int dx = 7, dy = -5;
    GrayFrame b(200, 200, 128);
    for (int y = 0; y < 200; ++y)
        for (int x = 0; x < 200; ++x)
            if (x - dx >= 0 && x - dx < 200 && y - dy >= 0 && y - dy < 200) b.at(x, y) = a.at(x - dx, y - dy);
    const MarkerSet sa = extract_markers(a, MarkerKind::Black, MarkerConfig{});
    const MarkerSet sb = extract_markers(b, MarkerKind::Black, MarkerConfig{});
    REQUIRE(sa.size() == sb.size());
    REQUIRE(sa.size() > 5);
    for (const auto& c : sa.centroids) {
        double best = 1e9;
        for (const auto& d : sb.centroids) best = std::min(best, (d - c - Vec2(dx, dy)).norm());
        CHECK(best < 1e-9);
    }
}

TEST_CASE("morphology: open and close are idempotent") {
    for (unsigned seed = 0; seed < 4; ++seed) {
        const BinaryMask m = random_mask(80, 60, seed, 0.45);
        const BinaryMask o = morph_open(m, 1);
        const BinaryMask c = morph_close(m, 1);
        CHECK(morph_open(o, 1).storage() == o.storage());
        CHECK(morph_close(c, 1).storage() == c.storage());
    }
}

TEST_CASE("extract_markers: black and white components are disjoint") {
    GrayFrame g(160, 160, 0);
    std::mt19937 rng(8);
    for (auto& v : g.storage()) v = static_cast<std::uint8_t>(rng() % 256);
    g = gaussian_blur(g, 0.7);
    BinaryMask black, white;
    MarkerConfig cfg;
    cfg.max_markers = 100000;
    extract_markers(g, MarkerKind::Black, cfg, &black);
    extract_markers(g, MarkerKind::White, cfg, &white);
    for (std::size_t i = 0; i < black.storage().size(); ++i) REQUIRE(!(black.storage()[i] && white.storage()[i]));
}

TEST_CASE("extract_markers: component areas respect the bounds; over-segmentation is an error") {
    GrayFrame g(200, 200, 128);
    for (int k = 0; k < 6; ++k) paint_disc(g, 20 + 30 * k, 100, 1.0 + k * 2.0, 5.0);
    MarkerConfig cfg;
    const MarkerSet s = extract_markers(g, MarkerKind::Black, cfg);
    for (double a : s.areas) CHECK((a >= cfg.min_area && a <= cfg.max_area));
    cfg.max_markers = 2;
    CHECK_THROWS_AS(extract_markers(g, MarkerKind::Black, cfg), DataError);
}

TEST_CASE("extract_markers: simulator black dots, one component each") {
    const SensorModel model = SensorModel::make_default();
    const ContactScenario sc = make_scenario(2, Vec6::Zero(), 0.0, Profile::Ramp);
    FrameTruth t;
    const Frame f = SensorRenderer(model).render(sc, 0, &t);
    PipelineConfig cfg;
    const Preprocessed pre = preprocess(f, undistort_map(cfg.intrinsics, cfg.distortion), cfg, false);
    const MarkerSet s = extract_markers(pre.gray, MarkerKind::Black, cfg.markers);
    CHECK(s.size() == model.dots.size());
    for (const auto& truth : t.black_px) {
        double best = 1e9;
        for (const auto& c : s.centroids) best = std::min(best, (c - truth).norm());
        CHECK(best < 0.3);
    }
}
