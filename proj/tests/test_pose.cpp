#include "tactile/pose.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace tactile;

namespace {

const CameraIntrinsics kIntr{};
const PlatformModel kModel{};

// Plain pinhole evaluation, independent of the library's projection code.
Vec2 pinhole(const Vec3& p) { return {kIntr.fx * p.x() / p.z() + kIntr.cx, kIntr.fy * p.y() / p.z() + kIntr.cy}; }

ImagePoints4 observe(const PlatformModel& m, const Pose6D& pose) {
    ImagePoints4 out;
    for (std::size_t i = 0; i < 4; ++i) out[i] = pinhole(pose * m.s1[i]);
    return out;
}

// rest * perturbation with |t| <= max_t and each angle within +-max_deg.
Pose6D random_pose(std::mt19937_64& rng, double max_t, double max_deg) {
    std::uniform_real_distribution<double> u(-1, 1);
    Vec3 t(u(rng), u(rng), u(rng));
    while (t.norm() > 1) t = Vec3(u(rng), u(rng), u(rng));
    return kModel.rest_pose * Pose6D::from_euler_deg(max_t * t, max_deg * u(rng), max_deg * u(rng), max_deg * u(rng));
}

double rot_err_deg(const Pose6D& a, const Pose6D& b) { return rad2deg(rotation_distance(a, b)); }

double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("Pose6D: Euler round trip and unit quaternion") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-80, 80);
    for (int i = 0; i < 200; ++i) {
        const Vec3 e(u(rng), u(rng), u(rng));
        const Pose6D p = Pose6D::from_euler_deg(Vec3(1, 2, 3), e.x(), e.y(), e.z());
        CHECK(std::abs(p.q.norm() - 1.0) < 1e-9);
        const Vec3 back = p.euler_zyx_deg();
        const Pose6D p2 = Pose6D::from_euler_deg(Vec3(1, 2, 3), back.x(), back.y(), back.z());
        CHECK(rotation_distance(p, p2) < 1e-9);
        CHECK((back - e).norm() < 1e-7);
    }
}

TEST_CASE("Pose6D: composition and inverse") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        const Pose6D a = random_pose(rng, 3, 30), b = random_pose(rng, 3, 30);
        const Vec3 p(0.3, -1.2, 2.0);
        CHECK(((a * b) * p - a * (b * p)).norm() < 1e-12);
        CHECK(((a * a.inverse()) * p - p).norm() < 1e-12);
    }
}

TEST_CASE("rotation vector round trip") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 100; ++i) {
        const Vec3 w(u(rng), u(rng), u(rng));
        CHECK((rotation_vector(quaternion_from_rotation_vector(w)) - w).norm() < 1e-12);
    }
    CHECK(rotation_vector(Quaternion::Identity()).norm() == 0.0);
}

TEST_CASE("solve_planar_pnp: rest pose round trip") {
    const Pose6D p = solve_planar_pnp(kModel, observe(kModel, kModel.rest_pose), kIntr);
    CHECK((p.t - kModel.rest_pose.t).norm() < 1e-6);
    CHECK(rot_err_deg(p, kModel.rest_pose) < 1e-6);
}

TEST_CASE("solve_planar_pnp: 1000 random noiseless poses") {
    std::mt19937_64 rng(4);
    double worst_t = 0, worst_r = 0;
    for (int i = 0; i < 1000; ++i) {
        const Pose6D truth = random_pose(rng, 2.0, 10.0);
        const Pose6D p = solve_planar_pnp(kModel, observe(kModel, truth), kIntr);
        worst_t = std::max(worst_t, (p.t - truth.t).norm());
        worst_r = std::max(worst_r, rot_err_deg(p, truth));
    }
    CHECK(worst_t < 1e-4);
    CHECK(worst_r < 1e-4);
}

TEST_CASE("solve_planar_pnp: 0.1 px noise, median error") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<double> et, er;
    int increased = 0;
    for (int i = 0; i < 1000; ++i) {
        const Pose6D truth = random_pose(rng, 2.0, 10.0);
        ImagePoints4 pts = observe(kModel, truth);
        for (auto& q : pts) q += Vec2(noise(rng), noise(rng));
        const PnpSolution s = solve_planar_pnp_detailed(kModel, pts, kIntr);
        et.push_back((s.pose.t - truth.t).norm());
        er.push_back(rot_err_deg(s.pose, truth));
        increased += s.rms > s.initial_rms + 1e-12;
    }
    CHECK(median(et) <= 0.05);
    CHECK(median(er) <= 0.1);
    CHECK(increased == 0);
}

TEST_CASE("reprojection_rms: oracle agreement, zero at truth, positive off truth") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 50; ++i) {
        const Pose6D pose = random_pose(rng, 2.0, 10.0);
        ImagePoints4 pts = observe(kModel, pose);
        CHECK(reprojection_rms(kModel, pose, pts, kIntr) < 1e-9);
        Pose6D pushed = pose;
        pushed.t.z() += 0.1;
        CHECK(reprojection_rms(kModel, pushed, pts, kIntr) > 0.0);
        for (auto& q : pts) q += Vec2(u(rng), u(rng));
        double se = 0;
        for (std::size_t k = 0; k < 4; ++k) se += (pinhole(pose * kModel.s1[k]) - pts[k]).squaredNorm();
        CHECK(reprojection_rms(kModel, pose, pts, kIntr) == doctest::Approx(std::sqrt(se / 4)).epsilon(1e-12));
    }
}

TEST_CASE("reprojection_jacobian matches central differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-20, 20);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const Pose6D pose = random_pose(rng, 2.0, 10.0);
        ImagePoints4 pts;
        for (auto& q : pts) q = Vec2(240 + u(rng), 240 + u(rng));
        const Matrix<8, 6> j = reprojection_jacobian(kModel, pose, kIntr);
        Matrix<8, 6> fd;
        const double h = 1e-6;
        for (int k = 0; k < 6; ++k) {
            Vec6 d = Vec6::Zero();
            d(k) = h;
            fd.col(k) = (reprojection_residuals(kModel, apply_increment(pose, d), pts, kIntr) -
                         reprojection_residuals(kModel, apply_increment(pose, -d), pts, kIntr)) /
                        (2 * h);
        }
        worst = std::max(worst, (j - fd).norm() / j.norm());
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("solve_planar_pnp: equivariant under a rigid change of the platform frame") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
        const Pose6D truth = random_pose(rng, 2.0, 10.0);
        std::mt19937_64 noise_rng(100 + i);
        std::normal_distribution<double> noise(0.0, 0.2);
        ImagePoints4 pts = observe(kModel, truth);
        for (auto& q : pts) q += Vec2(noise(noise_rng), noise(noise_rng));

        const Pose6D g = Pose6D::from_euler_deg(Vec3(1.0, -2.0, 0.5), 20, -35, 70);
        PlatformModel moved = kModel;
        for (auto& s : moved.s1) s = g * s;
        moved.rest_pose = kModel.rest_pose * g.inverse();

        const PnpSolution a = solve_planar_pnp_detailed(kModel, pts, kIntr);
        const PnpSolution b = solve_planar_pnp_detailed(moved, pts, kIntr);
        CHECK(b.rms == doctest::Approx(a.rms).epsilon(1e-6));
        const Pose6D b_back = b.pose * g;
        CHECK((b_back.t - a.pose.t).norm() < 1e-6);
        CHECK(rot_err_deg(b_back, a.pose) < 1e-6);
        CHECK(reprojection_rms(moved, truth * g.inverse(), pts, kIntr) ==
              doctest::Approx(reprojection_rms(kModel, truth, pts, kIntr)).epsilon(1e-9));
    }
}

TEST_CASE("solve_planar_pnp: degenerate image points") {
    const ImagePoints4 line{Vec2(100, 100), Vec2(150, 150), Vec2(200, 200), Vec2(250, 250)};
    CHECK_THROWS_AS(solve_planar_pnp(kModel, line, kIntr), DegenerateError);
    const ImagePoints4 same{Vec2(100, 100), Vec2(100, 100), Vec2(100, 100), Vec2(100, 100)};
    CHECK_THROWS_AS(solve_planar_pnp(kModel, same, kIntr), DegenerateError);
}

TEST_CASE("PlatformModel: validation") {
    PlatformModel m;
    CHECK_NOTHROW(m.validate());
    m.s1[2].z() = 0.5;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = PlatformModel{};
    m.s1 = {Vec3(0, 0, 0), Vec3(1, 1, 0), Vec3(2, 2, 0), Vec3(3, 3, 0)};
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("solve_planar_pnp: a one-iteration budget raises a convergence error with the best iterate") {
    std::mt19937_64 rng(9);
    const Pose6D truth = random_pose(rng, 2.0, 10.0);
    ImagePoints4 pts = observe(kModel, truth);
    pts[0] += Vec2(3.0, -2.0);
    PnpConfig cfg;
    cfg.max_iters = 1;
    try {
        solve_planar_pnp(kModel, pts, kIntr, cfg);
        FAIL("expected PnpConvergenceError");
    } catch (const PnpConvergenceError& e) {
        CHECK(e.residual() > 0);
        CHECK(std::abs(e.best().q.norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("angular_order: rest projection lists s1 in order") {
    const ImagePoints4 pts = observe(kModel, kModel.rest_pose);
    const auto idx = angular_order(pts, Vec2(kIntr.cx, kIntr.cy));
    for (int i = 0; i < 4; ++i) CHECK(idx[static_cast<std::size_t>(i)] == i);
}
