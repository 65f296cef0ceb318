#include "tactile/pose.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <numeric>

namespace tactile {

Pose6D Pose6D::from_euler_deg(const Vec3& t, double rx, double ry, double rz) {
    Pose6D p;
    p.q = Quaternion(Eigen::AngleAxisd(deg2rad(rz), Vec3::UnitZ()) *
                     Eigen::AngleAxisd(deg2rad(ry), Vec3::UnitY()) *
                     Eigen::AngleAxisd(deg2rad(rx), Vec3::UnitX()));
    p.q.normalize();
    p.t = t;
    return p;
}

Vec3 Pose6D::euler_zyx_deg() const {
    const Mat3 r = rotation();
    const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    const double roll = std::atan2(r(2, 1), r(2, 2));
    const double yaw = std::atan2(r(1, 0), r(0, 0));
    return {rad2deg(roll), rad2deg(pitch), rad2deg(yaw)};
}

Pose6D Pose6D::operator*(const Pose6D& other) const {
    Pose6D out;
    out.q = (q * other.q).normalized();
    out.t = q * other.t + t;
    return out;
}

Pose6D Pose6D::inverse() const {
    Pose6D out;
    out.q = q.conjugate();
    out.t = -(out.q * t);
    return out;
}

double rotation_distance(const Pose6D& a, const Pose6D& b) {
    return rotation_vector(a.q.conjugate() * b.q).norm();
}

Vec3 rotation_vector(const Quaternion& qin) {
    Quaternion q = qin.normalized();
    if (q.w() < 0) q.coeffs() *= -1.0;
    const double s = q.vec().norm();
    if (s < 1e-12) return 2.0 * q.vec();
    const double angle = 2.0 * std::atan2(s, q.w());
    return q.vec() * (angle / s);
}

Quaternion quaternion_from_rotation_vector(const Vec3& w) {
    const double angle = w.norm();
    if (angle < 1e-12) return Quaternion(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()).normalized();
    return Quaternion(Eigen::AngleAxisd(angle, w / angle));
}

void PlatformModel::validate() const {
    const Vec3 c = (s1[0] + s1[1] + s1[2] + s1[3]) / 4.0;
    Matrix<4, 3> m;
    for (int i = 0; i < 4; ++i) m.row(i) = (s1[static_cast<std::size_t>(i)] - c).transpose();
    Eigen::JacobiSVD<Matrix<4, 3>> svd(m, Eigen::ComputeFullV);
    const auto sv = svd.singularValues();
    if (sv(2) > 1e-9) throw ConfigError("platform: white-marker points must be coplanar");
    if (sv(1) < 1e-9 * std::max(1.0, sv(0))) throw ConfigError("platform: white-marker points are collinear");
    if (std::abs(rest_pose.q.norm() - 1.0) > 1e-9) throw ConfigError("platform: rest pose rotation not unit");
}

void PnpConfig::validate() const {
    if (!(initial_damping > 0) || !(damping_factor > 1)) throw ConfigError("pnp: invalid damping settings");
    if (max_iters < 1) throw ConfigError("pnp: max_iters must be >= 1");
    if (!(min_step > 0)) throw ConfigError("pnp: min_step must be positive");
}

std::array<Vec2, 4> project_model(const PlatformModel& model, const Pose6D& pose, const CameraIntrinsics& intr) {
    std::array<Vec2, 4> out;
    for (std::size_t i = 0; i < 4; ++i) out[i] = project(Vec3(pose * model.s1[i]), intr);
    return out;
}

Vector<8> reprojection_residuals(const PlatformModel& model, const Pose6D& pose, const ImagePoints4& image_pts,
                                 const CameraIntrinsics& intr) {
    Vector<8> r;
    const auto proj = project_model(model, pose, intr);
    for (std::size_t i = 0; i < 4; ++i) r.segment<2>(static_cast<Eigen::Index>(2 * i)) = proj[i] - image_pts[i];
    return r;
}

Matrix<8, 6> reprojection_jacobian(const PlatformModel& model, const Pose6D& pose, const CameraIntrinsics& intr) {
    Matrix<8, 6> j;
    const Mat3 r = pose.rotation();
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec3 rx = r * model.s1[i];
        const Vec3 pc = rx + pose.t;
        if (!(pc.z() > 0)) throw DomainError("reprojection_jacobian: point behind camera");
        const double iz = 1.0 / pc.z();
        Matrix<2, 3> dproj;
        dproj << intr.fx * iz, 0, -intr.fx * pc.x() * iz * iz, 0, intr.fy * iz, -intr.fy * pc.y() * iz * iz;
        Mat3 skew;
        skew << 0, -rx.z(), rx.y(), rx.z(), 0, -rx.x(), -rx.y(), rx.x(), 0;
        const auto row = static_cast<Eigen::Index>(2 * i);
        j.block<2, 3>(row, 0) = -dproj * skew;  // d(exp(w) R X)/dw at w = 0 is -[R X]x
        j.block<2, 3>(row, 3) = dproj;
    }
    return j;
}

Pose6D apply_increment(const Pose6D& pose, const Vec6& delta) {
    Pose6D out;
    out.q = (quaternion_from_rotation_vector(delta.head<3>()) * pose.q).normalized();
    out.t = pose.t + delta.tail<3>();
    return out;
}

double reprojection_rms(const PlatformModel& model, const Pose6D& pose, const ImagePoints4& image_pts,
                        const CameraIntrinsics& intr) {
    return std::sqrt(reprojection_residuals(model, pose, image_pts, intr).squaredNorm() / 4.0);
}

namespace {

// Similarity that maps points to zero centroid and mean distance sqrt(2).
Mat3 hartley_normalization(const std::array<Vec2, 4>& pts) {
    Vec2 c = Vec2::Zero();
    for (const auto& p : pts) c += p;
    c /= 4.0;
    double d = 0;
    for (const auto& p : pts) d += (p - c).norm();
    d /= 4.0;
    const double s = std::sqrt(2.0) / d;
    Mat3 t;
    t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
    return t;
}

Mat3 project_to_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
        Mat3 u = svd.matrixU();
        u.col(2) *= -1.0;
        r = u * svd.matrixV().transpose();
    }
    return r;
}

// Rigid transform from a 2-D plane frame (a, b, 0) to the platform frame.
Pose6D plane_frame(const PlatformModel& model) {
    const Vec3 c = (model.s1[0] + model.s1[1] + model.s1[2] + model.s1[3]) / 4.0;
    Matrix<4, 3> m;
    for (int i = 0; i < 4; ++i) m.row(i) = (model.s1[static_cast<std::size_t>(i)] - c).transpose();
    Eigen::JacobiSVD<Matrix<4, 3>> svd(m, Eigen::ComputeFullV);
    Mat3 axes = svd.matrixV();
    if (axes.determinant() < 0) axes.col(2) *= -1.0;
    // Prefer the identity when the points already lie on z = 0.
    if (std::abs(std::abs(axes.col(2).dot(Vec3::UnitZ())) - 1.0) < 1e-12) {
        axes = Mat3::Identity();
    }
    Pose6D p;
    p.q = Quaternion(axes).normalized();
    p.t = c;
    return p;
}

struct Refined {
    Pose6D pose;
    double rms;
    double initial_rms;
    int iterations;
    bool converged;
};

Refined refine(const PlatformModel& model, const ImagePoints4& pts, const CameraIntrinsics& intr,
               const Pose6D& init, const PnpConfig& cfg) {
    Pose6D pose = init;
    double cost = reprojection_residuals(model, pose, pts, intr).squaredNorm();
    const double initial_rms = std::sqrt(cost / 4.0);
    double lambda = cfg.initial_damping;
    for (int it = 0; it < cfg.max_iters; ++it) {
        const Vector<8> r = reprojection_residuals(model, pose, pts, intr);
        const Matrix<8, 6> j = reprojection_jacobian(model, pose, intr);
        const Mat6 a = j.transpose() * j;
        const Vec6 g = j.transpose() * r;
        Mat6 damped = a;
        for (int k = 0; k < 6; ++k) damped(k, k) += lambda * std::max(a(k, k), 1e-12);
        const Vec6 step = -damped.ldlt().solve(g);
        if (!step.allFinite()) break;
        if (step.norm() < cfg.min_step) return {pose, std::sqrt(cost / 4.0), initial_rms, it, true};
        Pose6D trial;
        double trial_cost = std::numeric_limits<double>::infinity();
        try {
            trial = apply_increment(pose, step);
            trial_cost = reprojection_residuals(model, trial, pts, intr).squaredNorm();
        } catch (const DomainError&) {
        }
        if (trial_cost < cost) {
            pose = trial;
            cost = trial_cost;
            lambda /= cfg.damping_factor;
        } else {
            lambda *= cfg.damping_factor;
        }
    }
    return {pose, std::sqrt(cost / 4.0), initial_rms, cfg.max_iters, false};
}

// The mirrored-tilt candidate: reflect the plane normal about the line of sight.
Pose6D flipped_candidate(const Pose6D& pose, const Pose6D& plane) {
    const Pose6D cam_plane = pose * plane;
    const Vec3 n = cam_plane.q * Vec3::UnitZ();
    const Vec3 v = cam_plane.t.normalized();
    const Vec3 n2 = 2.0 * n.dot(v) * v - n;
    const Quaternion align = Quaternion::FromTwoVectors(n, n2);
    Pose6D flipped = cam_plane;
    flipped.q = (align * cam_plane.q).normalized();
    return flipped * plane.inverse();
}

}  // namespace

Pose6D homography_pose(const PlatformModel& model, const ImagePoints4& image_pts, const CameraIntrinsics& intr) {
    model.validate();
    intr.validate();
    // Degeneracy check in pixel space.
    {
        Vec2 c = Vec2::Zero();
        for (const auto& p : image_pts) c += p;
        c /= 4.0;
        Matrix<4, 2> m;
        for (int i = 0; i < 4; ++i) m.row(i) = (image_pts[static_cast<std::size_t>(i)] - c).transpose();
        Eigen::JacobiSVD<Matrix<4, 2>> svd(m);
        const auto sv = svd.singularValues();
        if (!image_pts[0].allFinite() || sv(1) < 1e-6 * std::max(sv(0), 1e-300))
            throw DegenerateError("solve_planar_pnp: image points are collinear or coincident");
    }
    const Pose6D plane = plane_frame(model);
    const Pose6D plane_inv = plane.inverse();
    std::array<Vec2, 4> src, dst;
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec3 a = plane_inv * model.s1[i];
        src[i] = a.head<2>();
        dst[i] = Vec2((image_pts[i].x() - intr.cx) / intr.fx, (image_pts[i].y() - intr.cy) / intr.fy);
    }
    const Mat3 ts = hartley_normalization(src);
    const Mat3 td = hartley_normalization(dst);
    Matrix<8, 9> a = Matrix<8, 9>::Zero();
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec3 s = ts * src[i].homogeneous();
        const Vec3 d = td * dst[i].homogeneous();
        const auto r = static_cast<Eigen::Index>(2 * i);
        a.block<1, 3>(r, 0) = s.transpose();
        a.block<1, 3>(r, 6) = -d.x() * s.transpose();
        a.block<1, 3>(r + 1, 3) = s.transpose();
        a.block<1, 3>(r + 1, 6) = -d.y() * s.transpose();
    }
    Eigen::JacobiSVD<Matrix<Eigen::Dynamic, Eigen::Dynamic>> svd(a, Eigen::ComputeFullV);
    const Vector<9> h = svd.matrixV().col(8);
    Mat3 hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Mat3 hm = td.inverse() * hn * ts;
    const double lambda = 2.0 / (hm.col(0).norm() + hm.col(1).norm());
    hm *= lambda;
    if (hm(2, 2) < 0) hm *= -1.0;  // plane in front of the camera
    Mat3 r;
    r.col(0) = hm.col(0);
    r.col(1) = hm.col(1);
    r.col(2) = hm.col(0).cross(hm.col(1));
    Pose6D cam_plane;
    cam_plane.q = Quaternion(project_to_rotation(r)).normalized();
    cam_plane.t = hm.col(2);
    return cam_plane * plane_inv;
}

PnpSolution solve_planar_pnp_detailed(const PlatformModel& model, const ImagePoints4& image_pts,
                                      const CameraIntrinsics& intr, const PnpConfig& cfg) {
    cfg.validate();
    const Pose6D init = homography_pose(model, image_pts, intr);
    const Pose6D plane = plane_frame(model);
    std::array<Pose6D, 2> inits{init, flipped_candidate(init, plane)};

    std::vector<Refined> results;
    for (const auto& start : inits) {
        if (!((start * model.s1[0]).z() > 0)) continue;
        results.push_back(refine(model, image_pts, intr, start, cfg));
    }
    if (results.empty()) throw DegenerateError("solve_planar_pnp: no candidate in front of camera");

    auto better = [&](const Refined& a, const Refined& b) {
        const double tol = 1e-9 * (1.0 + std::min(a.rms, b.rms));
        if (std::abs(a.rms - b.rms) > tol) return a.rms < b.rms;
        const double da = rotation_distance(a.pose, model.rest_pose) + (a.pose.t - model.rest_pose.t).norm();
        const double db = rotation_distance(b.pose, model.rest_pose) + (b.pose.t - model.rest_pose.t).norm();
        return da < db;
    };
    const auto best = std::min_element(results.begin(), results.end(),
                                       [&](const Refined& a, const Refined& b) { return better(a, b); });
    if (!best->converged)
        throw PnpConvergenceError("solve_planar_pnp: Levenberg-Marquardt did not converge", best->rms, best->pose);
    return {best->pose, best->rms, best->initial_rms, best->iterations, static_cast<int>(results.size())};
}

std::array<int, 4> angular_order(const std::array<Vec2, 4>& pts, const Vec2& center) {
    std::array<int, 4> idx{0, 1, 2, 3};
    std::array<double, 4> ang;
    for (std::size_t i = 0; i < 4; ++i) ang[i] = std::atan2(pts[i].y() - center.y(), pts[i].x() - center.x());
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return ang[static_cast<std::size_t>(a)] < ang[static_cast<std::size_t>(b)]; });
    return idx;
}

}  // namespace tactile
