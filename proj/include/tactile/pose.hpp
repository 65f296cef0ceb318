#pragma once

#include "tactile/camera.hpp"
#include "tactile/core.hpp"

#include <array>

namespace tactile {

// Rigid transform platform -> camera. Rotation is kept as a unit quaternion;
// Euler angles (Z-Y-X intrinsic, degrees) exist only at the reporting boundary.
struct Pose6D {
    Quaternion q = Quaternion::Identity();
    Vec3 t = Vec3::Zero();  // mm

    static Pose6D from_euler_deg(const Vec3& t, double rx, double ry, double rz);
    // (rx, ry, rz) = (roll about x, pitch about y, yaw about z), degrees.
    Vec3 euler_zyx_deg() const;

    Mat3 rotation() const { return q.toRotationMatrix(); }
    Vec3 operator*(const Vec3& p) const { return q * p + t; }
    Pose6D operator*(const Pose6D& other) const;
    Pose6D inverse() const;
};

// Angle of the relative rotation between two poses, radians.
double rotation_distance(const Pose6D& a, const Pose6D& b);

// Rotation vector (axis * angle) of a unit quaternion, angle in [0, pi].
Vec3 rotation_vector(const Quaternion& q);
Quaternion quaternion_from_rotation_vector(const Vec3& w);

struct PlatformModel {
    // Listed in ascending image angle around the principal point at rest, the
    // order in which the detector reports them.
    std::array<Vec3, 4> s1{Vec3(-6, 6, 0), Vec3(6, 6, 0), Vec3(6, -6, 0), Vec3(-6, -6, 0)};
    // Platform z axis points toward the camera, so a pressing deflection is +z.
    Pose6D rest_pose = Pose6D::from_euler_deg(Vec3(0, 0, 10), 180, 0, 0);

    void validate() const;
};

struct PnpConfig {
    double initial_damping = 1e-3;
    double damping_factor = 10.0;
    int max_iters = 100;
    double min_step = 1e-10;

    void validate() const;
};

class PnpConvergenceError : public ConvergenceError {
  public:
    PnpConvergenceError(const std::string& what, double rms, const Pose6D& best)
        : ConvergenceError(what, rms), best_(best) {}
    const Pose6D& best() const { return best_; }

  private:
    Pose6D best_;
};

using ImagePoints4 = std::array<Vec2, 4>;

std::array<Vec2, 4> project_model(const PlatformModel& model, const Pose6D& pose,
                                  const CameraIntrinsics& intr);

// Stacked (u, v) residuals projected - observed, 8 entries.
Vector<8> reprojection_residuals(const PlatformModel& model, const Pose6D& pose,
                                 const ImagePoints4& image_pts, const CameraIntrinsics& intr);

// d residuals / d (w, dt) for the update R <- exp(w) R, t <- t + dt.
Matrix<8, 6> reprojection_jacobian(const PlatformModel& model, const Pose6D& pose,
                                   const CameraIntrinsics& intr);

Pose6D apply_increment(const Pose6D& pose, const Vec6& delta);

double reprojection_rms(const PlatformModel& model, const Pose6D& pose, const ImagePoints4& image_pts,
                        const CameraIntrinsics& intr);

struct PnpSolution {
    Pose6D pose;
    double rms = 0;          // px
    double initial_rms = 0;  // px, of the chosen candidate before refinement
    int iterations = 0;
    int candidates = 0;
};

// Homography initialisation of both planar candidates, LM refinement of each,
// selection by reprojection error (ties go to the candidate nearer rest_pose).
PnpSolution solve_planar_pnp_detailed(const PlatformModel& model, const ImagePoints4& image_pts,
                                      const CameraIntrinsics& intr, const PnpConfig& cfg = {});

inline Pose6D solve_planar_pnp(const PlatformModel& model, const ImagePoints4& image_pts,
                               const CameraIntrinsics& intr, const PnpConfig& cfg = {}) {
    return solve_planar_pnp_detailed(model, image_pts, intr, cfg).pose;
}

// Initial pose from the normalized DLT homography (no refinement).
Pose6D homography_pose(const PlatformModel& model, const ImagePoints4& image_pts,
                       const CameraIntrinsics& intr);

// Indices that sort points by angle around `center` (atan2 of y then x offsets).
std::array<int, 4> angular_order(const std::array<Vec2, 4>& pts, const Vec2& center);

}  // namespace tactile
