#pragma once

#include "tactile/pose.hpp"

namespace tactile {

// Current pose relative to the reference: (dx, dy, dz) mm in the reference
// frame, then the relative rotation as a rotation vector (rad).
struct PoseDelta {
    Vec6 v = Vec6::Zero();

    Vec3 translation() const { return v.head<3>(); }
    Vec3 rotation() const { return v.tail<3>(); }
    // Small-angle treatment is only trusted below 0.35 rad.
    bool large_rotation() const { return rotation().norm() >= 0.35; }
};

struct Wrench {
    Vec3 force = Vec3::Zero();   // N
    Vec3 torque = Vec3::Zero();  // N mm
    bool saturated = false;

    Vec6 vector() const {
        Vec6 w;
        w << force, torque;
        return w;
    }
    static Wrench from_vector(const Vec6& w) { return {w.head<3>(), w.tail<3>(), false}; }
};

inline constexpr double kDefaultMaxForce = 17.0;  // N

struct StiffnessMatrix {
    Mat6 k = Mat6::Identity();

    double condition_number() const;
    bool symmetric_positive_definite(double tol = 1e-9) const;
    void validate() const;
};

PoseDelta pose_delta(const Pose6D& current, const Pose6D& reference);

// Inverse of pose_delta: the pose reached from `reference` by `delta`.
Pose6D apply_delta(const Pose6D& reference, const PoseDelta& delta);

// w = K d; `saturated` flags |force| > f_max (the value is not clamped).
Wrench wrench_from_pose(const PoseDelta& d, const StiffnessMatrix& s, double f_max = kDefaultMaxForce);

struct CalibrationSample {
    PoseDelta delta;
    Wrench wrench;
};

struct CalibrationReport {
    StiffnessMatrix stiffness;
    Vec6 rms_residual = Vec6::Zero();  // per wrench axis
    double condition_number = 0;       // of the stacked delta matrix
    std::size_t samples = 0;
};

class CalibrationError : public DataError {
  public:
    CalibrationError(const std::string& what, std::vector<Vec6> deficient)
        : DataError(what), deficient_(std::move(deficient)) {}
    // Unit directions in delta space that the samples do not excite.
    const std::vector<Vec6>& deficient_subspace() const { return deficient_; }

  private:
    std::vector<Vec6> deficient_;
};

// Row-wise linear least squares of wrench on delta.
CalibrationReport calibrate_stiffness(const std::vector<CalibrationSample>& samples);

struct SpringLayout {
    Points2 positions;            // mm, in the platform plane
    double rate = 0.5;            // axial N/mm per spring
    double shear_fraction = 0.3;  // lateral rate as a fraction of axial

    void validate() const;
};

// Rigid plate on vertical springs, small deflections. Each spring at p
// contributes J^T diag(ks, ks, k) J with J = [I | -[p]x].
StiffnessMatrix ideal_spring_stiffness(const SpringLayout& layout);

StiffnessMatrix diagonal_stiffness(const Vec6& diag);

}  // namespace tactile
