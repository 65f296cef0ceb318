#include "tactile/wrench.hpp"

#include <Eigen/SVD>
#include <sstream>

namespace tactile {

double StiffnessMatrix::condition_number() const {
    Eigen::JacobiSVD<Mat6> svd(k);
    const auto sv = svd.singularValues();
    return sv(5) > 0 ? sv(0) / sv(5) : std::numeric_limits<double>::infinity();
}

bool StiffnessMatrix::symmetric_positive_definite(double tol) const {
    if ((k - k.transpose()).norm() > tol * std::max(1.0, k.norm())) return false;
    Eigen::LLT<Mat6> llt(0.5 * (k + k.transpose()));
    return llt.info() == Eigen::Success;
}

void StiffnessMatrix::validate() const {
    if (!k.allFinite()) throw ConfigError("stiffness: entries must be finite");
    if (!std::isfinite(condition_number())) throw ConfigError("stiffness: matrix is singular");
}

PoseDelta pose_delta(const Pose6D& current, const Pose6D& reference) {
    const Pose6D rel = reference.inverse() * current;
    PoseDelta d;
    d.v << rel.t, rotation_vector(rel.q);
    return d;
}

Pose6D apply_delta(const Pose6D& reference, const PoseDelta& delta) {
    Pose6D rel;
    rel.q = quaternion_from_rotation_vector(delta.rotation());
    rel.t = delta.translation();
    return reference * rel;
}

Wrench wrench_from_pose(const PoseDelta& d, const StiffnessMatrix& s, double f_max) {
    Wrench w = Wrench::from_vector(s.k * d.v);
    w.saturated = w.force.norm() > f_max;
    return w;
}

namespace {

std::string describe(const Vec6& v) {
    static const char* names[] = {"dx", "dy", "dz", "rx", "ry", "rz"};
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < 6; ++i) os << (i ? ", " : "") << names[i] << '=' << v(i);
    os << ']';
    return os.str();
}

}  // namespace

CalibrationReport calibrate_stiffness(const std::vector<CalibrationSample>& samples) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    Matrix<> d(n, 6), w(n, 6);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.row(i) = samples[static_cast<std::size_t>(i)].delta.v.transpose();
        w.row(i) = samples[static_cast<std::size_t>(i)].wrench.vector().transpose();
    }
    if (!d.allFinite() || !w.allFinite()) throw CalibrationError("calibrate_stiffness: non-finite sample", {});

    Eigen::JacobiSVD<Matrix<>> svd(d, Eigen::ComputeFullV);
    Vector<> sv = Vector<>::Zero(6);
    sv.head(svd.singularValues().size()) = svd.singularValues();
    const double smax = sv.size() ? sv.maxCoeff() : 0.0;
    std::vector<Vec6> deficient;
    for (int i = 0; i < 6; ++i)
        if (!(sv(i) > 1e-10 * smax) || smax == 0.0) deficient.push_back(svd.matrixV().col(i));
    if (!deficient.empty()) {
        std::ostringstream os;
        os << "calibrate_stiffness: " << samples.size() << " samples span rank " << 6 - deficient.size()
           << " < 6; unexcited delta directions:";
        for (const auto& v : deficient) os << ' ' << describe(v);
        throw CalibrationError(os.str(), deficient);
    }

    const Matrix<> kt = d.colPivHouseholderQr().solve(w);  // D K^T = W
    CalibrationReport rep;
    rep.stiffness.k = kt.transpose();
    const Matrix<> resid = w - d * kt;
    for (int c = 0; c < 6; ++c) rep.rms_residual(c) = std::sqrt(resid.col(c).squaredNorm() / static_cast<double>(n));
    rep.condition_number = sv(0) / sv(5);
    rep.samples = samples.size();
    return rep;
}

void SpringLayout::validate() const {
    if (!(rate > 0)) throw ConfigError("springs: rate must be positive");
    if (!(shear_fraction >= 0)) throw ConfigError("springs: shear_fraction must be non-negative");
    if (positions.size() < 3) throw ConfigError("springs: singular layout, need at least 3 non-collinear springs");
    Vec2 c = Vec2::Zero();
    for (const auto& p : positions) c += p;
    c /= static_cast<double>(positions.size());
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    for (const auto& p : positions) scatter += (p - c) * (p - c).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scatter);
    if (es.eigenvalues()(0) < 1e-12 * std::max(1.0, es.eigenvalues()(1)))
        throw ConfigError("springs: singular layout, springs are collinear");
}

StiffnessMatrix ideal_spring_stiffness(const SpringLayout& layout) {
    layout.validate();
    const double ks = layout.shear_fraction * layout.rate;
    const Mat3 kd = Vec3(ks, ks, layout.rate).asDiagonal();
    Mat6 k = Mat6::Zero();
    for (const auto& p2 : layout.positions) {
        const Vec3 p(p2.x(), p2.y(), 0.0);
        Matrix<3, 6> j;
        Mat3 skew;
        skew << 0, -p.z(), p.y(), p.z(), 0, -p.x(), -p.y(), p.x(), 0;
        j << Mat3::Identity(), -skew;
        k += j.transpose() * kd * j;
    }
    StiffnessMatrix s;
    s.k = k;
    if (!s.symmetric_positive_definite())
        throw ConfigError("springs: singular layout (stiffness not positive definite)");
    return s;
}

StiffnessMatrix diagonal_stiffness(const Vec6& diag) {
    StiffnessMatrix s;
    s.k = diag.asDiagonal();
    return s;
}

}  // namespace tactile
