#include "tactile/shape.hpp"

#include <json.hpp>

#include <fstream>
#include <limits>

namespace tactile {

LightConfig LightConfig::from_tilt(double tilt_deg, double first_azimuth_deg) {
    LightConfig lc;
    const double el = deg2rad(tilt_deg);
    for (int c = 0; c < 3; ++c) {
        const double az = deg2rad(first_azimuth_deg + 120.0 * c);
        lc.directions[c] = Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    }
    return lc;
}

Mat3 LightConfig::matrix() const {
    Mat3 m;
    for (int c = 0; c < 3; ++c) m.row(c) = directions[c].transpose();
    return m;
}

double LightConfig::condition_number() const {
    Eigen::JacobiSVD<Mat3> svd(matrix());
    const auto s = svd.singularValues();
    if (s(2) <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / s(2);
}

void LightConfig::validate() const {
    for (const auto& d : directions)
        if (!d.allFinite() || std::abs(d.norm() - 1.0) > 1e-6)
            throw ConfigError("light directions must be unit vectors");
    if ((gain.array() <= 0.0).any() || !gain.allFinite()) throw ConfigError("light gain must be positive");
    if ((ambient.array() < 0.0).any() || !ambient.allFinite()) throw ConfigError("ambient level must be non-negative");
    if (condition_number() > 1e8) throw ConfigError("singular light matrix");
}

Vec3 shade(const Vec3& normal, const LightConfig& lights) {
    Vec3 out;
    for (int c = 0; c < 3; ++c)
        out(c) = lights.gain(c) * std::max(0.0, normal.dot(lights.directions[c])) + lights.ambient(c);
    return out;
}

std::size_t NormalMap::valid_count() const {
    std::size_t n = 0;
    for (auto s : state.data()) n += s == static_cast<std::uint8_t>(NormalState::Valid);
    return n;
}

void NormalsConfig::validate() const {
    if (!(min_norm > 0.0)) throw ConfigError("min_norm must be positive");
    if (!(albedo_tolerance > 0.0)) throw ConfigError("albedo_tolerance must be positive");
    if (!(saturation > 0.0)) throw ConfigError("saturation must be positive");
}

void fill_shadowed(NormalMap& map, int radius) {
    if (radius < 1) throw ConfigError("fill radius must be at least 1");
    const auto shadowed = static_cast<std::uint8_t>(NormalState::Shadowed);
    const Image<std::uint8_t, 1> before = map.state;
    for (int y = 0; y < map.height(); ++y) {
        for (int x = 0; x < map.width(); ++x) {
            if (before.at(x, y) != shadowed) continue;
            Vec3 acc = Vec3::Zero();
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int d2 = dx * dx + dy * dy;
                    if (d2 == 0 || d2 > radius * radius) continue;
                    const int sx = x + dx, sy = y + dy;
                    if (sx < 0 || sy < 0 || sx >= map.width() || sy >= map.height()) continue;
                    if (before.at(sx, sy) != static_cast<std::uint8_t>(NormalState::Valid)) continue;
                    acc += map.normal(sx, sy) / static_cast<double>(d2);
                }
            }
            if (acc.norm() > 0.0)
                map.set(x, y, acc.normalized(), NormalState::Valid);
            else
                map.set(x, y, Vec3::Zero(), NormalState::Invalid);
        }
    }
}

NormalMap normals_from_gradients(const Image<double, 1>& p, const Image<double, 1>& q) {
    if (!p.same_size(q)) throw DataError("gradient images differ in size");
    NormalMap map(p.width(), p.height());
    for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x)
            map.set(x, y, Vec3(-p.at(x, y), -q.at(x, y), 1.0).normalized(), NormalState::Valid);
    return map;
}

std::size_t HeightMap::area_above(double threshold_mm) const {
    std::size_t n = 0;
    for (int y = 0; y < height.height(); ++y)
        for (int x = 0; x < height.width(); ++x)
            n += valid.at(x, y) && height.at(x, y) > threshold_mm;
    return n;
}

double HeightMap::max_height() const {
    double m = -std::numeric_limits<double>::infinity();
    for (int y = 0; y < height.height(); ++y)
        for (int x = 0; x < height.width(); ++x)
            if (valid.at(x, y)) m = std::max(m, height.at(x, y));
    return m;
}

void IntegrationConfig::validate() const {
    if (!(omega > 0.0 && omega < 2.0)) throw ConfigError("SOR omega must lie in (0, 2)");
    if (!(tolerance > 0.0)) throw ConfigError("integration tolerance must be positive");
    if (max_sweeps < 1) throw ConfigError("max_sweeps must be positive");
    if (smoothing_sweeps < 1) throw ConfigError("smoothing_sweeps must be positive");
}

namespace {

// Weighted graph Laplacian on a w x h grid: ex[i] couples i and i+1,
// ey[i] couples i and i+w. Zero weight at the far edges.
struct Level {
    int w = 0, h = 0;
    std::vector<double> ex, ey, diag;

    std::size_t size() const { return static_cast<std::size_t>(w) * h; }

    void finish() {
        diag.assign(size(), 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                double d = ex[i] + ey[i];
                if (x > 0) d += ex[i - 1];
                if (y > 0) d += ey[i - w];
                diag[i] = d;
            }
    }

    double neighbor_sum(const std::vector<double>& z, int x, int y) const {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        double s = ex[i] * (x + 1 < w ? z[i + 1] : 0.0) + ey[i] * (y + 1 < h ? z[i + w] : 0.0);
        if (x > 0) s += ex[i - 1] * z[i - 1];
        if (y > 0) s += ey[i - w] * z[i - w];
        return s;
    }

    void apply(const std::vector<double>& z, std::vector<double>& out) const {
        out.resize(size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                out[i] = diag[i] * z[i] - neighbor_sum(z, x, y);
            }
    }

    void residual(const std::vector<double>& z, const std::vector<double>& b, std::vector<double>& r) const {
        apply(z, r);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    }

    // One red-black SOR sweep; reverse_colors gives the adjoint sweep.
    void sor(std::vector<double>& z, const std::vector<double>& b, double omega, bool reverse_colors = false) const {
        for (int pass = 0; pass < 2; ++pass) {
            const int color = reverse_colors ? 1 - pass : pass;
            for (int y = 0; y < h; ++y)
                for (int x = (y + color) & 1; x < w; x += 2) {
                    const std::size_t i = static_cast<std::size_t>(y) * w + x;
                    if (diag[i] <= 0.0) continue;
                    const double gs = (b[i] + neighbor_sum(z, x, y)) / diag[i];
                    z[i] += omega * (gs - z[i]);
                }
        }
    }

    Level coarsen() const {
        Level c;
        c.w = (w + 1) / 2;
        c.h = (h + 1) / 2;
        c.ex.assign(c.size(), 0.0);
        c.ey.assign(c.size(), 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const std::size_t ci = static_cast<std::size_t>(y / 2) * c.w + x / 2;
                if (x + 1 < w && (x & 1)) c.ex[ci] += ex[i];
                if (y + 1 < h && (y & 1)) c.ey[ci] += ey[i];
            }
        c.finish();
        return c;
    }
};

double norm2(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Piecewise-constant prolongation halves smooth corrections on a 2:1 grid;
// a fixed factor keeps the cycle linear so it can precondition CG.
constexpr double kCoarseScale = 2.0;

class PoissonSolver {
  public:
    PoissonSolver(Level fine, const IntegrationConfig& cfg) : cfg_(cfg) {
        levels_.push_back(std::move(fine));
        if (cfg.multigrid) {
            while (std::min(levels_.back().w, levels_.back().h) > 6) levels_.push_back(levels_.back().coarsen());
            factor_coarsest();
        }
    }

    IntegrationStats solve(std::vector<double>& z, const std::vector<double>& b) {
        const Level& fine = levels_.front();
        z.assign(fine.size(), 0.0);
        if (norm2(b) == 0.0) return {};
        return levels_.size() > 1 ? solve_pcg(z, b) : solve_sor(z, b);
    }

  private:
    [[noreturn]] void fail(const IntegrationStats& st, double rel) const {
        throw ConvergenceError("Poisson relaxation did not converge after " + std::to_string(st.sweeps) +
                                   " sweeps (relative residual " + std::to_string(rel) + ")",
                               rel);
    }

    IntegrationStats solve_sor(std::vector<double>& z, const std::vector<double>& b) {
        IntegrationStats st;
        const Level& fine = levels_.front();
        const double bnorm = norm2(b);
        std::vector<double> r;
        while (true) {
            for (int k = 0; k < 10; ++k) fine.sor(z, b, cfg_.omega);
            st.sweeps += 10;
            fine.residual(z, b, r);
            st.relative_residual = norm2(r) / bnorm;
            if (!std::isfinite(st.relative_residual))
                throw ConvergenceError("Poisson relaxation diverged", st.relative_residual);
            if (st.relative_residual < cfg_.tolerance) return st;
            if (st.sweeps >= cfg_.max_sweeps) fail(st, st.relative_residual);
        }
    }

    // Conjugate gradients preconditioned by one symmetric V-cycle.
    IntegrationStats solve_pcg(std::vector<double>& z, const std::vector<double>& b) {
        IntegrationStats st;
        const Level& fine = levels_.front();
        const double bnorm = norm2(b);
        std::vector<double> r = b, s(r.size()), p, q;
        precondition(r, s);
        p = s;
        double rs = dot(r, s);
        while (true) {
            fine.apply(p, q);
            const double pq = dot(p, q);
            if (!(pq > 0.0)) break;
            const double a = rs / pq;
            for (std::size_t i = 0; i < z.size(); ++i) {
                z[i] += a * p[i];
                r[i] -= a * q[i];
            }
            st.sweeps += 4 * cfg_.smoothing_sweeps;
            ++st.cycles;
            st.relative_residual = norm2(r) / bnorm;
            if (!std::isfinite(st.relative_residual))
                throw ConvergenceError("Poisson relaxation diverged", st.relative_residual);
            if (st.relative_residual < cfg_.tolerance) break;
            if (st.sweeps >= cfg_.max_sweeps) fail(st, st.relative_residual);
            precondition(r, s);
            const double rs_new = dot(r, s);
            const double beta = rs_new / rs;
            rs = rs_new;
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = s[i] + beta * p[i];
        }
        // Report the true residual rather than the recursively updated one.
        std::vector<double> tr;
        fine.residual(z, b, tr);
        st.relative_residual = norm2(tr) / bnorm;
        if (st.relative_residual >= cfg_.tolerance) fail(st, st.relative_residual);
        return st;
    }

    void precondition(const std::vector<double>& r, std::vector<double>& s) {
        s.assign(r.size(), 0.0);
        vcycle(0, s, r);
    }

    // The coarsest operator is singular (one constant per connected
    // component, plus rows of decoupled pixels); its pseudo-inverse returns
    // the minimum-norm correction.
    void factor_coarsest() {
        const Level& c = levels_.back();
        const int n = static_cast<int>(c.size());
        Eigen::MatrixXd a(n, n);
        std::vector<double> e(c.size(), 0.0), col;
        for (int j = 0; j < n; ++j) {
            e[j] = 1.0;
            c.apply(e, col);
            e[j] = 0.0;
            for (int i = 0; i < n; ++i) a(i, j) = col[i];
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
        const Eigen::VectorXd& ev = es.eigenvalues();
        const double cut = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i)
            if (ev[i] > cut) inv[i] = 1.0 / ev[i];
        coarse_pinv_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    }

    void vcycle(std::size_t l, std::vector<double>& z, const std::vector<double>& b) {
        const Level& lv = levels_[l];
        if (l + 1 == levels_.size()) {
            const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
            Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size())) = coarse_pinv_ * rhs;
            return;
        }
        // Gauss-Seidel smoothing: over-relaxation amplifies the rough modes
        // the coarse grid cannot see. Post-smoothing runs the colors in
        // reverse so the cycle stays symmetric.
        for (int k = 0; k < cfg_.smoothing_sweeps; ++k) lv.sor(z, b, 1.0);
        std::vector<double> r;
        lv.residual(z, b, r);
        const Level& cl = levels_[l + 1];
        std::vector<double> rc(cl.size(), 0.0);
        for (int y = 0; y < lv.h; ++y)
            for (int x = 0; x < lv.w; ++x)
                rc[static_cast<std::size_t>(y / 2) * cl.w + x / 2] += r[static_cast<std::size_t>(y) * lv.w + x];
        std::vector<double> ec(cl.size(), 0.0);
        vcycle(l + 1, ec, rc);
        for (int y = 0; y < lv.h; ++y)
            for (int x = 0; x < lv.w; ++x)
                z[static_cast<std::size_t>(y) * lv.w + x] += kCoarseScale * ec[static_cast<std::size_t>(y / 2) * cl.w + x / 2];
        for (int k = 0; k < cfg_.smoothing_sweeps; ++k) lv.sor(z, b, 1.0, true);
    }

    IntegrationConfig cfg_;
    std::vector<Level> levels_;
    Eigen::MatrixXd coarse_pinv_;
};

// Edges touching an invalid pixel carry no gradient. Their small weight
// keeps the system connected (holes are filled harmonically) without letting
// the fill drag on the measured region.
constexpr double kHoleWeight = 1e-3;

struct PoissonProblem {
    Level level;
    std::vector<double> b;
};

PoissonProblem assemble(const NormalMap& n, double pitch) {
    const int w = n.width(), h = n.height();
    PoissonProblem pb;
    Level& lv = pb.level;
    lv.w = w;
    lv.h = h;
    lv.ex.assign(lv.size(), 0.0);
    lv.ey.assign(lv.size(), 0.0);
    std::vector<double> gx(lv.size(), 0.0), gy(lv.size(), 0.0), p(lv.size(), 0.0), q(lv.size(), 0.0);
    std::vector<char> ok(lv.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!n.valid(x, y)) continue;
            const Vec3 v = n.normal(x, y);
            if (v.z() <= 0.0) continue;
            ok[i] = 1;
            p[i] = -v.x() / v.z();
            q[i] = -v.y() / v.z();
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (x + 1 < w) {
                lv.ex[i] = kHoleWeight;
                if (ok[i] && ok[i + 1]) {
                    lv.ex[i] = 1.0;
                    gx[i] = 0.5 * pitch * (p[i] + p[i + 1]);
                }
            }
            if (y + 1 < h) {
                lv.ey[i] = kHoleWeight;
                if (ok[i] && ok[i + w]) {
                    lv.ey[i] = 1.0;
                    gy[i] = 0.5 * pitch * (q[i] + q[i + w]);
                }
            }
        }
    lv.finish();
    pb.b.assign(lv.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            double bi = -lv.ex[i] * gx[i] - lv.ey[i] * gy[i];
            if (x > 0) bi += lv.ex[i - 1] * gx[i - 1];
            if (y > 0) bi += lv.ey[i - w] * gy[i - w];
            pb.b[i] = bi;
        }
    return pb;
}

}  // namespace

HeightMap integrate_normals(const NormalMap& normals, double pitch, const IntegrationConfig& cfg,
                            IntegrationStats* stats) {
    cfg.validate();
    if (!(pitch > 0.0)) throw ConfigError("grid pitch must be positive");
    HeightMap hm;
    hm.pitch = pitch;
    hm.height = Image<double, 1>(normals.width(), normals.height(), 0.0);
    hm.valid = Image<std::uint8_t, 1>(normals.width(), normals.height(), 0);
    if (normals.width() == 0 || normals.height() == 0) return hm;

    PoissonProblem pb = assemble(normals, pitch);
    std::vector<double> z;
    PoissonSolver solver(pb.level, cfg);
    const IntegrationStats st = solver.solve(z, pb.b);
    if (stats) *stats = st;

    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < normals.height(); ++y)
        for (int x = 0; x < normals.width(); ++x)
            if (normals.valid(x, y)) {
                hm.valid.at(x, y) = 1;
                sum += z[static_cast<std::size_t>(y) * normals.width() + x];
                ++count;
            }
    const double mean = count ? sum / count : 0.0;
    auto& out = hm.height.storage();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] - mean;
    return hm;
}

double poisson_relative_residual(const NormalMap& normals, const HeightMap& hm) {
    if (!hm.height.same_size(normals.normals)) throw DataError("height map and normal map differ in size");
    const PoissonProblem pb = assemble(normals, hm.pitch);
    const auto& z = hm.height.storage();
    std::vector<double> lz;
    pb.level.apply(z, lz);
    const int w = normals.width(), h = normals.height();
    double num = 0.0, den = 0.0;
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            num += (pb.b[i] - lz[i]) * (pb.b[i] - lz[i]);
            den += pb.b[i] * pb.b[i];
        }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
}

void write_heightmap_csv(const std::filesystem::path& path, const HeightMap& hm) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "x_px,y_px,height_mm,valid\n";
    out.precision(9);
    for (int y = 0; y < hm.height.height(); ++y)
        for (int x = 0; x < hm.height.width(); ++x)
            out << x << ',' << y << ',' << hm.height.at(x, y) << ',' << int(hm.valid.at(x, y)) << '\n';
}

std::pair<double, double> write_heightmap_pgm16(const std::filesystem::path& path, const HeightMap& hm) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : hm.height.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    const double scale = hi > lo ? (hi - lo) / 65535.0 : 1.0;
    Image<std::uint16_t, 1> img(hm.height.width(), hm.height.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            img.at(x, y) = saturate<std::uint16_t>((hm.height.at(x, y) - lo) / scale);
    write_pgm16(path, img);

    nlohmann::json side = {{"scale_mm", scale},
                           {"offset_mm", lo},
                           {"pitch_mm_per_px", hm.pitch},
                           {"width", img.width()},
                           {"height", img.height()},
                           {"formula", "height_mm = value * scale_mm + offset_mm"}};
    std::ofstream js(path.string() + ".json");
    if (!js) throw DataError("cannot write sidecar for " + path.string());
    js << side.dump(2) << '\n';
    return {scale, lo};
}

}  // namespace tactile
