#include "tactile/flow.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace tactile {

void FlowConfig::validate() const {
    if (window < 3 || window % 2 == 0) throw ConfigError("flow: window must be odd and >= 3");
    if (levels < 1) throw ConfigError("flow: levels must be >= 1");
    if (max_iters < 1) throw ConfigError("flow: max_iters must be >= 1");
    if (!(eps > 0)) throw ConfigError("flow: eps must be positive");
    if (!(min_eig >= 0)) throw ConfigError("flow: min_eig must be non-negative");
}

std::size_t FlowField::tracked_count() const {
    return static_cast<std::size_t>(std::count(status.begin(), status.end(), TrackStatus::Tracked));
}

double FlowField::mean_magnitude() const {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        if (status[i] != TrackStatus::Tracked) continue;
        sum += displacements[i].norm();
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

struct Window {
    std::vector<float> i, ix, iy;
};

// Samples the (2 half + 1)^2 window centered at (x, y). All taps share the
// same fractional offset, so the bilinear weights are computed once.
void sample_window(const GrayFrameF& img, double x, double y, int half, float* out) {
    const double fx = std::floor(x), fy = std::floor(y);
    const int x0 = static_cast<int>(fx) - half;
    const int y0 = static_cast<int>(fy) - half;
    const int n = 2 * half + 1;
    if (x0 < 0 || y0 < 0 || x0 + n >= img.width() || y0 + n >= img.height()) {
        for (int dy = -half; dy <= half; ++dy)
            for (int dx = -half; dx <= half; ++dx) *out++ = static_cast<float>(sample_bilinear(img, x + dx, y + dy));
        return;
    }
    const float ax = static_cast<float>(x - fx), ay = static_cast<float>(y - fy);
    const float w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
    const int stride = img.width();
    for (int r = 0; r < n; ++r) {
        const float* a = img.pixel(x0, y0 + r);
        const float* b = a + stride;
        for (int c = 0; c < n; ++c) *out++ = w00 * a[c] + w10 * a[c + 1] + w01 * b[c] + w11 * b[c + 1];
    }
}

}  // namespace

FlowField lk_track(const FlowPyramid& prev, const FlowPyramid& next, const Points2& points,
                   const FlowConfig& cfg) {
    cfg.validate();
    if (prev.levels.size() != next.levels.size() || prev.levels.empty())
        throw DataError("lk_track: pyramid depth mismatch");
    const int levels = std::min<int>(cfg.levels, static_cast<int>(prev.levels.size()));
    const int half = cfg.window / 2;
    const auto n_win = static_cast<std::size_t>(cfg.window) * cfg.window;

    FlowField flow;
    flow.origins = points;
    flow.displacements.assign(points.size(), Vec2::Zero());
    flow.status.assign(points.size(), TrackStatus::Tracked);

    Window win;
    win.i.resize(n_win);
    win.ix.resize(n_win);
    win.iy.resize(n_win);
    std::vector<float> warped(n_win);

    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        Vec2 guess = Vec2::Zero();
        bool lost = false;
        Vec2 v = Vec2::Zero();
        for (int level = levels - 1; level >= 0; --level) {
            const double scale = 1.0 / (1 << level);
            const Vec2 p = points[pi] * scale;
            const auto& I = prev.levels[static_cast<std::size_t>(level)];
            const auto& Ix = prev.grad_x[static_cast<std::size_t>(level)];
            const auto& Iy = prev.grad_y[static_cast<std::size_t>(level)];
            const auto& J = next.levels[static_cast<std::size_t>(level)];

            sample_window(I, p.x(), p.y(), half, win.i.data());
            sample_window(Ix, p.x(), p.y(), half, win.ix.data());
            sample_window(Iy, p.x(), p.y(), half, win.iy.data());
            double gxx = 0, gxy = 0, gyy = 0;
            for (std::size_t k = 0; k < n_win; ++k) {
                gxx += double(win.ix[k]) * win.ix[k];
                gxy += double(win.ix[k]) * win.iy[k];
                gyy += double(win.iy[k]) * win.iy[k];
            }
            const double det = gxx * gyy - gxy * gxy;
            const double min_eig =
                (gxx + gyy - std::sqrt((gxx - gyy) * (gxx - gyy) + 4 * gxy * gxy)) / (2.0 * n_win);
            v = Vec2::Zero();
            if (min_eig < cfg.min_eig || det < 1e-12) {
                if (level == 0) lost = true;
                if (level > 0) guess = 2.0 * guess;
                continue;
            }
            for (int iter = 0; iter < cfg.max_iters; ++iter) {
                const Vec2 q = p + guess + v;
                if (!J.contains(q.x(), q.y())) {
                    if (level == 0) lost = true;
                    break;
                }
                sample_window(J, q.x(), q.y(), half, warped.data());
                double bx = 0, by = 0;
                for (std::size_t k = 0; k < n_win; ++k) {
                    const double diff = win.i[k] - warped[k];
                    bx += diff * win.ix[k];
                    by += diff * win.iy[k];
                }
                const Vec2 delta((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
                v += delta;
                if (delta.norm() < cfg.eps) break;
            }
            if (level > 0) guess = 2.0 * (guess + v);
        }
        const Vec2 disp = guess + v;
        const Vec2 end = points[pi] + disp;
        const auto& J0 = next.levels.front();
        if (lost || !J0.contains(end.x(), end.y()) || !disp.allFinite()) {
            flow.status[pi] = TrackStatus::Lost;
            flow.displacements[pi] = Vec2::Zero();
        } else {
            flow.displacements[pi] = disp;
        }
    }
    return flow;
}

void write_flow_csv(const std::filesystem::path& path, const FlowField& flow) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "x0,y0,dx,dy,status\n" << std::setprecision(10);
    for (std::size_t i = 0; i < flow.size(); ++i)
        out << flow.origins[i].x() << ',' << flow.origins[i].y() << ',' << flow.displacements[i].x() << ','
            << flow.displacements[i].y() << ',' << (flow.status[i] == TrackStatus::Tracked ? "tracked" : "lost")
            << '\n';
}

}  // namespace tactile
