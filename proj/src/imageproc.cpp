#include "tactile/imageproc.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

namespace tactile {

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0)) throw DataError("gaussian_kernel: sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

const char* to_string(MarkerKind kind) { return kind == MarkerKind::Black ? "black" : "white"; }

void MarkerConfig::validate() const {
    if (!(t_low < t_high)) throw ConfigError("markers: t_low must be below t_high");
    if (!(min_area > 0) || !(max_area >= min_area)) throw ConfigError("markers: invalid area bounds");
    if (kernel_radius < 0) throw ConfigError("markers: kernel_radius must be non-negative");
    if (max_markers < 0) throw ConfigError("markers: max_markers must be non-negative");
}

namespace {

std::vector<Eigen::Vector2i> disc_offsets(int radius) {
    std::vector<Eigen::Vector2i> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) offs.emplace_back(dx, dy);
    return offs;
}

// Out-of-image neighbors are ignored, which keeps open/close idempotent at borders.
BinaryMask morph(const BinaryMask& in, int radius, bool erode_op) {
    if (radius == 0) return in;
    const int w = in.width();
    const int h = in.height();
    const auto offs = disc_offsets(radius);
    BinaryMask out(w, h);
    std::vector<std::uint8_t> row_any(static_cast<std::size_t>(h), 0);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* r = in.pixel(0, y);
        row_any[static_cast<std::size_t>(y)] = std::any_of(r, r + w, [](std::uint8_t v) { return v != 0; });
    }
    for (int y = 0; y < h; ++y) {
        // Rows whose whole neighborhood (dilation) or center row (erosion) is
        // empty stay empty.
        bool any = row_any[static_cast<std::size_t>(y)] != 0;
        if (!erode_op)
            for (int dy = -radius; dy <= radius && !any; ++dy)
                any = y + dy >= 0 && y + dy < h && row_any[static_cast<std::size_t>(y + dy)];
        if (!any) continue;
        const bool y_inner = y >= radius && y < h - radius;
        for (int x = 0; x < w; ++x) {
            const bool inner = y_inner && x >= radius && x < w - radius;
            std::uint8_t acc = erode_op ? 1 : 0;
            for (const auto& o : offs) {
                const int xx = x + o.x();
                const int yy = y + o.y();
                if (!inner && (xx < 0 || yy < 0 || xx >= w || yy >= h)) continue;
                const std::uint8_t v = in.at(xx, yy);
                if (erode_op ? v == 0 : v != 0) {
                    acc = erode_op ? 0 : 1;
                    break;
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) { return morph(mask, radius, true); }
BinaryMask dilate(const BinaryMask& mask, int radius) { return morph(mask, radius, false); }
BinaryMask morph_open(const BinaryMask& mask, int radius) { return dilate(erode(mask, radius), radius); }
BinaryMask morph_close(const BinaryMask& mask, int radius) { return erode(dilate(mask, radius), radius); }

std::vector<std::vector<int>> connected_components(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> seen(mask.pixel_count(), 0);
    std::vector<std::vector<int>> comps;
    std::vector<int> stack;
    auto px = mask.data();
    for (int start = 0; start < w * h; ++start) {
        if (!px[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
        std::vector<int> comp;
        stack.push_back(start);
        seen[static_cast<std::size_t>(start)] = 1;
        while (!stack.empty()) {
            const int idx = stack.back();
            stack.pop_back();
            comp.push_back(idx);
            const int x = idx % w;
            const int y = idx / w;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    const int n = yy * w + xx;
                    if (px[static_cast<std::size_t>(n)] && !seen[static_cast<std::size_t>(n)]) {
                        seen[static_cast<std::size_t>(n)] = 1;
                        stack.push_back(n);
                    }
                }
            }
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

void write_markers_csv(const std::filesystem::path& path, const std::vector<MarkerSet>& sets) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "kind,x_px,y_px,area\n" << std::setprecision(10);
    for (const auto& set : sets)
        for (std::size_t i = 0; i < set.size(); ++i)
            out << to_string(set.kind) << ',' << set.centroids[i].x() << ',' << set.centroids[i].y() << ','
                << set.areas[i] << '\n';
}

}  // namespace tactile
