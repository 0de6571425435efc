#pragma once
// Independent oracles used to pin expected values in tests, kept separate
// from the library code paths they check: direct long-double summation for
// distances, dense grid search for pinball loss, and analytic rasterizers
// for geometry fixtures.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "shiftkit/imgfeat.hpp"
#include "shiftkit/sensitivity.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Distance oracles: direct summation in long double.

inline double hellinger_direct(const std::vector<double>& p, const std::vector<double>& q) {
    long double sum = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const long double d = std::sqrt(static_cast<long double>(p[i])) -
                              std::sqrt(static_cast<long double>(q[i]));
        sum += d * d;
    }
    return static_cast<double>(std::sqrt(sum) / std::sqrt(2.0L));
}

inline double wasserstein_direct(const std::vector<double>& p, const std::vector<double>& q) {
    long double sum = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i)
        sum += std::fabs(static_cast<long double>(p[i]) - static_cast<long double>(q[i]));
    return static_cast<double>(sum / static_cast<long double>(p.size()));
}

inline double kl_direct(const std::vector<double>& p, const std::vector<double>& q, double alpha) {
    const long double denom = 1.0L + static_cast<long double>(alpha) * p.size();
    long double sum = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const long double pi = (static_cast<long double>(p[i]) + alpha) / denom;
        const long double qi = (static_cast<long double>(q[i]) + alpha) / denom;
        if (pi <= 0.0L) continue;
        sum += pi * std::log(pi / qi);
    }
    return static_cast<double>(std::max(0.0L, sum));
}

inline std::vector<double> random_histogram(std::mt19937_64& rng, std::size_t bins,
                                            bool allow_zeros = true) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> h(bins, 0.0);
    double total = 0.0;
    for (double& v : h) {
        v = uni(rng);
        if (allow_zeros && uni(rng) < 0.25) v = 0.0;
        total += v;
    }
    if (total <= 0.0) {
        h[0] = 1.0;
        total = 1.0;
    }
    for (double& v : h) v /= total;
    return h;
}

// ---------------------------------------------------------------------------
// Pinball-loss grid oracle: coarse-to-fine search over (slope, intercept).

struct GridFit {
    double slope = 0.0;
    double intercept = 0.0;
    double loss = 0.0;
};

inline GridFit pinball_grid_search(const std::vector<shiftkit::sensitivity::PointXY>& points,
                                   double tau) {
    double slope_lo = -50.0, slope_hi = 50.0;
    double icept_lo = -50.0, icept_hi = 50.0;
    GridFit best;
    best.loss = std::numeric_limits<double>::infinity();
    for (int stage = 0; stage < 5; ++stage) {
        const int n = 81;
        GridFit stage_best = best;
        for (int i = 0; i < n; ++i) {
            const double b = slope_lo + (slope_hi - slope_lo) * i / (n - 1);
            for (int j = 0; j < n; ++j) {
                const double a = icept_lo + (icept_hi - icept_lo) * j / (n - 1);
                const double loss = shiftkit::sensitivity::pinball_loss(points, b, a, tau);
                if (loss < stage_best.loss) stage_best = {b, a, loss};
            }
        }
        best = stage_best;
        const double sw = (slope_hi - slope_lo) / (n - 1) * 4.0;
        const double iw = (icept_hi - icept_lo) / (n - 1) * 4.0;
        slope_lo = best.slope - sw;
        slope_hi = best.slope + sw;
        icept_lo = best.intercept - iw;
        icept_hi = best.intercept + iw;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Raster fixtures.

inline shiftkit::imgfeat::RasterImage black_canvas(int w, int h) {
    return shiftkit::imgfeat::RasterImage::filled(w, h, 0, 0, 0);
}

inline void fill_disk(shiftkit::imgfeat::RasterImage& img, double cx, double cy, double r,
                      std::uint8_t value = 255) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                img.set(x, y, value, value, value);
}

inline void fill_rect(shiftkit::imgfeat::RasterImage& img, int x0, int y0, int w, int h,
                      std::uint8_t r = 255, std::uint8_t g = 255, std::uint8_t b = 255) {
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) img.set(x, y, r, g, b);
}

struct Vec2 {
    double x = 0.0, y = 0.0;
};

// Even-odd point-in-polygon on pixel centers.
inline bool point_in_polygon(const std::vector<Vec2>& poly, double px, double py) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const bool crosses = (poly[i].y > py) != (poly[j].y > py);
        if (!crosses) continue;
        const double x_at =
            poly[j].x + (py - poly[j].y) / (poly[i].y - poly[j].y) * (poly[i].x - poly[j].x);
        if (px < x_at) inside = !inside;
    }
    return inside;
}

inline void fill_polygon(shiftkit::imgfeat::RasterImage& img, const std::vector<Vec2>& poly,
                         std::uint8_t value = 255) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (point_in_polygon(poly, x, y)) img.set(x, y, value, value, value);
}

inline std::vector<Vec2> rotate_polygon(const std::vector<Vec2>& poly, double degrees, double cx,
                                        double cy) {
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    std::vector<Vec2> out;
    out.reserve(poly.size());
    for (const auto& p : poly) {
        const double dx = p.x - cx, dy = p.y - cy;
        out.push_back({cx + cs * dx - sn * dy, cy + sn * dx + cs * dy});
    }
    return out;
}

// An asymmetric blob (no reflection or rotation symmetry) whose seven Hu
// invariants are all comfortably nonzero.
inline std::vector<Vec2> asymmetric_blob(double scale, double cx, double cy) {
    return {{cx - 1.0 * scale, cy - 0.55 * scale}, {cx + 0.15 * scale, cy - 0.95 * scale},
            {cx + 1.05 * scale, cy - 0.25 * scale}, {cx + 0.55 * scale, cy + 0.28 * scale},
            {cx + 0.90 * scale, cy + 0.85 * scale}, {cx - 0.12 * scale, cy + 0.50 * scale},
            {cx - 0.80 * scale, cy + 0.70 * scale}};
}

// ---------------------------------------------------------------------------
// Scratch directory that cleans up after itself.

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() / ("shiftkit_" + name);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline bool rel_close(double a, double b, double rel, double abs_floor = 0.0) {
    return std::fabs(a - b) <= rel * std::max(std::fabs(a), std::fabs(b)) + abs_floor;
}

}  // namespace oracle
