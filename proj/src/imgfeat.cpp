#include "shiftkit/imgfeat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

namespace shiftkit::imgfeat {

namespace {

constexpr int kBlackThreshold = 5;  // max channel < 5 counts as background
constexpr double kPi = std::numbers::pi;

bool is_foreground(const RasterImage& img, int x, int y) {
    const int m = std::max({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
    return m >= kBlackThreshold;
}

// Clockwise 8-neighborhood ring in image coordinates (x right, y down),
// starting west: W NW N NE E SE S SW.
constexpr int kRingX[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kRingY[8] = {0, -1, -1, -1, 0, 1, 1, 1};

// Ring index of neighbor `b` as seen from `a` (must be 8-adjacent).
int ring_index_of(PixelCoord a, PixelCoord b) {
    for (int k = 0; k < 8; ++k)
        if (a.x + kRingX[k] == b.x && a.y + kRingY[k] == b.y) return k;
    return 0;
}

// Moore boundary tracing of the component identified by `labels == id`,
// starting at the topmost-leftmost pixel. Returns the closed boundary cycle
// (pinch pixels appear once per pass). Termination: the walk is a
// deterministic map on (pixel, backtrack) states, so it stops at the first
// repeated state; this also closes 1-pixel-wide appendages correctly.
std::vector<PixelCoord> trace_contour(const std::vector<int>& labels, int w, int h, int id,
                                      PixelCoord start) {
    auto at = [&](int x, int y) {
        return x >= 0 && x < w && y >= 0 && y < h && labels[static_cast<std::size_t>(y) * w + x] == id;
    };

    std::vector<PixelCoord> contour{start};
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * h, 0);
    auto mark = [&](PixelCoord p, int back) -> bool {
        auto& bits = seen[static_cast<std::size_t>(p.y) * w + p.x];
        const std::uint8_t bit = static_cast<std::uint8_t>(1u << back);
        if (bits & bit) return false;
        bits |= bit;
        return true;
    };

    PixelCoord cur = start;
    int back = 0;  // west neighbor of the topmost-leftmost pixel is background
    mark(cur, back);

    const std::size_t max_steps = static_cast<std::size_t>(w) * h * 8 + 16;
    for (std::size_t step = 0; step < max_steps; ++step) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
            const int idx = (back + k) % 8;
            if (at(cur.x + kRingX[idx], cur.y + kRingY[idx])) {
                found = idx;
                break;
            }
        }
        if (found < 0) break;  // isolated pixel

        const int prev_idx = (found + 7) % 8;  // last background slot scanned
        const PixelCoord prev{cur.x + kRingX[prev_idx], cur.y + kRingY[prev_idx]};
        const PixelCoord next{cur.x + kRingX[found], cur.y + kRingY[found]};
        const int next_back = ring_index_of(next, prev);
        if (!mark(next, next_back)) break;  // state repeats: cycle closed
        contour.push_back(next);
        cur = next;
        back = next_back;
    }
    while (contour.size() > 1 && contour.back() == contour.front()) contour.pop_back();
    return contour;
}

long long cross_ll(const PixelCoord& o, const PixelCoord& a, const PixelCoord& b) {
    return static_cast<long long>(a.x - o.x) * (b.y - o.y) -
           static_cast<long long>(a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain, CCW orientation in image coordinates.
std::vector<PixelCoord> convex_hull_int(std::vector<PixelCoord> pts) {
    std::sort(pts.begin(), pts.end(),
              [](const PixelCoord& a, const PixelCoord& b) {
                  return a.x != b.x ? a.x < b.x : a.y < b.y;
              });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const std::size_t n = pts.size();
    if (n <= 2) return pts;

    std::vector<PixelCoord> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross_ll(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross_ll(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

double cross_d(const PointD& o, const PointD& a, const PointD& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<PointD> convex_hull_d(std::vector<PointD> pts) {
    std::sort(pts.begin(), pts.end(), [](const PointD& a, const PointD& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const PointD& a, const PointD& b) {
                              return a.x == b.x && a.y == b.y;
                          }),
              pts.end());
    const std::size_t n = pts.size();
    if (n <= 2) return pts;

    std::vector<PointD> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross_d(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross_d(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

double cycle_perimeter(const std::vector<PixelCoord>& cycle) {
    if (cycle.size() < 2) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < cycle.size(); ++i) {
        const auto& a = cycle[i];
        const auto& b = cycle[(i + 1) % cycle.size()];
        total += std::hypot(static_cast<double>(b.x - a.x), static_cast<double>(b.y - a.y));
    }
    return total;
}

double polygon_perimeter_int(const std::vector<PixelCoord>& poly) {
    if (poly.size() < 2) return 0.0;
    if (poly.size() == 2)
        return 2.0 * std::hypot(static_cast<double>(poly[1].x - poly[0].x),
                                static_cast<double>(poly[1].y - poly[0].y));
    return cycle_perimeter(poly);
}

// Lattice points inside or on a convex polygon with integer vertices,
// evaluated with exact integer predicates.
std::size_t lattice_points_in_hull(const std::vector<PixelCoord>& hull) {
    if (hull.empty()) return 0;
    if (hull.size() == 1) return 1;
    int minx = hull[0].x, maxx = hull[0].x, miny = hull[0].y, maxy = hull[0].y;
    for (const auto& p : hull) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    if (hull.size() == 2) {
        // Segment: lattice points = gcd(|dx|, |dy|) + 1.
        const long long dx = std::llabs(hull[1].x - hull[0].x);
        const long long dy = std::llabs(hull[1].y - hull[0].y);
        return static_cast<std::size_t>(std::gcd(dx, dy)) + 1;
    }
    std::size_t count = 0;
    for (int y = miny; y <= maxy; ++y) {
        for (int x = minx; x <= maxx; ++x) {
            bool inside = true;
            for (std::size_t i = 0; i < hull.size() && inside; ++i) {
                const auto& a = hull[i];
                const auto& b = hull[(i + 1) % hull.size()];
                inside = cross_ll(a, b, PixelCoord{x, y}) >= 0;
            }
            if (inside) ++count;
        }
    }
    return count;
}

struct MinAreaRect {
    double w = 0.0;       // extent along the reference axis
    double h = 0.0;       // perpendicular extent
    double angle = 0.0;   // reference-axis angle in degrees, folded into [0, 90)
};

// Rotating calipers over a convex hull (any orientation). For each hull edge
// the extents of the aligned bounding rectangle are evaluated; the minimum
// area wins.
MinAreaRect min_area_rect(const std::vector<PointD>& hull) {
    MinAreaRect best;
    if (hull.empty()) return best;
    if (hull.size() == 1) return best;

    double best_area = std::numeric_limits<double>::infinity();
    const std::size_t n = hull.size();
    const std::size_t n_edges = (n == 2) ? 1 : n;
    for (std::size_t i = 0; i < n_edges; ++i) {
        const PointD& a = hull[i];
        const PointD& b = hull[(i + 1) % n];
        const double ex = b.x - a.x, ey = b.y - a.y;
        const double len = std::hypot(ex, ey);
        if (len == 0.0) continue;
        const double ux = ex / len, uy = ey / len;  // edge direction
        double min_u = std::numeric_limits<double>::infinity(), max_u = -min_u;
        double min_v = min_u, max_v = -min_u;
        for (const auto& p : hull) {
            const double u = p.x * ux + p.y * uy;
            const double v = -p.x * uy + p.y * ux;
            min_u = std::min(min_u, u);
            max_u = std::max(max_u, u);
            min_v = std::min(min_v, v);
            max_v = std::max(max_v, v);
        }
        const double w = max_u - min_u, h = max_v - min_v;
        const double area = w * h;
        if (area < best_area - 1e-12) {
            best_area = area;
            double angle = std::atan2(uy, ux) * 180.0 / kPi;
            angle = std::fmod(angle + 360.0, 180.0);
            double rw = w, rh = h;
            if (angle >= 90.0) {
                angle -= 90.0;
                std::swap(rw, rh);
            }
            best = MinAreaRect{rw, rh, angle};
        }
    }
    return best;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    // r,g,b in [0,1]; h in degrees [0,360), s and v in [0,1]
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = 60.0 * std::fmod((g - b) / d, 6.0);
    else if (mx == g)
        h = 60.0 * ((b - r) / d + 2.0);
    else
        h = 60.0 * ((r - g) / d + 4.0);
    if (h < 0.0) h += 360.0;
}

struct RunningStat {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double stddev() const {
        if (!n) return 0.0;
        const double m = mean();
        return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - m * m));
    }
};

}  // namespace

RasterImage RasterImage::filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    RasterImage img;
    img.width = w;
    img.height = h;
    img.data.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        img.data[i] = r;
        img.data[i + 1] = g;
        img.data[i + 2] = b;
    }
    return img;
}

ObjectMask extract_mask(const RasterImage& img) {
    const int w = img.width, h = img.height;
    if (w < 1 || h < 1) throw ValidationError("empty image");

    std::vector<int> labels(static_cast<std::size_t>(w) * h, 0);
    int next_label = 0;
    std::vector<std::size_t> sizes{0};  // index 0 unused (background)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (labels[static_cast<std::size_t>(y) * w + x] != 0 || !is_foreground(img, x, y))
                continue;
            const int id = ++next_label;
            sizes.push_back(0);
            std::deque<PixelCoord> queue{{x, y}};
            labels[static_cast<std::size_t>(y) * w + x] = id;
            while (!queue.empty()) {
                const PixelCoord p = queue.front();
                queue.pop_front();
                ++sizes[id];
                for (int k = 0; k < 8; ++k) {
                    const int nx = p.x + kRingX[k], ny = p.y + kRingY[k];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    auto& lab = labels[static_cast<std::size_t>(ny) * w + nx];
                    if (lab == 0 && is_foreground(img, nx, ny)) {
                        lab = id;
                        queue.push_back({nx, ny});
                    }
                }
            }
        }
    }
    if (next_label == 0) throw ValidationError("no object found");

    int best = 1;
    for (int id = 2; id <= next_label; ++id)
        if (sizes[id] > sizes[best]) best = id;  // ties keep the first in scan order

    ObjectMask out;
    out.width = w;
    out.height = h;
    out.mask.assign(static_cast<std::size_t>(w) * h, 0);
    out.area = sizes[best];
    PixelCoord start{-1, -1};
    for (int y = 0; y < h && start.x < 0; ++y)
        for (int x = 0; x < w; ++x)
            if (labels[static_cast<std::size_t>(y) * w + x] == best) {
                start = {x, y};
                break;
            }
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == best) out.mask[i] = 1;

    out.contour = trace_contour(labels, w, h, best, start);
    out.hull = convex_hull_int(out.contour);
    return out;
}

double RegionMoments::eta(int p, int q) const {
    const double m00 = central[0][0];
    if (m00 <= 0.0) return 0.0;
    return central[p][q] / std::pow(m00, 1.0 + (p + q) / 2.0);
}

std::array<double, 7> RegionMoments::hu() const {
    const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
    const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);
    const double a = n30 + n12, b = n21 + n03;
    const double c = n30 - 3 * n12, d = 3 * n21 - n03;
    std::array<double, 7> I{};
    I[0] = n20 + n02;
    I[1] = (n20 - n02) * (n20 - n02) + 4 * n11 * n11;
    I[2] = c * c + d * d;
    I[3] = a * a + b * b;
    I[4] = c * a * (a * a - 3 * b * b) + d * b * (3 * a * a - b * b);
    I[5] = (n20 - n02) * (a * a - b * b) + 4 * n11 * a * b;
    I[6] = d * a * (a * a - 3 * b * b) - c * b * (3 * a * a - b * b);
    return I;
}

RegionMoments region_moments(const ObjectMask& mask) {
    RegionMoments m;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.mask[static_cast<std::size_t>(y) * mask.width + x]) continue;
            const double xd = x, yd = y;
            double xp = 1.0;
            for (int p = 0; p <= 3; ++p) {
                double yq = 1.0;
                for (int q = 0; q + p <= 3; ++q) {
                    m.raw[p][q] += xp * yq;
                    yq *= yd;
                }
                xp *= xd;
            }
        }
    }
    if (m.raw[0][0] <= 0.0) return m;
    m.centroid_x = m.raw[1][0] / m.raw[0][0];
    m.centroid_y = m.raw[0][1] / m.raw[0][0];
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.mask[static_cast<std::size_t>(y) * mask.width + x]) continue;
            const double dx = x - m.centroid_x, dy = y - m.centroid_y;
            double xp = 1.0;
            for (int p = 0; p <= 3; ++p) {
                double yq = 1.0;
                for (int q = 0; q + p <= 3; ++q) {
                    m.central[p][q] += xp * yq;
                    yq *= dy;
                }
                xp *= dx;
            }
        }
    }
    // Exact identities, enforced against accumulated rounding.
    m.central[1][0] = 0.0;
    m.central[0][1] = 0.0;
    return m;
}

const std::vector<std::string>& DescriptorVector::feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n{
            "width", "height", "w_rot", "h_rot", "angle_rot", "aspect_ratio", "rect_area",
            "contour_area", "contour_perimeter", "extent", "compactness", "formfactor",
            "hull_area", "hull_perimeter", "solidity", "ESD", "major_axis", "minor_axis",
            "angle", "eccentricity", "convexity", "roundness",
            "intensity_R_mean", "intensity_G_mean", "intensity_B_mean",
            "intensity_R_std", "intensity_G_std", "intensity_B_std",
            "hue_mean", "saturation_mean", "brightness_mean",
            "hue_std", "saturation_std", "brightness_std",
            "blurriness", "noise"};
        for (const char* s : {"M00", "M10", "M01", "M20", "M11", "M02", "M30", "M21", "M12", "M03"})
            n.emplace_back(s);
        for (const char* s : {"mu20", "mu11", "mu02", "mu30", "mu21", "mu12", "mu03"})
            n.emplace_back(s);
        for (const char* s : {"nu20", "nu11", "nu02", "nu30", "nu21", "nu12", "nu03"})
            n.emplace_back(s);
        for (int i = 1; i <= 7; ++i) n.push_back("I" + std::to_string(i));
        n.emplace_back("crop_index");
        return n;
    }();
    return names;
}

std::vector<double> DescriptorVector::to_row() const {
    std::vector<double> row{
        width, height, w_rot, h_rot, angle_rot, aspect_ratio, rect_area,
        contour_area, contour_perimeter, extent, compactness, formfactor,
        hull_area, hull_perimeter, solidity, esd, major_axis, minor_axis,
        angle, eccentricity, convexity, roundness,
        intensity_mean[0], intensity_mean[1], intensity_mean[2],
        intensity_std[0], intensity_std[1], intensity_std[2],
        hue_mean, saturation_mean, brightness_mean,
        hue_std, saturation_std, brightness_std,
        blurriness, noise};
    row.insert(row.end(), std::begin(raw_moments), std::end(raw_moments));
    row.insert(row.end(), std::begin(central_moments), std::end(central_moments));
    row.insert(row.end(), std::begin(normalized_moments), std::end(normalized_moments));
    row.insert(row.end(), std::begin(hu), std::end(hu));
    row.push_back(crop_index);
    return row;
}

DescriptorVector extract_descriptors(const RasterImage& img, ColorStatsScope scope) {
    const ObjectMask mask = extract_mask(img);
    DescriptorVector d;

    int minx = img.width, maxx = -1, miny = img.height, maxy = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.mask[static_cast<std::size_t>(y) * mask.width + x]) {
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
            }
    d.width = maxx - minx + 1;
    d.height = maxy - miny + 1;
    d.aspect_ratio = d.width / d.height;
    d.rect_area = d.width * d.height;

    d.contour_area = static_cast<double>(mask.area);
    d.contour_perimeter = cycle_perimeter(mask.contour);
    d.extent = d.contour_area / d.rect_area;
    d.hull_perimeter = polygon_perimeter_int(mask.hull);
    d.hull_area = static_cast<double>(lattice_points_in_hull(mask.hull));
    d.solidity = d.contour_area / d.hull_area;
    d.esd = 2.0 * std::sqrt(d.contour_area / kPi);

    // Minimum-area rotated rectangle over the pixel-corner hull (the
    // Minkowski sum of the center hull with the unit pixel square).
    std::vector<PointD> corners;
    corners.reserve(mask.hull.size() * 4);
    for (const auto& v : mask.hull)
        for (const double sx : {-0.5, 0.5})
            for (const double sy : {-0.5, 0.5})
                corners.push_back({v.x + sx, v.y + sy});
    const MinAreaRect rect = min_area_rect(convex_hull_d(std::move(corners)));
    d.w_rot = rect.w;
    d.h_rot = rect.h;
    d.angle_rot = rect.angle;

    const RegionMoments mom = region_moments(mask);
    const double m00 = mom.central[0][0];
    const double cxx = mom.central[2][0] / m00;
    const double cyy = mom.central[0][2] / m00;
    const double cxy = mom.central[1][1] / m00;
    const double tr_half = 0.5 * (cxx + cyy);
    const double disc = std::sqrt(std::max(0.0, 0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy));
    const double l1 = tr_half + disc;
    const double l2 = std::max(0.0, tr_half - disc);
    d.major_axis = 4.0 * std::sqrt(l1);
    d.minor_axis = 4.0 * std::sqrt(l2);

    double ex, ey;  // principal-axis direction
    if (std::fabs(cxy) > 1e-12) {
        ex = cxy;
        ey = l1 - cxx;
    } else {
        ex = cxx >= cyy ? 1.0 : 0.0;
        ey = cxx >= cyy ? 0.0 : 1.0;
    }
    d.angle = std::fmod(std::atan2(ex, ey) * 180.0 / kPi + 360.0, 180.0);

    const bool degenerate = mask.contour.size() < 3 || l2 <= 1e-12 * std::max(1.0, l1);
    if (degenerate) {
        d.compactness = kUndefined;
        d.formfactor = kUndefined;
        d.convexity = kUndefined;
        d.roundness = kUndefined;
        d.eccentricity = kUndefined;
    } else {
        d.compactness = d.contour_perimeter * d.contour_perimeter / (4.0 * kPi * d.contour_area);
        d.formfactor = 1.0 / d.compactness;
        d.convexity = d.hull_perimeter / d.contour_perimeter;
        d.roundness = d.hull_perimeter * d.hull_perimeter / (4.0 * kPi * d.contour_area);
        d.eccentricity = d.minor_axis / d.major_axis;
    }

    RunningStat rgb_stat[3], hsv_stat[3];
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (scope == ColorStatsScope::ObjectOnly && !mask.contains(x, y)) continue;
            const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
            rgb_stat[0].add(r);
            rgb_stat[1].add(g);
            rgb_stat[2].add(b);
            double hh, ss, vv;
            rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0, hh, ss, vv);
            hsv_stat[0].add(hh);
            hsv_stat[1].add(ss);
            hsv_stat[2].add(vv);
        }
    }
    for (int c = 0; c < 3; ++c) {
        d.intensity_mean[c] = rgb_stat[c].mean();
        d.intensity_std[c] = rgb_stat[c].stddev();
    }
    d.hue_mean = hsv_stat[0].mean();
    d.hue_std = hsv_stat[0].stddev();
    d.saturation_mean = hsv_stat[1].mean();
    d.saturation_std = hsv_stat[1].stddev();
    d.brightness_mean = hsv_stat[2].mean();
    d.brightness_std = hsv_stat[2].stddev();

    d.blurriness = blurriness(img);
    d.noise = noise_level(img);

    const int rp[10][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1},
                           {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}};
    for (int i = 0; i < 10; ++i) d.raw_moments[i] = mom.raw[rp[i][0]][rp[i][1]];
    const int cp[7][2] = {{2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}};
    for (int i = 0; i < 7; ++i) {
        d.central_moments[i] = mom.central[cp[i][0]][cp[i][1]];
        d.normalized_moments[i] = mom.eta(cp[i][0], cp[i][1]);
    }
    const auto hu = mom.hu();
    std::copy(hu.begin(), hu.end(), d.hu);

    d.crop_index = crop_index(img);
    return d;
}

int crop_index(const RasterImage& img) {
    const int w = img.width, h = img.height;
    int count = 0;
    for (int x = 0; x < w; ++x) {
        if (is_foreground(img, x, 0)) ++count;
        if (h > 1 && is_foreground(img, x, h - 1)) ++count;
    }
    for (int y = 1; y + 1 < h; ++y) {
        if (is_foreground(img, 0, y)) ++count;
        if (w > 1 && is_foreground(img, w - 1, y)) ++count;
    }
    return count;
}

double blurriness(const RasterImage& img) {
    const int w = img.width, h = img.height;
    auto gray = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return (static_cast<double>(img.at(x, y, 0)) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
    };
    double total = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double lap =
                gray(x - 1, y) + gray(x + 1, y) + gray(x, y - 1) + gray(x, y + 1) - 4.0 * gray(x, y);
            total += std::fabs(lap);
        }
    return total / (static_cast<double>(w) * h);
}

double noise_level(const RasterImage& img) {
    RunningStat stat;
    for (std::uint8_t v : img.data) stat.add(v);
    return stat.stddev();
}

ChannelStats fit_rgb_stats(const std::vector<RasterImage>& train) {
    if (train.empty()) throw ValidationError("empty training set for RGB statistics");
    RunningStat stat[3];
    for (const auto& img : train)
        for (std::size_t i = 0; i < img.data.size(); i += 3)
            for (int c = 0; c < 3; ++c) stat[c].add(img.data[i + c]);

    ChannelStats out;
    for (int c = 0; c < 3; ++c) {
        out.mu[c] = stat[c].mean();
        out.sigma[c] = stat[c].stddev();
        if (out.sigma[c] <= 0.0) throw NumericalError("degenerate channel");
    }
    return out;
}

FloatImage apply_rgb_stats(const ChannelStats& stats, const RasterImage& img) {
    FloatImage out;
    out.width = img.width;
    out.height = img.height;
    out.data.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); i += 3)
        for (int c = 0; c < 3; ++c)
            out.data[i + c] = (img.data[i + c] - stats.mu[c]) / stats.sigma[c];
    return out;
}

void save_channel_stats(const ChannelStats& stats, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["mu"] = {stats.mu[0], stats.mu[1], stats.mu[2]};
    doc["sigma"] = {stats.sigma[0], stats.sigma[1], stats.sigma[2]};
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

ChannelStats load_channel_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    nlohmann::json doc;
    in >> doc;
    ChannelStats out;
    for (int c = 0; c < 3; ++c) {
        out.mu[c] = doc.at("mu").at(c).get<double>();
        out.sigma[c] = doc.at("sigma").at(c).get<double>();
    }
    return out;
}

RasterImage flip_vertical(const RasterImage& img) {
    RasterImage out = img;
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    for (int y = 0; y < img.height; ++y)
        std::copy_n(img.data.data() + static_cast<std::size_t>(img.height - 1 - y) * stride, stride,
                    out.data.data() + static_cast<std::size_t>(y) * stride);
    return out;
}

RasterImage rotate_raster(const RasterImage& img, double degrees) {
    double a = std::fmod(degrees, 360.0);
    if (a < 0) a += 360.0;

    const int w = img.width, h = img.height;
    auto near = [&](double x) { return std::fabs(a - x) < 1e-9; };
    if (near(0.0) || near(360.0)) return img;
    if (near(180.0)) {
        RasterImage out = RasterImage::filled(w, h, 0, 0, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.set(x, y, img.at(w - 1 - x, h - 1 - y, 0), img.at(w - 1 - x, h - 1 - y, 1),
                        img.at(w - 1 - x, h - 1 - y, 2));
        return out;
    }
    if (near(90.0) || near(270.0)) {
        // 90 deg counterclockwise on screen: the right edge becomes the top.
        RasterImage out = RasterImage::filled(h, w, 0, 0, 0);
        for (int yo = 0; yo < out.height; ++yo)
            for (int xo = 0; xo < out.width; ++xo) {
                int sx, sy;
                if (near(90.0)) {
                    sx = w - 1 - yo;
                    sy = xo;
                } else {
                    sx = yo;
                    sy = h - 1 - xo;
                }
                out.set(xo, yo, img.at(sx, sy, 0), img.at(sx, sy, 1), img.at(sx, sy, 2));
            }
        return out;
    }

    // General angle: inverse mapping with bilinear interpolation, same canvas.
    RasterImage out = RasterImage::filled(w, h, 0, 0, 0);
    const double rad = a * kPi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double sx = cx + cs * dx - sn * dy;
            const double sy = cy + sn * dx + cs * dy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            if (x0 < -1 || x0 > w - 1 || y0 < -1 || y0 > h - 1) continue;
            const double fx = sx - x0, fy = sy - y0;
            double px[3] = {};
            auto tap = [&](int xx, int yy, double wgt) {
                if (xx < 0 || xx >= w || yy < 0 || yy >= h || wgt == 0.0) return;
                for (int c = 0; c < 3; ++c) px[c] += wgt * img.at(xx, yy, c);
            };
            tap(x0, y0, (1 - fx) * (1 - fy));
            tap(x0 + 1, y0, fx * (1 - fy));
            tap(x0, y0 + 1, (1 - fx) * fy);
            tap(x0 + 1, y0 + 1, fx * fy);
            out.set(x, y, static_cast<std::uint8_t>(std::lround(std::clamp(px[0], 0.0, 255.0))),
                    static_cast<std::uint8_t>(std::lround(std::clamp(px[1], 0.0, 255.0))),
                    static_cast<std::uint8_t>(std::lround(std::clamp(px[2], 0.0, 255.0))));
        }
    }
    return out;
}

std::vector<RasterImage> emit_tta_views(const RasterImage& img, int k, bool flips) {
    if (k < 1) throw ValidationError("TTA view count must be >= 1");
    std::vector<RasterImage> views;
    views.reserve(static_cast<std::size_t>(k) * (flips ? 2 : 1));
    for (int i = 0; i < k; ++i) {
        RasterImage v = rotate_raster(img, 360.0 * i / k);
        if (flips) {
            RasterImage f = flip_vertical(v);
            views.push_back(std::move(v));
            views.push_back(std::move(f));
        } else {
            views.push_back(std::move(v));
        }
    }
    return views;
}

}  // namespace shiftkit::imgfeat
