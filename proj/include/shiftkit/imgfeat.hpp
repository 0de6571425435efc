#pragma once
// Image descriptor extraction: object mask and contour geometry, the 67
// morphology/color descriptors plus crop index, RGB standardization, and
// test-time-augmentation view emission.
//
// Conventions (pixel grid):
//   - A pixel at integer (x, y) covers the unit square [x-.5, x+.5]x[y-.5, y+.5].
//   - "Non-black" means max(R,G,B) >= 5; the same threshold is used for the
//     object mask and the crop index.
//   - contour_area is the pixel count of the object component; the contour
//     polyline and its perimeter run through pixel centers (8-connected
//     boundary path, diagonal steps count sqrt(2)).
//   - hull_perimeter is the perimeter of the convex hull of the contour
//     centers; hull_area counts the pixel centers inside that hull, so
//     hull_area >= contour_area and solidity <= 1 hold exactly.
//   - The minimum-area rotated rectangle is computed over the hull of the
//     pixel-corner points, so an axis-aligned W x H block reports exactly
//     (W, H).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shiftkit/common.hpp"

namespace shiftkit::imgfeat {

struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // RGB interleaved, row-major

    static RasterImage filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    std::uint8_t at(int x, int y, int c) const {
        return data[static_cast<std::size_t>(3) * (static_cast<std::size_t>(y) * width + x) + c];
    }
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = &data[static_cast<std::size_t>(3) * (static_cast<std::size_t>(y) * width + x)];
        p[0] = r; p[1] = g; p[2] = b;
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Standardized raster; values are unbounded reals after (p - mu) / sigma.
struct FloatImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // RGB interleaved

    double at(int x, int y, int c) const {
        return data[static_cast<std::size_t>(3) * (static_cast<std::size_t>(y) * width + x) + c];
    }
};

struct PixelCoord {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCoord&) const = default;
};

struct PointD {
    double x = 0.0;
    double y = 0.0;
};

struct ObjectMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> mask;      // 1 = object pixel
    std::size_t area = 0;                // pixel count of the component
    std::vector<PixelCoord> contour;     // ordered boundary pixel centers
    std::vector<PixelCoord> hull;        // convex hull of contour centers (CCW)

    bool contains(int x, int y) const {
        return x >= 0 && x < width && y >= 0 && y < height &&
               mask[static_cast<std::size_t>(y) * width + x] != 0;
    }
};

// Region moments over the filled object (unit mass per pixel center).
struct RegionMoments {
    // raw[p][q] = sum x^p y^q, central[p][q] about the centroid, p+q <= 3
    double raw[4][4] = {};
    double central[4][4] = {};
    double centroid_x = 0.0;
    double centroid_y = 0.0;

    double eta(int p, int q) const;          // mu_pq / mu_00^((p+q)/2 + 1)
    std::array<double, 7> hu() const;        // rotation/scale/translation invariants
};

inline constexpr int kDescriptorCount = 67;
inline constexpr int kFeatureCount = 68;  // descriptors + crop_index

struct DescriptorVector {
    double width = 0, height = 0;
    double w_rot = 0, h_rot = 0, angle_rot = 0;
    double aspect_ratio = 0, rect_area = 0;
    double contour_area = 0, contour_perimeter = 0;
    double extent = 0, compactness = 0, formfactor = 0;
    double hull_area = 0, hull_perimeter = 0, solidity = 0;
    double esd = 0, major_axis = 0, minor_axis = 0, angle = 0;
    double eccentricity = 0, convexity = 0, roundness = 0;
    double intensity_mean[3] = {};  // R, G, B
    double intensity_std[3] = {};
    double hue_mean = 0, saturation_mean = 0, brightness_mean = 0;
    double hue_std = 0, saturation_std = 0, brightness_std = 0;
    double blurriness = 0, noise = 0;
    double raw_moments[10] = {};        // M00 M10 M01 M20 M11 M02 M30 M21 M12 M03
    double central_moments[7] = {};     // mu20 mu11 mu02 mu30 mu21 mu12 mu03
    double normalized_moments[7] = {};  // nu20 nu11 nu02 nu30 nu21 nu12 nu03
    double hu[7] = {};                  // I1..I7
    double crop_index = 0;

    // Canonical column order shared with features.csv (68 names).
    static const std::vector<std::string>& feature_names();
    std::vector<double> to_row() const;
};

// Whether color statistics run over the whole raster or the object mask only.
enum class ColorStatsScope { AllPixels, ObjectOnly };

// Largest 8-connected non-black component with traced contour and hull.
// Throws ValidationError("no object found") on an all-black image.
ObjectMask extract_mask(const RasterImage& img);

RegionMoments region_moments(const ObjectMask& mask);

DescriptorVector extract_descriptors(const RasterImage& img,
                                     ColorStatsScope scope = ColorStatsScope::AllPixels);

// Number of non-black pixels on the one-pixel boundary ring (corners counted once).
int crop_index(const RasterImage& img);

// Mean absolute response of the 4-neighbor Laplacian on the channel-mean
// grayscale image, replicate border.
double blurriness(const RasterImage& img);

// Standard deviation of all pixel values (all channels pooled).
double noise_level(const RasterImage& img);

struct ChannelStats {
    double mu[3] = {};
    double sigma[3] = {};
};

// Per-channel mean/std over all pixels of the given images.
// Throws NumericalError("degenerate channel") if a channel has zero spread.
ChannelStats fit_rgb_stats(const std::vector<RasterImage>& train);
FloatImage apply_rgb_stats(const ChannelStats& stats, const RasterImage& img);
void save_channel_stats(const ChannelStats& stats, const std::filesystem::path& path);
ChannelStats load_channel_stats(const std::filesystem::path& path);

// Rotation about the image center, black fill. Right angles are exact index
// permutations (90/270 swap the raster dimensions); other angles use inverse
// bilinear mapping on the same canvas.
RasterImage rotate_raster(const RasterImage& img, double degrees);
RasterImage flip_vertical(const RasterImage& img);

// k rotations at angles 360*i/k; with flips, each rotation is also emitted
// vertically flipped (2k views).
std::vector<RasterImage> emit_tta_views(const RasterImage& img, int k, bool flips);

// ---------------------------------------------------------------------------
// Raster IO (PNG, JPEG, and binary PPM for fixtures; format sniffed by magic).
RasterImage load_image(const std::filesystem::path& path);
void save_ppm(const RasterImage& img, const std::filesystem::path& path);
void save_png(const RasterImage& img, const std::filesystem::path& path);
void save_jpeg(const RasterImage& img, const std::filesystem::path& path, int quality = 95);

}  // namespace shiftkit::imgfeat
