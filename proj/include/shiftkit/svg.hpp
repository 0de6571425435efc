#pragma once
// Minimal native SVG figures: scatter plots with regression lines, grouped
// bars, and abundance scatter with a 1:1 line. Output carries no timestamps,
// so identical inputs render byte-identical files.

#include <string>
#include <vector>

#include "shiftkit/sensitivity.hpp"

namespace shiftkit::svg {

struct Series {
    std::string name;
    std::string color;
    std::vector<sensitivity::PointXY> points;
};

struct LineSpec {
    std::string name;
    std::string color;
    bool dashed = false;
    double slope = 0.0;
    double intercept = 0.0;
};

struct ScatterSpec {
    std::string title, x_label, y_label;
    std::vector<Series> series;
    std::vector<LineSpec> lines;
    bool diagonal = false;     // 1:1 reference line
    bool log_scale = false;    // log10 on both axes (positive data only)
};

std::string render_scatter(const ScatterSpec& spec);

struct BarGroupSpec {
    std::string title, y_label;
    std::vector<std::string> groups;  // x categories
    struct BarSeries {
        std::string name;
        std::string color;
        std::vector<double> values;  // one per group
    };
    std::vector<BarSeries> series;
};

std::string render_grouped_bars(const BarGroupSpec& spec);

}  // namespace shiftkit::svg
