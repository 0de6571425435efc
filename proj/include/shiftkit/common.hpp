#pragma once
// Shared error types and small utilities used across the toolkit.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace shiftkit {

// Input data failed a structural or semantic check (exit code 2 in the CLI).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation could not be carried out (degenerate input, no convergence;
// exit code 3 in the CLI).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sentinel for descriptors that are undefined on degenerate objects.
// Downstream binning drops these values and reports the drop count.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

inline bool is_defined(double v) { return std::isfinite(v); }

// Shortest round-trip decimal rendering. Used for every double written to
// CSV/JSON so that identical inputs produce byte-identical files.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return kUndefined;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Population standard deviation (divides by N).
inline double stddev_of(const std::vector<double>& xs) {
    if (xs.empty()) return kUndefined;
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

// Standard error of the mean across a small set of cells.
inline double standard_error(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1)) /
           std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace shiftkit
