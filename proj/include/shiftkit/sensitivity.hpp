#pragma once
// Sensitivity analysis: regressions of performance drop against distribution
// distance (mean + quantile lines), per-feature and per-class sensitivities Q,
// and the feature -> targeted-augmentation recommendation table.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "shiftkit/common.hpp"

namespace shiftkit::sensitivity {

struct PointXY {
    double x = 0.0;  // distance
    double y = 0.0;  // drop
};

enum class FitKind { Ols, Quantile };

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    FitKind kind = FitKind::Ols;
    double tau = 0.5;          // quantile level (Quantile fits only)
    std::size_t n_points = 0;
    double loss = 0.0;         // SSE for OLS, pinball loss for quantile

    double at(double x) const { return intercept + slope * x; }
};

// Closed-form least squares. Throws NumericalError when all x coincide.
RegressionFit ols_fit(const std::vector<PointXY>& points);

double pinball_loss(const std::vector<PointXY>& points, double slope, double intercept,
                    double tau);

// Pinball-loss minimizing line: IRLS with annealed smoothing, followed by an
// exact search over lines through point pairs on small instances (<= 64
// points), where the optimum is attained at such a vertex.
RegressionFit quantile_fit(const std::vector<PointXY>& points, double tau);

// Ratio form Q = drop / distance (Eq-style single-cell sensitivity).
double sensitivity_ratio(double drop, double distance);

struct SensitivityRecord {
    std::string subject;       // feature or class name
    double q_acc = kUndefined;  // slope of accuracy drop vs distance
    double q_f1 = kUndefined;   // slope of F1 drop vs distance
    std::size_t n_points = 0;
    bool eligible = true;
    std::string ineligible_reason;
};

struct SubjectSeries {
    std::string subject;
    std::vector<PointXY> acc_points;  // (distance, accuracy drop) per cell
    std::vector<PointXY> f1_points;   // (distance, F1 drop) per cell
};

// Slope-Q per feature across cells; records sorted by descending Q_F1
// (ineligible records trail, each with a reason).
std::vector<SensitivityRecord> per_feature_sensitivities(const std::vector<SubjectSeries>& series);

// Slope-Q per class. Eligibility: the class occurs at least min_count times
// in at least min_cells OOD cells (counts supplied per class per cell).
std::vector<SensitivityRecord> per_class_sensitivities(
    const std::vector<SubjectSeries>& series,
    const std::vector<std::vector<std::size_t>>& class_counts_per_cell,
    std::size_t min_count = 10, std::size_t min_cells = 4);

struct AugmentationRecommendation {
    std::string family;                 // e.g. "gaussian blur"
    std::vector<std::string> features;  // triggering high-Q features
};

// Targeted-augmentation families for high-Q features (threshold on Q_F1,
// default 0.7). Unmapped features are reported separately. Returns an empty
// list plus a note when nothing exceeds the threshold.
struct RecommendationReport {
    std::vector<AugmentationRecommendation> recommendations;
    std::vector<std::string> unmapped_features;
    std::string note;
};

RecommendationReport recommend_augmentations(const std::vector<SensitivityRecord>& records,
                                             double q_threshold = 0.7);

// The static feature -> augmentation-family table (empty result when the
// feature has no known targeted augmentation).
std::vector<std::string> augmentation_families(const std::string& feature);

}  // namespace shiftkit::sensitivity
