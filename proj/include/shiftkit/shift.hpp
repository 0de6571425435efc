#pragma once
// Dataset-shift quantification: the class-distribution distance d_y and
// binned feature-distribution distances (Hellinger, L1-binned Wasserstein,
// smoothed KL) over standardized / log-transformed / PCA-projected features,
// in four usage modes (per-class PCA, per-feature, per-class, marginal P(x)).

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftkit/common.hpp"
#include "shiftkit/corpus.hpp"

namespace shiftkit::shift {

enum class DistanceMetric { Hellinger, Wasserstein, Kl };
enum class DistanceMode { ClassPca, Feature, Class, Marginal };
enum class DyMode { Cosine, Literal };

std::string metric_name(DistanceMetric m);
std::string mode_name(DistanceMode m);
DistanceMetric metric_from_name(const std::string& s);
DistanceMode mode_from_name(const std::string& s);

struct BinnedDistribution {
    std::vector<double> probabilities;  // sums to 1 within 1e-9
    std::size_t sample_count = 0;
    // Shared support after joint min-max normalization; edges i/n_bins on [0,1].
    double value_min = 0.0;
    double value_max = 0.0;

    std::size_t n_bins() const { return probabilities.size(); }
};

// Class-distribution distance d_y. Cosine mode (default) is 1 - P.Q/(|P||Q|),
// which is 0 iff P = Q up to scale; literal mode is 1 - (1/N_c) sum P(y)Q(y)
// exactly as printed, which does not vanish at P = Q.
double distributional_distance(const std::vector<double>& p, const std::vector<double>& q,
                               DyMode mode = DyMode::Cosine);

// Joint min-max binning of two samples onto shared equal-width edges.
// Undefined (non-finite) values must be dropped by the caller beforehand.
// A degenerate joint range puts both masses into the first bin.
std::pair<BinnedDistribution, BinnedDistribution> bin_pair(const std::vector<double>& values_p,
                                                           const std::vector<double>& values_q,
                                                           std::size_t n_bins);

double hellinger(const BinnedDistribution& p, const BinnedDistribution& q);
double wasserstein_binned(const BinnedDistribution& p, const BinnedDistribution& q);
// KL(p||q) with additive per-bin smoothing alpha (renormalized); p is the
// in-dataset reference. alpha = 0 evaluates the raw formula with 0 log 0 = 0.
double kl_binned(const BinnedDistribution& p, const BinnedDistribution& q, double alpha = 1e-6);

double binned_distance(DistanceMetric metric, const BinnedDistribution& p,
                       const BinnedDistribution& q, double kl_alpha = 1e-6);

// Standardization + PCA fitted on the ID training features only.
struct ProjectionModel {
    std::vector<std::string> feature_names;   // features kept (non-constant)
    std::vector<std::string> dropped_constant;
    std::vector<double> mean, stddev;         // per kept feature
    // loadings[k] is the k-th retained component over kept features.
    std::vector<std::vector<double>> loadings;
    std::vector<double> explained_variance_ratio;  // all components, descending
    std::size_t retained = 0;
    double variance_threshold = 0.95;

    // Rows with non-finite entries are skipped; their row indices are
    // appended to skipped_rows when provided.
    std::vector<std::vector<double>> project(const corpus::FeatureTable& table,
                                             std::vector<std::size_t>* skipped_rows = nullptr) const;
};

ProjectionModel fit_projection(const corpus::FeatureTable& train, double variance_threshold = 0.95);

// Per-feature transform for the per-feature distance mode: standardize with
// the train statistics, then x' = log(1+x) for x >= 0, -log(1-x) otherwise.
double signed_log(double standardized);
std::vector<double> feature_transform(const std::vector<double>& values, double train_mean,
                                      double train_stddev);

struct DistanceReport {
    DistanceMode mode = DistanceMode::ClassPca;
    DistanceMetric metric = DistanceMetric::Hellinger;
    std::size_t n_bins = 20;
    std::size_t min_class_support = 10;

    // Component keys: feature names (Feature mode) or "pc<k>" (PCA modes).
    std::vector<std::string> component_names;
    // Per-class rows (class modes) or the single marginal row keyed "".
    struct Row {
        std::string key;                 // class name, feature name, or ""
        std::vector<double> per_component;
        double distance = 0.0;           // mean over components
        std::size_t support_train = 0;
        std::size_t support_test = 0;
    };
    std::vector<Row> rows;

    double aggregate = 0.0;  // mean over rows (macro) / over components
    std::vector<std::string> excluded_classes;      // below support threshold
    std::map<std::string, std::size_t> dropped_undefined;  // per feature
    std::size_t skipped_rows_train = 0, skipped_rows_test = 0;  // non-finite rows (PCA modes)
};

struct CompositionalOptions {
    DistanceMode mode = DistanceMode::ClassPca;
    DistanceMetric metric = DistanceMetric::Hellinger;
    std::size_t n_bins = 20;
    std::size_t min_class_support = 10;
    double pca_variance = 0.95;
    double kl_alpha = 1e-6;
};

// Distance between the training distribution and a test set. Class modes
// need test labels; Feature/Marginal ignore them. A fitted projection may be
// supplied to reuse one model across cells; otherwise PCA modes fit on train.
DistanceReport compositional_distance(const corpus::FeatureTable& train_features,
                                      const std::vector<std::size_t>& train_labels,
                                      const corpus::FeatureTable& test_features,
                                      const std::vector<std::size_t>& test_labels,
                                      const corpus::ClassVocabulary& vocab,
                                      const CompositionalOptions& opts,
                                      const ProjectionModel* fitted = nullptr);

}  // namespace shiftkit::shift
