#pragma once
// Classification and quantification metrics: per-class recall/precision/F1/
// fall-out, micro accuracy, macro averages, expected accuracy under frozen
// per-class recalls, per-class bias, NMAE, Bray-Curtis, performance drops,
// and micro/macro aggregation over OOD cells.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "shiftkit/common.hpp"
#include "shiftkit/corpus.hpp"

namespace shiftkit::metrics {

struct ConfusionCounts {
    // Indexed by class; TP+FN = n(y), TP+FP = predicted count.
    std::vector<std::size_t> tp, fp, fn, tn;

    std::size_t num_classes() const { return tp.size(); }
    std::size_t total() const;                       // n
    std::vector<std::size_t> support() const;        // n(y) = TP+FN
    std::vector<std::size_t> predicted_counts() const;  // TP+FP
    ConfusionCounts& merge(const ConfusionCounts& other);
};

struct MetricsRecord {
    // Per-class values; kUndefined where the defining ratio is 0/0.
    std::vector<double> recall, precision, f1, fallout;
    std::vector<double> bias;  // n_hat(y) - n(y), signed counts

    double accuracy = 0.0;     // micro accuracy == micro recall
    double macro_recall = kUndefined;
    double macro_precision = kUndefined;
    double macro_f1 = kUndefined;
    double expected_accuracy = kUndefined;  // only with id_recall + abundances
    double nmae = kUndefined;
    double bray_curtis = kUndefined;

    // Classes excluded from each macro average because the per-class value
    // was undefined (zero support / zero predictions).
    std::size_t excluded_recall = 0, excluded_precision = 0, excluded_f1 = 0;
    std::size_t nmae_skipped = 0;  // n(y)=0 terms skipped in NMAE
    std::size_t n = 0;
};

ConfusionCounts confusion(const std::vector<std::size_t>& labels,
                          const std::vector<std::size_t>& predictions,
                          const corpus::ClassVocabulary& vocab);

// Expected accuracy A_exp = sum_y (abundances[y]/n) * id_recall[y] is filled
// only when both optional inputs are present.
MetricsRecord compute_metrics(const ConfusionCounts& conf,
                              const std::optional<std::vector<double>>& abundances = std::nullopt,
                              const std::optional<std::vector<double>>& id_recall = std::nullopt);

// Signed drop: train minus test (negative = improvement).
double performance_drop(double train_value, double test_value);

struct OodAggregate {
    MetricsRecord micro;  // metrics of the merged confusion
    // Unweighted means and standard errors across cells.
    double macro_accuracy = 0.0, macro_accuracy_se = 0.0;
    double macro_f1 = 0.0, macro_f1_se = 0.0;
    double macro_recall = 0.0, macro_recall_se = 0.0;
    double macro_precision = 0.0, macro_precision_se = 0.0;
    double macro_nmae = 0.0, macro_nmae_se = 0.0;
    double macro_bray_curtis = 0.0, macro_bray_curtis_se = 0.0;
    std::size_t num_cells = 0;
};

OodAggregate ood_aggregate(const std::vector<MetricsRecord>& cell_metrics,
                           const ConfusionCounts& merged);

// Abundance-vector metrics, also usable with externally estimated counts.
double bray_curtis(const std::vector<double>& estimated, const std::vector<double>& truth);
double nmae(const std::vector<double>& estimated, const std::vector<double>& truth,
            std::size_t* skipped = nullptr);

}  // namespace shiftkit::metrics
