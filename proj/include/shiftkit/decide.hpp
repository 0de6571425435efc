#pragma once
// Prediction-combination and post-hoc correction toolbox: confidence
// ensembling, TTA aggregation, abstention curves, and quantification
// (CC / AC / PCC / PAC).

#include <cstddef>
#include <string>
#include <vector>

#include "shiftkit/common.hpp"
#include "shiftkit/corpus.hpp"

namespace shiftkit::decide {

enum class CombineRule { Arithmetic, Geometric };

struct EnsembleSpec {
    std::vector<corpus::ConfidenceMatrix> members;  // >= 2, unique tags
    CombineRule combine = CombineRule::Arithmetic;
};

// Members are aligned by sample id and processed in tag-sorted order, so the
// result is bit-identical under any member permutation. Geometric combination
// takes the n_m-th root of the per-class product and renormalizes each row
// (renormalization does not alter the argmax). Throws ValidationError on
// misaligned sample ids or duplicate tags.
corpus::ConfidenceMatrix combine(const EnsembleSpec& spec);

// Arithmetic mean over TTA views (tag-sorted order); every sample must be
// present in every view.
corpus::ConfidenceMatrix tta_aggregate(const std::vector<corpus::ConfidenceMatrix>& views);

struct AbstentionPoint {
    double threshold = 0.0;
    double pct_classified = 0.0;         // percentage in [0, 100]
    double macro_precision = kUndefined;  // over kept predictions
    double macro_recall = kUndefined;     // abstained count as FN
    double accuracy_incl = kUndefined;    // correct / all samples
    double accuracy_excl = kUndefined;    // correct / classified samples
    std::size_t n_classified = 0;
};

struct AbstentionResult {
    AbstentionPoint point;
    std::vector<std::size_t> classified_indices;
    std::vector<std::size_t> abstained_indices;
    std::vector<std::size_t> predictions;  // for classified indices only
};

// Keeps a prediction iff the confidence on the predicted class is strictly
// larger than theta. Abstained samples count as false negatives for their
// true class (recall denominators unchanged) and leave precision denominators.
AbstentionResult abstain(const corpus::ConfidenceMatrix& conf,
                         const std::vector<std::size_t>& labels, double theta);

std::vector<AbstentionPoint> abstention_curve(const corpus::ConfidenceMatrix& conf,
                                              const std::vector<std::size_t>& labels,
                                              const std::vector<double>& thresholds);

enum class QuantMethod { CC, AC, PCC, PAC };

std::string quant_method_name(QuantMethod m);
QuantMethod quant_method_from_name(const std::string& s);

// Recall/fall-out from argmax confusion plus their probability-average
// counterparts, all measured on the ID training set.
struct IdQuantStats {
    std::vector<double> recall, fallout;        // r(y), f(y)
    std::vector<double> pa_recall, pa_fallout;  // r^pa(y), f^pa(y)
};

IdQuantStats id_quantification_stats(const corpus::ConfidenceMatrix& train_conf,
                                     const std::vector<std::size_t>& train_labels);

struct QuantificationResult {
    QuantMethod method = QuantMethod::CC;
    std::vector<double> estimates;   // per-class, AC/PAC clamped to [0, n_test]
    std::vector<double> raw;         // pre-clamp values
    std::vector<bool> clamped;
    std::vector<bool> cc_fallback;   // r(y) == f(y): per-class CC fallback
    std::vector<std::string> warnings;
    std::size_t n_test = 0;
};

// CC counts argmax predictions; AC inverts the confusion identity with ID
// r/f; PCC sums confidences; PAC is AC with the probability-average stats.
QuantificationResult quantify(QuantMethod method, const corpus::ConfidenceMatrix& conf,
                              const IdQuantStats& id_stats, std::size_t n_test);

}  // namespace shiftkit::decide
