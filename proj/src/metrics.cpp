#include "shiftkit/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace shiftkit::metrics {

std::size_t ConfusionCounts::total() const {
    std::size_t n = 0;
    for (std::size_t y = 0; y < tp.size(); ++y) n += tp[y] + fn[y];
    return n;
}

std::vector<std::size_t> ConfusionCounts::support() const {
    std::vector<std::size_t> out(tp.size());
    for (std::size_t y = 0; y < tp.size(); ++y) out[y] = tp[y] + fn[y];
    return out;
}

std::vector<std::size_t> ConfusionCounts::predicted_counts() const {
    std::vector<std::size_t> out(tp.size());
    for (std::size_t y = 0; y < tp.size(); ++y) out[y] = tp[y] + fp[y];
    return out;
}

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& other) {
    if (tp.empty()) {
        *this = other;
        return *this;
    }
    if (other.tp.size() != tp.size()) throw ValidationError("confusion size mismatch in merge");
    for (std::size_t y = 0; y < tp.size(); ++y) {
        tp[y] += other.tp[y];
        fp[y] += other.fp[y];
        fn[y] += other.fn[y];
        tn[y] += other.tn[y];
    }
    return *this;
}

ConfusionCounts confusion(const std::vector<std::size_t>& labels,
                          const std::vector<std::size_t>& predictions,
                          const corpus::ClassVocabulary& vocab) {
    if (labels.size() != predictions.size())
        throw ValidationError("labels and predictions are not aligned");
    const std::size_t nc = vocab.size();
    ConfusionCounts c;
    c.tp.assign(nc, 0);
    c.fp.assign(nc, 0);
    c.fn.assign(nc, 0);
    c.tn.assign(nc, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t t = labels[i], p = predictions[i];
        if (t >= nc || p >= nc) throw ValidationError("class index out of range");
        if (t == p) {
            ++c.tp[t];
        } else {
            ++c.fn[t];
            ++c.fp[p];
        }
    }
    const std::size_t n = labels.size();
    for (std::size_t y = 0; y < nc; ++y) c.tn[y] = n - c.tp[y] - c.fp[y] - c.fn[y];
    return c;
}

namespace {

double macro_over_defined(const std::vector<double>& values, std::size_t* excluded) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (is_defined(v)) {
            sum += v;
            ++n;
        }
    }
    if (excluded) *excluded = values.size() - n;
    return n ? sum / static_cast<double>(n) : kUndefined;
}

}  // namespace

double bray_curtis(const std::vector<double>& estimated, const std::vector<double>& truth) {
    if (estimated.size() != truth.size()) throw ValidationError("abundance size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t y = 0; y < truth.size(); ++y) {
        num += std::fabs(estimated[y] - truth[y]);
        den += estimated[y] + truth[y];
    }
    return den > 0.0 ? num / den : kUndefined;
}

double nmae(const std::vector<double>& estimated, const std::vector<double>& truth,
            std::size_t* skipped) {
    if (estimated.size() != truth.size()) throw ValidationError("abundance size mismatch");
    double sum = 0.0;
    std::size_t n_skipped = 0;
    for (std::size_t y = 0; y < truth.size(); ++y) {
        if (truth[y] <= 0.0) {
            ++n_skipped;  // the formula divides by n(y)
            continue;
        }
        sum += std::fabs(estimated[y] - truth[y]) / truth[y];
    }
    if (skipped) *skipped = n_skipped;
    return sum / static_cast<double>(truth.size());
}

MetricsRecord compute_metrics(const ConfusionCounts& conf,
                              const std::optional<std::vector<double>>& abundances,
                              const std::optional<std::vector<double>>& id_recall) {
    const std::size_t nc = conf.num_classes();
    const std::size_t n = conf.total();
    if (n == 0) throw ValidationError("empty confusion");

    MetricsRecord rec;
    rec.n = n;
    rec.recall.assign(nc, kUndefined);
    rec.precision.assign(nc, kUndefined);
    rec.f1.assign(nc, kUndefined);
    rec.fallout.assign(nc, kUndefined);
    rec.bias.assign(nc, 0.0);

    std::size_t tp_total = 0;
    std::vector<double> n_hat(nc), n_true(nc);
    for (std::size_t y = 0; y < nc; ++y) {
        const double tp = static_cast<double>(conf.tp[y]);
        const std::size_t support = conf.tp[y] + conf.fn[y];
        const std::size_t predicted = conf.tp[y] + conf.fp[y];
        const std::size_t negatives = conf.tn[y] + conf.fp[y];
        tp_total += conf.tp[y];
        n_true[y] = static_cast<double>(support);
        n_hat[y] = static_cast<double>(predicted);
        rec.bias[y] = n_hat[y] - n_true[y];

        if (support > 0) rec.recall[y] = tp / static_cast<double>(support);
        if (predicted > 0) rec.precision[y] = tp / static_cast<double>(predicted);
        if (negatives > 0) rec.fallout[y] = static_cast<double>(conf.fp[y]) / negatives;
        if (is_defined(rec.recall[y]) && is_defined(rec.precision[y])) {
            const double rp = rec.recall[y] + rec.precision[y];
            rec.f1[y] = rp > 0.0 ? 2.0 * rec.recall[y] * rec.precision[y] / rp : 0.0;
        }
    }

    rec.accuracy = static_cast<double>(tp_total) / static_cast<double>(n);
    rec.macro_recall = macro_over_defined(rec.recall, &rec.excluded_recall);
    rec.macro_precision = macro_over_defined(rec.precision, &rec.excluded_precision);
    rec.macro_f1 = macro_over_defined(rec.f1, &rec.excluded_f1);
    rec.nmae = nmae(n_hat, n_true, &rec.nmae_skipped);
    rec.bray_curtis = bray_curtis(n_hat, n_true);

    if (abundances && id_recall) {
        if (abundances->size() != nc || id_recall->size() != nc)
            throw ValidationError("expected-accuracy inputs do not match the class count");
        double total = 0.0, weighted = 0.0;
        for (std::size_t y = 0; y < nc; ++y) total += (*abundances)[y];
        if (total > 0.0) {
            for (std::size_t y = 0; y < nc; ++y) {
                if (!is_defined((*id_recall)[y])) continue;  // no ID support: skip the term
                weighted += (*abundances)[y] / total * (*id_recall)[y];
            }
            rec.expected_accuracy = weighted;
        }
    }
    return rec;
}

double performance_drop(double train_value, double test_value) {
    return train_value - test_value;
}

OodAggregate ood_aggregate(const std::vector<MetricsRecord>& cell_metrics,
                           const ConfusionCounts& merged) {
    if (cell_metrics.empty()) throw ValidationError("no OOD cells to aggregate");
    OodAggregate agg;
    agg.num_cells = cell_metrics.size();
    agg.micro = compute_metrics(merged);

    auto collect = [&](auto getter, double& mean, double& se) {
        std::vector<double> vals;
        for (const auto& m : cell_metrics) {
            const double v = getter(m);
            if (is_defined(v)) vals.push_back(v);
        }
        mean = mean_of(vals);
        se = standard_error(vals);
    };
    collect([](const MetricsRecord& m) { return m.accuracy; }, agg.macro_accuracy,
            agg.macro_accuracy_se);
    collect([](const MetricsRecord& m) { return m.macro_f1; }, agg.macro_f1, agg.macro_f1_se);
    collect([](const MetricsRecord& m) { return m.macro_recall; }, agg.macro_recall,
            agg.macro_recall_se);
    collect([](const MetricsRecord& m) { return m.macro_precision; }, agg.macro_precision,
            agg.macro_precision_se);
    collect([](const MetricsRecord& m) { return m.nmae; }, agg.macro_nmae, agg.macro_nmae_se);
    collect([](const MetricsRecord& m) { return m.bray_curtis; }, agg.macro_bray_curtis,
            agg.macro_bray_curtis_se);
    return agg;
}

}  // namespace shiftkit::metrics
