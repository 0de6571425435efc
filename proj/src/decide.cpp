#include "shiftkit/decide.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace shiftkit::decide {

namespace {

// Tag-sorted view over members; alignment of ids is checked against the first.
std::vector<const corpus::ConfidenceMatrix*> sorted_aligned(
    const std::vector<corpus::ConfidenceMatrix>& members, std::size_t min_members) {
    if (members.size() < min_members)
        throw ValidationError("need at least " + std::to_string(min_members) +
                              " confidence matrices");
    std::set<std::string> tags;
    std::vector<const corpus::ConfidenceMatrix*> view;
    for (const auto& m : members) {
        if (!tags.insert(m.tag).second)
            throw ValidationError("duplicate confidence tag: " + m.tag);
        view.push_back(&m);
    }
    std::sort(view.begin(), view.end(),
              [](const auto* a, const auto* b) { return a->tag < b->tag; });

    const auto& first = *view.front();
    for (const auto* m : view) {
        if (m->sample_ids != first.sample_ids)
            throw ValidationError("confidence matrices are not aligned on sample ids (tag '" +
                                  m->tag + "')");
        if (m->num_classes() != first.num_classes())
            throw ValidationError("confidence matrices disagree on the class count");
    }
    return view;
}

}  // namespace

corpus::ConfidenceMatrix combine(const EnsembleSpec& spec) {
    const auto members = sorted_aligned(spec.members, 2);
    const std::size_t n = members.front()->size();
    const std::size_t nc = members.front()->num_classes();
    const double nm = static_cast<double>(members.size());

    corpus::ConfidenceMatrix out;
    out.tag = spec.combine == CombineRule::Arithmetic ? "ensemble-arith" : "ensemble-geo";
    out.sample_ids = members.front()->sample_ids;
    out.rows.assign(n, std::vector<double>(nc, 0.0));

    for (std::size_t i = 0; i < n; ++i) {
        auto& row = out.rows[i];
        if (spec.combine == CombineRule::Arithmetic) {
            for (const auto* m : members)
                for (std::size_t c = 0; c < nc; ++c) row[c] += m->rows[i][c];
            for (double& v : row) v /= nm;
        } else {
            std::fill(row.begin(), row.end(), 1.0);
            for (const auto* m : members)
                for (std::size_t c = 0; c < nc; ++c) row[c] *= m->rows[i][c];
            double sum = 0.0;
            for (double& v : row) {
                v = std::pow(v, 1.0 / nm);
                sum += v;
            }
            if (sum > 0.0) {
                for (double& v : row) v /= sum;
            } else {
                // Every class hit a zero member; fall back to uniform.
                std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(nc));
            }
        }
    }
    return out;
}

corpus::ConfidenceMatrix tta_aggregate(const std::vector<corpus::ConfidenceMatrix>& views) {
    const auto sorted = sorted_aligned(views, 1);
    const std::size_t n = sorted.front()->size();
    const std::size_t nc = sorted.front()->num_classes();

    corpus::ConfidenceMatrix out;
    out.tag = "tta";
    out.sample_ids = sorted.front()->sample_ids;
    out.rows.assign(n, std::vector<double>(nc, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto* v : sorted)
            for (std::size_t c = 0; c < nc; ++c) out.rows[i][c] += v->rows[i][c];
        for (double& x : out.rows[i]) x /= static_cast<double>(sorted.size());
    }
    return out;
}

AbstentionResult abstain(const corpus::ConfidenceMatrix& conf,
                         const std::vector<std::size_t>& labels, double theta) {
    if (theta < 0.0 || theta > 1.0) throw ValidationError("abstention threshold must be in [0,1]");
    if (labels.size() != conf.size())
        throw ValidationError("labels are not aligned with confidences");
    const std::size_t nc = conf.num_classes();

    AbstentionResult res;
    res.point.threshold = theta;
    std::vector<std::size_t> tp(nc, 0), fp(nc, 0), support(nc, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        ++support[labels[i]];
        const std::size_t pred = conf.predicted_class(i);
        if (conf.rows[i][pred] > theta) {
            res.classified_indices.push_back(i);
            res.predictions.push_back(pred);
            if (pred == labels[i]) {
                ++tp[pred];
                ++correct;
            } else {
                ++fp[pred];
            }
        } else {
            res.abstained_indices.push_back(i);  // counts as FN for its true class
        }
    }

    const std::size_t n = conf.size();
    const std::size_t kept = res.classified_indices.size();
    res.point.n_classified = kept;
    res.point.pct_classified = 100.0 * static_cast<double>(kept) / static_cast<double>(n);
    res.point.accuracy_incl = static_cast<double>(correct) / static_cast<double>(n);
    res.point.accuracy_excl =
        kept ? static_cast<double>(correct) / static_cast<double>(kept) : kUndefined;

    std::vector<double> precision, recall;
    for (std::size_t y = 0; y < nc; ++y) {
        if (tp[y] + fp[y] > 0)
            precision.push_back(static_cast<double>(tp[y]) / static_cast<double>(tp[y] + fp[y]));
        if (support[y] > 0)
            recall.push_back(static_cast<double>(tp[y]) / static_cast<double>(support[y]));
    }
    res.point.macro_precision = precision.empty() ? kUndefined : mean_of(precision);
    res.point.macro_recall = recall.empty() ? kUndefined : mean_of(recall);
    return res;
}

std::vector<AbstentionPoint> abstention_curve(const corpus::ConfidenceMatrix& conf,
                                              const std::vector<std::size_t>& labels,
                                              const std::vector<double>& thresholds) {
    std::vector<AbstentionPoint> out;
    out.reserve(thresholds.size());
    for (double theta : thresholds) out.push_back(abstain(conf, labels, theta).point);
    return out;
}

std::string quant_method_name(QuantMethod m) {
    switch (m) {
        case QuantMethod::CC: return "CC";
        case QuantMethod::AC: return "AC";
        case QuantMethod::PCC: return "PCC";
        case QuantMethod::PAC: return "PAC";
    }
    return "CC";
}

QuantMethod quant_method_from_name(const std::string& s) {
    if (s == "CC" || s == "cc") return QuantMethod::CC;
    if (s == "AC" || s == "ac") return QuantMethod::AC;
    if (s == "PCC" || s == "pcc") return QuantMethod::PCC;
    if (s == "PAC" || s == "pac") return QuantMethod::PAC;
    throw ValidationError("unknown quantification method: " + s);
}

IdQuantStats id_quantification_stats(const corpus::ConfidenceMatrix& train_conf,
                                     const std::vector<std::size_t>& train_labels) {
    if (train_labels.size() != train_conf.size())
        throw ValidationError("labels are not aligned with confidences");
    const std::size_t nc = train_conf.num_classes();
    const std::size_t n = train_conf.size();

    std::vector<std::size_t> support(nc, 0);
    for (std::size_t l : train_labels) {
        if (l >= nc) throw ValidationError("label out of range");
        ++support[l];
    }
    for (std::size_t y = 0; y < nc; ++y)
        if (support[y] == 0)
            throw ValidationError("class index " + std::to_string(y) +
                                  " absent from training labels");

    IdQuantStats stats;
    stats.recall.assign(nc, 0.0);
    stats.fallout.assign(nc, 0.0);
    stats.pa_recall.assign(nc, 0.0);
    stats.pa_fallout.assign(nc, 0.0);

    std::vector<std::size_t> tp(nc, 0), fp(nc, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pred = train_conf.predicted_class(i);
        if (pred == train_labels[i])
            ++tp[pred];
        else
            ++fp[pred];
        for (std::size_t y = 0; y < nc; ++y) {
            if (train_labels[i] == y)
                stats.pa_recall[y] += train_conf.rows[i][y];
            else
                stats.pa_fallout[y] += train_conf.rows[i][y];
        }
    }
    for (std::size_t y = 0; y < nc; ++y) {
        stats.recall[y] = static_cast<double>(tp[y]) / static_cast<double>(support[y]);
        const std::size_t negatives = n - support[y];
        stats.fallout[y] =
            negatives ? static_cast<double>(fp[y]) / static_cast<double>(negatives) : 0.0;
        stats.pa_recall[y] /= static_cast<double>(support[y]);
        if (negatives) stats.pa_fallout[y] /= static_cast<double>(negatives);
    }
    return stats;
}

QuantificationResult quantify(QuantMethod method, const corpus::ConfidenceMatrix& conf,
                              const IdQuantStats& id_stats, std::size_t n_test) {
    const std::size_t nc = conf.num_classes();
    if (n_test != conf.size()) throw ValidationError("n_test does not match the confidence rows");
    if (id_stats.recall.size() != nc) throw ValidationError("ID stats do not match class count");

    QuantificationResult res;
    res.method = method;
    res.n_test = n_test;
    res.raw.assign(nc, 0.0);
    res.clamped.assign(nc, false);
    res.cc_fallback.assign(nc, false);

    std::vector<double> cc(nc, 0.0), pcc(nc, 0.0);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        cc[conf.predicted_class(i)] += 1.0;
        for (std::size_t y = 0; y < nc; ++y) pcc[y] += conf.rows[i][y];
    }

    const double nt = static_cast<double>(n_test);
    for (std::size_t y = 0; y < nc; ++y) {
        switch (method) {
            case QuantMethod::CC: res.raw[y] = cc[y]; break;
            case QuantMethod::PCC: res.raw[y] = pcc[y]; break;
            case QuantMethod::AC: {
                const double denom = id_stats.recall[y] - id_stats.fallout[y];
                if (denom == 0.0) {
                    res.raw[y] = cc[y];
                    res.cc_fallback[y] = true;
                    res.warnings.push_back("class " + std::to_string(y) +
                                           ": r(y) == f(y); falling back to CC");
                } else {
                    res.raw[y] = nt * (cc[y] / nt - id_stats.fallout[y]) / denom;
                }
                break;
            }
            case QuantMethod::PAC: {
                const double denom = id_stats.pa_recall[y] - id_stats.pa_fallout[y];
                if (denom == 0.0) {
                    res.raw[y] = cc[y];
                    res.cc_fallback[y] = true;
                    res.warnings.push_back("class " + std::to_string(y) +
                                           ": r_pa(y) == f_pa(y); falling back to CC");
                } else {
                    res.raw[y] = nt * (pcc[y] / nt - id_stats.pa_fallout[y]) / denom;
                }
                break;
            }
        }
    }

    res.estimates = res.raw;
    if (method == QuantMethod::AC || method == QuantMethod::PAC) {
        for (std::size_t y = 0; y < nc; ++y) {
            const double clamped = std::clamp(res.raw[y], 0.0, nt);
            if (clamped != res.raw[y]) {
                res.clamped[y] = true;
                res.estimates[y] = clamped;
            }
        }
    }
    return res;
}

}  // namespace shiftkit::decide
