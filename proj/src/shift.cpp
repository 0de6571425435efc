#include "shiftkit/shift.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

namespace shiftkit::shift {

std::string metric_name(DistanceMetric m) {
    switch (m) {
        case DistanceMetric::Hellinger: return "hellinger";
        case DistanceMetric::Wasserstein: return "wasserstein";
        case DistanceMetric::Kl: return "kl";
    }
    return "hellinger";
}

std::string mode_name(DistanceMode m) {
    switch (m) {
        case DistanceMode::ClassPca: return "class-pca";
        case DistanceMode::Feature: return "feature";
        case DistanceMode::Class: return "class";
        case DistanceMode::Marginal: return "marginal";
    }
    return "class-pca";
}

DistanceMetric metric_from_name(const std::string& s) {
    if (s == "hellinger") return DistanceMetric::Hellinger;
    if (s == "wasserstein") return DistanceMetric::Wasserstein;
    if (s == "kl") return DistanceMetric::Kl;
    throw ValidationError("unknown distance metric: " + s);
}

DistanceMode mode_from_name(const std::string& s) {
    if (s == "class-pca") return DistanceMode::ClassPca;
    if (s == "feature") return DistanceMode::Feature;
    if (s == "class") return DistanceMode::Class;
    if (s == "marginal") return DistanceMode::Marginal;
    throw ValidationError("unknown distance mode: " + s);
}

double distributional_distance(const std::vector<double>& p, const std::vector<double>& q,
                               DyMode mode) {
    if (p.size() != q.size() || p.empty())
        throw ValidationError("class distributions must have equal, nonzero size");
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] < 0.0 || q[i] < 0.0) throw ValidationError("negative probability in d_y input");

    if (mode == DyMode::Literal) {
        double dot = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * q[i];
        return 1.0 - dot / static_cast<double>(p.size());
    }
    double dot = 0.0, np = 0.0, nq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        dot += p[i] * q[i];
        np += p[i] * p[i];
        nq += q[i] * q[i];
    }
    if (np <= 0.0 || nq <= 0.0) throw NumericalError("zero vector in cosine d_y");
    return 1.0 - dot / std::sqrt(np * nq);
}

std::pair<BinnedDistribution, BinnedDistribution> bin_pair(const std::vector<double>& values_p,
                                                           const std::vector<double>& values_q,
                                                           std::size_t n_bins) {
    if (n_bins < 2) throw ValidationError("n_bins must be >= 2");
    if (values_p.empty() || values_q.empty())
        throw ValidationError("cannot bin an empty sample");

    double lo = values_p[0], hi = values_p[0];
    for (double v : values_p) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : values_q) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    BinnedDistribution p, q;
    p.probabilities.assign(n_bins, 0.0);
    q.probabilities.assign(n_bins, 0.0);
    p.value_min = q.value_min = lo;
    p.value_max = q.value_max = hi;
    p.sample_count = values_p.size();
    q.sample_count = values_q.size();

    const double range = hi - lo;
    auto fill = [&](const std::vector<double>& values, BinnedDistribution& out) {
        for (double v : values) {
            std::size_t idx = 0;
            if (range > 0.0) {
                const double norm = (v - lo) / range;  // min-max to [0, 1]
                idx = std::min(static_cast<std::size_t>(norm * static_cast<double>(n_bins)),
                               n_bins - 1);
            }
            out.probabilities[idx] += 1.0;
        }
        for (double& x : out.probabilities) x /= static_cast<double>(values.size());
    };
    fill(values_p, p);
    fill(values_q, q);
    return {p, q};
}

namespace {

void check_same_support(const BinnedDistribution& p, const BinnedDistribution& q) {
    if (p.n_bins() != q.n_bins())
        throw ValidationError("binned distributions have different bin counts");
}

}  // namespace

double hellinger(const BinnedDistribution& p, const BinnedDistribution& q) {
    check_same_support(p, q);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.n_bins(); ++i) {
        const double d = std::sqrt(p.probabilities[i]) - std::sqrt(q.probabilities[i]);
        sum += d * d;
    }
    return std::min(1.0, std::sqrt(sum) / std::sqrt(2.0));
}

double wasserstein_binned(const BinnedDistribution& p, const BinnedDistribution& q) {
    check_same_support(p, q);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.n_bins(); ++i)
        sum += std::fabs(p.probabilities[i] - q.probabilities[i]);
    return sum / static_cast<double>(p.n_bins());
}

double kl_binned(const BinnedDistribution& p, const BinnedDistribution& q, double alpha) {
    check_same_support(p, q);
    const std::size_t n = p.n_bins();
    const double denom = 1.0 + alpha * static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pi = (p.probabilities[i] + alpha) / denom;
        const double qi = (q.probabilities[i] + alpha) / denom;
        if (pi <= 0.0) continue;  // 0 log 0 = 0
        if (qi <= 0.0) return std::numeric_limits<double>::infinity();
        sum += pi * std::log(pi / qi);
    }
    return std::max(0.0, sum);
}

double binned_distance(DistanceMetric metric, const BinnedDistribution& p,
                       const BinnedDistribution& q, double kl_alpha) {
    switch (metric) {
        case DistanceMetric::Hellinger: return hellinger(p, q);
        case DistanceMetric::Wasserstein: return wasserstein_binned(p, q);
        case DistanceMetric::Kl: return kl_binned(p, q, kl_alpha);
    }
    return hellinger(p, q);
}

// ---------------------------------------------------------------------------

ProjectionModel fit_projection(const corpus::FeatureTable& train, double variance_threshold) {
    if (variance_threshold <= 0.0 || variance_threshold > 1.0)
        throw ValidationError("variance threshold must be in (0, 1]");

    // Rows with non-finite entries cannot enter the covariance.
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < train.rows(); ++i) {
        bool ok = true;
        for (double v : train.values[i]) ok = ok && std::isfinite(v);
        if (ok) usable.push_back(i);
    }
    if (usable.size() < 2) throw ValidationError("need at least 2 complete samples to fit PCA");

    const std::size_t nf = train.cols();
    std::vector<double> mean(nf, 0.0), stddev(nf, 0.0);
    for (std::size_t i : usable)
        for (std::size_t f = 0; f < nf; ++f) mean[f] += train.values[i][f];
    for (std::size_t f = 0; f < nf; ++f) mean[f] /= static_cast<double>(usable.size());
    for (std::size_t i : usable)
        for (std::size_t f = 0; f < nf; ++f) {
            const double d = train.values[i][f] - mean[f];
            stddev[f] += d * d;
        }

    ProjectionModel model;
    model.variance_threshold = variance_threshold;
    std::vector<std::size_t> kept;
    for (std::size_t f = 0; f < nf; ++f) {
        stddev[f] = std::sqrt(stddev[f] / static_cast<double>(usable.size()));
        if (stddev[f] > 0.0) {
            kept.push_back(f);
            model.feature_names.push_back(train.feature_names[f]);
            model.mean.push_back(mean[f]);
            model.stddev.push_back(stddev[f]);
        } else {
            model.dropped_constant.push_back(train.feature_names[f]);
        }
    }
    if (kept.empty()) throw ValidationError("all features are constant; cannot fit PCA");

    const std::size_t d = kept.size();
    Eigen::MatrixXd x(usable.size(), d);
    for (std::size_t r = 0; r < usable.size(); ++r)
        for (std::size_t c = 0; c < d; ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                (train.values[usable[r]][kept[c]] - model.mean[c]) / model.stddev[c];

    const Eigen::MatrixXd cov =
        (x.transpose() * x) / static_cast<double>(usable.size() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericalError("PCA eigendecomposition failed");

    // Eigen returns ascending eigenvalues; reorder descending and fix each
    // eigenvector's sign so the largest-magnitude entry is positive.
    const Eigen::VectorXd& evals = solver.eigenvalues();
    const Eigen::MatrixXd& evecs = solver.eigenvectors();
    const Eigen::Index nd = evals.size();
    double total = 0.0;
    for (Eigen::Index i = 0; i < nd; ++i) total += std::max(0.0, evals(i));

    for (Eigen::Index i = nd; i-- > 0;) {
        Eigen::VectorXd v = evecs.col(i);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        model.loadings.emplace_back(v.data(), v.data() + v.size());
        model.explained_variance_ratio.push_back(total > 0.0 ? std::max(0.0, evals(i)) / total
                                                             : 0.0);
    }

    double cum = 0.0;
    model.retained = model.loadings.size();
    for (std::size_t i = 0; i < model.explained_variance_ratio.size(); ++i) {
        cum += model.explained_variance_ratio[i];
        if (cum >= variance_threshold - 1e-12) {
            model.retained = i + 1;
            break;
        }
    }
    return model;
}

std::vector<std::vector<double>> ProjectionModel::project(
    const corpus::FeatureTable& table, std::vector<std::size_t>* skipped_rows) const {
    std::vector<std::size_t> cols(feature_names.size());
    for (std::size_t c = 0; c < feature_names.size(); ++c)
        cols[c] = table.feature_index(feature_names[c]);

    std::vector<std::vector<double>> out;
    out.reserve(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        bool ok = true;
        for (std::size_t c : cols) ok = ok && std::isfinite(table.values[r][c]);
        if (!ok) {
            if (skipped_rows) skipped_rows->push_back(r);
            continue;
        }
        std::vector<double> z(cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c)
            z[c] = (table.values[r][cols[c]] - mean[c]) / stddev[c];
        std::vector<double> scores(retained, 0.0);
        for (std::size_t k = 0; k < retained; ++k) {
            double s = 0.0;
            for (std::size_t c = 0; c < z.size(); ++c) s += loadings[k][c] * z[c];
            scores[k] = s;
        }
        out.push_back(std::move(scores));
    }
    return out;
}

double signed_log(double standardized) {
    return standardized >= 0.0 ? std::log1p(standardized) : -std::log1p(-standardized);
}

std::vector<double> feature_transform(const std::vector<double>& values, double train_mean,
                                      double train_stddev) {
    if (train_stddev <= 0.0) throw NumericalError("zero stddev in feature transform");
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(signed_log((v - train_mean) / train_stddev));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct LabeledScores {
    // scores[i] aligned with kept_labels[i]; rows with non-finite inputs dropped
    std::vector<std::vector<double>> scores;
    std::vector<std::size_t> labels;
};

std::vector<double> component_column(const std::vector<std::vector<double>>& scores,
                                     std::size_t k, const std::vector<std::size_t>* labels,
                                     std::size_t cls) {
    std::vector<double> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels && (*labels)[i] != cls) continue;
        out.push_back(scores[i][k]);
    }
    return out;
}

}  // namespace

DistanceReport compositional_distance(const corpus::FeatureTable& train_features,
                                      const std::vector<std::size_t>& train_labels,
                                      const corpus::FeatureTable& test_features,
                                      const std::vector<std::size_t>& test_labels,
                                      const corpus::ClassVocabulary& vocab,
                                      const CompositionalOptions& opts,
                                      const ProjectionModel* fitted) {
    DistanceReport report;
    report.mode = opts.mode;
    report.metric = opts.metric;
    report.n_bins = opts.n_bins;
    report.min_class_support = opts.min_class_support;

    const bool class_mode = opts.mode == DistanceMode::ClassPca || opts.mode == DistanceMode::Class;
    if (class_mode) {
        if (train_labels.size() != train_features.rows() ||
            test_labels.size() != test_features.rows())
            throw ValidationError("class-conditional distances need labels aligned with features");
    }

    if (opts.mode == DistanceMode::Feature) {
        // Per-feature: standardize with train statistics, signed-log transform,
        // drop undefined values, bin jointly.
        for (std::size_t f = 0; f < train_features.cols(); ++f) {
            const std::string& name = train_features.feature_names[f];
            const std::size_t tf = test_features.feature_index(name);
            std::vector<double> a, b;
            std::size_t dropped = 0;
            for (const auto& row : train_features.values) {
                if (std::isfinite(row[f]))
                    a.push_back(row[f]);
                else
                    ++dropped;
            }
            for (const auto& row : test_features.values) {
                if (std::isfinite(row[tf]))
                    b.push_back(row[tf]);
                else
                    ++dropped;
            }
            if (dropped) report.dropped_undefined[name] = dropped;
            if (a.empty() || b.empty()) continue;

            const double mu = mean_of(a);
            const double sd = stddev_of(a);
            DistanceReport::Row row;
            row.key = name;
            row.support_train = a.size();
            row.support_test = b.size();
            if (sd > 0.0) {
                a = feature_transform(a, mu, sd);
                b = feature_transform(b, mu, sd);
            } else {
                for (double& v : a) v -= mu;  // constant on train: compare raw offsets
                for (double& v : b) v -= mu;
            }
            const auto [pa, pb] = bin_pair(a, b, opts.n_bins);
            row.distance = binned_distance(opts.metric, pa, pb, opts.kl_alpha);
            row.per_component = {row.distance};
            report.rows.push_back(std::move(row));
        }
        report.component_names = train_features.feature_names;
        std::vector<double> all;
        for (const auto& r : report.rows) all.push_back(r.distance);
        if (all.empty()) throw ValidationError("no feature had data on both sides");
        report.aggregate = mean_of(all);
        return report;
    }

    // PCA-based modes.
    ProjectionModel local;
    const ProjectionModel* model = fitted;
    if (!model) {
        local = fit_projection(train_features, opts.pca_variance);
        model = &local;
    }
    std::vector<std::size_t> skipped_train, skipped_test;
    const auto train_scores = model->project(train_features, &skipped_train);
    const auto test_scores = model->project(test_features, &skipped_test);
    report.skipped_rows_train = skipped_train.size();
    report.skipped_rows_test = skipped_test.size();
    for (std::size_t k = 0; k < model->retained; ++k)
        report.component_names.push_back("pc" + std::to_string(k));

    // Labels surviving the row filter, aligned with the projected scores.
    std::vector<std::size_t> train_kept, test_kept;
    if (class_mode) {
        std::set<std::size_t> drop_a(skipped_train.begin(), skipped_train.end());
        std::set<std::size_t> drop_b(skipped_test.begin(), skipped_test.end());
        for (std::size_t i = 0; i < train_labels.size(); ++i)
            if (!drop_a.count(i)) train_kept.push_back(train_labels[i]);
        for (std::size_t i = 0; i < test_labels.size(); ++i)
            if (!drop_b.count(i)) test_kept.push_back(test_labels[i]);
    }

    if (opts.mode == DistanceMode::Marginal) {
        DistanceReport::Row row;
        row.key = "";
        row.support_train = train_scores.size();
        row.support_test = test_scores.size();
        if (train_scores.empty() || test_scores.empty())
            throw ValidationError("no usable rows for marginal distance");
        for (std::size_t k = 0; k < model->retained; ++k) {
            const auto a = component_column(train_scores, k, nullptr, 0);
            const auto b = component_column(test_scores, k, nullptr, 0);
            const auto [pa, pb] = bin_pair(a, b, opts.n_bins);
            row.per_component.push_back(binned_distance(opts.metric, pa, pb, opts.kl_alpha));
        }
        row.distance = mean_of(row.per_component);
        report.aggregate = row.distance;
        report.rows.push_back(std::move(row));
        return report;
    }

    // Per-class modes: classes need enough OOD support and any train presence.
    for (std::size_t y = 0; y < vocab.size(); ++y) {
        std::size_t support_test = 0, support_train = 0;
        for (std::size_t l : test_kept) support_test += (l == y);
        for (std::size_t l : train_kept) support_train += (l == y);
        if (support_test < opts.min_class_support || support_train == 0) {
            if (support_test > 0 || support_train > 0)
                report.excluded_classes.push_back(vocab.name(y));
            continue;
        }
        DistanceReport::Row row;
        row.key = vocab.name(y);
        row.support_train = support_train;
        row.support_test = support_test;
        for (std::size_t k = 0; k < model->retained; ++k) {
            const auto a = component_column(train_scores, k, &train_kept, y);
            const auto b = component_column(test_scores, k, &test_kept, y);
            const auto [pa, pb] = bin_pair(a, b, opts.n_bins);
            row.per_component.push_back(binned_distance(opts.metric, pa, pb, opts.kl_alpha));
        }
        row.distance = mean_of(row.per_component);
        report.rows.push_back(std::move(row));
    }
    if (report.rows.empty())
        throw ValidationError("no class survives the support filter (min support " +
                              std::to_string(opts.min_class_support) + ")");
    std::vector<double> per_class;
    for (const auto& r : report.rows) per_class.push_back(r.distance);
    report.aggregate = mean_of(per_class);  // macro average over classes
    return report;
}

}  // namespace shiftkit::shift
