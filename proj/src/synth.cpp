#include "shiftkit/synth.hpp"

#include <algorithm>
#include <cmath>

#include "shiftkit/metrics.hpp"

namespace shiftkit::synth {

double Rng::uniform01() {
    // 53 random bits into [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 2.0 * 3.14159265358979323846;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
}

std::size_t Rng::discrete(const std::vector<double>& probabilities) {
    const double u = uniform01();
    double cum = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        cum += probabilities[i];
        if (u < cum) return i;
    }
    return probabilities.size() - 1;
}

void GenerativeSpec::validate() const {
    if (n_classes < 1 || prior.size() != n_classes || classes.size() != n_classes)
        throw ValidationError("generative spec: class count mismatch");
    double total = 0.0;
    for (double p : prior) {
        if (p < 0.0) throw ValidationError("generative spec: negative prior");
        total += p;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("generative spec: prior must sum to 1");
    for (const auto& c : classes) {
        if (c.mean.size() != n_features || c.stddev.size() != n_features)
            throw ValidationError("generative spec: feature dimension mismatch");
        for (double s : c.stddev)
            if (s <= 0.0) throw ValidationError("generative spec: stddev must be positive");
    }
    if (classifier.centroids.size() != n_classes)
        throw ValidationError("generative spec: classifier centroid count mismatch");
    for (const auto& c : classifier.centroids)
        if (c.size() != n_features)
            throw ValidationError("generative spec: classifier centroid dimension mismatch");
    if (classifier.temperature < 0.0)
        throw ValidationError("generative spec: negative temperature");
}

GenerativeSpec make_spec(std::vector<double> prior, std::vector<ClassModel> classes,
                         double temperature, std::uint64_t seed) {
    GenerativeSpec spec;
    spec.n_classes = classes.size();
    spec.n_features = classes.empty() ? 0 : classes.front().mean.size();
    spec.prior = std::move(prior);
    spec.classes = std::move(classes);
    spec.classifier.temperature = temperature;
    for (const auto& c : spec.classes) spec.classifier.centroids.push_back(c.mean);
    spec.seed = seed;
    spec.validate();
    return spec;
}

namespace {

std::vector<double> classify(const ClassifierSpec& clf, const std::vector<double>& x) {
    const std::size_t nc = clf.centroids.size();
    std::vector<double> d2(nc, 0.0);
    double d2_min = std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < nc; ++y) {
        double s = 0.0;
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double d = x[f] - clf.centroids[y][f];
            s += d * d;
        }
        d2[y] = s;
        d2_min = std::min(d2_min, s);
    }
    std::vector<double> conf(nc, 0.0);
    if (clf.temperature <= 1e-12) {
        // Hard nearest-centroid limit; ties break to the lowest index.
        std::size_t best = 0;
        for (std::size_t y = 1; y < nc; ++y)
            if (d2[y] < d2[best]) best = y;
        conf[best] = 1.0;
        return conf;
    }
    double sum = 0.0;
    for (std::size_t y = 0; y < nc; ++y) {
        conf[y] = std::exp(-(d2[y] - d2_min) / clf.temperature);
        sum += conf[y];
    }
    for (double& c : conf) c /= sum;
    return conf;
}

}  // namespace

Sample generate(const GenerativeSpec& spec, std::size_t n, const std::string& id_prefix) {
    spec.validate();
    Rng rng(spec.seed);

    Sample out;
    out.labels.reserve(n);
    out.features.sample_ids.reserve(n);
    out.features.values.reserve(n);
    for (std::size_t f = 0; f < spec.n_features; ++f)
        out.features.feature_names.push_back("f" + std::to_string(f));
    out.confidences.tag = "synth";
    out.confidences.rows.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = rng.discrete(spec.prior);
        std::vector<double> x(spec.n_features);
        for (std::size_t f = 0; f < spec.n_features; ++f)
            x[f] = spec.classes[y].mean[f] + spec.classes[y].stddev[f] * rng.normal();

        out.labels.push_back(y);
        const std::string id = id_prefix + std::to_string(i);
        out.features.sample_ids.push_back(id);
        out.confidences.sample_ids.push_back(id);
        out.confidences.rows.push_back(classify(spec.classifier, x));
        out.features.values.push_back(std::move(x));
    }
    return out;
}

GenerativeSpec inject(const GenerativeSpec& spec, const ShiftInjection& injection) {
    spec.validate();
    GenerativeSpec out = spec;

    const bool wants_prior = injection.kind == ShiftInjection::Kind::Distributional ||
                             injection.kind == ShiftInjection::Kind::Mixed;
    const bool wants_means = injection.kind == ShiftInjection::Kind::Compositional ||
                             injection.kind == ShiftInjection::Kind::Mixed;

    if (wants_prior) {
        if (injection.new_prior.size() != spec.n_classes)
            throw ValidationError("injection prior size mismatch");
        out.prior = injection.new_prior;
    }
    if (wants_means && !injection.mean_offset_sigma.empty()) {
        if (injection.mean_offset_sigma.size() != spec.n_classes)
            throw ValidationError("injection offset rows must match class count");
        for (std::size_t y = 0; y < spec.n_classes; ++y) {
            const auto& offs = injection.mean_offset_sigma[y];
            if (offs.empty()) continue;
            if (offs.size() != spec.n_features)
                throw ValidationError("injection offset columns must match feature count");
            for (std::size_t f = 0; f < spec.n_features; ++f)
                out.classes[y].mean[f] += offs[f] * out.classes[y].stddev[f];
        }
    }
    // The classifier stays frozen at its ID centroids.
    out.validate();
    return out;
}

ExpectedAccuracyCheck validate_expected_accuracy(const GenerativeSpec& spec,
                                                 const ShiftInjection& injection, std::size_t n) {
    GenerativeSpec id_spec = spec;
    const Sample id_draw = generate(id_spec, n, "id");

    std::vector<std::string> names;
    for (std::size_t y = 0; y < spec.n_classes; ++y) names.push_back("c" + std::to_string(y));
    const corpus::ClassVocabulary vocab(names);
    const auto id_conf = metrics::confusion(id_draw.labels, id_draw.confidences.predictions(), vocab);
    const auto id_metrics = metrics::compute_metrics(id_conf);

    GenerativeSpec shifted = inject(spec, injection);
    shifted.seed = spec.seed + 1;  // independent draw
    const Sample ood_draw = generate(shifted, n, "ood");
    const auto ood_conf =
        metrics::confusion(ood_draw.labels, ood_draw.confidences.predictions(), vocab);

    std::vector<double> abundances;
    for (std::size_t c : ood_conf.support()) abundances.push_back(static_cast<double>(c));
    const auto ood_metrics = metrics::compute_metrics(ood_conf, abundances, id_metrics.recall);

    ExpectedAccuracyCheck check;
    check.accuracy = ood_metrics.accuracy;
    check.expected_accuracy = ood_metrics.expected_accuracy;
    check.gap = check.expected_accuracy - check.accuracy;
    return check;
}

}  // namespace shiftkit::synth
