#include <doctest.h>

#include "oracles.hpp"
#include "shiftkit/metrics.hpp"
#include "shiftkit/sensitivity.hpp"
#include "shiftkit/shift.hpp"
#include "shiftkit/synth.hpp"

using namespace shiftkit;
using namespace shiftkit::synth;

namespace {

GenerativeSpec two_class_spec(double separation, double temperature, std::uint64_t seed,
                              std::size_t nf = 3) {
    ClassModel c0, c1;
    c0.mean.assign(nf, 0.0);
    c0.stddev.assign(nf, 1.0);
    c1 = c0;
    c1.mean[0] = separation;
    return make_spec({0.6, 0.4}, {c0, c1}, temperature, seed);
}

double sample_accuracy(const Sample& s) {
    std::size_t correct = 0;
    const auto preds = s.confidences.predictions();
    for (std::size_t i = 0; i < s.labels.size(); ++i) correct += preds[i] == s.labels[i];
    return static_cast<double>(correct) / static_cast<double>(s.labels.size());
}

}  // namespace

TEST_CASE("spec validation rejects inconsistent generators") {
    ClassModel good;
    good.mean = {0.0};
    good.stddev = {1.0};

    CHECK_THROWS_AS(make_spec({0.7, 0.7}, {good, good}, 1.0, 1), ValidationError);  // prior sum
    CHECK_THROWS_AS(make_spec({1.0}, {good, good}, 1.0, 1), ValidationError);  // count mismatch
    ClassModel bad_sigma = good;
    bad_sigma.stddev = {0.0};
    CHECK_THROWS_AS(make_spec({0.5, 0.5}, {good, bad_sigma}, 1.0, 1), ValidationError);
    ClassModel ragged = good;
    ragged.mean = {0.0, 1.0};
    CHECK_THROWS_AS(make_spec({0.5, 0.5}, {good, ragged}, 1.0, 1), ValidationError);
}

TEST_CASE("generate: zero temperature with well-separated centroids is near-perfect") {
    const auto spec = two_class_spec(8.0, 0.0, 4);
    const auto s = generate(spec, 5000);
    CHECK(sample_accuracy(s) > 0.999);
}

TEST_CASE("generate: identical class distributions score a coin flip") {
    const auto spec = two_class_spec(0.0, 1.0, 5);
    GenerativeSpec even = spec;
    even.prior = {0.5, 0.5};
    const auto s = generate(even, 10000);
    CHECK(sample_accuracy(s) == doctest::Approx(0.5).epsilon(0.04));  // 0.5 +- 0.02
}

TEST_CASE("generate: same seed gives identical bytes, rows normalized") {
    const auto spec = two_class_spec(3.0, 2.0, 6);
    const auto a = generate(spec, 500);
    const auto b = generate(spec, 500);
    CHECK(a.labels == b.labels);
    CHECK(a.features.values == b.features.values);
    CHECK(a.confidences.rows == b.confidences.rows);
    for (const auto& row : a.confidences.rows) {
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("inject: distributional injection hits the requested prior") {
    const auto spec = two_class_spec(3.0, 2.0, 7);
    ShiftInjection inj;
    inj.kind = ShiftInjection::Kind::Distributional;
    inj.new_prior = {0.2, 0.8};
    const auto shifted = inject(spec, inj);
    CHECK(shifted.classes[0].mean == spec.classes[0].mean);  // P(x|y) untouched

    const auto s = generate(shifted, 100000);
    std::size_t n1 = 0;
    for (std::size_t y : s.labels) n1 += y;
    const double sigma = std::sqrt(100000.0 * 0.8 * 0.2);
    CHECK(std::fabs(static_cast<double>(n1) - 80000.0) < 3 * sigma);
}

TEST_CASE("inject: distributional injection keeps per-class recalls stable") {
    const auto spec = two_class_spec(3.0, 2.0, 8);
    const corpus::ClassVocabulary vocab({"c0", "c1"});
    const auto id = generate(spec, 50000, "id");
    const auto id_m =
        metrics::compute_metrics(metrics::confusion(id.labels, id.confidences.predictions(), vocab));

    ShiftInjection inj;
    inj.kind = ShiftInjection::Kind::Distributional;
    inj.new_prior = {0.15, 0.85};
    auto shifted = inject(spec, inj);
    shifted.seed = 1234;
    const auto ood = generate(shifted, 50000, "ood");
    const auto ood_m = metrics::compute_metrics(
        metrics::confusion(ood.labels, ood.confidences.predictions(), vocab));

    for (std::size_t y = 0; y < 2; ++y) {
        // binomial error on r(y) at these supports is ~0.004
        CHECK(ood_m.recall[y] == doctest::Approx(id_m.recall[y]).epsilon(0.03));
    }
}

TEST_CASE("inject: compositional injection") {
    const auto spec = two_class_spec(3.0, 2.0, 9);
    SUBCASE("zero offset leaves the spec unchanged") {
        ShiftInjection inj;
        inj.kind = ShiftInjection::Kind::Compositional;
        inj.mean_offset_sigma.assign(2, {});
        inj.mean_offset_sigma[0].assign(3, 0.0);
        const auto same = inject(spec, inj);
        CHECK(same.classes[0].mean == spec.classes[0].mean);
        CHECK(same.prior == spec.prior);
    }
    SUBCASE("2-sigma drift toward the other class lowers its recall") {
        const corpus::ClassVocabulary vocab({"c0", "c1"});
        const auto id = generate(spec, 30000, "id");
        const auto id_m = metrics::compute_metrics(
            metrics::confusion(id.labels, id.confidences.predictions(), vocab));

        ShiftInjection inj;
        inj.kind = ShiftInjection::Kind::Compositional;
        inj.mean_offset_sigma.assign(2, {});
        inj.mean_offset_sigma[0] = {2.0, 0.0, 0.0};  // toward class 1's centroid
        auto shifted = inject(spec, inj);
        CHECK(shifted.prior == spec.prior);
        CHECK(shifted.classifier.centroids[0] == spec.classifier.centroids[0]);  // frozen
        shifted.seed = 99;
        const auto ood = generate(shifted, 30000, "ood");
        const auto ood_m = metrics::compute_metrics(
            metrics::confusion(ood.labels, ood.confidences.predictions(), vocab));
        CHECK(ood_m.recall[0] < id_m.recall[0] - 0.1);
    }
}

TEST_CASE("validate_expected_accuracy") {
    const auto spec = two_class_spec(3.0, 2.0, 10);
    SUBCASE("no injection: gap is noise") {
        ShiftInjection none;
        none.kind = ShiftInjection::Kind::Distributional;
        none.new_prior = spec.prior;
        const auto check = validate_expected_accuracy(spec, none, 50000);
        CHECK(std::fabs(check.gap) < 0.01);
    }
    SUBCASE("prior flip: expected accuracy tracks the measurement") {
        ShiftInjection flip;
        flip.kind = ShiftInjection::Kind::Distributional;
        flip.new_prior = {0.2, 0.8};
        const auto check = validate_expected_accuracy(spec, flip, 50000);
        CHECK(std::fabs(check.gap) < 0.01);
    }
    SUBCASE("2-sigma compositional shift opens a positive gap") {
        ShiftInjection comp;
        comp.kind = ShiftInjection::Kind::Compositional;
        comp.mean_offset_sigma.assign(2, {});
        comp.mean_offset_sigma[0] = {2.0, 0.0, 0.0};
        const auto check = validate_expected_accuracy(spec, comp, 50000);
        CHECK(check.gap > 0.02);
    }
}

TEST_CASE("Hellinger distance rises monotonically with the injected offset") {
    const auto spec = two_class_spec(3.0, 2.0, 11);
    const corpus::ClassVocabulary vocab({"c0", "c1"});
    const auto id = generate(spec, 10000, "id");

    shift::CompositionalOptions opts;
    opts.mode = shift::DistanceMode::ClassPca;
    double prev = -1.0;
    std::vector<sensitivity::PointXY> drop_points;
    for (double delta : {0.0, 0.5, 1.0, 2.0}) {
        ShiftInjection inj;
        inj.kind = ShiftInjection::Kind::Compositional;
        inj.mean_offset_sigma.assign(2, {});
        inj.mean_offset_sigma[0] = {delta, 0.0, 0.0};
        auto shifted = inject(spec, inj);
        shifted.seed = 500 + static_cast<std::uint64_t>(delta * 10);
        const auto ood = generate(shifted, 10000, "ood");
        const auto report = shift::compositional_distance(id.features, id.labels, ood.features,
                                                          ood.labels, vocab, opts);
        CHECK(report.aggregate > prev);
        prev = report.aggregate;

        const auto id_m = metrics::compute_metrics(
            metrics::confusion(id.labels, id.confidences.predictions(), vocab));
        const auto ood_m = metrics::compute_metrics(
            metrics::confusion(ood.labels, ood.confidences.predictions(), vocab));
        drop_points.push_back(
            {report.aggregate, metrics::performance_drop(id_m.accuracy, ood_m.accuracy)});
    }
    // Drop vs distance has a positive slope across the sweep.
    CHECK(sensitivity::ols_fit(drop_points).slope > 0.0);
}
