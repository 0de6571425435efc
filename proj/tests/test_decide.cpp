#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "shiftkit/decide.hpp"

using namespace shiftkit;
using namespace shiftkit::decide;

namespace {

corpus::ConfidenceMatrix make_conf(const std::string& tag,
                                   const std::vector<std::vector<double>>& rows) {
    corpus::ConfidenceMatrix conf;
    conf.tag = tag;
    for (std::size_t i = 0; i < rows.size(); ++i)
        conf.sample_ids.push_back("s" + std::to_string(i));
    conf.rows = rows;
    return conf;
}

}  // namespace

TEST_CASE("ensemble combination") {
    SUBCASE("identical members reproduce the member") {
        const auto m = make_conf("m1", {{0.7, 0.3}, {0.2, 0.8}});
        auto m2 = m;
        m2.tag = "m2";
        for (auto rule : {CombineRule::Arithmetic, CombineRule::Geometric}) {
            const auto out = combine({{m, m2}, rule});
            for (std::size_t i = 0; i < m.rows.size(); ++i)
                for (std::size_t c = 0; c < 2; ++c)
                    CHECK(out.rows[i][c] == doctest::Approx(m.rows[i][c]).epsilon(1e-12));
        }
    }
    SUBCASE("geometric combination of opposite rows renormalizes to uniform") {
        const auto a = make_conf("a", {{0.8, 0.2}});
        const auto b = make_conf("b", {{0.2, 0.8}});
        const auto out = combine({{a, b}, CombineRule::Geometric});
        CHECK(out.rows[0][0] == doctest::Approx(0.5));
        CHECK(out.rows[0][1] == doctest::Approx(0.5));
    }
    SUBCASE("a zero member confidence forces a zero geometric confidence") {
        const auto a = make_conf("a", {{0.0, 1.0}});
        const auto b = make_conf("b", {{0.9, 0.1}});
        const auto out = combine({{a, b}, CombineRule::Geometric});
        CHECK(out.rows[0][0] == 0.0);
        CHECK(out.rows[0][1] == 1.0);
    }
    SUBCASE("misaligned sample ids are rejected") {
        auto a = make_conf("a", {{1.0, 0.0}});
        auto b = make_conf("b", {{1.0, 0.0}});
        b.sample_ids[0] = "other";
        CHECK_THROWS_WITH_AS(combine({{a, b}, CombineRule::Arithmetic}),
                             doctest::Contains("not aligned"), ValidationError);
    }
    SUBCASE("duplicate tags are rejected") {
        const auto a = make_conf("same", {{1.0, 0.0}});
        CHECK_THROWS_AS(combine({{a, a}, CombineRule::Arithmetic}), ValidationError);
    }
    SUBCASE("member permutation gives bit-identical output") {
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::vector<corpus::ConfidenceMatrix> members;
        for (int m = 0; m < 3; ++m) {
            std::vector<std::vector<double>> rows;
            for (int i = 0; i < 10; ++i) {
                double a = uni(rng), b = uni(rng) * (1 - a);
                rows.push_back({a, b, 1 - a - b});
            }
            members.push_back(make_conf("m" + std::to_string(m), rows));
        }
        for (auto rule : {CombineRule::Arithmetic, CombineRule::Geometric}) {
            const auto base = combine({members, rule});
            auto shuffled = members;
            std::swap(shuffled[0], shuffled[2]);
            const auto out = combine({shuffled, rule});
            CHECK(out.rows == base.rows);
        }
    }
    SUBCASE("rows stay normalized and unanimous argmax is preserved") {
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> uni(0.01, 1.0);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<corpus::ConfidenceMatrix> members;
            const std::size_t winner = trial % 3;
            for (int m = 0; m < 3; ++m) {
                std::vector<double> row(3);
                for (auto& v : row) v = uni(rng);
                row[winner] = *std::max_element(row.begin(), row.end()) + 0.1;
                double sum = row[0] + row[1] + row[2];
                for (auto& v : row) v /= sum;
                members.push_back(make_conf("m" + std::to_string(m), {row}));
            }
            for (auto rule : {CombineRule::Arithmetic, CombineRule::Geometric}) {
                const auto out = combine({members, rule});
                CHECK(out.rows[0][0] + out.rows[0][1] + out.rows[0][2] ==
                      doctest::Approx(1.0).epsilon(1e-9));
                CHECK(out.predicted_class(0) == winner);
            }
        }
    }
}

TEST_CASE("TTA aggregation") {
    SUBCASE("single view is the identity") {
        const auto v = make_conf("rot0", {{0.6, 0.4}});
        const auto out = tta_aggregate({v});
        CHECK(out.rows == v.rows);
    }
    SUBCASE("two opposite views average to uniform") {
        const auto out = tta_aggregate(
            {make_conf("rot0", {{1.0, 0.0}}), make_conf("rot180", {{0.0, 1.0}})});
        CHECK(out.rows[0] == std::vector<double>{0.5, 0.5});
    }
    SUBCASE("view order does not change the bytes") {
        const auto a = make_conf("a", {{0.11, 0.89}, {0.5, 0.5}});
        const auto b = make_conf("b", {{0.77, 0.23}, {0.1, 0.9}});
        const auto c = make_conf("c", {{0.33, 0.67}, {0.25, 0.75}});
        const auto base = tta_aggregate({a, b, c});
        const auto shuffled = tta_aggregate({c, a, b});
        CHECK(base.rows == shuffled.rows);
    }
}

TEST_CASE("abstention") {
    // 2 classes; rows engineered so max confidence spans a range.
    const auto conf = make_conf("m", {{0.95, 0.05},
                                      {0.85, 0.15},
                                      {0.55, 0.45},
                                      {0.40, 0.60},
                                      {0.25, 0.75}});
    const std::vector<std::size_t> labels{0, 1, 0, 1, 1};

    SUBCASE("theta 0 classifies everything") {
        const auto res = abstain(conf, labels, 0.0);
        CHECK(res.point.pct_classified == 100.0);
        CHECK(res.abstained_indices.empty());
    }
    SUBCASE("theta 1 abstains on everything (strict inequality)") {
        const auto res = abstain(conf, labels, 1.0);
        CHECK(res.point.pct_classified == 0.0);
        CHECK(res.classified_indices.empty());
    }
    SUBCASE("abstained samples count as false negatives for recall") {
        // theta = 0.7: rows 0,1,4 kept (max conf 0.95, 0.85, 0.75).
        const auto res = abstain(conf, labels, 0.7);
        CHECK(res.point.n_classified == 3);
        // class 0: kept tp = 1 (row0), support = 2 -> recall 0.5
        // class 1: kept rows: row1 pred 0 (wrong), row4 pred 1 (right): tp=1, support 3
        CHECK(res.point.macro_recall == doctest::Approx(0.5 * (1.0 / 2 + 1.0 / 3)));
        // precision: class 0 predictions kept = rows 0,1 -> tp 1 / 2; class 1: row4 -> 1/1
        CHECK(res.point.macro_precision == doctest::Approx(0.5 * (0.5 + 1.0)));
        CHECK(res.point.accuracy_incl == doctest::Approx(2.0 / 5));
        CHECK(res.point.accuracy_excl == doctest::Approx(2.0 / 3));
    }
    SUBCASE("curve on calibrated synthetic confidences is monotone") {
        // Deterministic calibrated fixture: at confidence level c, a fraction
        // c of predictions is correct, symmetric over both classes.
        std::vector<std::vector<double>> rows;
        std::vector<std::size_t> labels2;
        for (double c : {0.55, 0.65, 0.75, 0.85, 0.95}) {
            const int per_level = 40;
            const int correct = static_cast<int>(std::lround(c * per_level));
            for (int cls = 0; cls < 2; ++cls) {
                for (int i = 0; i < per_level; ++i) {
                    std::vector<double> row(2);
                    row[cls] = c;
                    row[1 - cls] = 1.0 - c;
                    rows.push_back(row);         // predicted class = cls
                    labels2.push_back(i < correct ? cls : 1 - cls);
                }
            }
        }
        const auto curve = abstention_curve(make_conf("m", rows), labels2,
                                            {0.0, 0.3, 0.6, 0.7, 0.8, 0.9});
        for (std::size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i].pct_classified <= curve[i - 1].pct_classified + 1e-12);
            CHECK(curve[i].macro_recall <= curve[i - 1].macro_recall + 1e-12);
            CHECK(curve[i].macro_precision >= curve[i - 1].macro_precision - 1e-12);
        }
    }
    SUBCASE("invalid threshold rejected") {
        CHECK_THROWS_AS(abstain(conf, labels, 1.5), ValidationError);
    }
}

TEST_CASE("id_quantification_stats") {
    SUBCASE("one-hot correct confidences") {
        const auto conf = make_conf("m", {{1.0, 0.0}, {0.0, 1.0}});
        const auto stats = id_quantification_stats(conf, {0, 1});
        CHECK(stats.recall == std::vector<double>{1.0, 1.0});
        CHECK(stats.fallout == std::vector<double>{0.0, 0.0});
        CHECK(stats.pa_recall == std::vector<double>{1.0, 1.0});
        CHECK(stats.pa_fallout == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("uniform confidences give r_pa = f_pa = 1/N_c") {
        const auto conf = make_conf("m", {{0.5, 0.5}, {0.5, 0.5}});
        const auto stats = id_quantification_stats(conf, {0, 1});
        CHECK(stats.pa_recall == std::vector<double>{0.5, 0.5});
        CHECK(stats.pa_fallout == std::vector<double>{0.5, 0.5});
    }
    SUBCASE("hand means on a 2-class fixture") {
        const auto conf = make_conf("m", {{0.9, 0.1}, {0.9, 0.1}, {0.3, 0.7}, {0.3, 0.7}});
        const auto stats = id_quantification_stats(conf, {0, 0, 1, 1});
        CHECK(stats.pa_recall[0] == doctest::Approx(0.9));
        CHECK(stats.pa_recall[1] == doctest::Approx(0.7));
        CHECK(stats.pa_fallout[0] == doctest::Approx(0.3));
        CHECK(stats.pa_fallout[1] == doctest::Approx(0.1));
    }
    SUBCASE("class absent from training labels is rejected") {
        const auto conf = make_conf("m", {{1.0, 0.0}});
        CHECK_THROWS_AS(id_quantification_stats(conf, {0}), ValidationError);
    }
}

TEST_CASE("quantification") {
    SUBCASE("perfect ID classifier reduces AC to CC") {
        IdQuantStats stats;
        stats.recall = {1.0, 1.0};
        stats.fallout = {0.0, 0.0};
        stats.pa_recall = stats.recall;
        stats.pa_fallout = stats.fallout;
        const auto conf = make_conf("m", {{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
        const auto cc = quantify(QuantMethod::CC, conf, stats, 3);
        const auto ac = quantify(QuantMethod::AC, conf, stats, 3);
        CHECK(cc.estimates == std::vector<double>{2.0, 1.0});
        CHECK(ac.estimates == cc.estimates);
    }
    SUBCASE("hand-evaluated AC: n=100, cc=30, r=0.8, f=0.1") {
        IdQuantStats stats;
        stats.recall = {0.8, 0.8};
        stats.fallout = {0.1, 0.1};
        stats.pa_recall = stats.recall;
        stats.pa_fallout = stats.fallout;
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 30; ++i) rows.push_back({1.0, 0.0});
        for (int i = 0; i < 70; ++i) rows.push_back({0.0, 1.0});
        const auto ac = quantify(QuantMethod::AC, make_conf("m", rows), stats, 100);
        CHECK(ac.estimates[0] == doctest::Approx(100.0 * (0.3 - 0.1) / 0.7).epsilon(1e-6));
    }
    SUBCASE("PCC equals CC on one-hot rows") {
        IdQuantStats stats;
        stats.recall = {0.9, 0.9};
        stats.fallout = {0.05, 0.05};
        stats.pa_recall = stats.recall;
        stats.pa_fallout = stats.fallout;
        const auto conf = make_conf("m", {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}});
        const auto cc = quantify(QuantMethod::CC, conf, stats, 3);
        const auto pcc = quantify(QuantMethod::PCC, conf, stats, 3);
        CHECK(pcc.estimates == cc.estimates);
    }
    SUBCASE("self-test inversion recovers the true abundances exactly") {
        // Build an argmax-consistent training set, measure r/f on it, then
        // AC on the same set must invert to the true counts.
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::vector<std::vector<double>> rows;
        std::vector<std::size_t> labels;
        for (int i = 0; i < 300; ++i) {
            const std::size_t y = i % 3 == 0 ? 0 : (i % 3 == 1 ? 1 : 2) ;
            std::vector<double> row(3);
            for (auto& v : row) v = 0.05 + 0.9 * uni(rng);
            // Force a noisy but class-correlated argmax: 75% correct.
            const std::size_t pred = uni(rng) < 0.75 ? y : (y + 1) % 3;
            row[pred] = *std::max_element(row.begin(), row.end()) + 0.2;
            double sum = row[0] + row[1] + row[2];
            for (auto& v : row) v /= sum;
            rows.push_back(row);
            labels.push_back(y);
        }
        const auto conf = make_conf("m", rows);
        const auto stats = id_quantification_stats(conf, labels);
        bool invertible = true;
        for (std::size_t y = 0; y < 3; ++y)
            invertible = invertible && stats.recall[y] != stats.fallout[y];
        REQUIRE(invertible);
        const auto ac = quantify(QuantMethod::AC, conf, stats, labels.size());
        std::vector<double> truth(3, 0.0);
        for (std::size_t y : labels) truth[y] += 1.0;
        for (std::size_t y = 0; y < 3; ++y)
            CHECK(ac.estimates[y] == doctest::Approx(truth[y]).epsilon(1e-9));
    }
    SUBCASE("r == f falls back to CC with a warning") {
        IdQuantStats stats;
        stats.recall = {0.5, 0.8};
        stats.fallout = {0.5, 0.1};
        stats.pa_recall = stats.recall;
        stats.pa_fallout = stats.fallout;
        const auto conf = make_conf("m", {{1.0, 0.0}, {0.0, 1.0}});
        const auto ac = quantify(QuantMethod::AC, conf, stats, 2);
        CHECK(ac.cc_fallback[0]);
        CHECK_FALSE(ac.cc_fallback[1]);
        CHECK(!ac.warnings.empty());
        CHECK(ac.estimates[0] == 1.0);  // the CC count
    }
    SUBCASE("CC and PCC estimates sum to n_test") {
        IdQuantStats stats;
        stats.recall = {0.9, 0.8, 0.7};
        stats.fallout = {0.1, 0.05, 0.02};
        stats.pa_recall = stats.recall;
        stats.pa_fallout = stats.fallout;
        std::mt19937_64 rng(41);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 57; ++i) {
            double a = uni(rng), b = uni(rng) * (1 - a);
            rows.push_back({a, b, 1 - a - b});
        }
        const auto conf = make_conf("m", rows);
        for (auto method : {QuantMethod::CC, QuantMethod::PCC}) {
            const auto res = quantify(method, conf, stats, rows.size());
            double sum = 0.0;
            for (double v : res.estimates) sum += v;
            CHECK(std::fabs(sum - static_cast<double>(rows.size())) < 1e-6);
        }
    }
    SUBCASE("negative AC estimates clamp to zero with diagnostics") {
        IdQuantStats stats;
        stats.recall = {0.9, 0.9};
        stats.fallout = {0.4, 0.0};
        stats.pa_recall = stats.recall;
        stats.pa_fallout = stats.fallout;
        // No predictions for class 0 at all: raw AC = n*(0 - 0.4)/0.5 < 0.
        const auto conf = make_conf("m", {{0.1, 0.9}, {0.2, 0.8}});
        const auto ac = quantify(QuantMethod::AC, conf, stats, 2);
        CHECK(ac.raw[0] < 0.0);
        CHECK(ac.clamped[0]);
        CHECK(ac.estimates[0] == 0.0);
    }
}
