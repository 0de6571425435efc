// Acceptance suite: runs each acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. The CLI binary path for the
// end-to-end determinism check comes from argv[1] or $SHIFTKIT_BIN.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "shiftkit/corpus.hpp"
#include "shiftkit/decide.hpp"
#include "shiftkit/imgfeat.hpp"
#include "shiftkit/metrics.hpp"
#include "shiftkit/sensitivity.hpp"
#include "shiftkit/shift.hpp"
#include "shiftkit/synth.hpp"

using namespace shiftkit;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --------------------------------------------------------------------------
// 1. Distance correctness against the direct-summation oracle.
Outcome criterion_distances() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);

    for (int trial = 0; trial < 50; ++trial) {
        shift::BinnedDistribution p, q;
        p.probabilities = oracle::random_histogram(rng, 32);
        q.probabilities = oracle::random_histogram(rng, 32);
        out.require(std::fabs(shift::hellinger(p, q) -
                              oracle::hellinger_direct(p.probabilities, q.probabilities)) < 1e-10,
                    "hellinger oracle mismatch");
        out.require(
            std::fabs(shift::wasserstein_binned(p, q) -
                      oracle::wasserstein_direct(p.probabilities, q.probabilities)) < 1e-10,
            "wasserstein oracle mismatch");
        out.require(std::fabs(shift::kl_binned(p, q, 1e-6) -
                              oracle::kl_direct(p.probabilities, q.probabilities, 1e-6)) < 1e-10,
                    "kl oracle mismatch");
    }
    for (int trial = 0; trial < 10000; ++trial) {
        shift::BinnedDistribution p, q;
        p.probabilities = oracle::random_histogram(rng, 16);
        q.probabilities = oracle::random_histogram(rng, 16);
        const double h = shift::hellinger(p, q);
        const double w = shift::wasserstein_binned(p, q);
        out.require(h >= 0.0 && h <= 1.0, "hellinger out of [0,1]");
        out.require(w >= 0.0 && w <= 1.0, "wasserstein out of [0,1]");
    }
    const double elapsed = seconds_since(t0);
    out.require(elapsed < 5.0, "runtime over 5 s");
    out.detail += (out.detail.empty() ? "" : "; ") + std::string("runtime ") +
                  fmt_double(elapsed) + " s";
    return out;
}

// --------------------------------------------------------------------------
// 2. Expected-accuracy identity under pure distributional vs compositional shift.
Outcome criterion_expected_accuracy() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();

    synth::ClassModel c0, c1;
    c0.mean = {0.0, 0.0, 0.0};
    c0.stddev = {1.0, 1.0, 1.0};
    c1 = c0;
    c1.mean[0] = 3.0;
    const auto spec = synth::make_spec({0.8, 0.2}, {c0, c1}, 2.0, 424242);

    synth::ShiftInjection flip;
    flip.kind = synth::ShiftInjection::Kind::Distributional;
    flip.new_prior = {0.2, 0.8};
    const auto dist_check = synth::validate_expected_accuracy(spec, flip, 100000);
    out.require(std::fabs(dist_check.gap) < 0.01,
                "distributional gap |A - A_exp| = " + fmt_double(std::fabs(dist_check.gap)) +
                    " >= 0.01");

    synth::ShiftInjection comp;
    comp.kind = synth::ShiftInjection::Kind::Compositional;
    comp.mean_offset_sigma = {{2.0, 0.0, 0.0}, {}};
    const auto comp_check = synth::validate_expected_accuracy(spec, comp, 100000);
    out.require(comp_check.gap > 0.02,
                "compositional gap " + fmt_double(comp_check.gap) + " <= 0.02");

    const double elapsed = seconds_since(t0);
    out.require(elapsed < 30.0, "runtime over 30 s");
    out.detail += (out.detail.empty() ? "" : "; ") + std::string("gaps ") +
                  fmt_double(dist_check.gap) + " / " + fmt_double(comp_check.gap) + ", runtime " +
                  fmt_double(elapsed) + " s";
    return out;
}

// --------------------------------------------------------------------------
// 3. Quantification inversion.
Outcome criterion_quantification() {
    Outcome out;

    // Self-test: AC inverts the confusion identity exactly.
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    corpus::ConfidenceMatrix conf;
    conf.tag = "m";
    std::vector<std::size_t> labels;
    for (int i = 0; i < 400; ++i) {
        const std::size_t y = static_cast<std::size_t>(i % 4);
        std::vector<double> row(4);
        for (auto& v : row) v = 0.05 + 0.9 * uni(rng);
        const std::size_t pred = uni(rng) < 0.7 ? y : (y + 1 + i % 3) % 4;
        row[pred] = *std::max_element(row.begin(), row.end()) + 0.25;
        double sum = 0.0;
        for (double v : row) sum += v;
        for (auto& v : row) v /= sum;
        conf.sample_ids.push_back("s" + std::to_string(i));
        conf.rows.push_back(std::move(row));
        labels.push_back(y);
    }
    const auto stats = decide::id_quantification_stats(conf, labels);
    std::vector<double> truth(4, 0.0);
    for (std::size_t y : labels) truth[y] += 1.0;
    const auto ac = decide::quantify(decide::QuantMethod::AC, conf, stats, labels.size());
    for (std::size_t y = 0; y < 4; ++y) {
        if (stats.recall[y] == stats.fallout[y]) continue;
        out.require(std::fabs(ac.estimates[y] - truth[y]) < 1e-6,
                    "AC self-test error " + fmt_double(ac.estimates[y] - truth[y]) + " on class " +
                        std::to_string(y));
    }

    // PCC == CC for one-hot confidences.
    corpus::ConfidenceMatrix onehot;
    onehot.tag = "m";
    for (int i = 0; i < 60; ++i) {
        std::vector<double> row(4, 0.0);
        row[static_cast<std::size_t>(i * 7) % 4] = 1.0;
        onehot.sample_ids.push_back("o" + std::to_string(i));
        onehot.rows.push_back(std::move(row));
    }
    const auto cc = decide::quantify(decide::QuantMethod::CC, onehot, stats, 60);
    const auto pcc = decide::quantify(decide::QuantMethod::PCC, onehot, stats, 60);
    for (std::size_t y = 0; y < 4; ++y)
        out.require(cc.estimates[y] == pcc.estimates[y], "PCC != CC on one-hot rows");

    // Hand example: n_test=100, n_CC=30, r=0.8, f=0.1 -> 28.571.
    decide::IdQuantStats hand;
    hand.recall = {0.8, 0.8};
    hand.fallout = {0.1, 0.1};
    hand.pa_recall = hand.recall;
    hand.pa_fallout = hand.fallout;
    corpus::ConfidenceMatrix hand_conf;
    hand_conf.tag = "m";
    for (int i = 0; i < 100; ++i) {
        hand_conf.sample_ids.push_back("h" + std::to_string(i));
        hand_conf.rows.push_back(i < 30 ? std::vector<double>{1.0, 0.0}
                                        : std::vector<double>{0.0, 1.0});
    }
    const auto hand_ac = decide::quantify(decide::QuantMethod::AC, hand_conf, hand, 100);
    out.require(std::fabs(hand_ac.estimates[0] - 28.571) < 1e-3,
                "hand AC = " + fmt_double(hand_ac.estimates[0]) + " != 28.571 +- 1e-3");
    return out;
}

// --------------------------------------------------------------------------
// 4. Hu-moment invariance under rotation and translation.
Outcome criterion_hu_invariance() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();

    // Asymmetric teardrop: all seven invariants are nonzero with no internal
    // cancellation, so the 2% band genuinely tests the extraction.
    const int canvas = 704;
    const double scale = 220.0, cx = canvas / 2.0 - 0.5, cy = cx;
    const std::vector<oracle::Vec2> unit = {{-1.0, 0.0}, {-0.2, -0.65}, {0.8, -0.3},
                                            {1.0, 0.25}, {0.3, 0.3},   {-0.3, 0.55}};
    std::vector<oracle::Vec2> poly;
    for (auto p : unit) poly.push_back({cx + p.x * scale, cy + p.y * scale});

    auto base = oracle::black_canvas(canvas, canvas);
    oracle::fill_polygon(base, poly);
    const auto mask0 = imgfeat::extract_mask(base);
    out.require(mask0.area >= 500, "fixture object below 500 pixels");
    const auto hu0 = imgfeat::region_moments(mask0).hu();

    double worst = 0.0;
    for (double angle : {15.0, 30.0, 45.0, 90.0}) {
        auto img = oracle::black_canvas(canvas, canvas);
        oracle::fill_polygon(img, oracle::rotate_polygon(poly, angle, cx, cy));
        const auto hu = imgfeat::region_moments(imgfeat::extract_mask(img)).hu();
        for (int i = 0; i < 7; ++i) {
            const double rel = std::fabs(hu[i] - hu0[i]) /
                               std::max(std::fabs(hu0[i]), std::fabs(hu[i]));
            worst = std::max(worst, rel);
            out.require(rel <= 0.02, "I" + std::to_string(i + 1) + " at " + fmt_double(angle) +
                                         " deg off by " + fmt_double(rel * 100) + "%");
        }
    }

    auto shifted = oracle::black_canvas(canvas, canvas);
    std::vector<oracle::Vec2> moved;
    for (auto p : poly) moved.push_back({p.x + 31.0, p.y - 17.0});
    oracle::fill_polygon(shifted, moved);
    const auto hu_t = imgfeat::region_moments(imgfeat::extract_mask(shifted)).hu();
    for (int i = 0; i < 7; ++i)
        out.require(std::fabs(hu_t[i] - hu0[i]) < 1e-9,
                    "translation changed I" + std::to_string(i + 1));

    const double elapsed = seconds_since(t0);
    out.require(elapsed < 10.0, "runtime over 10 s");
    out.detail += (out.detail.empty() ? "" : "; ") + std::string("object area ") +
                  std::to_string(mask0.area) + " px, worst rotation error " +
                  fmt_double(worst * 100) + "%, runtime " + fmt_double(elapsed) + " s";
    return out;
}

// --------------------------------------------------------------------------
// 5. Crop index and blurriness hand oracles.
Outcome criterion_crop_blur() {
    Outcome out;
    const auto white = imgfeat::RasterImage::filled(5, 5, 255, 255, 255);
    out.require(imgfeat::crop_index(white) == 16,
                "all-white 5x5 crop index = " + std::to_string(imgfeat::crop_index(white)));

    const auto flat = imgfeat::RasterImage::filled(9, 9, 123, 45, 67);
    out.require(imgfeat::blurriness(flat) == 0.0, "constant image blurriness nonzero");

    auto spot = oracle::black_canvas(5, 5);
    spot.set(2, 2, 255, 255, 255);
    out.require(std::fabs(imgfeat::blurriness(spot) - 81.6) < 1e-9,
                "single-pixel blurriness = " + fmt_double(imgfeat::blurriness(spot)));
    return out;
}

// --------------------------------------------------------------------------
// 6. Quantile regression optimality against the grid oracle.
Outcome criterion_quantile() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> uni(-5.0, 5.0);
    std::uniform_int_distribution<int> n_dist(3, 20);

    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = n_dist(rng);
        std::vector<sensitivity::PointXY> pts;
        for (int i = 0; i < n; ++i) pts.push_back({uni(rng), uni(rng)});
        for (double tau : {0.05, 0.5, 0.95}) {
            const auto fit = sensitivity::quantile_fit(pts, tau);
            const auto grid = oracle::pinball_grid_search(pts, tau);
            worst = std::max(worst, fit.loss - grid.loss);
            out.require(fit.loss <= grid.loss + 1e-4,
                        "solver loss exceeds grid optimum by " + fmt_double(fit.loss - grid.loss));
        }
    }
    const double elapsed = seconds_since(t0);
    out.require(elapsed < 60.0, "runtime over 60 s");
    out.detail += (out.detail.empty() ? "" : "; ") + std::string("worst excess ") +
                  fmt_double(worst) + ", runtime " + fmt_double(elapsed) + " s";
    return out;
}

// --------------------------------------------------------------------------
// 7. Sensitivity recovery on the delta-sweep harness.
Outcome criterion_sensitivity_recovery() {
    Outcome out;

    // Ten cells; feature f0 sweeps delta = 0.2..2.0 sigma. The other features
    // wander with permuted copies of the same schedule (near-zero correlation
    // with the sweep), so only f0 genuinely drives the planted drop.
    const std::vector<double> sched{0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0};
    const std::vector<std::vector<int>> perms{
        {5, 2, 8, 0, 7, 4, 9, 1, 6, 3}, {3, 6, 1, 9, 4, 7, 0, 8, 2, 5},
        {7, 0, 4, 9, 2, 6, 1, 8, 3, 5}, {5, 3, 8, 1, 6, 2, 9, 4, 0, 7},
        {4, 8, 1, 6, 0, 9, 3, 7, 2, 5}};
    const std::size_t nf = 1 + perms.size();
    const std::size_t n_per_cell = 4000;

    synth::ClassModel base_model;
    base_model.mean.assign(nf, 0.0);
    base_model.stddev.assign(nf, 1.0);
    const auto base = synth::make_spec({1.0}, {base_model}, 1.0, 909);
    const corpus::ClassVocabulary vocab({"only"});
    const auto train = synth::generate(base, n_per_cell * 2, "train");

    shift::CompositionalOptions opts;
    opts.mode = shift::DistanceMode::Feature;
    opts.n_bins = 20;

    synth::Rng noise(31337);
    std::map<std::string, sensitivity::SubjectSeries> series;
    for (std::size_t cell = 0; cell < sched.size(); ++cell) {
        synth::ShiftInjection inj;
        inj.kind = synth::ShiftInjection::Kind::Compositional;
        inj.mean_offset_sigma.assign(1, std::vector<double>(nf, 0.0));
        inj.mean_offset_sigma[0][0] = sched[cell];
        for (std::size_t f = 1; f < nf; ++f)
            inj.mean_offset_sigma[0][f] = sched[static_cast<std::size_t>(perms[f - 1][cell])];
        auto shifted = synth::inject(base, inj);
        shifted.seed = 909 + 7 * (cell + 1);
        const auto sample = synth::generate(shifted, n_per_cell, "cell");

        const auto report = shift::compositional_distance(
            train.features, train.labels, sample.features, sample.labels, vocab, opts);
        double d_f0 = 0.0;
        for (const auto& row : report.rows)
            if (row.key == "f0") d_f0 = row.distance;
        const double drop = 0.8 * d_f0 + 0.01 * noise.normal();
        for (const auto& row : report.rows) {
            auto& s = series[row.key];
            s.subject = row.key;
            s.f1_points.push_back({row.distance, drop});
            s.acc_points.push_back({row.distance, drop});
        }
    }

    std::vector<sensitivity::SubjectSeries> list;
    for (auto& [name, s] : series) list.push_back(std::move(s));
    const auto records = sensitivity::per_feature_sensitivities(list);

    double q_f0 = kUndefined;
    for (const auto& r : records)
        if (r.subject == "f0") q_f0 = r.q_f1;
    out.require(std::fabs(q_f0 - 0.8) <= 0.05,
                "recovered Q = " + fmt_double(q_f0) + " not within 0.8 +- 0.05");
    out.require(records.front().subject == "f0",
                "top-ranked feature is " + records.front().subject + ", expected f0");
    out.detail += (out.detail.empty() ? "" : "; ") + std::string("Q(f0) = ") + fmt_double(q_f0) +
                  ", runner-up Q = " + fmt_double(records[1].q_f1);
    return out;
}

// --------------------------------------------------------------------------
// 8. Ensemble and abstention contracts.
Outcome criterion_ensemble_abstention() {
    Outcome out;
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> uni(0.01, 1.0);

    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t winner = static_cast<std::size_t>(trial % 4);
        std::vector<corpus::ConfidenceMatrix> members;
        for (int m = 0; m < 3; ++m) {
            std::vector<double> row(4);
            for (auto& v : row) v = uni(rng);
            row[winner] = *std::max_element(row.begin(), row.end()) + 0.05;
            double sum = 0.0;
            for (double v : row) sum += v;
            for (auto& v : row) v /= sum;
            corpus::ConfidenceMatrix conf;
            conf.tag = "m" + std::to_string(m);
            conf.sample_ids = {"s"};
            conf.rows = {row};
            members.push_back(std::move(conf));
        }
        const auto arith = decide::combine({members, decide::CombineRule::Arithmetic});
        const auto geo = decide::combine({members, decide::CombineRule::Geometric});
        out.require(arith.predicted_class(0) == winner, "arithmetic argmax flipped");
        out.require(geo.predicted_class(0) == winner, "geometric argmax flipped");
        if (!out.pass) break;
    }

    // Calibrated synthetic confidences: at confidence level c, a fraction c
    // of kept predictions is correct.
    corpus::ConfidenceMatrix conf;
    conf.tag = "m";
    std::vector<std::size_t> labels;
    int idx = 0;
    for (double c : {0.52, 0.60, 0.68, 0.76, 0.84, 0.92, 0.98}) {
        const int per_level = 100;
        const int correct = static_cast<int>(std::lround(c * per_level));
        for (int cls = 0; cls < 2; ++cls) {
            for (int i = 0; i < per_level; ++i) {
                std::vector<double> row(2);
                row[cls] = c;
                row[1 - cls] = 1.0 - c;
                conf.sample_ids.push_back("s" + std::to_string(idx++));
                conf.rows.push_back(std::move(row));
                labels.push_back(static_cast<std::size_t>(i < correct ? cls : 1 - cls));
            }
        }
    }
    const std::vector<double> thresholds{0.0, 0.55, 0.63, 0.71, 0.79, 0.87, 0.95};
    const auto curve = decide::abstention_curve(conf, labels, thresholds);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        out.require(curve[i].pct_classified <= curve[i - 1].pct_classified + 1e-12,
                    "%classified increased along the sweep");
        out.require(curve[i].macro_recall <= curve[i - 1].macro_recall + 1e-12,
                    "recall increased along the sweep");
        out.require(curve[i].macro_precision >= curve[i - 1].macro_precision - 1e-12,
                    "precision decreased along the sweep");
    }
    out.require(curve.front().pct_classified == 100.0, "theta=0 must classify everything");
    return out;
}

// --------------------------------------------------------------------------
// 9. Metric identities.
Outcome criterion_metric_identities() {
    Outcome out;
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> nc_dist(2, 8);

    for (int trial = 0; trial < 100; ++trial) {
        const int nc = nc_dist(rng);
        std::vector<std::string> names;
        for (int y = 0; y < nc; ++y) names.push_back("c" + std::to_string(y));
        const corpus::ClassVocabulary vocab(names);
        std::uniform_int_distribution<int> cls(0, nc - 1);
        std::vector<std::size_t> labels, preds;
        for (int i = 0; i < 300; ++i) {
            labels.push_back(static_cast<std::size_t>(cls(rng)));
            preds.push_back(static_cast<std::size_t>(cls(rng)));
        }
        const auto conf = metrics::confusion(labels, preds, vocab);
        const auto m = metrics::compute_metrics(conf);
        double weighted = 0.0;
        const auto support = conf.support();
        for (int y = 0; y < nc; ++y)
            if (support[y] > 0)
                weighted += static_cast<double>(support[y]) / 300.0 * m.recall[y];
        out.require(std::fabs(m.accuracy - weighted) < 1e-12, "micro-accuracy identity violated");

        double bias_sum = 0.0;
        for (double b : m.bias) bias_sum += b;
        out.require(bias_sum == 0.0, "bias does not sum to zero");
    }
    out.require(metrics::bray_curtis({4, 6, 0}, {4, 6, 0}) == 0.0, "BC(identical) != 0");
    out.require(metrics::bray_curtis({5, 0, 0}, {0, 3, 2}) == 1.0, "BC(disjoint) != 1");
    return out;
}

// --------------------------------------------------------------------------
// 10. End-to-end determinism of the report subcommand.
Outcome criterion_determinism(const std::string& cli) {
    Outcome out;
    if (cli.empty()) {
        out.pass = false;
        out.detail = "CLI path not provided (argv[1] or $SHIFTKIT_BIN)";
        return out;
    }
    oracle::TempDir dir("acceptance_e2e");
    const auto fix = dir.path() / "fix";
    auto shell = [&](const std::string& cmd) {
        const int rc = std::system(cmd.c_str());
        out.require(rc == 0, "command failed: " + cmd);
        return rc == 0;
    };
    if (!shell(cli + " synth --out " + fix.string() +
               " --seed 7 --delta 1.5 --prior-shift 0.3 --cells 4 > /dev/null"))
        return out;
    for (const char* leaf : {"rep1", "rep2"}) {
        if (!shell(cli + " report --manifest " + (fix / "manifest.json").string() + " --out " +
                   (dir.path() / leaf).string() + " > /dev/null"))
            return out;
    }
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    std::size_t compared = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir.path() / "rep1")) {
        const auto name = entry.path().filename();
        out.require(slurp(entry.path()) == slurp(dir.path() / "rep2" / name),
                    "output differs: " + name.string());
        ++compared;
    }
    out.require(compared >= 8, "expected at least 8 report artifacts");
    out.detail += (out.detail.empty() ? "" : "; ") + std::to_string(compared) +
                  " artifacts byte-identical";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli = argc > 1 ? argv[1] : "";
    if (cli.empty()) {
        if (const char* env = std::getenv("SHIFTKIT_BIN")) cli = env;
    }

    using Criterion = std::pair<std::string, std::function<Outcome()>>;
    const std::vector<Criterion> criteria{
        {"distance correctness vs direct-summation oracle", criterion_distances},
        {"expected-accuracy identity under injected shift", criterion_expected_accuracy},
        {"quantification inversion (AC/PCC/CC)", criterion_quantification},
        {"Hu-moment rotation/translation invariance", criterion_hu_invariance},
        {"crop index and blurriness hand oracles", criterion_crop_blur},
        {"quantile regression pinball optimality", criterion_quantile},
        {"sensitivity recovery on the delta-sweep harness", criterion_sensitivity_recovery},
        {"ensemble argmax and abstention monotonicity", criterion_ensemble_abstention},
        {"metric identities (micro-recall, bias, Bray-Curtis)", criterion_metric_identities},
        {"end-to-end report determinism", [&] { return criterion_determinism(cli); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        std::cout << (out.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first;
        if (!out.detail.empty()) std::cout << " [" << out.detail << "]";
        std::cout << '\n';
        failures += out.pass ? 0 : 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
              << '\n';
    return failures == 0 ? 0 : 1;
}
