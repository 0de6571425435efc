// shiftkit: dataset-shift diagnostics over classifier confidences and image
// features. Subcommands cover feature extraction, metrics, distribution
// distances, sensitivity analysis, prediction combination, quantification,
// synthetic fixtures, and the combined diagnosis report.

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shiftkit/pipeline.hpp"

namespace {

void add_common(CLI::App* cmd, shiftkit::pipeline::RunConfig& cfg, bool needs_manifest = true) {
    if (needs_manifest)
        cmd->add_option("--manifest", cfg.manifest, "Path to manifest.json")->required();
    cmd->add_option("--out", cfg.out_dir, "Output directory")->required();
    cmd->add_option("--jobs", cfg.jobs, "Worker threads for per-image work");
}

void add_analysis(CLI::App* cmd, shiftkit::pipeline::RunConfig& cfg,
                  std::string& metric, std::string& mode, std::string& dy_mode) {
    cmd->add_option("--bins", cfg.bins, "Histogram bins for binned distances");
    cmd->add_option("--min-class-count", cfg.min_class_count,
                    "Minimum OOD support for per-class distances");
    cmd->add_option("--pca-variance", cfg.pca_variance,
                    "Cumulative explained-variance threshold for retained components");
    cmd->add_option("--metric", metric, "Distance metric: hellinger|wasserstein|kl");
    cmd->add_option("--mode", mode, "Distance mode: class-pca|feature|class|marginal");
    cmd->add_option("--dy-mode", dy_mode, "d_y formula: cosine|literal");
    cmd->add_option("--kl-alpha", cfg.kl_alpha, "Additive smoothing for the KL divergence");
    cmd->add_option("--confidences", cfg.confidence_tag,
                    "Confidence tag to analyze (default: first per set)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dataset-shift diagnostics toolkit"};
    app.require_subcommand(1);

    shiftkit::pipeline::RunConfig cfg;
    std::string metric = "hellinger", mode = "class-pca", dy_mode = "cosine";

    auto* extract = app.add_subcommand("extract", "Extract image descriptors to features.csv");
    extract->add_option("--input", cfg.input_dir, "Directory of PNG/JPEG/PPM images")->required();
    extract->add_flag("--mask-color-stats", cfg.mask_color_stats,
                      "Restrict color statistics to the object mask");
    extract->add_option("--rgb-stats", cfg.rgb_stats_out,
                        "Also fit per-channel RGB statistics and write them as JSON");
    add_common(extract, cfg, false);

    auto* metrics_cmd = app.add_subcommand("metrics", "Classification and quantification metrics");
    add_common(metrics_cmd, cfg);
    metrics_cmd->add_option("--confidences", cfg.confidence_tag,
                            "Confidence tag to analyze (default: first per set)");

    auto* shift_cmd = app.add_subcommand("shift", "Distribution distances against the train set");
    add_common(shift_cmd, cfg);
    add_analysis(shift_cmd, cfg, metric, mode, dy_mode);

    auto* sens = app.add_subcommand("sensitivity", "Drop-vs-distance regressions and Q rankings");
    add_common(sens, cfg);
    add_analysis(sens, cfg, metric, mode, dy_mode);
    sens->add_option("--q-threshold", cfg.q_threshold, "Report threshold on Q_F1");
    sens->add_option("--min-cells", cfg.min_cells,
                     "Cells with min support required for per-class eligibility");

    auto* ensemble = app.add_subcommand("ensemble", "Combine member confidences");
    add_common(ensemble, cfg);
    ensemble->add_option("--set", cfg.set_name, "Set whose confidences to combine")->required();
    ensemble->add_option("--tags", cfg.tags, "Member tags (default: all in the set)")
        ->delimiter(',');
    ensemble->add_option("--combine", cfg.combine, "arithmetic|geometric");

    auto* tta = app.add_subcommand("tta", "Average confidences over TTA views");
    add_common(tta, cfg);
    tta->add_option("--set", cfg.set_name, "Set whose views to aggregate")->required();
    tta->add_option("--tags", cfg.tags, "View tags (default: all in the set)")->delimiter(',');

    auto* abstain = app.add_subcommand("abstain", "Abstention curve over thresholds");
    add_common(abstain, cfg);
    abstain->add_option("--set", cfg.set_name, "Target set (default: merged OOD cells)");
    abstain->add_option("--thresholds", cfg.thresholds, "Threshold list")->delimiter(',');
    abstain->add_option("--confidences", cfg.confidence_tag, "Confidence tag");

    auto* quantify = app.add_subcommand("quantify", "CC/AC/PCC/PAC abundance estimates");
    add_common(quantify, cfg);
    quantify->add_option("--set", cfg.set_name, "Target set (default: merged OOD cells)");
    quantify->add_option("--method", cfg.quant_method, "CC|AC|PCC|PAC|all");
    quantify->add_option("--confidences", cfg.confidence_tag, "Confidence tag");

    auto* synth = app.add_subcommand("synth", "Write a synthetic fixture in the corpus schema");
    add_common(synth, cfg, false);
    synth->add_option("--seed", cfg.seed, "Generator seed");
    synth->add_option("--classes", cfg.synth_classes, "Number of classes");
    synth->add_option("--features", cfg.synth_features, "Number of features");
    synth->add_option("--n-train", cfg.synth_train, "Training set size");
    synth->add_option("--n-val", cfg.synth_val, "Validation set size");
    synth->add_option("--n-test", cfg.synth_test, "Test set size");
    synth->add_option("--cells", cfg.synth_cells, "Number of OOD cells");
    synth->add_option("--cell-size", cfg.synth_cell_size, "Samples per OOD cell");
    synth->add_option("--delta", cfg.synth_delta,
                      "Max compositional mean offset (sigma units, ramped across cells)");
    synth->add_option("--prior-shift", cfg.synth_prior_shift,
                      "Max blend toward the reversed prior (ramped across cells)");
    synth->add_option("--separation", cfg.synth_separation, "Centroid spacing in sigma units");
    synth->add_option("--temperature", cfg.synth_temperature, "Classifier softmax temperature");

    auto* report = app.add_subcommand("report", "Full identify/characterize/cure diagnosis");
    add_common(report, cfg);
    add_analysis(report, cfg, metric, mode, dy_mode);
    report->add_option("--q-threshold", cfg.q_threshold, "Report threshold on Q_F1");
    report->add_option("--min-cells", cfg.min_cells,
                       "Cells with min support required for per-class eligibility");
    report->add_option("--thresholds", cfg.thresholds, "Abstention threshold list")
        ->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        cfg.metric = shiftkit::shift::metric_from_name(metric);
        cfg.mode = shiftkit::shift::mode_from_name(mode);
        if (dy_mode == "cosine")
            cfg.dy_mode = shiftkit::shift::DyMode::Cosine;
        else if (dy_mode == "literal")
            cfg.dy_mode = shiftkit::shift::DyMode::Literal;
        else
            throw shiftkit::ValidationError("unknown dy mode: " + dy_mode);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    cfg.subcommand = app.get_subcommands().front()->get_name();
    return shiftkit::pipeline::run(cfg);
}
