#pragma once
// Subcommand pipelines behind the CLI: run configuration, report composition,
// and JSON/CSV/SVG emission. Kept out of main() so tests can drive the same
// code paths that the binary runs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shiftkit/corpus.hpp"
#include "shiftkit/shift.hpp"

namespace shiftkit::pipeline {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

struct RunConfig {
    std::string subcommand;
    std::filesystem::path manifest;
    std::filesystem::path out_dir;

    std::size_t bins = 20;
    std::size_t min_class_count = 10;
    std::size_t min_cells = 4;
    double pca_variance = 0.95;
    shift::DistanceMetric metric = shift::DistanceMetric::Hellinger;
    shift::DistanceMode mode = shift::DistanceMode::ClassPca;
    shift::DyMode dy_mode = shift::DyMode::Cosine;
    double kl_alpha = 1e-6;
    double q_threshold = 0.7;
    std::vector<double> thresholds = {0,   0.1, 0.2,  0.3,  0.4,  0.5, 0.6,
                                      0.7, 0.8, 0.9, 0.95, 0.99, 0.999};
    std::uint64_t seed = 1;
    int jobs = 1;

    std::string confidence_tag;      // empty: first tag of each set
    std::string set_name;            // target set; empty: merged OOD cells
    std::vector<std::string> tags;   // ensemble/TTA members; empty: all in set
    std::string combine = "arithmetic";
    std::string quant_method = "all";
    bool mask_color_stats = false;   // extract: restrict color stats to the mask

    std::filesystem::path input_dir;      // extract
    std::filesystem::path rgb_stats_out;  // extract: optional ChannelStats JSON

    // synth fixture parameters
    std::size_t synth_classes = 3;
    std::size_t synth_features = 5;
    std::size_t synth_train = 2000;
    std::size_t synth_val = 300;
    std::size_t synth_test = 600;
    std::size_t synth_cells = 5;
    std::size_t synth_cell_size = 400;
    double synth_delta = 0.0;        // max compositional offset, sigma units
    double synth_prior_shift = 0.0;  // max blend toward the reversed prior
    double synth_separation = 2.5;   // centroid spacing, sigma units
    double synth_temperature = 2.0;
};

// Dispatches on config.subcommand. Exit codes: 0 ok, 1 usage error,
// 2 data validation error, 3 numerical failure.
int run(const RunConfig& config);

void run_extract(const RunConfig&);
void run_metrics(const RunConfig&);
void run_shift(const RunConfig&);
void run_sensitivity(const RunConfig&);
void run_ensemble(const RunConfig&);
void run_tta(const RunConfig&);
void run_abstain(const RunConfig&);
void run_quantify(const RunConfig&);
void run_synth(const RunConfig&);
void run_report(const RunConfig&);

}  // namespace shiftkit::pipeline
