#include "shiftkit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <thread>

#include <json.hpp>

#include "shiftkit/decide.hpp"
#include "shiftkit/imgfeat.hpp"
#include "shiftkit/metrics.hpp"
#include "shiftkit/sensitivity.hpp"
#include "shiftkit/svg.hpp"
#include "shiftkit/synth.hpp"

namespace shiftkit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_json(const RunConfig& cfg) {
    // The output directory is not echoed: reports must be byte-identical
    // when the same inputs are written to different places.
    json j;
    j["subcommand"] = cfg.subcommand;
    j["manifest"] = cfg.manifest.string();
    j["bins"] = cfg.bins;
    j["min_class_count"] = cfg.min_class_count;
    j["min_cells"] = cfg.min_cells;
    j["pca_variance"] = cfg.pca_variance;
    j["metric"] = shift::metric_name(cfg.metric);
    j["mode"] = shift::mode_name(cfg.mode);
    j["dy_mode"] = cfg.dy_mode == shift::DyMode::Cosine ? "cosine" : "literal";
    j["kl_alpha"] = cfg.kl_alpha;
    j["q_threshold"] = cfg.q_threshold;
    j["thresholds"] = cfg.thresholds;
    j["seed"] = cfg.seed;
    j["jobs"] = cfg.jobs;
    j["confidence_tag"] = cfg.confidence_tag;
    j["set"] = cfg.set_name;
    j["tags"] = cfg.tags;
    j["combine"] = cfg.combine;
    j["quant_method"] = cfg.quant_method;
    j["mask_color_stats"] = cfg.mask_color_stats;
    return j;
}

json report_header(const RunConfig& cfg) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["config"] = config_json(cfg);
    return j;
}

void ensure_out_dir(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) throw ValidationError("an output directory is required (--out)");
    fs::create_directories(cfg.out_dir);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

corpus::TestCellSet load(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw ValidationError("a manifest path is required (--manifest)");
    return corpus::load_manifest(cfg.manifest);
}

const corpus::LoadedSet& train_set(const corpus::TestCellSet& cells) {
    const auto* train = cells.find_role(corpus::SetRole::Train);
    if (!train)
        throw ValidationError("manifest has no set with role 'train'; drops, expected accuracy "
                              "and ID statistics need one");
    return *train;
}

const corpus::ConfidenceMatrix& pick_confidences(const corpus::LoadedSet& set,
                                                 const std::string& tag) {
    if (!tag.empty()) return set.confidences_for(tag);
    if (set.confidences.empty())
        throw ValidationError("set '" + set.labels.name +
                              "' has no confidences; supply a confidences entry in the manifest");
    return set.confidences.front();
}

const corpus::FeatureTable& need_features(const corpus::LoadedSet& set) {
    if (!set.features)
        throw ValidationError("set '" + set.labels.name +
                              "' has no features; add a features_csv entry to the manifest");
    return *set.features;
}

// Merges the OOD cells of a manifest into one synthetic set ("ood_merged").
corpus::LoadedSet merge_ood(const corpus::TestCellSet& cells, const std::string& tag) {
    const auto ood = cells.ood_cells();
    if (ood.empty()) throw ValidationError("manifest has no OOD cells");
    corpus::LoadedSet merged;
    merged.labels.name = "ood_merged";
    merged.labels.role = corpus::SetRole::OodCell;
    corpus::ConfidenceMatrix conf;
    // Resolve the tag once so every cell contributes the same model.
    const std::string resolved = tag.empty() ? pick_confidences(*ood.front(), tag).tag : tag;
    conf.tag = resolved;
    bool have_features = true;
    corpus::FeatureTable features;
    for (const auto* cell : ood) {
        const auto& c = pick_confidences(*cell, resolved);
        for (std::size_t i = 0; i < cell->labels.size(); ++i) {
            const std::string id = cell->labels.name + "/" + cell->labels.sample_ids[i];
            merged.labels.sample_ids.push_back(id);
            merged.labels.labels.push_back(cell->labels.labels[i]);
            conf.sample_ids.push_back(id);
            conf.rows.push_back(c.rows[i]);
        }
        if (cell->features) {
            if (features.feature_names.empty())
                features.feature_names = cell->features->feature_names;
            for (std::size_t i = 0; i < cell->features->rows(); ++i) {
                features.sample_ids.push_back(cell->labels.name + "/" +
                                              cell->features->sample_ids[i]);
                features.values.push_back(cell->features->values[i]);
            }
        } else {
            have_features = false;
        }
    }
    merged.confidences.push_back(std::move(conf));
    if (have_features) merged.features = std::move(features);
    return merged;
}

const corpus::LoadedSet& resolve_target(const corpus::TestCellSet& cells, const RunConfig& cfg,
                                        corpus::LoadedSet& merged_storage) {
    if (!cfg.set_name.empty()) return cells.set_named(cfg.set_name);
    merged_storage = merge_ood(cells, cfg.confidence_tag);
    return merged_storage;
}

std::string csv_value(double v) { return fmt_double(v); }

json metrics_json(const metrics::MetricsRecord& m, const corpus::ClassVocabulary& vocab) {
    json j;
    j["n"] = m.n;
    j["accuracy"] = m.accuracy;
    j["macro_recall"] = m.macro_recall;
    j["macro_precision"] = m.macro_precision;
    j["macro_f1"] = m.macro_f1;
    if (is_defined(m.expected_accuracy)) j["expected_accuracy"] = m.expected_accuracy;
    j["nmae"] = m.nmae;
    j["bray_curtis"] = m.bray_curtis;
    j["excluded_from_macro"] = {{"recall", m.excluded_recall},
                                {"precision", m.excluded_precision},
                                {"f1", m.excluded_f1}};
    j["nmae_skipped_classes"] = m.nmae_skipped;
    json per_class = json::object();
    for (std::size_t y = 0; y < vocab.size(); ++y) {
        per_class[vocab.name(y)] = {{"recall", m.recall[y]},
                                    {"precision", m.precision[y]},
                                    {"f1", m.f1[y]},
                                    {"fallout", m.fallout[y]},
                                    {"bias", m.bias[y]}};
    }
    j["per_class"] = std::move(per_class);
    return j;
}

void write_per_class_csv(const fs::path& path, const metrics::MetricsRecord& m,
                         const metrics::ConfusionCounts& conf,
                         const corpus::ClassVocabulary& vocab) {
    std::string text = "class,support,predicted,recall,precision,f1,fallout,bias\n";
    const auto support = conf.support();
    const auto predicted = conf.predicted_counts();
    for (std::size_t y = 0; y < vocab.size(); ++y) {
        text += vocab.name(y) + ',' + std::to_string(support[y]) + ',' +
                std::to_string(predicted[y]) + ',' + csv_value(m.recall[y]) + ',' +
                csv_value(m.precision[y]) + ',' + csv_value(m.f1[y]) + ',' +
                csv_value(m.fallout[y]) + ',' + csv_value(m.bias[y]) + '\n';
    }
    write_text(path, text);
}

struct SetAnalysis {
    const corpus::LoadedSet* set = nullptr;
    metrics::ConfusionCounts confusion;
    metrics::MetricsRecord record;
};

SetAnalysis analyze_set(const corpus::LoadedSet& set, const corpus::TestCellSet& cells,
                        const RunConfig& cfg, const std::vector<double>* id_recall) {
    SetAnalysis a;
    a.set = &set;
    const auto& conf = pick_confidences(set, cfg.confidence_tag);
    a.confusion = metrics::confusion(set.labels.labels, conf.predictions(), cells.vocab);
    if (id_recall) {
        std::vector<double> abundances;
        for (std::size_t c : a.confusion.support()) abundances.push_back(static_cast<double>(c));
        a.record = metrics::compute_metrics(a.confusion, abundances, *id_recall);
    } else {
        a.record = metrics::compute_metrics(a.confusion);
    }
    return a;
}

std::vector<double> normalized_counts(const std::vector<std::size_t>& counts) {
    double total = 0.0;
    for (std::size_t c : counts) total += static_cast<double>(c);
    std::vector<double> out(counts.size(), 0.0);
    if (total > 0.0)
        for (std::size_t i = 0; i < counts.size(); ++i)
            out[i] = static_cast<double>(counts[i]) / total;
    return out;
}

shift::CompositionalOptions distance_options(const RunConfig& cfg, shift::DistanceMode mode) {
    shift::CompositionalOptions opts;
    opts.mode = mode;
    opts.metric = cfg.metric;
    opts.n_bins = cfg.bins;
    opts.min_class_support = cfg.min_class_count;
    opts.pca_variance = cfg.pca_variance;
    opts.kl_alpha = cfg.kl_alpha;
    return opts;
}

json distance_report_json(const shift::DistanceReport& report) {
    json j;
    j["mode"] = shift::mode_name(report.mode);
    j["metric"] = shift::metric_name(report.metric);
    j["n_bins"] = report.n_bins;
    j["min_class_support"] = report.min_class_support;
    j["aggregate"] = report.aggregate;
    j["excluded_classes"] = report.excluded_classes;
    j["dropped_undefined"] = report.dropped_undefined;
    j["skipped_rows_train"] = report.skipped_rows_train;
    j["skipped_rows_test"] = report.skipped_rows_test;
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"key", r.key},
                        {"distance", r.distance},
                        {"support_train", r.support_train},
                        {"support_test", r.support_test},
                        {"per_component", r.per_component}});
    }
    j["rows"] = std::move(rows);
    return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// extract

void run_extract(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    if (cfg.input_dir.empty()) throw ValidationError("extract needs --input <directory>");

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(cfg.input_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no PNG/JPEG/PPM files in " + cfg.input_dir.string());

    const auto scope = cfg.mask_color_stats ? imgfeat::ColorStatsScope::ObjectOnly
                                            : imgfeat::ColorStatsScope::AllPixels;
    std::vector<std::vector<double>> rows(files.size());
    std::vector<std::string> errors(files.size());
    std::atomic<std::size_t> next{0};
    const int jobs = std::max(1, cfg.jobs);
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < files.size(); i = next.fetch_add(1)) {
            try {
                const auto img = imgfeat::load_image(files[i]);
                rows[i] = imgfeat::extract_descriptors(img, scope).to_row();
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < files.size(); ++i)
        if (!errors[i].empty())
            throw ValidationError("extraction failed for " + files[i].string() + ": " + errors[i]);

    corpus::FeatureTable table;
    table.feature_names = imgfeat::DescriptorVector::feature_names();
    for (std::size_t i = 0; i < files.size(); ++i) {
        table.sample_ids.push_back(files[i].stem().string());
        table.values.push_back(std::move(rows[i]));
    }
    corpus::write_features_csv(table, cfg.out_dir / "features.csv");

    json doc = report_header(cfg);
    doc["images"] = files.size();
    doc["features_csv"] = "features.csv";
    if (!cfg.rgb_stats_out.empty()) {
        std::vector<imgfeat::RasterImage> images;
        images.reserve(files.size());
        for (const auto& f : files) images.push_back(imgfeat::load_image(f));
        imgfeat::save_channel_stats(imgfeat::fit_rgb_stats(images), cfg.rgb_stats_out);
        doc["rgb_stats"] = cfg.rgb_stats_out.filename().string();
    }
    write_json(cfg.out_dir / "extract.json", doc);
}

// ---------------------------------------------------------------------------
// metrics

void run_metrics(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    const auto& train = train_set(cells);
    const SetAnalysis train_a = analyze_set(train, cells, cfg, nullptr);

    json doc = report_header(cfg);
    json sets = json::object();
    std::vector<metrics::MetricsRecord> cell_records;
    metrics::ConfusionCounts merged;

    for (const auto& set : cells.sets) {
        if (set.confidences.empty()) continue;
        const bool is_train = &set == &train;
        const SetAnalysis a =
            analyze_set(set, cells, cfg, is_train ? nullptr : &train_a.record.recall);
        json js = metrics_json(a.record, cells.vocab);
        if (!is_train) {
            js["accuracy_drop"] =
                metrics::performance_drop(train_a.record.accuracy, a.record.accuracy);
            js["macro_f1_drop"] =
                metrics::performance_drop(train_a.record.macro_f1, a.record.macro_f1);
            if (is_defined(a.record.expected_accuracy))
                js["expected_accuracy_gap"] = a.record.expected_accuracy - a.record.accuracy;
        }
        js["role"] = corpus::role_name(set.labels.role);
        sets[set.labels.name] = std::move(js);
        write_per_class_csv(cfg.out_dir / ("metrics_" + set.labels.name + ".csv"), a.record,
                            a.confusion, cells.vocab);
        if (set.labels.role == corpus::SetRole::OodCell) {
            cell_records.push_back(a.record);
            merged.merge(a.confusion);
        }
    }
    doc["sets"] = std::move(sets);

    if (!cell_records.empty()) {
        const auto agg = metrics::ood_aggregate(cell_records, merged);
        json jo;
        jo["micro"] = metrics_json(agg.micro, cells.vocab);
        jo["macro"] = {{"accuracy", agg.macro_accuracy},
                       {"accuracy_se", agg.macro_accuracy_se},
                       {"f1", agg.macro_f1},
                       {"f1_se", agg.macro_f1_se},
                       {"recall", agg.macro_recall},
                       {"recall_se", agg.macro_recall_se},
                       {"precision", agg.macro_precision},
                       {"precision_se", agg.macro_precision_se},
                       {"nmae", agg.macro_nmae},
                       {"nmae_se", agg.macro_nmae_se},
                       {"bray_curtis", agg.macro_bray_curtis},
                       {"bray_curtis_se", agg.macro_bray_curtis_se},
                       {"cells", agg.num_cells}};
        doc["ood"] = std::move(jo);
    }
    write_json(cfg.out_dir / "metrics.json", doc);
}

// ---------------------------------------------------------------------------
// shift

void run_shift(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    const auto& train = train_set(cells);
    const auto& train_features = need_features(train);
    const auto train_counts = corpus::class_counts(train.labels, cells.vocab);

    shift::ProjectionModel fitted;
    const shift::ProjectionModel* model = nullptr;
    if (cfg.mode != shift::DistanceMode::Feature) {
        fitted = shift::fit_projection(train_features, cfg.pca_variance);
        model = &fitted;
    }

    json doc = report_header(cfg);
    if (model) {
        doc["projection"] = {{"retained_components", fitted.retained},
                             {"dropped_constant", fitted.dropped_constant},
                             {"explained_variance_ratio", fitted.explained_variance_ratio}};
    }
    json sets = json::object();
    const auto opts = distance_options(cfg, cfg.mode);
    for (const auto& set : cells.sets) {
        if (&set == &train || !set.features) continue;
        const auto report =
            shift::compositional_distance(train_features, train.labels.labels, *set.features,
                                          set.labels.labels, cells.vocab, opts, model);
        json js = distance_report_json(report);
        js["d_y"] = shift::distributional_distance(
            normalized_counts(train_counts),
            normalized_counts(corpus::class_counts(set.labels, cells.vocab)), cfg.dy_mode);
        sets[set.labels.name] = std::move(js);

        std::string csv = "key,distance,support_train,support_test\n";
        for (const auto& r : report.rows)
            csv += r.key + ',' + csv_value(r.distance) + ',' + std::to_string(r.support_train) +
                   ',' + std::to_string(r.support_test) + '\n';
        write_text(cfg.out_dir / ("shift_" + set.labels.name + ".csv"), csv);
    }
    doc["sets"] = std::move(sets);
    write_json(cfg.out_dir / "shift.json", doc);
}

// ---------------------------------------------------------------------------
// sensitivity

namespace {

struct SensitivityBundle {
    // Per-cell aggregate distance and drops.
    std::vector<std::string> cell_names;
    std::vector<double> cell_distance, cell_acc_drop, cell_f1_drop;
    // Per-feature distance per cell, aligned with cell_names (kUndefined
    // where a feature had no usable values in a cell).
    std::map<std::string, std::vector<double>> feature_distances;
    // (class, cell) scatter points behind the regression lines.
    std::vector<sensitivity::PointXY> class_points;
    std::vector<sensitivity::SensitivityRecord> feature_records;
    std::vector<sensitivity::SensitivityRecord> class_records;
    sensitivity::RecommendationReport recommendations;
};

SensitivityBundle sensitivity_pipeline(const corpus::TestCellSet& cells, const RunConfig& cfg) {
    const auto& train = train_set(cells);
    const auto& train_features = need_features(train);
    const auto ood = cells.ood_cells();
    if (ood.size() < 2)
        throw ValidationError("sensitivity analysis needs at least 2 OOD cells");

    const SetAnalysis train_a = analyze_set(train, cells, cfg, nullptr);
    const auto pca_model = shift::fit_projection(train_features, cfg.pca_variance);

    SensitivityBundle bundle;
    std::map<std::string, sensitivity::SubjectSeries> feature_series;
    std::map<std::string, sensitivity::SubjectSeries> class_series;
    std::vector<std::vector<std::size_t>> counts_per_cell;  // [cell][class]

    const auto feature_opts = distance_options(cfg, shift::DistanceMode::Feature);
    const auto class_opts = distance_options(cfg, shift::DistanceMode::Class);
    const auto agg_opts = distance_options(cfg, shift::DistanceMode::ClassPca);

    for (const auto* cell : ood) {
        const auto& cell_features = need_features(*cell);
        const SetAnalysis a = analyze_set(*cell, cells, cfg, &train_a.record.recall);
        const double acc_drop = metrics::performance_drop(train_a.record.accuracy, a.record.accuracy);
        const double f1_drop = metrics::performance_drop(train_a.record.macro_f1, a.record.macro_f1);

        const auto agg_report =
            shift::compositional_distance(train_features, train.labels.labels, cell_features,
                                          cell->labels.labels, cells.vocab, agg_opts, &pca_model);
        bundle.cell_names.push_back(cell->labels.name);
        bundle.cell_distance.push_back(agg_report.aggregate);
        bundle.cell_acc_drop.push_back(acc_drop);
        bundle.cell_f1_drop.push_back(f1_drop);

        const auto feat_report =
            shift::compositional_distance(train_features, train.labels.labels, cell_features,
                                          cell->labels.labels, cells.vocab, feature_opts, nullptr);
        for (const auto& name : train_features.feature_names)
            bundle.feature_distances[name].push_back(kUndefined);
        for (const auto& row : feat_report.rows) {
            auto& series = feature_series[row.key];
            series.subject = row.key;
            series.acc_points.push_back({row.distance, acc_drop});
            series.f1_points.push_back({row.distance, f1_drop});
            bundle.feature_distances[row.key].back() = row.distance;
        }

        const auto class_report =
            shift::compositional_distance(train_features, train.labels.labels, cell_features,
                                          cell->labels.labels, cells.vocab, class_opts, &pca_model);
        counts_per_cell.push_back(corpus::class_counts(cell->labels, cells.vocab));
        for (const auto& row : class_report.rows) {
            const std::size_t y = cells.vocab.index_of(row.key);
            const double train_f1 = train_a.record.f1[y];
            const double cell_f1 = a.record.f1[y];
            if (!is_defined(train_f1) || !is_defined(cell_f1)) continue;  // zero support
            const double class_drop = metrics::performance_drop(train_f1, cell_f1);
            const double train_rec = train_a.record.recall[y];
            const double cell_rec = a.record.recall[y];
            auto& series = class_series[row.key];
            series.subject = row.key;
            series.f1_points.push_back({row.distance, class_drop});
            if (is_defined(train_rec) && is_defined(cell_rec))
                series.acc_points.push_back(
                    {row.distance, metrics::performance_drop(train_rec, cell_rec)});
            bundle.class_points.push_back({row.distance, class_drop});
        }
    }

    std::vector<sensitivity::SubjectSeries> feature_list;
    for (auto& [name, series] : feature_series) feature_list.push_back(std::move(series));
    bundle.feature_records = sensitivity::per_feature_sensitivities(feature_list);

    std::vector<sensitivity::SubjectSeries> class_list;
    std::vector<std::vector<std::size_t>> class_counts;  // aligned with class_list
    for (auto& [name, series] : class_series) {
        const std::size_t y = cells.vocab.index_of(name);
        std::vector<std::size_t> counts;
        for (const auto& per_cell : counts_per_cell) counts.push_back(per_cell[y]);
        class_counts.push_back(std::move(counts));
        class_list.push_back(std::move(series));
    }
    if (!class_list.empty())
        bundle.class_records = sensitivity::per_class_sensitivities(
            class_list, class_counts, cfg.min_class_count, cfg.min_cells);

    bundle.recommendations =
        sensitivity::recommend_augmentations(bundle.feature_records, cfg.q_threshold);
    return bundle;
}

json sensitivity_records_json(const std::vector<sensitivity::SensitivityRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        json j = {{"subject", r.subject},
                  {"q_acc", r.q_acc},
                  {"q_f1", r.q_f1},
                  {"n_points", r.n_points},
                  {"eligible", r.eligible}};
        if (!r.eligible) j["ineligible_reason"] = r.ineligible_reason;
        arr.push_back(std::move(j));
    }
    return arr;
}

std::string sensitivity_records_csv(const std::vector<sensitivity::SensitivityRecord>& records) {
    std::string csv = "subject,q_acc,q_f1,n_points,eligible,ineligible_reason\n";
    for (const auto& r : records)
        csv += r.subject + ',' + csv_value(r.q_acc) + ',' + csv_value(r.q_f1) + ',' +
               std::to_string(r.n_points) + ',' + (r.eligible ? "true" : "false") + ',' +
               r.ineligible_reason + '\n';
    return csv;
}

json recommendations_json(const sensitivity::RecommendationReport& rec) {
    json j;
    json arr = json::array();
    for (const auto& r : rec.recommendations)
        arr.push_back({{"family", r.family}, {"features", r.features}});
    j["recommendations"] = std::move(arr);
    j["unmapped_features"] = rec.unmapped_features;
    if (!rec.note.empty()) j["note"] = rec.note;
    return j;
}

std::string sensitivity_figure(const SensitivityBundle& bundle) {
    svg::ScatterSpec spec;
    spec.title = "F1 drop vs distance from the training set";
    spec.x_label = "distance";
    spec.y_label = "F1 drop";
    svg::Series dots{"class in cell", "#4477aa", bundle.class_points};
    svg::Series squares{"cell aggregate", "#cc6677", {}};
    for (std::size_t i = 0; i < bundle.cell_distance.size(); ++i)
        squares.points.push_back({bundle.cell_distance[i], bundle.cell_f1_drop[i]});
    spec.series = {dots, squares};

    const auto& pts = bundle.class_points.size() >= 3 ? bundle.class_points : squares.points;
    if (pts.size() >= 3) {
        try {
            const auto mean_fit = sensitivity::ols_fit(pts);
            spec.lines.push_back({"mean", "#222222", false, mean_fit.slope, mean_fit.intercept});
            for (double tau : {0.05, 0.5, 0.95}) {
                const auto qf = sensitivity::quantile_fit(pts, tau);
                spec.lines.push_back({"q" + fmt_double(tau), "#888888", true, qf.slope,
                                      qf.intercept});
            }
        } catch (const NumericalError&) {
            // Degenerate x spread: points only.
        }
    }
    return svg::render_scatter(spec);
}

}  // namespace

void run_sensitivity(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    const auto bundle = sensitivity_pipeline(cells, cfg);

    json doc = report_header(cfg);
    json cells_json = json::array();
    for (std::size_t i = 0; i < bundle.cell_names.size(); ++i) {
        json jc = {{"cell", bundle.cell_names[i]},
                   {"distance", bundle.cell_distance[i]},
                   {"accuracy_drop", bundle.cell_acc_drop[i]},
                   {"f1_drop", bundle.cell_f1_drop[i]}};
        if (bundle.cell_distance[i] > 0.0) {
            jc["q_acc_ratio"] =
                sensitivity::sensitivity_ratio(bundle.cell_acc_drop[i], bundle.cell_distance[i]);
            jc["q_f1_ratio"] =
                sensitivity::sensitivity_ratio(bundle.cell_f1_drop[i], bundle.cell_distance[i]);
        }
        cells_json.push_back(std::move(jc));
    }
    doc["cells"] = std::move(cells_json);
    doc["per_feature"] = sensitivity_records_json(bundle.feature_records);
    doc["per_class"] = sensitivity_records_json(bundle.class_records);
    doc["augmentations"] = recommendations_json(bundle.recommendations);
    write_json(cfg.out_dir / "sensitivity.json", doc);

    write_text(cfg.out_dir / "sensitivity_features.csv",
               sensitivity_records_csv(bundle.feature_records));
    write_text(cfg.out_dir / "sensitivity_classes.csv",
               sensitivity_records_csv(bundle.class_records));
    write_text(cfg.out_dir / "fig_sensitivity.svg", sensitivity_figure(bundle));
}

// ---------------------------------------------------------------------------
// ensemble / tta

namespace {

std::vector<corpus::ConfidenceMatrix> gather_members(const corpus::LoadedSet& set,
                                                     const std::vector<std::string>& tags) {
    std::vector<corpus::ConfidenceMatrix> members;
    if (tags.empty()) {
        members = set.confidences;
    } else {
        for (const auto& tag : tags) members.push_back(set.confidences_for(tag));
    }
    return members;
}

}  // namespace

void run_ensemble(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    if (cfg.set_name.empty()) throw ValidationError("ensemble needs --set <name>");
    const auto& set = cells.set_named(cfg.set_name);

    decide::EnsembleSpec spec;
    spec.members = gather_members(set, cfg.tags);
    if (cfg.combine == "arithmetic")
        spec.combine = decide::CombineRule::Arithmetic;
    else if (cfg.combine == "geometric")
        spec.combine = decide::CombineRule::Geometric;
    else
        throw ValidationError("unknown combine rule: " + cfg.combine);

    const auto combined = decide::combine(spec);
    const fs::path out_csv = cfg.out_dir / (cfg.set_name + "_" + combined.tag + ".csv");
    corpus::write_confidences_csv(combined, cells.vocab, out_csv);

    json doc = report_header(cfg);
    doc["members"] = json::array();
    for (const auto& m : spec.members) doc["members"].push_back(m.tag);
    doc["output_csv"] = out_csv.filename().string();
    write_json(cfg.out_dir / "ensemble.json", doc);
}

void run_tta(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    if (cfg.set_name.empty()) throw ValidationError("tta needs --set <name>");
    const auto& set = cells.set_named(cfg.set_name);

    const auto views = gather_members(set, cfg.tags);
    const auto combined = decide::tta_aggregate(views);
    const fs::path out_csv = cfg.out_dir / (cfg.set_name + "_tta.csv");
    corpus::write_confidences_csv(combined, cells.vocab, out_csv);

    json doc = report_header(cfg);
    doc["views"] = json::array();
    for (const auto& v : views) doc["views"].push_back(v.tag);
    doc["output_csv"] = out_csv.filename().string();
    write_json(cfg.out_dir / "tta.json", doc);
}

// ---------------------------------------------------------------------------
// abstain / quantify

namespace {

std::string abstention_csv(const std::vector<decide::AbstentionPoint>& curve) {
    std::string csv = "threshold,pct_classified,precision,recall\n";
    for (const auto& p : curve)
        csv += csv_value(p.threshold) + ',' + csv_value(p.pct_classified) + ',' +
               csv_value(p.macro_precision) + ',' + csv_value(p.macro_recall) + '\n';
    return csv;
}

json abstention_json(const std::vector<decide::AbstentionPoint>& curve) {
    json arr = json::array();
    for (const auto& p : curve)
        arr.push_back({{"threshold", p.threshold},
                       {"pct_classified", p.pct_classified},
                       {"macro_precision", p.macro_precision},
                       {"macro_recall", p.macro_recall},
                       {"accuracy_incl_abstained", p.accuracy_incl},
                       {"accuracy_excl_abstained", p.accuracy_excl},
                       {"n_classified", p.n_classified}});
    return arr;
}

struct QuantTable {
    std::vector<decide::QuantMethod> methods;
    std::vector<decide::QuantificationResult> results;
    std::vector<double> truth;
};

QuantTable quant_table(const corpus::TestCellSet& cells, const corpus::LoadedSet& target,
                       const RunConfig& cfg) {
    const auto& train = train_set(cells);
    const auto& train_conf = pick_confidences(train, cfg.confidence_tag);
    const auto id_stats = decide::id_quantification_stats(train_conf, train.labels.labels);
    const auto& conf = pick_confidences(target, cfg.confidence_tag);

    QuantTable table;
    if (cfg.quant_method == "all") {
        table.methods = {decide::QuantMethod::CC, decide::QuantMethod::AC, decide::QuantMethod::PCC,
                         decide::QuantMethod::PAC};
    } else {
        table.methods = {decide::quant_method_from_name(cfg.quant_method)};
    }
    for (auto m : table.methods)
        table.results.push_back(decide::quantify(m, conf, id_stats, target.labels.size()));
    for (std::size_t c : corpus::class_counts(target.labels, cells.vocab))
        table.truth.push_back(static_cast<double>(c));
    return table;
}

json quant_json(const QuantTable& table, const corpus::ClassVocabulary& vocab) {
    json j;
    json per_method = json::object();
    for (std::size_t m = 0; m < table.methods.size(); ++m) {
        const auto& res = table.results[m];
        json jm;
        jm["estimates"] = json::object();
        for (std::size_t y = 0; y < vocab.size(); ++y) {
            jm["estimates"][vocab.name(y)] = {{"estimate", res.estimates[y]},
                                              {"raw", res.raw[y]},
                                              {"clamped", static_cast<bool>(res.clamped[y])},
                                              {"cc_fallback",
                                               static_cast<bool>(res.cc_fallback[y])}};
        }
        jm["warnings"] = res.warnings;
        std::size_t skipped = 0;
        jm["bray_curtis_vs_truth"] = metrics::bray_curtis(res.estimates, table.truth);
        jm["nmae_vs_truth"] = metrics::nmae(res.estimates, table.truth, &skipped);
        per_method[decide::quant_method_name(table.methods[m])] = std::move(jm);
    }
    j["methods"] = std::move(per_method);
    json truth = json::object();
    for (std::size_t y = 0; y < vocab.size(); ++y) truth[vocab.name(y)] = table.truth[y];
    j["true_abundances"] = std::move(truth);
    return j;
}

std::string quant_csv(const QuantTable& table, const corpus::ClassVocabulary& vocab) {
    std::string csv = "class,truth";
    for (auto m : table.methods) csv += ',' + decide::quant_method_name(m);
    csv += '\n';
    for (std::size_t y = 0; y < vocab.size(); ++y) {
        csv += vocab.name(y) + ',' + csv_value(table.truth[y]);
        for (const auto& res : table.results) csv += ',' + csv_value(res.estimates[y]);
        csv += '\n';
    }
    return csv;
}

}  // namespace

void run_abstain(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    corpus::LoadedSet merged;
    const auto& target = resolve_target(cells, cfg, merged);
    const auto& conf = pick_confidences(target, cfg.confidence_tag);
    const auto curve = decide::abstention_curve(conf, target.labels.labels, cfg.thresholds);

    json doc = report_header(cfg);
    doc["set"] = target.labels.name;
    doc["curve"] = abstention_json(curve);
    write_json(cfg.out_dir / "abstain.json", doc);
    write_text(cfg.out_dir / "abstain.csv", abstention_csv(curve));
}

void run_quantify(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    corpus::LoadedSet merged;
    const auto& target = resolve_target(cells, cfg, merged);
    const auto table = quant_table(cells, target, cfg);

    json doc = report_header(cfg);
    doc["set"] = target.labels.name;
    doc["quantification"] = quant_json(table, cells.vocab);
    write_json(cfg.out_dir / "quantify.json", doc);
    write_text(cfg.out_dir / "quantify.csv", quant_csv(table, cells.vocab));
}

// ---------------------------------------------------------------------------
// synth

void run_synth(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const std::size_t nc = cfg.synth_classes;
    const std::size_t nf = cfg.synth_features;
    if (nc < 2) throw ValidationError("synth needs at least 2 classes");
    if (nf < 1) throw ValidationError("synth needs at least 1 feature");

    // Decreasing base prior; class centroids spaced along cycled axes.
    std::vector<double> prior(nc);
    double total = 0.0;
    for (std::size_t y = 0; y < nc; ++y) {
        prior[y] = std::pow(0.75, static_cast<double>(y));
        total += prior[y];
    }
    for (double& p : prior) p /= total;

    std::vector<synth::ClassModel> models(nc);
    for (std::size_t y = 0; y < nc; ++y) {
        models[y].mean.assign(nf, 0.0);
        models[y].stddev.assign(nf, 1.0);
        models[y].mean[y % nf] = cfg.synth_separation * (1.0 + static_cast<double>(y) / nc);
    }
    const auto base =
        synth::make_spec(prior, models, cfg.synth_temperature, cfg.seed);

    corpus::TestCellSet cells;
    std::vector<std::string> names;
    for (std::size_t y = 0; y < nc; ++y) names.push_back("c" + std::to_string(y));
    cells.vocab = corpus::ClassVocabulary(names);

    auto add_set = [&](const std::string& name, corpus::SetRole role,
                       const synth::GenerativeSpec& spec, std::size_t n) {
        auto sample = synth::generate(spec, n, name + "_");
        corpus::LoadedSet set;
        set.labels.name = name;
        set.labels.role = role;
        set.labels.sample_ids = sample.features.sample_ids;
        set.labels.labels = sample.labels;
        set.features = std::move(sample.features);
        set.confidences.push_back(std::move(sample.confidences));
        cells.sets.push_back(std::move(set));
    };

    synth::GenerativeSpec spec = base;
    spec.seed = cfg.seed + 1;
    add_set("train", corpus::SetRole::Train, spec, cfg.synth_train);
    spec.seed = cfg.seed + 2;
    add_set("val", corpus::SetRole::Val, spec, cfg.synth_val);
    spec.seed = cfg.seed + 3;
    add_set("test", corpus::SetRole::Test, spec, cfg.synth_test);

    // Compositional injections drift class 0 toward class 1's centroid; a
    // shift away from every centroid would leave the classifier untouched.
    std::vector<double> drift_dir(nf, 0.0);
    double drift_norm = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
        drift_dir[f] = models[1].mean[f] - models[0].mean[f];
        drift_norm += drift_dir[f] * drift_dir[f];
    }
    drift_norm = std::sqrt(drift_norm);

    std::vector<double> reversed(prior.rbegin(), prior.rend());
    for (std::size_t j = 1; j <= cfg.synth_cells; ++j) {
        const double ramp = static_cast<double>(j) / static_cast<double>(cfg.synth_cells);
        synth::ShiftInjection injection;
        injection.kind = synth::ShiftInjection::Kind::Mixed;
        injection.new_prior.resize(nc);
        const double beta = cfg.synth_prior_shift * ramp;
        for (std::size_t y = 0; y < nc; ++y)
            injection.new_prior[y] = (1.0 - beta) * prior[y] + beta * reversed[y];
        injection.mean_offset_sigma.assign(nc, {});
        injection.mean_offset_sigma[0].assign(nf, 0.0);
        for (std::size_t f = 0; f < nf; ++f)
            injection.mean_offset_sigma[0][f] = cfg.synth_delta * ramp * drift_dir[f] / drift_norm;

        synth::GenerativeSpec shifted = synth::inject(base, injection);
        shifted.seed = cfg.seed + 100 + j;
        add_set("cell" + std::to_string(j), corpus::SetRole::OodCell, shifted,
                cfg.synth_cell_size);
    }

    corpus::write_manifest(cells, cfg.out_dir / "manifest.json");
    json doc = report_header(cfg);
    doc["manifest"] = "manifest.json";
    doc["sets"] = cells.sets.size();
    write_json(cfg.out_dir / "synth.json", doc);
}

// ---------------------------------------------------------------------------
// report

void run_report(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const auto cells = load(cfg);
    const auto& train = train_set(cells);
    const SetAnalysis train_a = analyze_set(train, cells, cfg, nullptr);
    const auto train_counts = corpus::class_counts(train.labels, cells.vocab);

    json doc = report_header(cfg);

    // --- Identify: per-set metrics, drops, OOD aggregation.
    json identify;
    json sets_json = json::object();
    std::vector<metrics::MetricsRecord> cell_records;
    metrics::ConfusionCounts merged_conf;
    std::vector<double> exp_gaps;
    std::vector<std::string> metric_groups;
    std::vector<double> bar_acc, bar_f1;

    for (const auto& set : cells.sets) {
        if (set.confidences.empty()) continue;
        const bool is_train = &set == &train;
        const SetAnalysis a =
            analyze_set(set, cells, cfg, is_train ? nullptr : &train_a.record.recall);
        json js = metrics_json(a.record, cells.vocab);
        js["role"] = corpus::role_name(set.labels.role);
        if (!is_train) {
            js["accuracy_drop"] =
                metrics::performance_drop(train_a.record.accuracy, a.record.accuracy);
            js["macro_f1_drop"] =
                metrics::performance_drop(train_a.record.macro_f1, a.record.macro_f1);
            if (is_defined(a.record.expected_accuracy)) {
                const double gap = a.record.expected_accuracy - a.record.accuracy;
                js["expected_accuracy_gap"] = gap;
                if (set.labels.role == corpus::SetRole::OodCell) exp_gaps.push_back(gap);
            }
        }
        sets_json[set.labels.name] = std::move(js);
        metric_groups.push_back(set.labels.name);
        bar_acc.push_back(a.record.accuracy);
        bar_f1.push_back(a.record.macro_f1);
        if (set.labels.role == corpus::SetRole::OodCell) {
            cell_records.push_back(a.record);
            merged_conf.merge(a.confusion);
        }
    }
    identify["sets"] = std::move(sets_json);
    if (!cell_records.empty()) {
        const auto agg = metrics::ood_aggregate(cell_records, merged_conf);
        identify["ood"] = {{"micro_accuracy", agg.micro.accuracy},
                           {"micro_f1", agg.micro.macro_f1},
                           {"micro_nmae", agg.micro.nmae},
                           {"micro_bray_curtis", agg.micro.bray_curtis},
                           {"macro_accuracy", agg.macro_accuracy},
                           {"macro_accuracy_se", agg.macro_accuracy_se},
                           {"macro_f1", agg.macro_f1},
                           {"macro_f1_se", agg.macro_f1_se},
                           {"macro_nmae", agg.macro_nmae},
                           {"macro_bray_curtis", agg.macro_bray_curtis},
                           {"cells", agg.num_cells}};
        metric_groups.push_back("micro-OOD");
        bar_acc.push_back(agg.micro.accuracy);
        bar_f1.push_back(agg.micro.macro_f1);
        metric_groups.push_back("macro-OOD");
        bar_acc.push_back(agg.macro_accuracy);
        bar_f1.push_back(agg.macro_f1);
    }
    const double mean_gap = exp_gaps.empty() ? kUndefined : mean_of(exp_gaps);
    identify["mean_expected_accuracy_gap"] = mean_gap;
    const bool compositional = is_defined(mean_gap) && mean_gap > 0.02;
    identify["compositional_shift_detected"] = compositional;
    if (compositional)
        identify["diagnosis"] =
            "compositional shift detected: measured accuracy falls below the expected accuracy "
            "reweighted from ID recalls";
    doc["identify"] = std::move(identify);

    // --- Characterize: d_y, distances, sensitivities.
    json characterize;
    json dy_json = json::object();
    double max_dy = 0.0;
    for (const auto* cell : cells.ood_cells()) {
        const double dy = shift::distributional_distance(
            normalized_counts(train_counts),
            normalized_counts(corpus::class_counts(cell->labels, cells.vocab)), cfg.dy_mode);
        dy_json[cell->labels.name] = dy;
        max_dy = std::max(max_dy, dy);
    }
    characterize["d_y"] = std::move(dy_json);
    characterize["distributional_shift_detected"] = max_dy > 0.01;

    // Sensitivity regressions need at least two cells; smaller manifests
    // still get the metric and d_y sections.
    const bool enough_cells = cells.ood_cells().size() >= 2;
    SensitivityBundle bundle;
    if (enough_cells) {
        bundle = sensitivity_pipeline(cells, cfg);
        json cells_json = json::array();
        for (std::size_t i = 0; i < bundle.cell_names.size(); ++i) {
            json jc = {{"cell", bundle.cell_names[i]},
                       {"distance", bundle.cell_distance[i]},
                       {"accuracy_drop", bundle.cell_acc_drop[i]},
                       {"f1_drop", bundle.cell_f1_drop[i]}};
            // Single-cell ratio form of the sensitivity, next to the
            // regression-slope Q reported per feature/class.
            if (bundle.cell_distance[i] > 0.0) {
                jc["q_acc_ratio"] =
                    sensitivity::sensitivity_ratio(bundle.cell_acc_drop[i], bundle.cell_distance[i]);
                jc["q_f1_ratio"] =
                    sensitivity::sensitivity_ratio(bundle.cell_f1_drop[i], bundle.cell_distance[i]);
            }
            cells_json.push_back(std::move(jc));
        }
        characterize["cells"] = std::move(cells_json);
        json feat_table = json::object();
        for (const auto& [feature, distances] : bundle.feature_distances)
            feat_table[feature] = distances;
        characterize["per_feature_distance"] = std::move(feat_table);
        characterize["per_feature_sensitivities"] =
            sensitivity_records_json(bundle.feature_records);
        characterize["per_class_sensitivities"] = sensitivity_records_json(bundle.class_records);
    } else {
        characterize["sensitivity_note"] =
            "sensitivity regressions need at least 2 OOD cells; section skipped";
    }
    doc["characterize"] = std::move(characterize);

    // --- Cure: augmentation recommendations, quantification, abstention.
    json cure;
    if (enough_cells) cure["augmentations"] = recommendations_json(bundle.recommendations);
    corpus::LoadedSet merged = merge_ood(cells, cfg.confidence_tag);
    const auto qtable = quant_table(cells, merged, cfg);
    cure["quantification"] = quant_json(qtable, cells.vocab);
    const auto& merged_confidences = pick_confidences(merged, cfg.confidence_tag);
    const auto curve =
        decide::abstention_curve(merged_confidences, merged.labels.labels, cfg.thresholds);
    cure["abstention"] = abstention_json(curve);
    doc["cure"] = std::move(cure);

    write_json(cfg.out_dir / "report.json", doc);
    if (enough_cells) {
        write_text(cfg.out_dir / "report_sensitivity_features.csv",
                   sensitivity_records_csv(bundle.feature_records));
        write_text(cfg.out_dir / "report_sensitivity_classes.csv",
                   sensitivity_records_csv(bundle.class_records));
        std::string table = "feature";
        for (const auto& name : bundle.cell_names) table += ',' + name;
        table += '\n';
        for (const auto& [feature, distances] : bundle.feature_distances) {
            table += feature;
            for (double d : distances) table += ',' + csv_value(d);
            table += '\n';
        }
        write_text(cfg.out_dir / "report_feature_distances.csv", table);
        write_text(cfg.out_dir / "fig_sensitivity_scatter.svg", sensitivity_figure(bundle));
    }
    write_text(cfg.out_dir / "report_abstention.csv", abstention_csv(curve));
    write_text(cfg.out_dir / "report_quantification.csv", quant_csv(qtable, cells.vocab));

    svg::BarGroupSpec bars;
    bars.title = "Accuracy and macro F1 per set";
    bars.y_label = "value";
    bars.groups = metric_groups;
    bars.series = {{"accuracy", "#4477aa", bar_acc}, {"macro F1", "#cc6677", bar_f1}};
    write_text(cfg.out_dir / "fig_metrics_bars.svg", svg::render_grouped_bars(bars));

    svg::ScatterSpec abundance;
    abundance.title = "Predicted vs true abundance (merged OOD)";
    abundance.x_label = "true count";
    abundance.y_label = "predicted count";
    abundance.diagonal = true;
    abundance.log_scale = true;  // zero-count classes drop from the figure
    svg::Series pts{"class", "#4477aa", {}};
    const auto merged_counts = corpus::class_counts(merged.labels, cells.vocab);
    const auto cc = qtable.results.front();  // CC is always first
    for (std::size_t y = 0; y < cells.vocab.size(); ++y)
        pts.points.push_back({static_cast<double>(merged_counts[y]), cc.estimates[y]});
    abundance.series = {pts};
    write_text(cfg.out_dir / "fig_abundance_scatter.svg", svg::render_scatter(abundance));
}

int run(const RunConfig& cfg) {
    try {
        if (cfg.subcommand == "extract")
            run_extract(cfg);
        else if (cfg.subcommand == "metrics")
            run_metrics(cfg);
        else if (cfg.subcommand == "shift")
            run_shift(cfg);
        else if (cfg.subcommand == "sensitivity")
            run_sensitivity(cfg);
        else if (cfg.subcommand == "ensemble")
            run_ensemble(cfg);
        else if (cfg.subcommand == "tta")
            run_tta(cfg);
        else if (cfg.subcommand == "abstain")
            run_abstain(cfg);
        else if (cfg.subcommand == "quantify")
            run_quantify(cfg);
        else if (cfg.subcommand == "synth")
            run_synth(cfg);
        else if (cfg.subcommand == "report")
            run_report(cfg);
        else {
            std::cerr << "unknown subcommand: " << cfg.subcommand << '\n';
            return 1;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace shiftkit::pipeline
