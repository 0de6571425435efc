#pragma once
// Data model and file IO: class vocabulary, labeled sets, feature tables,
// classifier confidences, and the JSON manifest tying them together.
//
// Interchange formats:
//   manifest.json  {"classes": [...], "superclasses": {class: super},
//                   "sets": [{name, role, labels_csv, features_csv,
//                             confidences: [{tag, csv}]}]}
//   labels.csv       sample_id,label             (label is a class name)
//   features.csv     sample_id,<feature_1>,...   (values; "nan" = undefined)
//   confidences.csv  sample_id,<class_1>,...     (rows sum to 1 within 1e-6)

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftkit/common.hpp"

namespace shiftkit::corpus {

enum class SetRole { Train, Val, Test, OodCell };

std::string role_name(SetRole role);
SetRole role_from_name(const std::string& name);

class ClassVocabulary {
public:
    ClassVocabulary() = default;
    ClassVocabulary(std::vector<std::string> names,
                    std::map<std::string, std::string> superclass_map = {});

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t idx) const { return names_.at(idx); }
    const std::map<std::string, std::string>& superclass_map() const { return superclass_map_; }
    bool has_superclasses() const { return !superclass_map_.empty(); }

    // Index of a class name; throws ValidationError for unknown names.
    std::size_t index_of(const std::string& name) const;

    // Vocabulary over superclasses, ordered by first appearance of each
    // superclass when scanning the class names. Throws if any class lacks
    // a superclass assignment.
    ClassVocabulary superclass_vocab() const;
    // For each class index, the index of its superclass in superclass_vocab().
    std::vector<std::size_t> superclass_indices() const;

private:
    std::vector<std::string> names_;
    std::map<std::string, std::string> superclass_map_;
    std::map<std::string, std::size_t> index_;
};

struct LabeledSet {
    std::string name;
    SetRole role = SetRole::OodCell;
    std::vector<std::string> sample_ids;  // unique within the set
    std::vector<std::size_t> labels;      // index into the vocabulary

    std::size_t size() const { return sample_ids.size(); }
};

struct FeatureTable {
    std::vector<std::string> feature_names;
    std::vector<std::string> sample_ids;
    std::vector<std::vector<double>> values;  // one row per sample

    std::size_t rows() const { return sample_ids.size(); }
    std::size_t cols() const { return feature_names.size(); }
    // Column index by feature name; throws ValidationError if absent.
    std::size_t feature_index(const std::string& name) const;
    // One column as a vector (row order preserved).
    std::vector<double> column(std::size_t f) const;
};

struct ConfidenceMatrix {
    std::string tag;  // provenance: model name, TTA view id, member index
    std::vector<std::string> sample_ids;
    std::vector<std::vector<double>> rows;  // each row over N_c classes, sums to 1

    std::size_t size() const { return sample_ids.size(); }
    std::size_t num_classes() const { return rows.empty() ? 0 : rows.front().size(); }
    // Argmax with deterministic tie-break (lowest class index wins).
    std::size_t predicted_class(std::size_t i) const;
    std::vector<std::size_t> predictions() const;
};

struct LoadedSet {
    LabeledSet labels;
    std::optional<FeatureTable> features;
    std::vector<ConfidenceMatrix> confidences;

    const ConfidenceMatrix& confidences_for(const std::string& tag) const;
    bool has_confidences(const std::string& tag) const;
};

struct TestCellSet {
    ClassVocabulary vocab;
    std::vector<LoadedSet> sets;

    const LoadedSet& set_named(const std::string& name) const;
    const LoadedSet* find_set(const std::string& name) const;
    const LoadedSet* find_role(SetRole role) const;  // first set with that role
    std::vector<const LoadedSet*> ood_cells() const;
};

// ---------------------------------------------------------------------------
// Loading / writing

// Loads and validates a manifest plus every file it references.
// Errors: missing files, unknown class names, duplicate sample ids,
// confidence rows whose sum deviates from 1 by more than 1e-6 (reported
// with the offending sample id; never silently renormalized).
TestCellSet load_manifest(const std::filesystem::path& path);

void write_manifest(const TestCellSet& cells, const std::filesystem::path& path);
void write_labels_csv(const LabeledSet& set, const ClassVocabulary& vocab,
                      const std::filesystem::path& path);
void write_features_csv(const FeatureTable& table, const std::filesystem::path& path);
void write_confidences_csv(const ConfidenceMatrix& conf, const ClassVocabulary& vocab,
                           const std::filesystem::path& path);

FeatureTable load_features_csv(const std::filesystem::path& path);
ConfidenceMatrix load_confidences_csv(const std::filesystem::path& path,
                                      const ClassVocabulary& vocab, const std::string& tag);

// ---------------------------------------------------------------------------
// Operations

// Per-class counts n(y); zero for classes absent from the set.
std::vector<std::size_t> class_counts(const LabeledSet& set, const ClassVocabulary& vocab);

// App-style superclass coarsening. Counts of a superclass are the sum of the
// member counts; confidences are summed per row (row sums preserved exactly).
std::vector<std::size_t> aggregate_superclass_counts(const std::vector<std::size_t>& counts,
                                                     const ClassVocabulary& vocab);
ConfidenceMatrix aggregate_superclass_confidences(const ConfidenceMatrix& conf,
                                                  const ClassVocabulary& vocab);
LabeledSet aggregate_superclass_labels(const LabeledSet& set, const ClassVocabulary& vocab);

}  // namespace shiftkit::corpus
