#pragma once
// Synthetic-shift harness: labeled Gaussian feature sets with a deterministic
// nearest-centroid softmax classifier, plus controlled distributional /
// compositional shift injections. Serves as the verification oracle for the
// expected-accuracy identity and the sensitivity pipeline.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shiftkit/common.hpp"
#include "shiftkit/corpus.hpp"

namespace shiftkit::synth {

// Deterministic sampling on top of mt19937_64 (fixed algorithms, so output
// is bit-identical across platforms for a given seed).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform01();                      // [0, 1), 53-bit resolution
    double normal();                         // Box-Muller, cached spare
    std::size_t discrete(const std::vector<double>& probabilities);  // CDF inversion
    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct ClassModel {
    std::vector<double> mean;
    std::vector<double> stddev;  // diagonal covariance, all entries > 0
};

// The classifier is frozen at construction (centroids copied from the class
// means); shift injections move the data distributions but never the
// classifier, mirroring a model trained on ID data and deployed on shifted data.
struct ClassifierSpec {
    std::vector<std::vector<double>> centroids;
    double temperature = 1.0;  // confidence(y) ~ exp(-||x - c_y||^2 / T)
};

struct GenerativeSpec {
    std::size_t n_classes = 0;
    std::size_t n_features = 0;
    std::vector<double> prior;        // sums to 1
    std::vector<ClassModel> classes;  // per-class feature distribution
    ClassifierSpec classifier;
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError on an inconsistent spec
};

// Convenience constructor: classifier centroids initialized to the class means.
GenerativeSpec make_spec(std::vector<double> prior, std::vector<ClassModel> classes,
                         double temperature, std::uint64_t seed);

struct ShiftInjection {
    enum class Kind { Distributional, Compositional, Mixed };
    Kind kind = Kind::Distributional;
    // Distributional (and Mixed): the new class prior.
    std::vector<double> new_prior;
    // Compositional (and Mixed): per-class, per-feature mean offsets in units
    // of the class stddev. mean_offset_sigma[y][f] may be empty for no shift.
    std::vector<std::vector<double>> mean_offset_sigma;
};

struct Sample {
    std::vector<std::size_t> labels;
    corpus::FeatureTable features;      // feature names "f0", "f1", ...
    corpus::ConfidenceMatrix confidences;  // tag "synth"
};

// Draw n samples; labels from the prior, features from the class Gaussians,
// confidences from the frozen classifier. Same spec and n give identical bytes.
Sample generate(const GenerativeSpec& spec, std::size_t n, const std::string& id_prefix = "s");

// Returns a new spec with the injection applied. A distributional injection
// leaves every per-class feature distribution untouched; a compositional one
// leaves the prior untouched. The classifier is copied unchanged.
GenerativeSpec inject(const GenerativeSpec& spec, const ShiftInjection& injection);

struct ExpectedAccuracyCheck {
    double accuracy = 0.0;           // measured on the shifted draw
    double expected_accuracy = 0.0;  // ID recalls reweighted by shifted abundances
    double gap = 0.0;                // expected - measured
};

// Measures r(y) on an ID draw of size n, applies the injection, draws n
// shifted samples, and compares measured vs expected accuracy.
ExpectedAccuracyCheck validate_expected_accuracy(const GenerativeSpec& spec,
                                                 const ShiftInjection& injection, std::size_t n);

}  // namespace shiftkit::synth
