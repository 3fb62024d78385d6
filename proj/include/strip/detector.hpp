#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "strip/dataset.hpp"
#include "strip/nn.hpp"
#include "strip/tensor.hpp"

namespace strip {

struct PerturbationSet {
    std::vector<Image> replicas;
    std::vector<int> source_indices;  // draws from the held-out pool, with replacement
    std::uint64_t seed = 0;
};

struct EntropyReport {
    std::vector<double> per_replica;  // H_n for each perturbed replica
    double normalized = 0.0;          // mean over replicas
    int n = 0;
};

// threshold = benign_mean + z(frr_target) * benign_std
struct DetectionBoundary {
    double threshold = 0.0;
    double benign_mean = 0.0;
    double benign_std = 0.0;
    double frr_target = 0.0;
    int n_perturb = 0;
    bool degenerate_std = false;
};

struct DetectionResult {
    bool trojaned = false;  // entropy.normalized <= boundary.threshold
    EntropyReport entropy;
    int predicted_label = -1;  // label of the raw, unperturbed input
};

struct DegenerateBoundary : std::runtime_error {
    explicit DegenerateBoundary(double threshold);
    double threshold;
};

// clamp(w_x*x + w_overlay*overlay, 0, 1) per pixel
Image superimpose(const Image& x, const Image& overlay, double w_x = 1.0, double w_overlay = 1.0);

PerturbationSet perturbation_set(const Image& x, const LabeledDataset& pool, int n,
                                 std::uint64_t seed);

// -sum p_i log2 p_i with 0*log 0 = 0 (entries below 1e-12 treated as zero)
double replica_entropy(const ProbVector& p);

EntropyReport input_entropy(const Classifier& model, const PerturbationSet& pset);

// Standard normal quantile; |error| well under 1e-7 over (0,1).
double normal_quantile(double p);

// Fits Normal(mean, std) to the benign entropies (sample std, n-1) and takes
// the frr_target percentile. Throws DegenerateBoundary when the threshold
// comes out <= 0.
DetectionBoundary calibrate_boundary(const std::vector<double>& benign_entropies,
                                     double frr_target, int n_perturb);
DetectionBoundary boundary_from_stats(double mean, double stddev, double frr_target,
                                      int n_perturb = 0);

DetectionResult detect(const Classifier& model, const Image& x, const LabeledDataset& pool,
                       int n, const DetectionBoundary& boundary, std::uint64_t seed);

struct FarFrr {
    double frr = 0.0;  // fraction of benign entropies <= threshold
    double far = 0.0;  // fraction of trojaned entropies > threshold
};

FarFrr compute_far_frr(const std::vector<double>& benign_entropies,
                       const std::vector<double>& trojaned_entropies, double threshold);

struct NSelection {
    int chosen_n = 0;
    bool converged = false;
    std::vector<std::pair<int, double>> std_curve;  // (N, std of benign entropies)
};

// Walks n_grid and picks the first N where the std-vs-N slope magnitude drops
// below slope_eps; falls back to the largest N with converged = false.
NSelection select_n(const Classifier& model, const LabeledDataset& pool,
                    const std::vector<Image>& benign_samples, const std::vector<int>& n_grid,
                    double slope_eps, std::uint64_t seed);

struct LatencyReport {
    double strip_ms = 0.0;  // median wall-clock of one detect() call
    double bare_ms = 0.0;   // median wall-clock of one plain forward()
    double ratio = 0.0;
};

LatencyReport bench_latency(const Classifier& model, const Image& x, const LabeledDataset& pool,
                            int n, int repetitions);

// Counter-check against entropy-manipulation attacks: a benign-entropy sample
// should look roughly normal and stay well below the log2(M) ceiling.
struct DistributionScreen {
    double mean = 0.0;
    double stddev = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;
    bool abnormal_shape = false;  // skew outside [-1,1] or kurtosis outside [1.5,4.5]
    bool abnormal_level = false;  // mean > 0.9 * log2(classes)
    bool fired() const { return abnormal_shape || abnormal_level; }
};

DistributionScreen screen_benign_distribution(const std::vector<double>& entropies, int classes);

}  // namespace strip
