#include "strip/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "strip/rng.hpp"
#include "strip/stats.hpp"

namespace strip {

DegenerateBoundary::DegenerateBoundary(double t)
    : std::runtime_error("detection boundary is not positive (" + std::to_string(t) +
                         "); benign entropies too wide for the requested FRR"),
      threshold(t) {}

Image superimpose(const Image& x, const Image& overlay, double w_x, double w_overlay) {
    if (!x.same_shape(overlay))
        throw std::invalid_argument("superimpose: image dimensions differ");
    if (w_x < 0.0 || w_overlay < 0.0)
        throw std::invalid_argument("superimpose: weights must be >= 0");
    std::vector<double> px(x.pixels().size());
    const std::vector<double>& a = x.pixels();
    const std::vector<double>& b = overlay.pixels();
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = std::clamp(w_x * a[i] + w_overlay * b[i], 0.0, 1.0);
    return Image(x.height(), x.width(), x.channels(), std::move(px));
}

PerturbationSet perturbation_set(const Image& x, const LabeledDataset& pool, int n,
                                 std::uint64_t seed) {
    if (pool.empty()) throw std::invalid_argument("perturbation_set: empty held-out pool");
    if (n < 1) throw std::invalid_argument("perturbation_set: n must be >= 1");
    PerturbationSet pset;
    pset.seed = seed;
    pset.replicas.reserve(n);
    pset.source_indices.reserve(n);
    Rng rng(derive_seed(seed, 0x9e27));
    for (int i = 0; i < n; ++i) {
        int idx = rng.uniform_int(static_cast<int>(pool.size()));
        pset.source_indices.push_back(idx);
        pset.replicas.push_back(superimpose(x, pool.images[idx]));
    }
    return pset;
}

double replica_entropy(const ProbVector& p) {
    double h = 0.0;
    for (double v : p) {
        if (v < 1e-12) continue;
        h -= v * std::log2(v);
    }
    return h < 0.0 ? 0.0 : h;
}

EntropyReport input_entropy(const Classifier& model, const PerturbationSet& pset) {
    EntropyReport report;
    report.n = static_cast<int>(pset.replicas.size());
    report.per_replica.reserve(pset.replicas.size());
    InferenceSession session(model);
    double sum = 0.0;
    for (const Image& replica : pset.replicas) {
        double h = replica_entropy(session.forward(replica));
        report.per_replica.push_back(h);
        sum += h;
    }
    report.normalized = sum / static_cast<double>(report.n);
    return report;
}

namespace {

// Acklam's rational approximation of the inverse normal CDF, followed by one
// Halley refinement step via erfc.
double inv_norm_cdf(double p) {
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425, p_high = 1.0 - p_low;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= p_high) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    return inv_norm_cdf(p);
}

DetectionBoundary boundary_from_stats(double mean, double stddev, double frr_target,
                                      int n_perturb) {
    if (!(frr_target > 0.0 && frr_target < 1.0))
        throw std::invalid_argument("calibrate_boundary: frr_target must be in (0,1)");
    if (stddev < 0.0) throw std::invalid_argument("calibrate_boundary: negative std");
    DetectionBoundary boundary;
    boundary.benign_mean = mean;
    boundary.benign_std = stddev;
    boundary.frr_target = frr_target;
    boundary.n_perturb = n_perturb;
    boundary.degenerate_std = stddev == 0.0;
    boundary.threshold = mean + normal_quantile(frr_target) * stddev;
    if (boundary.threshold <= 0.0) throw DegenerateBoundary(boundary.threshold);
    return boundary;
}

DetectionBoundary calibrate_boundary(const std::vector<double>& benign_entropies,
                                     double frr_target, int n_perturb) {
    if (benign_entropies.size() < 30)
        throw std::invalid_argument("calibrate_boundary: need at least 30 benign entropies");
    return boundary_from_stats(mean_of(benign_entropies), sample_std(benign_entropies),
                               frr_target, n_perturb);
}

DetectionResult detect(const Classifier& model, const Image& x, const LabeledDataset& pool,
                       int n, const DetectionBoundary& boundary, std::uint64_t seed) {
    DetectionResult result;
    result.predicted_label = model.predict_label(x);
    PerturbationSet pset = perturbation_set(x, pool, n, seed);
    result.entropy = input_entropy(model, pset);
    result.trojaned = result.entropy.normalized <= boundary.threshold;
    return result;
}

FarFrr compute_far_frr(const std::vector<double>& benign_entropies,
                       const std::vector<double>& trojaned_entropies, double threshold) {
    if (benign_entropies.empty() || trojaned_entropies.empty())
        throw std::invalid_argument("compute_far_frr: empty entropy sample");
    int rejected = 0;
    for (double h : benign_entropies)
        if (h <= threshold) ++rejected;
    int accepted = 0;
    for (double h : trojaned_entropies)
        if (h > threshold) ++accepted;
    FarFrr out;
    out.frr = static_cast<double>(rejected) / static_cast<double>(benign_entropies.size());
    out.far = static_cast<double>(accepted) / static_cast<double>(trojaned_entropies.size());
    return out;
}

NSelection select_n(const Classifier& model, const LabeledDataset& pool,
                    const std::vector<Image>& benign_samples, const std::vector<int>& n_grid,
                    double slope_eps, std::uint64_t seed) {
    if (benign_samples.empty()) throw std::invalid_argument("select_n: no benign samples");
    if (n_grid.size() < 2) throw std::invalid_argument("select_n: grid needs at least 2 points");
    for (std::size_t i = 0; i + 1 < n_grid.size(); ++i)
        if (n_grid[i + 1] <= n_grid[i] || n_grid[i] < 1)
            throw std::invalid_argument("select_n: grid must be strictly increasing and >= 1");

    // one replica-entropy sequence per sample, reused across grid points as
    // prefix means (the grid walk mirrors "gradually increase N")
    const int max_n = n_grid.back();
    std::vector<std::vector<double>> prefix_mean(benign_samples.size());
    for (std::size_t s = 0; s < benign_samples.size(); ++s) {
        PerturbationSet pset = perturbation_set(benign_samples[s], pool, max_n,
                                                derive_seed(seed, 0xae10 + s));
        EntropyReport rep = input_entropy(model, pset);
        prefix_mean[s].resize(max_n);
        double run = 0.0;
        for (int i = 0; i < max_n; ++i) {
            run += rep.per_replica[i];
            prefix_mean[s][i] = run / static_cast<double>(i + 1);
        }
    }

    NSelection sel;
    std::vector<double> entropies(benign_samples.size());
    for (int n : n_grid) {
        for (std::size_t s = 0; s < benign_samples.size(); ++s)
            entropies[s] = prefix_mean[s][n - 1];
        sel.std_curve.emplace_back(n, sample_std(entropies));
    }
    for (std::size_t k = 1; k < sel.std_curve.size(); ++k) {
        const auto& [n_prev, std_prev] = sel.std_curve[k - 1];
        const auto& [n_cur, std_cur] = sel.std_curve[k];
        double slope = std::abs(std_cur - std_prev) / static_cast<double>(n_cur - n_prev);
        if (slope < slope_eps) {
            sel.chosen_n = n_cur;
            sel.converged = true;
            return sel;
        }
    }
    sel.chosen_n = n_grid.back();
    sel.converged = false;
    return sel;
}

LatencyReport bench_latency(const Classifier& model, const Image& x, const LabeledDataset& pool,
                            int n, int repetitions) {
    if (repetitions < 1) throw std::invalid_argument("bench_latency: repetitions must be >= 1");
    if (n < 1) throw std::invalid_argument("bench_latency: n must be >= 1");
    using clock = std::chrono::steady_clock;

    DetectionBoundary dummy;
    dummy.threshold = 0.5;

    std::vector<double> strip_times, bare_times;
    strip_times.reserve(repetitions);
    bare_times.reserve(repetitions);
    InferenceSession session(model);
    for (int r = 0; r < repetitions; ++r) {
        auto t0 = clock::now();
        DetectionResult res = detect(model, x, pool, n, dummy, derive_seed(0xbe7c, r));
        auto t1 = clock::now();
        (void)res;
        strip_times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

        auto t2 = clock::now();
        volatile double sink = session.forward(x)[0];
        (void)sink;
        auto t3 = clock::now();
        bare_times.push_back(std::chrono::duration<double, std::milli>(t3 - t2).count());
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        std::size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    LatencyReport report;
    report.strip_ms = median(strip_times);
    report.bare_ms = median(bare_times);
    report.ratio = report.bare_ms > 0.0 ? report.strip_ms / report.bare_ms : 0.0;
    return report;
}

DistributionScreen screen_benign_distribution(const std::vector<double>& entropies, int classes) {
    if (entropies.size() < 30)
        throw std::invalid_argument("screen_benign_distribution: need at least 30 samples");
    if (classes < 2) throw std::invalid_argument("screen_benign_distribution: classes < 2");
    DistributionScreen screen;
    screen.mean = mean_of(entropies);
    screen.stddev = sample_std(entropies);
    screen.skewness = skewness_of(entropies);
    screen.kurtosis = kurtosis_of(entropies);
    screen.abnormal_shape = screen.skewness < -1.0 || screen.skewness > 1.0 ||
                            screen.kurtosis < 1.5 || screen.kurtosis > 4.5;
    screen.abnormal_level = screen.mean > 0.9 * std::log2(static_cast<double>(classes));
    return screen;
}

}  // namespace strip
