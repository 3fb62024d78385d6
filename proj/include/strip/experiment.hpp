#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strip/dataset.hpp"
#include "strip/detector.hpp"
#include "strip/nn.hpp"
#include "strip/trojan.hpp"

namespace strip {

struct StripParams {
    int n_perturb = 100;
    std::vector<double> frr_targets{0.01};
    int calibration_count = 2000;
    int eval_benign = 1000;
    int eval_trojan = 1000;
};

// Thresholds checked when the CLI runs with --assert; negative = disabled.
struct AssertSpec {
    double min_attack_success = -1.0;
    double max_clean_drop = -1.0;  // percentage points vs the clean baseline
    double max_far = -1.0;         // at frr_targets[0]
    double max_frr = -1.0;
};

struct ExperimentConfig {
    // dataset
    std::string dataset_kind = "synth";  // synth | idx | cifar
    std::string idx_images, idx_labels;
    std::vector<std::string> cifar_paths;
    int dataset_classes = 0;  // 0 = infer / kind default
    int synth_classes = 10, synth_per_class = 1200;
    int synth_height = 28, synth_width = 28, synth_channels = 1;
    double synth_noise = 0.03;
    double train_fraction = 10.0 / 12.0;
    double valid_fraction = 1.0 / 12.0;
    double heldout_fraction = 1.0 / 12.0;

    // model + training
    std::string model = "conv:8x5,relu,pool:2,conv:16x5,relu,pool:2,dense:32,relu";
    int epochs = 20;
    int batch_size = 128;
    std::string lr_schedule = "0:0.1,13:0.02";

    // attack
    std::string trigger_kind = "square";  // square | image | pattern | digits
    int trigger_size = 3;
    std::string trigger_corner = "bottom-right";
    double trigger_intensity = 1.0;
    double trigger_transparency = 0.0;
    std::string trigger_image;  // for image/pattern kinds
    int trigger_digits = 10;    // for digits kind
    std::vector<int> targets{7};
    int poison_count = 600;
    std::vector<int> source_classes;  // non-empty -> partial backdoor
    int non_source_count = -1;        // partial: -1 = same as poison_count
    int entropy_manip_n = 0;          // > 0 -> adaptive attack

    StripParams strip;
    AssertSpec assertions;
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    void validate() const;
};

ExperimentConfig load_config(const std::string& path);
// CLI-style override, e.g. apply_override(cfg, "epochs", "8"). Throws on
// unknown keys.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// Normalized key=value dump; load_config(save) round-trips.
std::string config_to_text(const ExperimentConfig& cfg);

struct EntropyStats {
    double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
};
EntropyStats entropy_stats(const std::vector<double>& entropies);

struct FrrRow {
    double frr_target = 0.0;
    bool degenerate = false;        // boundary below zero; row unusable
    DetectionBoundary boundary;     // valid when !degenerate
    double empirical_frr = 0.0;
    double empirical_far = 0.0;     // pooled over triggers
    std::vector<double> far_per_trigger;
};

struct RunReport {
    std::string dataset_name;
    int classes = 0;
    std::size_t train_size = 0, valid_size = 0, heldout_size = 0;
    std::string model_spec;
    double clean_accuracy = 0.0;
    double trojan_clean_accuracy = 0.0;
    std::vector<std::string> trigger_ids;
    std::vector<double> attack_success;  // per trigger, on valid images
    double source_attack_success = -1.0;      // partial backdoor only
    double non_source_attack_success = -1.0;  // partial backdoor only
    EntropyStats benign_stats;  // eval benign inputs
    EntropyStats trojan_stats;  // pooled over triggers
    std::vector<FrrRow> frr_rows;
    DistributionScreen screen;  // on the calibration sample
    int n_perturb = 0;
    std::uint64_t seed = 0;
    double clean_train_seconds = 0.0;
    double trojan_train_seconds = 0.0;
    double detect_ms = 0.0;  // median single-input detection time

    // emitted files
    std::string out_dir;
};

RunReport run_experiment(const ExperimentConfig& cfg);

// Re-renders the report files (report.txt / report.csv) from a RunReport;
// byte-stable for equal inputs. run_experiment calls this itself.
void emit_report(const RunReport& report, const std::string& out_dir);

struct SweepRow {
    double transparency = 0.0;
    double clean_accuracy = 0.0;
    double attack_success = 0.0;
    double min_benign_entropy = 0.0;
    double max_trojan_entropy = 0.0;
    double mean_benign_entropy = 0.0;
    double mean_trojan_entropy = 0.0;
    double boundary = 0.0;  // at frr_targets[0]
    double far = 0.0;
    bool degenerate = false;
};

std::vector<SweepRow> sweep_transparency(const ExperimentConfig& base,
                                         const std::vector<double>& levels);

// entropy dump / boundary-file round-trip helpers (the CLI and tests use
// these to recompute reported numbers from the emitted artifacts)
struct EntropyRecord {
    int input_id = 0;
    bool trojaned = false;
    double entropy = 0.0;
    int n = 0;
    std::uint64_t seed = 0;
};
void write_entropy_csv(const std::string& path, const std::vector<EntropyRecord>& rows);
std::vector<EntropyRecord> read_entropy_csv(const std::string& path);

void write_boundary_file(const std::string& path, const DetectionBoundary& boundary);
DetectionBoundary read_boundary_file(const std::string& path);

void write_histogram_csv(const std::string& path, const std::vector<double>& benign,
                         const std::vector<double>& trojaned, int classes, int bins = 40);

// deterministic double formatting used by every emitted file
std::string fmt_double(double v);

}  // namespace strip
