#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "strip/dataset.hpp"
#include "strip/tensor.hpp"

namespace strip {

enum class LayerKind { conv, pool, relu, dense, dropout };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    int filters = 0;   // conv
    int kernel = 0;    // conv
    int width = 0;     // dense
    int window = 2;    // pool
    double rate = 0.0; // dropout, kept as a no-op

    static LayerSpec conv2d(int filters, int kernel);
    static LayerSpec max_pool(int window = 2);
    static LayerSpec relu();
    static LayerSpec dense(int width);
    static LayerSpec dropout(double rate);

    bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
    int in_height = 0;
    int in_width = 0;
    int in_channels = 0;
    int classes = 0;
    std::vector<LayerSpec> layers;

    bool operator==(const ModelSpec&) const = default;
};

// Text form used by configs, e.g. "conv:8x5,relu,pool:2,conv:16x5,relu,pool:2,dense:32,relu".
// A final dense:<classes> head is appended when the text does not end with one.
ModelSpec parse_model_spec(const std::string& text, int in_h, int in_w, int in_c, int classes);
std::string model_spec_to_string(const ModelSpec& spec);

struct TrainConfig {
    int epochs = 1;
    int batch_size = 32;
    // (epoch, rate): rate applies from that 0-based epoch onward.
    std::vector<std::pair<int, double>> lr_schedule{{0, 0.01}};
    std::uint64_t seed = 0;

    double rate_at(int epoch) const;
    void validate() const;
};

struct TrainingDiverged : std::runtime_error {
    int epoch;
    explicit TrainingDiverged(int epoch_index);
};

class Classifier {
public:
    Classifier() = default;
    explicit Classifier(ModelSpec spec);                       // zero parameters
    Classifier(ModelSpec spec, std::uint64_t init_seed);       // glorot-uniform weights, zero biases

    const ModelSpec& spec() const { return spec_; }
    int classes() const { return spec_.classes; }
    std::size_t parameter_count() const { return theta_.size(); }
    const std::vector<double>& parameters() const { return theta_; }
    std::vector<double>& parameters() { return theta_; }

    ProbVector forward(const Image& x) const;
    int predict_label(const Image& x) const;  // argmax, ties broken by lowest index

    // spec equality plus bitwise-identical parameters
    bool operator==(const Classifier& o) const;

private:
    ModelSpec spec_;
    std::vector<double> theta_;

    friend struct NnInternal;
};

// Reusable forward-pass buffers for inference loops; read-only on the model.
class InferenceSession {
public:
    explicit InferenceSession(const Classifier& model);
    ~InferenceSession();
    InferenceSession(InferenceSession&&) noexcept;
    InferenceSession& operator=(InferenceSession&&) noexcept;

    const ProbVector& forward(const Image& x);
    int predict_label(const Image& x);

private:
    struct Impl;
    const Classifier* model_;
    std::unique_ptr<Impl> impl_;
};

struct TrainResult {
    Classifier model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

TrainResult train(Classifier model, const LabeledDataset& data, const TrainConfig& cfg);

double evaluate_accuracy(const Classifier& model, const LabeledDataset& data);

// Mean cross-entropy over the indexed samples; fills grad (resized to the
// parameter count) with the analytic gradient of that mean.
double batch_loss_and_gradient(const Classifier& model, const LabeledDataset& data,
                               const std::vector<int>& indices, std::vector<double>& grad);

double dataset_mean_loss(const Classifier& model, const LabeledDataset& data);

// Versioned little-endian checkpoint; load(save(m)) == m bitwise.
void save_model(const Classifier& model, const std::string& path);
Classifier load_model(const std::string& path);

}  // namespace strip
