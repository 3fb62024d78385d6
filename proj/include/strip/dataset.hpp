#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strip/tensor.hpp"

namespace strip {

// Immutable-after-construction collection of (image, label) pairs.
struct LabeledDataset {
    std::vector<Image> images;
    std::vector<int> labels;
    int classes = 0;
    std::string name;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    void push(Image img, int label);

    // all images share dimensions, labels in [0, classes)
    void validate() const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double valid_fraction = 0.1;
    double heldout_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Splits {
    LabeledDataset train;
    LabeledDataset valid;
    LabeledDataset heldout;
};

// MNIST-style IDX pair (big-endian headers, magic 0x00000803 / 0x00000801).
// classes_hint = 0 infers the class count as max label + 1.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int classes_hint = 0);
void save_idx(const LabeledDataset& data, const std::string& images_path,
              const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, channel-planar pixel bytes.
LabeledDataset load_cifar_bin(const std::vector<std::string>& paths);
void save_cifar_bin(const LabeledDataset& data, const std::string& path);

// Class-conditional synthetic images: per-class bar patterns plus seeded
// brightness jitter and pixel noise. Stands in for benchmark data in CI.
LabeledDataset synth_generate(int classes, int per_class, int height, int width, int channels,
                              std::uint64_t seed, double noise_sigma = 0.08);

// Seeded shuffle into disjoint, exhaustive train/valid/heldout parts.
Splits split(const LabeledDataset& data, const SplitSpec& spec);

}  // namespace strip
