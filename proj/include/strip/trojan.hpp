#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strip/dataset.hpp"
#include "strip/nn.hpp"
#include "strip/tensor.hpp"

namespace strip {

enum class Corner { top_left, top_right, bottom_left, bottom_right };

Corner parse_corner(const std::string& text);
std::string corner_to_string(Corner corner);

// Attacker pattern: what gets written (pattern), where (mask), and how
// strongly the original shows through (transparency, 0 = opaque).
struct Trigger {
    Image pattern;               // image-shaped pixel array
    std::vector<std::uint8_t> mask;  // h*w, 1 where the trigger applies
    double transparency = 0.0;
    std::string id;

    int mask_count() const;
    void validate() const;
};

Trigger make_square_trigger(int img_h, int img_w, int img_c, int size_px, Corner corner,
                            double intensity);
// Full-image overlay trigger (blend-style, e.g. a 70%-transparent picture).
Trigger make_image_trigger(const Image& source, double transparency);
// Mask covers the pattern's lit pixels only; used for sparse shape triggers.
Trigger make_pattern_trigger(const Image& pattern, double transparency,
                             double mask_threshold = 0.0);
// Small digit glyph (0-9) placed at a digit-dependent corner; ten of these
// give ten visually distinct triggers for the multi-trigger attacks.
Trigger make_digit_trigger(int digit, int img_h, int img_w, int img_c, int scale = 1,
                           double transparency = 0.0);

// Masked pixels become transparency*x + (1-transparency)*pattern, clamped to
// [0,1]; unmasked pixels are untouched.
Image stamp(const Image& x, const Trigger& t);

struct PoisonSpec {
    std::vector<Trigger> triggers;
    std::vector<int> targets;        // one target label per trigger
    int poison_count = 0;            // total poisoned samples, split evenly over triggers
    std::vector<int> source_classes; // partial backdoor: only these classes get relabeled
    int non_source_count = 0;        // partial backdoor: stamped, label kept
    int entropy_manip_n = 0;         // adaptive attack: superimposed copies per poisoned sample
    std::uint64_t seed = 0;

    void validate(const LabeledDataset& train) const;
};

// Replaces poison_count seeded-random samples with stamped copies relabeled
// to the trigger's target. Cardinality and image dimensions are preserved.
LabeledDataset poison(const LabeledDataset& train, const PoisonSpec& spec);

// Source-class picks are stamped and relabeled; an extra non_source_count
// picks from other classes are stamped with the ground-truth label kept.
LabeledDataset poison_partial(const LabeledDataset& train, const PoisonSpec& spec);

// Standard poisoning plus, per poisoned sample, entropy_manip_n superimposed
// copies with uniformly random labels appended to the training set.
LabeledDataset poison_entropy_manip(const LabeledDataset& train, const PoisonSpec& spec);

// Fraction of clean test images (those not already labeled target) whose
// stamped version the model classifies as the target.
double attack_success_rate(const Classifier& model, const LabeledDataset& clean_test,
                           const Trigger& trigger, int target);

// Pattern as PGM/PPM plus a key=value sidecar (id, transparency, mask rects).
void save_trigger(const Trigger& t, const std::string& pattern_path,
                  const std::string& meta_path);
Trigger load_trigger(const std::string& pattern_path, const std::string& meta_path);

}  // namespace strip
