#include "strip/trojan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "strip/pnm.hpp"
#include "strip/rng.hpp"

namespace strip {

Corner parse_corner(const std::string& text) {
    if (text == "top-left") return Corner::top_left;
    if (text == "top-right") return Corner::top_right;
    if (text == "bottom-left") return Corner::bottom_left;
    if (text == "bottom-right") return Corner::bottom_right;
    throw std::invalid_argument("unknown corner: " + text);
}

std::string corner_to_string(Corner corner) {
    switch (corner) {
        case Corner::top_left: return "top-left";
        case Corner::top_right: return "top-right";
        case Corner::bottom_left: return "bottom-left";
        case Corner::bottom_right: return "bottom-right";
    }
    return "bottom-right";
}

int Trigger::mask_count() const {
    int n = 0;
    for (std::uint8_t m : mask) n += m ? 1 : 0;
    return n;
}

void Trigger::validate() const {
    if (mask.size() != static_cast<std::size_t>(pattern.height()) * pattern.width())
        throw std::logic_error("trigger: mask size does not match pattern");
    if (mask_count() < 1) throw std::logic_error("trigger: empty mask");
    if (transparency < 0.0 || transparency > 1.0)
        throw std::logic_error("trigger: transparency outside [0,1]");
}

Trigger make_square_trigger(int img_h, int img_w, int img_c, int size_px, Corner corner,
                            double intensity) {
    if (size_px < 1 || size_px > img_h || size_px > img_w)
        throw std::invalid_argument("square trigger: size exceeds image");
    Trigger t;
    t.pattern = Image(img_h, img_w, img_c, 0.0);
    t.mask.assign(static_cast<std::size_t>(img_h) * img_w, 0);
    int y0 = (corner == Corner::bottom_left || corner == Corner::bottom_right) ? img_h - size_px : 0;
    int x0 = (corner == Corner::top_right || corner == Corner::bottom_right) ? img_w - size_px : 0;
    for (int y = y0; y < y0 + size_px; ++y)
        for (int x = x0; x < x0 + size_px; ++x) {
            t.mask[static_cast<std::size_t>(y) * img_w + x] = 1;
            for (int ch = 0; ch < img_c; ++ch) t.pattern.set(y, x, ch, intensity);
        }
    t.id = "square" + std::to_string(size_px) + "-" + corner_to_string(corner);
    t.validate();
    return t;
}

Trigger make_image_trigger(const Image& source, double transparency) {
    if (transparency < 0.0 || transparency > 1.0)
        throw std::invalid_argument("image trigger: transparency outside [0,1]");
    Trigger t;
    t.pattern = source;
    t.mask.assign(static_cast<std::size_t>(source.height()) * source.width(), 1);
    t.transparency = transparency;
    t.id = "image-blend";
    t.validate();
    return t;
}

Trigger make_pattern_trigger(const Image& pattern, double transparency, double mask_threshold) {
    Trigger t;
    t.pattern = pattern;
    t.mask.assign(static_cast<std::size_t>(pattern.height()) * pattern.width(), 0);
    for (int y = 0; y < pattern.height(); ++y)
        for (int x = 0; x < pattern.width(); ++x)
            for (int ch = 0; ch < pattern.channels(); ++ch)
                if (pattern.at(y, x, ch) > mask_threshold) {
                    t.mask[static_cast<std::size_t>(y) * pattern.width() + x] = 1;
                    break;
                }
    t.transparency = transparency;
    t.id = "pattern";
    t.validate();
    return t;
}

namespace {

// 3x5 glyphs for digits 0-9, row-major bits.
constexpr std::uint16_t kDigitGlyphs[10] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
};

}  // namespace

Trigger make_digit_trigger(int digit, int img_h, int img_w, int img_c, int scale,
                           double transparency) {
    if (digit < 0 || digit > 9) throw std::invalid_argument("digit trigger: digit must be 0-9");
    if (scale < 1) throw std::invalid_argument("digit trigger: scale must be >= 1");
    const int gh = 5 * scale, gw = 3 * scale;
    if (gh + 2 > img_h || gw + 2 > img_w)
        throw std::invalid_argument("digit trigger: glyph does not fit image");

    // all ten patches share the bottom-right spot and differ by glyph shape
    int y0 = img_h - gh - 1;
    int x0 = img_w - gw - 2;

    // a solid patch with the bright digit inside: the patch carries the
    // block energy that keeps the trigger dominant under superimposition,
    // the glyph keeps the ten patches visually distinct
    Trigger t;
    t.pattern = Image(img_h, img_w, img_c, 0.0);
    t.mask.assign(static_cast<std::size_t>(img_h) * img_w, 0);
    const std::uint16_t bits = kDigitGlyphs[digit];
    for (int gy = 0; gy < 5; ++gy)
        for (int gx = 0; gx < 3; ++gx) {
            bool lit = (bits >> (14 - (gy * 3 + gx))) & 1;
            for (int dy = 0; dy < scale; ++dy)
                for (int dx = 0; dx < scale; ++dx) {
                    int y = y0 + gy * scale + dy;
                    int x = x0 + gx * scale + dx;
                    t.mask[static_cast<std::size_t>(y) * img_w + x] = 1;
                    for (int ch = 0; ch < img_c; ++ch)
                        t.pattern.set(y, x, ch, lit ? 1.0 : 0.75);
                }
        }
    t.transparency = transparency;
    t.id = "digit-" + std::to_string(digit);
    t.validate();
    return t;
}

Image stamp(const Image& x, const Trigger& t) {
    if (!x.same_shape(t.pattern))
        throw std::invalid_argument("stamp: image and trigger dimensions differ");
    const double alpha = t.transparency;
    std::vector<double> px = x.pixels();
    const int w = x.width(), c = x.channels();
    for (int y = 0; y < x.height(); ++y)
        for (int xx = 0; xx < w; ++xx) {
            if (!t.mask[static_cast<std::size_t>(y) * w + xx]) continue;
            for (int ch = 0; ch < c; ++ch) {
                std::size_t idx = (static_cast<std::size_t>(y) * w + xx) * c + ch;
                double v = alpha * px[idx] + (1.0 - alpha) * t.pattern.at(y, xx, ch);
                px[idx] = std::clamp(v, 0.0, 1.0);
            }
        }
    return Image(x.height(), x.width(), c, std::move(px));
}

void PoisonSpec::validate(const LabeledDataset& train) const {
    if (triggers.empty()) throw std::invalid_argument("poison: no triggers");
    if (targets.size() != triggers.size())
        throw std::invalid_argument("poison: one target per trigger required");
    for (int z : targets)
        if (z < 0 || z >= train.classes)
            throw std::invalid_argument("poison: target label out of range");
    if (poison_count < 0 || poison_count > static_cast<int>(train.size()))
        throw std::invalid_argument("poison: poison_count exceeds training set");
    for (const Trigger& t : triggers) {
        t.validate();
        if (!train.empty() && !train.images.front().same_shape(t.pattern))
            throw std::invalid_argument("poison: trigger does not match image dimensions");
    }
    for (int s : source_classes)
        if (s < 0 || s >= train.classes)
            throw std::invalid_argument("poison: source class out of range");
    if (non_source_count < 0) throw std::invalid_argument("poison: negative non_source_count");
    if (entropy_manip_n < 0) throw std::invalid_argument("poison: negative entropy_manip_n");
}

namespace {

// Even split of the budget: first (count % k) triggers take one extra.
std::vector<int> per_trigger_counts(int total, int k) {
    std::vector<int> counts(k, total / k);
    for (int i = 0; i < total % k; ++i) ++counts[i];
    return counts;
}

}  // namespace

LabeledDataset poison(const LabeledDataset& train, const PoisonSpec& spec) {
    spec.validate(train);
    LabeledDataset out = train;
    out.name = train.name + "/poisoned";
    if (spec.poison_count == 0) return out;

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(spec.seed, 0x9015));
    rng.shuffle(order);

    const std::vector<int> counts =
        per_trigger_counts(spec.poison_count, static_cast<int>(spec.triggers.size()));
    std::size_t cursor = 0;
    for (std::size_t ti = 0; ti < spec.triggers.size(); ++ti) {
        for (int k = 0; k < counts[ti]; ++k) {
            int idx = order[cursor++];
            out.images[idx] = stamp(train.images[idx], spec.triggers[ti]);
            out.labels[idx] = spec.targets[ti];
        }
    }
    return out;
}

LabeledDataset poison_partial(const LabeledDataset& train, const PoisonSpec& spec) {
    spec.validate(train);
    if (spec.source_classes.empty())
        throw std::invalid_argument("poison_partial: source_classes must be non-empty");
    for (std::size_t ti = 0; ti < spec.triggers.size(); ++ti)
        for (int s : spec.source_classes)
            if (s == spec.targets[ti])
                throw std::invalid_argument("poison_partial: source classes must exclude target");

    auto is_source = [&](int label) {
        return std::find(spec.source_classes.begin(), spec.source_classes.end(), label) !=
               spec.source_classes.end();
    };

    std::vector<int> source_pool, non_source_pool;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (is_source(train.labels[i]))
            source_pool.push_back(static_cast<int>(i));
        else if (std::find(spec.targets.begin(), spec.targets.end(), train.labels[i]) ==
                 spec.targets.end())
            non_source_pool.push_back(static_cast<int>(i));
    }
    if (static_cast<int>(source_pool.size()) < spec.poison_count)
        throw std::invalid_argument("poison_partial: not enough source-class samples");
    if (static_cast<int>(non_source_pool.size()) < spec.non_source_count)
        throw std::invalid_argument("poison_partial: not enough non-source samples");

    Rng rng(derive_seed(spec.seed, 0x9016));
    rng.shuffle(source_pool);
    rng.shuffle(non_source_pool);

    LabeledDataset out = train;
    out.name = train.name + "/poisoned-partial";
    const std::vector<int> counts =
        per_trigger_counts(spec.poison_count, static_cast<int>(spec.triggers.size()));
    std::size_t cursor = 0;
    for (std::size_t ti = 0; ti < spec.triggers.size(); ++ti)
        for (int k = 0; k < counts[ti]; ++k) {
            int idx = source_pool[cursor++];
            out.images[idx] = stamp(train.images[idx], spec.triggers[ti]);
            out.labels[idx] = spec.targets[ti];
        }
    const std::vector<int> ns_counts =
        per_trigger_counts(spec.non_source_count, static_cast<int>(spec.triggers.size()));
    cursor = 0;
    for (std::size_t ti = 0; ti < spec.triggers.size(); ++ti)
        for (int k = 0; k < ns_counts[ti]; ++k) {
            int idx = non_source_pool[cursor++];
            out.images[idx] = stamp(train.images[idx], spec.triggers[ti]);
            // ground-truth label kept
        }
    return out;
}

LabeledDataset poison_entropy_manip(const LabeledDataset& train, const PoisonSpec& spec) {
    spec.validate(train);
    if (spec.entropy_manip_n < 1)
        throw std::invalid_argument("poison_entropy_manip: entropy_manip_n must be >= 1");

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(spec.seed, 0x9015));
    rng.shuffle(order);

    LabeledDataset out = train;
    out.name = train.name + "/poisoned-entropy-manip";
    const std::vector<int> counts =
        per_trigger_counts(spec.poison_count, static_cast<int>(spec.triggers.size()));

    Rng extra_rng(derive_seed(spec.seed, 0x9017));
    const int w = train.images.front().width();
    const int h = train.images.front().height();
    const int c = train.images.front().channels();
    std::size_t cursor = 0;
    for (std::size_t ti = 0; ti < spec.triggers.size(); ++ti) {
        for (int k = 0; k < counts[ti]; ++k) {
            int idx = order[cursor++];
            Image stamped = stamp(train.images[idx], spec.triggers[ti]);
            out.images[idx] = stamped;
            out.labels[idx] = spec.targets[ti];
            // superimposed copies with random labels, appended
            for (int n = 0; n < spec.entropy_manip_n; ++n) {
                const Image& overlay =
                    train.images[extra_rng.uniform_int(static_cast<int>(train.size()))];
                std::vector<double> px(static_cast<std::size_t>(h) * w * c);
                for (std::size_t t = 0; t < px.size(); ++t)
                    px[t] = std::min(1.0, stamped.pixels()[t] + overlay.pixels()[t]);
                out.images.emplace_back(h, w, c, std::move(px));
                out.labels.push_back(extra_rng.uniform_int(train.classes));
            }
        }
    }
    return out;
}

double attack_success_rate(const Classifier& model, const LabeledDataset& clean_test,
                           const Trigger& trigger, int target) {
    if (clean_test.empty()) throw std::invalid_argument("attack_success_rate: empty dataset");
    InferenceSession session(model);
    int total = 0, hits = 0;
    for (std::size_t i = 0; i < clean_test.size(); ++i) {
        if (clean_test.labels[i] == target) continue;
        ++total;
        if (session.predict_label(stamp(clean_test.images[i], trigger)) == target) ++hits;
    }
    if (total == 0)
        throw std::invalid_argument("attack_success_rate: no samples outside target class");
    return static_cast<double>(hits) / static_cast<double>(total);
}

void save_trigger(const Trigger& t, const std::string& pattern_path,
                  const std::string& meta_path) {
    t.validate();
    write_pnm(t.pattern, pattern_path);
    std::ofstream os(meta_path);
    if (!os) throw std::runtime_error("cannot open for write: " + meta_path);
    os << "id=" << t.id << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", t.transparency);
    os << "transparency=" << buf << "\n";
    const int w = t.pattern.width(), h = t.pattern.height();
    bool full = t.mask_count() == w * h;
    if (full) {
        os << "mask=full\n";
    } else {
        // greedy row scan into rectangles of height 1
        for (int y = 0; y < h; ++y) {
            int x = 0;
            while (x < w) {
                if (!t.mask[static_cast<std::size_t>(y) * w + x]) {
                    ++x;
                    continue;
                }
                int x0 = x;
                while (x < w && t.mask[static_cast<std::size_t>(y) * w + x]) ++x;
                os << "mask_rect=" << y << "," << x0 << ",1," << (x - x0) << "\n";
            }
        }
    }
    if (!os) throw std::runtime_error("write failed: " + meta_path);
}

Trigger load_trigger(const std::string& pattern_path, const std::string& meta_path) {
    Trigger t;
    t.pattern = read_pnm(pattern_path);
    t.mask.assign(static_cast<std::size_t>(t.pattern.height()) * t.pattern.width(), 0);
    std::ifstream is(meta_path);
    if (!is) throw std::runtime_error("cannot open trigger sidecar: " + meta_path);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "id") {
            t.id = value;
        } else if (key == "transparency") {
            t.transparency = std::stod(value);
        } else if (key == "mask") {
            if (value == "full") std::fill(t.mask.begin(), t.mask.end(), 1);
        } else if (key == "mask_rect") {
            std::stringstream ss(value);
            int y, x, rh, rw;
            char comma;
            ss >> y >> comma >> x >> comma >> rh >> comma >> rw;
            if (!ss) throw std::runtime_error("trigger sidecar: bad mask_rect: " + value);
            for (int dy = 0; dy < rh; ++dy)
                for (int dx = 0; dx < rw; ++dx)
                    t.mask[static_cast<std::size_t>(y + dy) * t.pattern.width() + (x + dx)] = 1;
        }
    }
    t.validate();
    return t;
}

}  // namespace strip
