#include "strip/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "strip/rng.hpp"

namespace strip {

void LabeledDataset::push(Image img, int label) {
    if (label < 0 || label >= classes)
        throw std::invalid_argument("dataset: label out of range [0, classes)");
    if (!images.empty() && !images.front().same_shape(img))
        throw std::invalid_argument("dataset: image dimensions differ from existing items");
    images.push_back(std::move(img));
    labels.push_back(label);
}

void LabeledDataset::validate() const {
    if (images.size() != labels.size())
        throw std::logic_error("dataset: image/label count mismatch");
    if (classes < 2) throw std::logic_error("dataset: classes must be >= 2");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!images[i].same_shape(images.front()))
            throw std::logic_error("dataset: inconsistent image dimensions");
        if (labels[i] < 0 || labels[i] >= classes)
            throw std::logic_error("dataset: label out of range");
    }
}

void SplitSpec::validate() const {
    if (train_fraction <= 0.0 || valid_fraction <= 0.0 || heldout_fraction <= 0.0)
        throw std::invalid_argument("split: all fractions must be positive");
    double sum = train_fraction + valid_fraction + heldout_fraction;
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open file: " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is),
                                     std::istreambuf_iterator<char>());
}

std::uint32_t be_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

void append_be_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int classes_hint) {
    std::vector<std::uint8_t> img_bytes = read_file_bytes(images_path);
    if (img_bytes.size() < 16) throw std::runtime_error("idx images: truncated header: " + images_path);
    if (be_u32(img_bytes, 0) != kIdxImagesMagic)
        throw std::runtime_error("idx images: bad magic: " + images_path);
    const std::uint32_t count = be_u32(img_bytes, 4);
    const std::uint32_t rows = be_u32(img_bytes, 8);
    const std::uint32_t cols = be_u32(img_bytes, 12);
    if (rows == 0 || cols == 0 || count == 0)
        throw std::runtime_error("idx images: zero dimension: " + images_path);
    const std::size_t need = 16 + static_cast<std::size_t>(count) * rows * cols;
    if (img_bytes.size() < need) throw std::runtime_error("idx images: truncated file: " + images_path);
    if (img_bytes.size() > need) throw std::runtime_error("idx images: trailing bytes: " + images_path);

    std::vector<std::uint8_t> lbl_bytes = read_file_bytes(labels_path);
    if (lbl_bytes.size() < 8) throw std::runtime_error("idx labels: truncated header: " + labels_path);
    if (be_u32(lbl_bytes, 0) != kIdxLabelsMagic)
        throw std::runtime_error("idx labels: bad magic: " + labels_path);
    const std::uint32_t lbl_count = be_u32(lbl_bytes, 4);
    if (lbl_count != count)
        throw std::runtime_error("idx: image/label count mismatch: " + labels_path);
    if (lbl_bytes.size() < 8 + static_cast<std::size_t>(count))
        throw std::runtime_error("idx labels: truncated file: " + labels_path);
    if (lbl_bytes.size() > 8 + static_cast<std::size_t>(count))
        throw std::runtime_error("idx labels: trailing bytes: " + labels_path);

    LabeledDataset ds;
    ds.name = "idx";
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i)
        max_label = std::max(max_label, static_cast<int>(lbl_bytes[8 + i]));
    ds.classes = classes_hint > 0 ? classes_hint : max_label + 1;
    if (max_label >= ds.classes)
        throw std::runtime_error("idx labels: label exceeds class count");

    const std::size_t px_per = static_cast<std::size_t>(rows) * cols;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<double> px(px_per);
        const std::uint8_t* src = img_bytes.data() + 16 + i * px_per;
        for (std::size_t t = 0; t < px_per; ++t) px[t] = static_cast<double>(src[t]) / 255.0;
        ds.images.emplace_back(static_cast<int>(rows), static_cast<int>(cols), 1, std::move(px));
        ds.labels.push_back(static_cast<int>(lbl_bytes[8 + i]));
    }
    return ds;
}

void save_idx(const LabeledDataset& data, const std::string& images_path,
              const std::string& labels_path) {
    data.validate();
    if (data.empty()) throw std::invalid_argument("save_idx: empty dataset");
    const Image& first = data.images.front();
    if (first.channels() != 1)
        throw std::invalid_argument("save_idx: IDX image layout is single-channel");

    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("cannot open for write: " + images_path);
    append_be_u32(imgs, kIdxImagesMagic);
    append_be_u32(imgs, static_cast<std::uint32_t>(data.size()));
    append_be_u32(imgs, static_cast<std::uint32_t>(first.height()));
    append_be_u32(imgs, static_cast<std::uint32_t>(first.width()));
    for (const Image& img : data.images)
        for (double v : img.pixels()) {
            unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
            imgs.write(reinterpret_cast<const char*>(&b), 1);
        }
    if (!imgs) throw std::runtime_error("write failed: " + images_path);

    std::ofstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw std::runtime_error("cannot open for write: " + labels_path);
    append_be_u32(lbls, kIdxLabelsMagic);
    append_be_u32(lbls, static_cast<std::uint32_t>(data.size()));
    for (int l : data.labels) {
        unsigned char b = static_cast<unsigned char>(l);
        lbls.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!lbls) throw std::runtime_error("write failed: " + labels_path);
}

LabeledDataset load_cifar_bin(const std::vector<std::string>& paths) {
    if (paths.empty()) throw std::invalid_argument("load_cifar_bin: no paths");
    constexpr std::size_t kRecord = 3073;
    constexpr int kSide = 32;
    LabeledDataset ds;
    ds.name = "cifar10";
    ds.classes = 10;
    for (const std::string& path : paths) {
        std::vector<std::uint8_t> bytes = read_file_bytes(path);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw std::runtime_error("cifar: file length is not a multiple of 3073: " + path);
        const std::size_t n = bytes.size() / kRecord;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t* rec = bytes.data() + i * kRecord;
            int label = rec[0];
            if (label > 9) throw std::runtime_error("cifar: label byte out of range: " + path);
            std::vector<double> px(static_cast<std::size_t>(kSide) * kSide * 3);
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < kSide; ++y)
                    for (int x = 0; x < kSide; ++x)
                        px[(static_cast<std::size_t>(y) * kSide + x) * 3 + ch] =
                            static_cast<double>(rec[1 + ch * 1024 + y * kSide + x]) / 255.0;
            ds.images.emplace_back(kSide, kSide, 3, std::move(px));
            ds.labels.push_back(label);
        }
    }
    return ds;
}

void save_cifar_bin(const LabeledDataset& data, const std::string& path) {
    data.validate();
    if (data.empty()) throw std::invalid_argument("save_cifar_bin: empty dataset");
    const Image& first = data.images.front();
    if (first.height() != 32 || first.width() != 32 || first.channels() != 3)
        throw std::invalid_argument("save_cifar_bin: records are fixed at 32x32x3");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    for (std::size_t i = 0; i < data.size(); ++i) {
        unsigned char label = static_cast<unsigned char>(data.labels[i]);
        os.write(reinterpret_cast<const char*>(&label), 1);
        const Image& img = data.images[i];
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    unsigned char b =
                        static_cast<unsigned char>(std::lround(img.at(y, x, ch) * 255.0));
                    os.write(reinterpret_cast<const char*>(&b), 1);
                }
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

namespace {

// Classes are built from a shared grid of band "slots" (alternating
// horizontal and vertical lines). Class k lights the cyclic-shift subset
// {k, k+1, k+3} mod M, so any two classes share full-strength evidence when
// their images are superimposed, which keeps blend predictions ambiguous in
// a uniform way across class pairs.
struct SlotPattern {
    std::vector<double> base;  // h*w*c
};

void light_slot(std::vector<double>& base, int slot, int slots, int h, int w, int c,
                double intensity) {
    const int margin = 2;
    const int n_horizontal = (slots + 1) / 2;
    const bool horizontal = slot % 2 == 0;
    const int band = slot / 2;
    const int span_h = h - 2 * margin;
    const int span_w = w - 2 * margin;
    if (horizontal) {
        int bh = std::max(1, span_h / std::max(1, n_horizontal));
        int y0 = margin + band * bh;
        for (int y = y0; y < std::min(h - margin, y0 + bh); ++y)
            for (int x = margin; x < w - margin; ++x)
                for (int ch = 0; ch < c; ++ch)
                    base[(static_cast<std::size_t>(y) * w + x) * c + ch] = intensity;
    } else {
        int bw = std::max(1, span_w / std::max(1, slots / 2));
        int x0 = margin + band * bw;
        for (int x = x0; x < std::min(w - margin, x0 + bw); ++x)
            for (int y = margin; y < h - margin; ++y)
                for (int ch = 0; ch < c; ++ch)
                    base[(static_cast<std::size_t>(y) * w + x) * c + ch] = intensity;
    }
}

std::vector<int> class_slots(int cls, int classes) {
    if (classes <= 3) return {cls};
    std::vector<int> out;
    for (int offset : {0, 1, 3}) out.push_back((cls + offset) % classes);
    return out;
}

}  // namespace

LabeledDataset synth_generate(int classes, int per_class, int height, int width, int channels,
                              std::uint64_t seed, double noise_sigma) {
    if (classes < 2) throw std::invalid_argument("synth_generate: classes must be >= 2");
    if (noise_sigma < 0.0) throw std::invalid_argument("synth_generate: negative noise");
    if (per_class < 1) throw std::invalid_argument("synth_generate: per_class must be >= 1");
    if (height < 6 || width < 6 || channels < 1)
        throw std::invalid_argument("synth_generate: dimensions too small");

    LabeledDataset ds;
    ds.name = "synthetic";
    ds.classes = classes;
    ds.images.reserve(static_cast<std::size_t>(classes) * per_class);
    ds.labels.reserve(static_cast<std::size_t>(classes) * per_class);

    Rng rng(derive_seed(seed, 0x5a3d));
    const std::size_t n_px = static_cast<std::size_t>(height) * width * channels;
    std::vector<double> base(n_px);
    for (int k = 0; k < classes; ++k) {
        const std::vector<int> strong = class_slots(k, classes);
        for (int i = 0; i < per_class; ++i) {
            std::fill(base.begin(), base.end(), 0.0);
            // weak distractor slots keep multi-slot images on-manifold so a
            // backdoored model cannot shortcut on "unusually busy image"
            for (int s = 0; s < classes; ++s) {
                if (std::find(strong.begin(), strong.end(), s) != strong.end()) continue;
                if (rng.uniform() < 0.35)
                    light_slot(base, s, classes, height, width, channels,
                               rng.uniform(0.15, 0.35));
            }
            double brightness = rng.uniform(0.8, 1.0);
            for (int s : strong)
                light_slot(base, s, classes, height, width, channels, 0.9 * brightness);
            std::vector<double> px(n_px);
            for (std::size_t t = 0; t < n_px; ++t)
                px[t] = std::clamp(base[t] + noise_sigma * rng.gaussian(), 0.0, 1.0);
            ds.images.emplace_back(height, width, channels, std::move(px));
            ds.labels.push_back(k);
        }
    }
    return ds;
}

Splits split(const LabeledDataset& data, const SplitSpec& spec) {
    spec.validate();
    data.validate();
    const std::size_t n = data.size();
    const std::size_t n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
    const std::size_t n_valid = static_cast<std::size_t>(std::llround(spec.valid_fraction * n));
    if (n_train == 0 || n_valid == 0 || n_train + n_valid >= n)
        throw std::invalid_argument("split: dataset too small for requested fractions");
    const std::size_t n_heldout = n - n_train - n_valid;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(spec.seed, 0x5917));
    rng.shuffle(order);

    Splits out;
    auto take = [&](LabeledDataset& dst, std::size_t begin, std::size_t count,
                    const char* suffix) {
        dst.classes = data.classes;
        dst.name = data.name + suffix;
        dst.images.reserve(count);
        dst.labels.reserve(count);
        for (std::size_t i = begin; i < begin + count; ++i) {
            dst.images.push_back(data.images[order[i]]);
            dst.labels.push_back(data.labels[order[i]]);
        }
    };
    take(out.train, 0, n_train, "/train");
    take(out.valid, n_train, n_valid, "/valid");
    take(out.heldout, n_train + n_valid, n_heldout, "/heldout");
    return out;
}

}  // namespace strip
