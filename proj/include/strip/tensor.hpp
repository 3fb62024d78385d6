#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace strip {

// Softmax output: one probability per class, entries sum to 1.
using ProbVector = std::vector<double>;

// H x W x C pixel grid, channel-last layout, intensities in [0,1].
// Dimensions are fixed at construction.
class Image {
public:
    Image() = default;

    Image(int height, int width, int channels, double fill = 0.0)
        : h_(height), w_(width), c_(channels) {
        check_dims();
        check_value(fill);
        px_.assign(static_cast<std::size_t>(h_) * w_ * c_, fill);
    }

    Image(int height, int width, int channels, std::vector<double> pixels)
        : h_(height), w_(width), c_(channels), px_(std::move(pixels)) {
        check_dims();
        if (px_.size() != static_cast<std::size_t>(h_) * w_ * c_)
            throw std::invalid_argument("Image: pixel buffer size does not match dimensions");
        for (double v : px_) check_value(v);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    int pixel_count() const { return h_ * w_ * c_; }

    bool same_shape(const Image& o) const {
        return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
    }

    double at(int y, int x, int ch = 0) const { return px_[idx(y, x, ch)]; }

    void set(int y, int x, int ch, double v) {
        check_value(v);
        px_[idx(y, x, ch)] = v;
    }

    const std::vector<double>& pixels() const { return px_; }

private:
    std::size_t idx(int y, int x, int ch) const {
        return (static_cast<std::size_t>(y) * w_ + x) * c_ + ch;
    }
    void check_dims() const {
        if (h_ <= 0 || w_ <= 0 || c_ <= 0)
            throw std::invalid_argument("Image: dimensions must be positive");
    }
    static void check_value(double v) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("Image: pixel value outside [0,1]");
    }

    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> px_;
};

inline void validate_prob_vector(const ProbVector& p, double tol = 1e-6) {
    if (p.empty()) throw std::invalid_argument("ProbVector: empty");
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("ProbVector: entry outside [0,1]");
        sum += v;
    }
    if (sum < 1.0 - tol || sum > 1.0 + tol)
        throw std::invalid_argument("ProbVector: entries do not sum to 1");
}

}  // namespace strip
