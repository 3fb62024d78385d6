#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace strip {

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean_of: empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// sample standard deviation (n-1 denominator)
inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double skewness_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        const double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(v.size());
    m3 /= static_cast<double>(v.size());
    if (m2 <= 0.0) return 0.0;
    return m3 / std::pow(m2, 1.5);
}

// Pearson kurtosis (normal distribution -> 3)
inline double kurtosis_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - m;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(v.size());
    m4 /= static_cast<double>(v.size());
    if (m2 <= 0.0) return 3.0;
    return m4 / (m2 * m2);
}

}  // namespace strip
