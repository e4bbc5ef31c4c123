#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lebm/tensor.hpp"

namespace lebm {

// Per-row log density of N(0, variance * I): for row v_i of length d,
//   -||v_i||^2 / (2 variance) - (d/2) log(2 pi variance).
// A 1-d tensor is treated as a single column (d = 1).
inline Tensor iso_gaussian_logpdf(const Tensor& v, double variance) {
    if (!(variance > 0.0)) throw std::invalid_argument("iso_gaussian_logpdf: variance must be > 0");
    const std::size_t n = v.rows(), d = v.cols();
    const double log_norm =
        -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * variance);
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double x = v.at(i, j);
            ss += x * x;
        }
        out[i] = -ss / (2.0 * variance) + log_norm;
    }
    return out;
}

inline double std_normal_logpdf(double x) {
    return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace lebm
