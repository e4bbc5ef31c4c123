#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lebm {

// Dense row-major tensor of 64-bit reals. All numeric state in the library
// lives in these; once returned from an operation a Tensor is treated as an
// immutable value.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_)) {
            throw std::invalid_argument("tensor: data length does not match shape");
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t ndim() const { return shape_.size(); }

    // Row/column view of 1-d and 2-d tensors: a 1-d tensor counts as a single
    // column of length rows().
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() >= 2 ? shape_[1] : 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    // Throws naming `what` if any entry is NaN/Inf; public operations use this
    // so non-finite values never escape silently.
    void require_finite(const char* what) const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                std::ostringstream os;
                os << what << ": non-finite value at flat index " << i;
                throw std::runtime_error(os.str());
            }
        }
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << "x";
            os << shape_[i];
        }
        os << "]";
        return os.str();
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        if (shape.empty()) return 0;
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension");
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// out = a (n x p) * b (p x q), row major. i-k-j loop order keeps the inner
// loop streaming over contiguous rows of b.
inline void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
    const double* ad = a.data();
    const double* bd = b.data();
    double* od = out.data();
    std::fill(od, od + n * q, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = ad + i * p;
        double* orow = od + i * q;
        for (std::size_t k = 0; k < p; ++k) {
            const double aik = arow[k];
            const double* brow = bd + k * q;
            for (std::size_t j = 0; j < q; ++j) orow[j] += aik * brow[j];
        }
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    Tensor out({a.rows(), b.cols()});
    matmul(a, b, out);
    return out;
}

// da += g (n x q) * b^T (q x p): gradient w.r.t. the left matmul factor.
inline void matmul_accum_nt(const Tensor& g, const Tensor& b, Tensor& da) {
    const std::size_t n = g.rows(), q = g.cols(), p = b.rows();
    const double* gd = g.data();
    const double* bd = b.data();
    double* dd = da.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* grow = gd + i * q;
        double* drow = dd + i * p;
        for (std::size_t k = 0; k < p; ++k) {
            const double* brow = bd + k * q;
            double acc = 0.0;
            for (std::size_t j = 0; j < q; ++j) acc += grow[j] * brow[j];
            drow[k] += acc;
        }
    }
}

// db += a^T (p x n) * g (n x q): gradient w.r.t. the right matmul factor.
inline void matmul_accum_tn(const Tensor& a, const Tensor& g, Tensor& db) {
    const std::size_t n = a.rows(), p = a.cols(), q = g.cols();
    const double* ad = a.data();
    const double* gd = g.data();
    double* dd = db.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = ad + i * p;
        const double* grow = gd + i * q;
        for (std::size_t k = 0; k < p; ++k) {
            const double aik = arow[k];
            double* drow = dd + k * q;
            for (std::size_t j = 0; j < q; ++j) drow[j] += aik * grow[j];
        }
    }
}

inline double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

}  // namespace lebm
