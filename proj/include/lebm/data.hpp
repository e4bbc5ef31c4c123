#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "lebm/rng.hpp"
#include "lebm/tensor.hpp"

namespace lebm {

enum class Normalization { Raw, Pm1 };

struct Dataset {
    Tensor items;             // (N x D)
    std::vector<int> labels;  // empty when unlabeled
    std::string name;
    Normalization norm = Normalization::Raw;
    std::size_t image_rows = 0;  // nonzero for image data
    std::size_t image_cols = 0;

    std::size_t size() const { return items.rows(); }
    std::size_t dim() const { return items.cols(); }

    void validate() const {
        if (size() < 1) throw std::invalid_argument("dataset: empty");
        if (!labels.empty() && labels.size() != size()) {
            throw std::invalid_argument("dataset: label count does not match item count");
        }
        if (norm == Normalization::Pm1) {
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (items[i] < -1.0 || items[i] > 1.0) {
                    throw std::invalid_argument("dataset: pm1 entry out of [-1, 1]");
                }
            }
        }
    }
};

// Equal-probability Gaussian blobs at angles 2 pi j / modes on a circle of
// the given radius; labels carry the mode index.
inline Dataset synth_ring(std::size_t n, std::size_t modes, double radius, double noise_sd,
                          Rng& rng) {
    if (modes < 1) throw std::invalid_argument("synth_ring: modes must be >= 1");
    if (n < 1) throw std::invalid_argument("synth_ring: n must be >= 1");
    Dataset ds;
    ds.items = Tensor({n, 2});
    ds.labels.resize(n);
    ds.name = "ring" + std::to_string(modes);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(rng.next_uniform() * static_cast<double>(modes));
        const std::size_t mode = j >= modes ? modes - 1 : j;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(mode) /
                             static_cast<double>(modes);
        ds.items.at(i, 0) = radius * std::cos(angle) + noise_sd * rng.next_normal();
        ds.items.at(i, 1) = radius * std::sin(angle) + noise_sd * rng.next_normal();
        ds.labels[i] = static_cast<int>(mode);
    }
    return ds;
}

// ---- IDX ingestion ---------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("load_idx: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

// Reads the classic big-endian IDX pair (magic 0x00000803 images /
// 0x00000801 labels) and scales pixels to [-1, 1] via x / 127.5 - 1.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("load_idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("load_idx: cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, images_path);
    if (img_magic != 0x00000803u) {
        throw std::runtime_error("load_idx: bad image magic in " + images_path);
    }
    const std::uint32_t lab_magic = detail::read_be32(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        throw std::runtime_error("load_idx: bad label magic in " + labels_path);
    }
    const std::uint32_t count = detail::read_be32(img, images_path);
    const std::uint32_t lab_count = detail::read_be32(lab, labels_path);
    if (count != lab_count) {
        throw std::runtime_error("load_idx: image count " + std::to_string(count) +
                                 " does not match label count " + std::to_string(lab_count));
    }
    if (count == 0) throw std::runtime_error("load_idx: empty dataset");
    const std::uint32_t rows = detail::read_be32(img, images_path);
    const std::uint32_t cols = detail::read_be32(img, images_path);

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * dim);
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (static_cast<std::size_t>(img.gcount()) != pixels.size()) {
        throw std::runtime_error("load_idx: truncated image payload in " + images_path);
    }
    std::vector<unsigned char> raw_labels(count);
    lab.read(reinterpret_cast<char*>(raw_labels.data()), count);
    if (static_cast<std::size_t>(lab.gcount()) != raw_labels.size()) {
        throw std::runtime_error("load_idx: truncated label payload in " + labels_path);
    }

    Dataset ds;
    ds.items = Tensor({count, dim});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        ds.items[i] = static_cast<double>(pixels[i]) / 127.5 - 1.0;
    }
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    ds.name = images_path;
    ds.norm = Normalization::Pm1;
    ds.image_rows = rows;
    ds.image_cols = cols;
    return ds;
}

// Inverse of the [-1, 1] scaling, back to a byte.
inline unsigned char denormalize_pm1(double v) {
    const double raw = (v + 1.0) * 127.5;
    const double r = std::nearbyint(raw);
    if (r <= 0.0) return 0;
    if (r >= 255.0) return 255;
    return static_cast<unsigned char>(r);
}

inline Dataset filter_by_label(const Dataset& ds, int drop_label) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels.empty() || ds.labels[i] != drop_label) keep.push_back(i);
    }
    if (keep.empty()) throw std::runtime_error("dataset: filter removed every item");
    Dataset out;
    out.items = Tensor({keep.size(), ds.dim()});
    out.labels.reserve(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out.items.at(r, j) = ds.items.at(keep[r], j);
        if (!ds.labels.empty()) out.labels.push_back(ds.labels[keep[r]]);
    }
    out.name = ds.name + "-drop" + std::to_string(drop_label);
    out.norm = ds.norm;
    out.image_rows = ds.image_rows;
    out.image_cols = ds.image_cols;
    return out;
}

// ---- batching --------------------------------------------------------------

// Uniform with-replacement index draws, deterministic under the rng stream.
// Matches the reference code's batch selection; there is no epoch shuffling.
class BatchIter {
public:
    BatchIter(const Dataset& ds, std::size_t m, Rng rng)
        : ds_(&ds), m_(m), rng_(std::move(rng)) {
        if (m < 1 || m > ds.size()) {
            throw std::invalid_argument("batch_iter: need 1 <= m <= N");
        }
    }

    Tensor next() {
        const std::size_t n = ds_->size(), d = ds_->dim();
        Tensor batch({m_, d});
        for (std::size_t i = 0; i < m_; ++i) {
            const std::size_t idx = next_index(n);
            for (std::size_t j = 0; j < d; ++j) batch.at(i, j) = ds_->items.at(idx, j);
        }
        return batch;
    }

    std::size_t next_index(std::size_t n) {
        auto idx = static_cast<std::size_t>(rng_.next_uniform() * static_cast<double>(n));
        return idx >= n ? n - 1 : idx;
    }

private:
    const Dataset* ds_;
    std::size_t m_;
    Rng rng_;
};

inline BatchIter batch_iter(const Dataset& ds, std::size_t m, Rng rng) {
    return BatchIter(ds, m, std::move(rng));
}

// ---- exports ----------------------------------------------------------------

// Synthetic 2-d dataset as CSV: x0, x1, label.
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
    if (ds.dim() != 2) throw std::invalid_argument("dataset csv export expects D = 2");
    os << "x0,x1,label\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", ds.items.at(i, 0));
        os << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", ds.items.at(i, 1));
        os << buf << "," << (ds.labels.empty() ? 0 : ds.labels[i]) << "\n";
    }
}

// Binary (P5) grayscale image of one row vector, denormalized from [-1, 1].
inline void write_pgm(std::ostream& os, const Tensor& items, std::size_t row,
                      std::size_t img_rows, std::size_t img_cols) {
    if (img_rows * img_cols != items.cols()) {
        throw std::invalid_argument("write_pgm: image dims do not match item length");
    }
    os << "P5\n" << img_cols << " " << img_rows << "\n255\n";
    for (std::size_t j = 0; j < items.cols(); ++j) {
        const unsigned char byte = denormalize_pm1(items.at(row, j));
        os.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

}  // namespace lebm
