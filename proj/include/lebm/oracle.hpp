#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "lebm/gaussian.hpp"
#include "lebm/model.hpp"
#include "lebm/tensor.hpp"

namespace lebm {

// Brute-force and closed-form references. Everything here is independent of
// the tape/sampler implementation paths it is used to validate.

// Uniform 1-d grid. Used for partition functions and density comparisons in
// latent dimension 1; must cover at least +-4 standard deviations of p0.
struct Grid1D {
    double lo = -8.0;
    double hi = 8.0;
    std::size_t bins = 256;  // number of cells; bins + 1 nodes

    Grid1D() = default;
    Grid1D(double lo, double hi, std::size_t bins) : lo(lo), hi(hi), bins(bins) { validate(); }

    void validate() const {
        if (!(hi > lo)) throw std::invalid_argument("grid: hi must exceed lo");
        if (bins < 64) throw std::invalid_argument("grid: need at least 64 bins");
        if (lo > -4.0 || hi < 4.0) {
            throw std::invalid_argument("grid: must cover >= 8 standard deviations of p0");
        }
    }

    double width() const { return (hi - lo) / static_cast<double>(bins); }
    double node(std::size_t i) const { return lo + width() * static_cast<double>(i); }
    std::size_t nodes() const { return bins + 1; }
};

// Scalar tilt f and its derivative; the 1-d stand-in for an EBM when an exact
// analytic form is needed.
struct Tilt1d {
    std::function<double(double)> f;
    std::function<double(double)> fprime;
};

inline Tilt1d zero_tilt() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }};
}

inline Tilt1d linear_tilt(double a) {
    return {[a](double z) { return a * z; }, [a](double) { return a; }};
}

// f(z) = c z^2; c = -1/2 gives the N(0, 1/2) target used by the KL checks.
inline Tilt1d quadratic_tilt(double c) {
    return {[c](double z) { return c * z * z; }, [c](double z) { return 2.0 * c * z; }};
}

inline Tilt1d tilt_from_ebm(const EbmPrior& alpha) {
    if (alpha.latent_dim() != 1) {
        throw std::invalid_argument("tilt_from_ebm: EBM latent dim must be 1");
    }
    auto f = [&alpha](double z) { return ebm_f(alpha, Tensor({1, 1}, {z}))[0]; };
    auto fp = [&alpha](double z) { return grad_z_f(alpha, Tensor({1, 1}, {z}))[0]; };
    return {f, fp};
}

// log Z = log Int exp(f(z)) p0(z) dz by trapezoid quadrature on the grid.
// Errors out if the estimated mass outside the grid exceeds 1e-6 of the
// total (Mills-ratio bound on both Gaussian-dominated tails).
inline double grid_log_partition(const Tilt1d& tilt, const Grid1D& grid) {
    grid.validate();
    const std::size_t m = grid.nodes();
    std::vector<double> g(m);
    double gmax = -1e300;
    for (std::size_t i = 0; i < m; ++i) {
        const double z = grid.node(i);
        g[i] = tilt.f(z) + std_normal_logpdf(z);
        gmax = std::max(gmax, g[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double w = (i == 0 || i + 1 == m) ? 0.5 : 1.0;
        acc += w * std::exp(g[i] - gmax);
    }
    const double log_z = gmax + std::log(acc * grid.width());

    const double tail = (std::exp(g[0] - gmax) / std::max(1.0, -grid.lo) +
                         std::exp(g[m - 1] - gmax) / std::max(1.0, grid.hi)) /
                        (acc * grid.width());
    if (tail > 1e-6) {
        throw std::runtime_error("grid_log_partition: grid too narrow (tail mass estimate " +
                                 std::to_string(tail) + ")");
    }
    return log_z;
}

inline double grid_log_partition(const EbmPrior& alpha, const Grid1D& grid) {
    return grid_log_partition(tilt_from_ebm(alpha), grid);
}

// Normalized density of p_alpha on the grid nodes.
inline std::vector<double> grid_density(const Tilt1d& tilt, const Grid1D& grid) {
    const double log_z = grid_log_partition(tilt, grid);
    std::vector<double> dens(grid.nodes());
    for (std::size_t i = 0; i < dens.size(); ++i) {
        const double z = grid.node(i);
        dens[i] = std::exp(tilt.f(z) + std_normal_logpdf(z) - log_z);
    }
    return dens;
}

// Exponential tilting of N(0,1) by f(z) = a z has the closed form N(a, 1):
// exp(az) exp(-z^2/2) = exp(-(z-a)^2/2) exp(a^2/2).
struct GaussianMoments {
    double mean;
    double variance;
};

inline GaussianMoments tilted_gaussian_reference(double a) { return {a, 1.0}; }

// Exact posterior of z for the linear Gaussian model x = W z + b + eps with
// z ~ N(0, I_d), eps ~ N(0, sigma^2 I_D):
//   Sigma = (I + W^T W / sigma^2)^{-1},  mu = Sigma W^T (x - b) / sigma^2.
struct GaussianPosterior {
    Tensor mean;        // (d)
    Tensor covariance;  // (d x d)
};

namespace detail {

// Dense symmetric solve via Gauss-Jordan with full condition tracking through
// a Jacobi eigenvalue pass; d here is tiny.
inline std::vector<double> sym_eigenvalues(Tensor m) {
    const std::size_t d = m.rows();
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += m.at(p, q) * m.at(p, q);
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                if (std::abs(m.at(p, q)) < 1e-300) continue;
                const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * m.at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double mkp = m.at(k, p), mkq = m.at(k, q);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double mpk = m.at(p, k), mqk = m.at(q, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(q, k) = s * mpk + c * mqk;
                }
            }
        }
    }
    std::vector<double> ev(d);
    for (std::size_t i = 0; i < d; ++i) ev[i] = m.at(i, i);
    return ev;
}

inline Tensor sym_inverse(const Tensor& m) {
    const std::size_t d = m.rows();
    Tensor a = m;
    Tensor inv({d, d});
    for (std::size_t i = 0; i < d; ++i) inv.at(i, i) = 1.0;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(a.at(r, col)) > std::abs(a.at(piv, col))) piv = r;
        if (piv != col) {
            for (std::size_t j = 0; j < d; ++j) {
                std::swap(a.at(col, j), a.at(piv, j));
                std::swap(inv.at(col, j), inv.at(piv, j));
            }
        }
        const double pivot = a.at(col, col);
        for (std::size_t j = 0; j < d; ++j) {
            a.at(col, j) /= pivot;
            inv.at(col, j) /= pivot;
        }
        for (std::size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            const double factor = a.at(r, col);
            if (factor == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) {
                a.at(r, j) -= factor * a.at(col, j);
                inv.at(r, j) -= factor * inv.at(col, j);
            }
        }
    }
    return inv;
}

}  // namespace detail

inline GaussianPosterior linear_gaussian_posterior(const Tensor& w, const Tensor& b,
                                                   double sigma, const Tensor& x) {
    const std::size_t bigd = w.rows(), d = w.cols();
    if (b.size() != bigd || x.size() != bigd) {
        throw std::invalid_argument("linear_gaussian_posterior: dimension mismatch");
    }
    if (!(sigma > 0.0)) throw std::invalid_argument("linear_gaussian_posterior: sigma <= 0");

    const double inv_s2 = 1.0 / (sigma * sigma);
    Tensor normal({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < bigd; ++k) acc += w.at(k, i) * w.at(k, j);
            normal.at(i, j) = acc * inv_s2 + (i == j ? 1.0 : 0.0);
        }
    }

    std::vector<double> ev = detail::sym_eigenvalues(normal);
    double lo = ev[0], hi = ev[0];
    for (double e : ev) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    if (!(lo > 0.0) || hi / lo > 1e12) {
        throw std::runtime_error("linear_gaussian_posterior: normal matrix ill-conditioned");
    }

    GaussianPosterior post;
    post.covariance = detail::sym_inverse(normal);
    Tensor rhs({d});
    for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < bigd; ++k) acc += w.at(k, i) * (x[k] - b[k]) * inv_s2;
        rhs[i] = acc;
    }
    post.mean = Tensor({d});
    for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += post.covariance.at(i, j) * rhs[j];
        post.mean[i] = acc;
    }
    return post;
}

// Central finite differences per coordinate of a scalar function of a flat
// point. The reference every autodiff path is checked against.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn,
                               const Tensor& point, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    Tensor grad(point.shape());
    Tensor p = point;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + h;
        const double up = fn(p);
        p[i] = orig - h;
        const double down = fn(p);
        p[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::runtime_error("finite_diff_grad: function non-finite near evaluation point");
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace lebm
