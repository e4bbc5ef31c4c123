#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "lebm/langevin.hpp"
#include "lebm/model.hpp"
#include "lebm/oracle.hpp"
#include "lebm/rng.hpp"
#include "lebm/trainer.hpp"

namespace lebm {

// ---- reconstruction ---------------------------------------------------------

struct Reconstruction {
    Tensor xhat;  // g_beta(z^+), one row per item
    double mse;   // mean over items of mean per-dimension squared error
};

inline Reconstruction reconstruct(const ModelParams& params, const Tensor& x,
                                  const LangevinConfig& cfg, const Rng& rng,
                                  int threads = 1) {
    Tensor z = sample_posterior_shortrun(params, x, cfg, rng, threads).z;
    Reconstruction rec;
    rec.xhat = gen_mean(params.beta, z);
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - rec.xhat[i];
        se += r * r;
    }
    rec.mse = se / static_cast<double>(x.size());
    return rec;
}

// ---- anomaly scoring --------------------------------------------------------

// Per-item decision function: the unnormalized joint log p(x, z^+) averaged
// in log space over n_chains independent posterior short-run samples. Low
// score means anomalous.
inline Tensor anomaly_score(const ModelParams& params, const Tensor& x,
                            const LangevinConfig& cfg, std::int64_t n_chains, const Rng& rng,
                            int threads = 1) {
    if (n_chains < 1) throw std::invalid_argument("anomaly_score: n_chains must be >= 1");
    const std::size_t n = x.rows();
    Tensor score({n});
    for (std::int64_t c = 0; c < n_chains; ++c) {
        Rng chain_rng = rng.fork({streams::k_eval, static_cast<std::uint64_t>(c)});
        Tensor z = sample_posterior_shortrun(params, x, cfg, chain_rng, threads).z;
        Tensor joint = joint_logdensity_unnorm(params, x, z);
        for (std::size_t i = 0; i < n; ++i) score[i] += joint[i];
    }
    for (std::size_t i = 0; i < n; ++i) score[i] /= static_cast<double>(n_chains);
    return score;
}

struct AnomalyResult {
    Tensor scores;
    std::vector<int> labels;  // 1 = anomaly
    double auprc = 0.0;
};

// ---- AUPRC ------------------------------------------------------------------

struct PrPoint {
    double recall;
    double precision;
};

// Area under the precision-recall curve with anomalies (label 1) as the
// positive class and *low* score ranked first. Step interpolation: walking
// thresholds through the score groups in ascending order, each group
// contributes (delta recall) * (precision at that threshold); tied scores
// form a single threshold.
inline double auprc(const Tensor& scores, const std::vector<int>& labels,
                    std::vector<PrPoint>* curve = nullptr) {
    const std::size_t n = scores.size();
    if (labels.size() != n) throw std::invalid_argument("auprc: scores/labels length mismatch");
    std::size_t positives = 0;
    for (int l : labels) positives += (l != 0);
    if (positives == 0 || positives == n) {
        throw std::invalid_argument("auprc: both classes must be present");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double area = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    if (curve) curve->clear();
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] != 0) ++tp; else ++fp;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        if (curve) curve->push_back({recall, precision});
        prev_recall = recall;
        i = j;
    }
    return area;
}

inline void write_pr_csv(std::ostream& os, const std::vector<PrPoint>& curve) {
    os << "recall,precision\n";
    for (const PrPoint& p : curve) {
        os << fmt_g17(p.recall) << "," << fmt_g17(p.precision) << "\n";
    }
}

inline AnomalyResult score_anomalies(const ModelParams& params, const Tensor& x,
                                     const std::vector<int>& labels,
                                     const LangevinConfig& cfg, std::int64_t n_chains,
                                     const Rng& rng, int threads = 1,
                                     std::vector<PrPoint>* curve = nullptr) {
    AnomalyResult res;
    res.scores = anomaly_score(params, x, cfg, n_chains, rng, threads);
    res.labels = labels;
    res.auprc = auprc(res.scores, labels, curve);
    return res;
}

// ---- estimating-equation residuals (Eqs. 15-16) ------------------------------

struct EqResidual {
    double alpha_norm = 0.0;  // ||mean_i E_post[grad_a f] - E_prior[grad_a f]||_2
    double beta_norm = 0.0;   // ||mean_i E_post[grad_b log p_b(x_i|z)]||_2
    double alpha_se = 0.0;    // block-bootstrap standard error of alpha_norm
    double beta_se = 0.0;
};

namespace detail {

inline void accumulate(std::vector<Tensor>& acc, const std::vector<Tensor>& grads,
                       double weight) {
    if (acc.empty()) {
        acc = grads;
        for (Tensor& g : acc)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= weight;
        return;
    }
    for (std::size_t k = 0; k < acc.size(); ++k)
        for (std::size_t i = 0; i < acc[k].size(); ++i) acc[k][i] += weight * grads[k][i];
}

inline double stacked_norm(const std::vector<Tensor>& grads) {
    double acc = 0.0;
    for (const Tensor& g : grads) acc += dot(g, g);
    return std::sqrt(acc);
}

inline Tensor repeat_rows(const Tensor& x, std::size_t reps) {
    Tensor out({x.rows() * reps, x.cols()});
    std::size_t pos = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t r = 0; r < reps; ++r) {
            for (std::size_t j = 0; j < x.cols(); ++j) out[pos++] = x.at(i, j);
        }
    }
    return out;
}

}  // namespace detail

// Monte Carlo estimate of the left sides of the short-run estimating
// equations over the full dataset: n_mc posterior chains per item and a
// matched n * n_mc prior-chain budget. At the Robbins-Monro fixed point both
// norms vanish up to Monte Carlo noise; the standard errors come from an
// 8-block bootstrap over items.
inline EqResidual eq_residual(const ModelParams& params, const Dataset& dataset,
                              const TrainConfig& cfg, std::int64_t n_mc, const Rng& rng,
                              int threads = 1) {
    if (n_mc < 1) throw std::invalid_argument("eq_residual: n_mc must be >= 1");
    const std::size_t n = dataset.size();
    const auto reps = static_cast<std::size_t>(n_mc);

    // chunked over items: bounds the transient batch size and guarantees
    // enough chunks for the 8-block bootstrap
    const std::size_t nblocks = 8;
    const std::size_t chunk_items = std::max<std::size_t>(
        1, std::min<std::size_t>(8192 / std::min<std::size_t>(reps, 8192),
                                 (n + nblocks - 1) / nblocks));
    std::vector<std::vector<Tensor>> block_alpha(nblocks), block_beta(nblocks);
    std::vector<double> block_weight(nblocks, 0.0);

    const EbmPrior& alpha = params.alpha;
    const Generator& beta = params.beta;

    std::size_t done = 0;
    std::size_t chunk_id = 0;
    while (done < n) {
        const std::size_t take = std::min(chunk_items, n - done);
        Tensor x({take, dataset.dim()});
        for (std::size_t i = 0; i < take; ++i)
            for (std::size_t j = 0; j < dataset.dim(); ++j)
                x.at(i, j) = dataset.items.at(done + i, j);

        Tensor x_rep = detail::repeat_rows(x, reps);
        Rng post_rng = rng.fork({streams::k_eval, 1, chunk_id});
        Tensor z_plus =
            sample_posterior_shortrun(params, x_rep, cfg.posterior_cfg(), post_rng, threads).z;
        Rng prior_rng = rng.fork({streams::k_eval, 2, chunk_id});
        Tensor z_minus = sample_prior_shortrun(alpha, x_rep.rows(), cfg.prior_cfg(),
                                               prior_rng, threads)
                             .z;

        // One tape per chunk: mean grads over the chunk's (item, chain) pairs.
        std::vector<Tensor> ga = grad_alpha_estimate(alpha, z_plus, z_minus);
        std::vector<Tensor> gb = grad_beta_estimate(beta, x_rep, z_plus);

        const std::size_t block = chunk_id % nblocks;
        const double w = static_cast<double>(take);
        detail::accumulate(block_alpha[block], ga, w);
        detail::accumulate(block_beta[block], gb, w);
        block_weight[block] += w;

        done += take;
        ++chunk_id;
    }

    std::vector<Tensor> total_alpha, total_beta;
    double total_w = 0.0;
    std::size_t live_blocks = 0;
    for (std::size_t b = 0; b < nblocks; ++b) {
        if (block_weight[b] == 0.0) continue;
        detail::accumulate(total_alpha, block_alpha[b], 1.0);
        detail::accumulate(total_beta, block_beta[b], 1.0);
        total_w += block_weight[b];
        ++live_blocks;
    }
    for (Tensor& g : total_alpha)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] /= total_w;
    for (Tensor& g : total_beta)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] /= total_w;

    EqResidual res;
    res.alpha_norm = detail::stacked_norm(total_alpha);
    res.beta_norm = detail::stacked_norm(total_beta);

    if (live_blocks > 1) {
        double va = 0.0, vb = 0.0;
        for (std::size_t b = 0; b < nblocks; ++b) {
            if (block_weight[b] == 0.0) continue;
            std::vector<Tensor> ba = block_alpha[b], bb = block_beta[b];
            for (Tensor& g : ba)
                for (std::size_t i = 0; i < g.size(); ++i) g[i] /= block_weight[b];
            for (Tensor& g : bb)
                for (std::size_t i = 0; i < g.size(); ++i) g[i] /= block_weight[b];
            const double da = detail::stacked_norm(ba) - res.alpha_norm;
            const double db = detail::stacked_norm(bb) - res.beta_norm;
            va += da * da;
            vb += db * db;
        }
        const double denom = static_cast<double>(live_blocks) *
                             static_cast<double>(live_blocks - 1);
        res.alpha_se = std::sqrt(va / denom);
        res.beta_se = std::sqrt(vb / denom);
    }
    return res;
}

// ---- KL-vs-K profile (short-run bias diagnostic) ------------------------------

struct KlPoint {
    std::int64_t steps;
    double kl;
};

struct KlProfile {
    std::vector<KlPoint> points;
    std::vector<std::string> warnings;
};

// Plug-in KL divergence D(p~_K || p_alpha) on a 1-d histogram: n_samples
// short-run chains snapshotted at each requested K (the marginal law at step
// k of a longer chain is exactly p~_k), histogram mass against the
// grid-normalized target per bin. Emits a widen-bins warning when bins
// holding target mass above 1e-6 received no samples and that mass is
// non-negligible in total.
inline KlProfile kl_profile(const Tilt1d& tilt, std::vector<std::int64_t> k_list, double s,
                            std::size_t n_samples, const Grid1D& grid, const Rng& rng) {
    grid.validate();
    if (n_samples < 1000) throw std::invalid_argument("kl_profile: need >= 1000 samples");
    std::sort(k_list.begin(), k_list.end());
    if (!k_list.empty() && k_list.front() < 0) {
        throw std::invalid_argument("kl_profile: K must be >= 0");
    }

    // target mass per bin (trapezoid within each cell, normalized)
    const std::size_t bins = grid.bins;
    std::vector<double> dens = grid_density(tilt, grid);
    std::vector<double> target(bins);
    double total = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        target[b] = 0.5 * (dens[b] + dens[b + 1]) * grid.width();
        total += target[b];
    }
    for (double& t : target) t /= total;

    // all chains advanced jointly; snapshot histograms at the requested Ks
    Rng init = rng.fork(streams::k_chain_init);
    std::vector<double> z(n_samples);
    for (double& v : z) v = init.next_normal();
    std::vector<Rng> noise;
    noise.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        noise.push_back(rng.fork({streams::k_chain_noise, i}));
    }

    KlProfile profile;
    const double drift = 0.5 * s * s;
    std::int64_t k_now = 0;
    for (std::int64_t target_k : k_list) {
        for (; k_now < target_k; ++k_now) {
            for (std::size_t i = 0; i < n_samples; ++i) {
                const double score = tilt.fprime(z[i]) - z[i];
                z[i] += drift * score + s * noise[i].next_normal();
            }
        }
        std::vector<std::size_t> counts(bins, 0);
        std::size_t outside = 0;
        for (double v : z) {
            if (v < grid.lo || v >= grid.hi) {
                ++outside;
                continue;
            }
            auto b = static_cast<std::size_t>((v - grid.lo) / grid.width());
            counts[std::min(b, bins - 1)] += 1;
        }
        if (outside > n_samples / 10000) {
            profile.warnings.push_back("K=" + std::to_string(target_k) + ": " +
                                       std::to_string(outside) + " samples left the grid");
        }
        double missing_mass = 0.0;
        double kl = 0.0;
        const double inv_n = 1.0 / static_cast<double>(n_samples);
        for (std::size_t b = 0; b < bins; ++b) {
            if (counts[b] == 0) {
                if (target[b] > 1e-6) missing_mass += target[b];
                continue;
            }
            const double p = static_cast<double>(counts[b]) * inv_n;
            kl += p * std::log(p / target[b]);
        }
        if (missing_mass > 1e-3) {
            profile.warnings.push_back("K=" + std::to_string(target_k) +
                                       ": histogram misses target mass " +
                                       fmt_g17(missing_mass) + "; widen bins");
        }
        profile.points.push_back({target_k, kl});
    }
    return profile;
}

inline KlProfile kl_profile(const EbmPrior& alpha, std::vector<std::int64_t> k_list,
                            double s, std::size_t n_samples, const Grid1D& grid,
                            const Rng& rng) {
    return kl_profile(tilt_from_ebm(alpha), std::move(k_list), s, n_samples, grid, rng);
}

}  // namespace lebm
