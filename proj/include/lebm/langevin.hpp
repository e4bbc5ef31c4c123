#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "lebm/model.hpp"
#include "lebm/rng.hpp"
#include "lebm/tensor.hpp"

namespace lebm {

// One short-run chain configuration. `step_size` follows the reference-code
// convention: the update applied per step is
//
//   z_{k+1} = z_k + (s^2 / 2) * score(z_k) + s * eps_k,   eps_k ~ N(0, I_d)
//
// which is the unadjusted Langevin step with effective step size s^2/2 and
// noise scale sqrt(2 * s^2/2) = s. Table-default values (prior: K=60, s=0.4;
// posterior: K=20, s=0.1) are meant for this convention.
struct LangevinConfig {
    std::int64_t steps = 0;     // K >= 0; K = 0 returns the initialization
    double step_size = 0.1;     // s > 0
    bool record_trace = false;

    void validate() const {
        if (steps < 0) throw std::invalid_argument("langevin: K must be >= 0");
        if (!(step_size > 0.0)) throw std::invalid_argument("langevin: s must be > 0");
    }
};

inline LangevinConfig default_prior_config() { return {60, 0.4, false}; }
inline LangevinConfig default_posterior_config() { return {20, 0.1, false}; }

// Full-chain record for diagnostics: K+1 states (index 0 is the p0 draw) and,
// when an energy function is supplied, f_alpha at each state.
struct ChainTrace {
    std::vector<Tensor> states;    // each (n x d)
    std::vector<Tensor> energies;  // each (n)
};

struct LangevinResult {
    Tensor z;
    std::optional<ChainTrace> trace;
};

class SamplerDivergence : public std::runtime_error {
public:
    SamplerDivergence(std::int64_t step, std::int64_t chain, double value)
        : std::runtime_error("sampler: chain state diverged at step " + std::to_string(step) +
                             ", chain " + std::to_string(chain) + " (|z| = " +
                             std::to_string(value) + ")"),
          step(step),
          chain(chain) {}

    std::int64_t step;
    std::int64_t chain;
};

using ScoreFn = std::function<Tensor(const Tensor&)>;
using EnergyFn = std::function<Tensor(const Tensor&)>;

inline Tensor sample_p0(Rng& rng, std::size_t n, std::size_t d) {
    if (n < 1 || d < 1) throw std::invalid_argument("sample_p0: n and d must be >= 1");
    return rng.standard_normal({n, d});
}

namespace detail {
inline constexpr double k_divergence_bound = 1e6;

// Noise for chain i comes from the sub-stream fork({k_chain_noise, i}) of the
// supplied rng, drawn d values per step. chain_offset shifts i so that a
// chunk of a larger batch reproduces exactly the draws it would see inside
// the full batch.
inline void check_state(const Tensor& z, std::int64_t step, std::size_t chain_offset) {
    const std::size_t n = z.rows(), d = z.cols();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double v = z.at(i, j);
            if (!std::isfinite(v) || std::abs(v) > k_divergence_bound) {
                throw SamplerDivergence(step, static_cast<std::int64_t>(chain_offset + i), v);
            }
        }
    }
}
}  // namespace detail

// Runs exactly K update steps from z0 with fresh per-step noise on every
// chain. `score` must be a pure function of the state. Aborts with
// SamplerDivergence if any coordinate leaves [-1e6, 1e6] or turns non-finite.
inline LangevinResult langevin_run(const ScoreFn& score, const Tensor& z0,
                                   const LangevinConfig& cfg, const Rng& rng,
                                   const EnergyFn* energy = nullptr,
                                   std::size_t chain_offset = 0) {
    cfg.validate();
    const std::size_t n = z0.rows(), d = z0.cols();
    const double drift = 0.5 * cfg.step_size * cfg.step_size;

    LangevinResult res;
    res.z = z0;
    if (cfg.record_trace) {
        res.trace.emplace();
        res.trace->states.push_back(z0);
        if (energy) res.trace->energies.push_back((*energy)(z0));
    }

    std::vector<Rng> noise;
    noise.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        noise.push_back(rng.fork({streams::k_chain_noise, chain_offset + i}));
    }

    for (std::int64_t k = 0; k < cfg.steps; ++k) {
        Tensor s = score(res.z);
        if (!s.same_shape(res.z)) {
            throw std::invalid_argument("langevin_run: score shape " + s.shape_str() +
                                        " does not match state " + res.z.shape_str());
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                res.z.at(i, j) += drift * s.at(i, j) + cfg.step_size * noise[i].next_normal();
            }
        }
        detail::check_state(res.z, k + 1, chain_offset);
        if (res.trace) {
            res.trace->states.push_back(res.z);
            if (energy) res.trace->energies.push_back((*energy)(res.z));
        }
    }
    return res;
}

namespace detail {

inline Tensor slice_rows(const Tensor& t, std::size_t r0, std::size_t r1) {
    const std::size_t c = t.cols();
    Tensor out({r1 - r0, c});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t[r0 * c + i];
    return out;
}

inline void paste_rows(Tensor& dst, const Tensor& src, std::size_t r0) {
    const std::size_t c = dst.cols();
    for (std::size_t i = 0; i < src.size(); ++i) dst[r0 * c + i] = src[i];
}

// Fan a batch of chains out over row chunks. Chains are row-independent and
// hold per-chain noise streams, so any thread count produces bit-identical
// results; threads = 1 runs inline.
inline LangevinResult langevin_fanout(
    const std::function<ScoreFn(std::size_t, std::size_t)>& score_for_rows,
    const Tensor& z0, const LangevinConfig& cfg, const Rng& rng, const EnergyFn* energy,
    int threads) {
    const std::size_t n = z0.rows(), d = z0.cols();
    if (threads <= 1 || n < 2) {
        return langevin_run(score_for_rows(0, n), z0, cfg, rng, energy, 0);
    }
    const std::size_t nchunks = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<LangevinResult> parts(nchunks);
    std::vector<std::exception_ptr> errors(nchunks);
    std::vector<std::thread> pool;
    for (std::size_t c = 0; c < nchunks; ++c) {
        const std::size_t r0 = c * n / nchunks;
        const std::size_t r1 = (c + 1) * n / nchunks;
        pool.emplace_back([&, c, r0, r1]() {
            try {
                ScoreFn sc = score_for_rows(r0, r1);
                Tensor z0c = slice_rows(z0, r0, r1);
                parts[c] = langevin_run(sc, z0c, cfg, rng, energy, r0);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    LangevinResult res;
    res.z = Tensor({n, d});
    for (std::size_t c = 0; c < nchunks; ++c) {
        paste_rows(res.z, parts[c].z, c * n / nchunks);
    }
    if (cfg.record_trace) {
        res.trace.emplace();
        const std::size_t nstates = parts[0].trace->states.size();
        for (std::size_t k = 0; k < nstates; ++k) {
            Tensor st({n, d});
            for (std::size_t c = 0; c < nchunks; ++c)
                paste_rows(st, parts[c].trace->states[k], c * n / nchunks);
            res.trace->states.push_back(std::move(st));
            if (energy) {
                Tensor en({n});
                std::size_t pos = 0;
                for (std::size_t c = 0; c < nchunks; ++c) {
                    const Tensor& part = parts[c].trace->energies[k];
                    for (std::size_t i = 0; i < part.size(); ++i) en[pos++] = part[i];
                }
                res.trace->energies.push_back(std::move(en));
            }
        }
    }
    return res;
}

}  // namespace detail

// Short-run draw from the prior: z0 ~ p0 = N(0, I_d), then K0 steps targeting
// p_alpha. Returns the z^- batch of Algorithm 1 step 2.
inline LangevinResult sample_prior_shortrun(const EbmPrior& alpha, std::size_t n,
                                            const LangevinConfig& cfg, const Rng& rng,
                                            int threads = 1) {
    Rng init = rng.fork(streams::k_chain_init);
    Tensor z0 = sample_p0(init, n, alpha.latent_dim());
    EnergyFn energy = [&alpha](const Tensor& z) { return ebm_f(alpha, z); };
    auto score_for_rows = [&alpha](std::size_t, std::size_t) -> ScoreFn {
        return [&alpha](const Tensor& z) { return prior_score(alpha, z); };
    };
    return detail::langevin_fanout(score_for_rows, z0, cfg, rng,
                                   cfg.record_trace ? &energy : nullptr, threads);
}

inline LangevinResult sample_prior_shortrun(const ModelParams& params, std::size_t n,
                                            const LangevinConfig& cfg, const Rng& rng,
                                            int threads = 1) {
    return sample_prior_shortrun(params.alpha, n, cfg, rng, threads);
}

// Short-run draw from the posterior p_th(z|x), one chain per data row.
// Returns the z^+ batch of Algorithm 1 step 3.
inline LangevinResult sample_posterior_shortrun(const ModelParams& params, const Tensor& x,
                                                const LangevinConfig& cfg, const Rng& rng,
                                                int threads = 1) {
    const std::size_t n = x.rows();
    Rng init = rng.fork(streams::k_chain_init);
    Tensor z0 = sample_p0(init, n, params.latent_dim());
    EnergyFn energy = [&params](const Tensor& z) { return ebm_f(params.alpha, z); };
    auto score_for_rows = [&params, &x](std::size_t r0, std::size_t r1) -> ScoreFn {
        Tensor xc = detail::slice_rows(x, r0, r1);
        return [&params, xc = std::move(xc)](const Tensor& z) {
            return posterior_score(params, xc, z);
        };
    };
    return detail::langevin_fanout(score_for_rows, z0, cfg, rng,
                                   cfg.record_trace ? &energy : nullptr, threads);
}

// Trace export: step, chain, f_alpha, z_0..z_{d-1}; latent coordinates are
// included only for d <= 8, larger d exports energies only.
inline void write_trace_csv(std::ostream& os, const ChainTrace& trace) {
    if (trace.states.empty()) return;
    const std::size_t n = trace.states[0].rows();
    const std::size_t d = trace.states[0].cols();
    const bool with_coords = d <= 8;
    os << "step,chain,f_alpha";
    if (with_coords) {
        for (std::size_t j = 0; j < d; ++j) os << ",z_" << j;
    }
    os << "\n";
    char buf[32];
    for (std::size_t k = 0; k < trace.states.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            os << k << "," << i << ",";
            const double f = trace.energies.empty() ? 0.0 : trace.energies[k][i];
            std::snprintf(buf, sizeof buf, "%.17g", f);
            os << buf;
            if (with_coords) {
                for (std::size_t j = 0; j < d; ++j) {
                    std::snprintf(buf, sizeof buf, "%.17g", trace.states[k].at(i, j));
                    os << "," << buf;
                }
            }
            os << "\n";
        }
    }
}

}  // namespace lebm
