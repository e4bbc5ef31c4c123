#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "lebm/checkpoint.hpp"
#include "lebm/config.hpp"
#include "lebm/data.hpp"
#include "lebm/langevin.hpp"
#include "lebm/model.hpp"

namespace lebm {

struct IterationReport {
    double f_pos_mean = 0.0;   // mean f_alpha over z^+
    double f_neg_mean = 0.0;   // mean f_alpha over z^-
    double recon_mse = 0.0;    // mean per-dimension squared error of g(z^+) vs x
    double grad_norm_alpha = 0.0;
    double grad_norm_beta = 0.0;
};

struct TrainerState {
    ModelParams params;
    AdamState opt_alpha;
    AdamState opt_beta;
    std::uint64_t seed = 0;
    std::int64_t iter = 0;  // completed iterations
};

inline TrainerState init_trainer(const TrainConfig& cfg, std::size_t data_dim) {
    TrainerState st;
    st.params = make_model(cfg, data_dim);
    st.opt_alpha = AdamState(alpha_params(st.params.alpha),
                             {cfg.eta0, cfg.adam_beta1, cfg.adam_beta2, 1e-8});
    st.opt_beta = AdamState(beta_params(st.params.beta),
                            {cfg.eta1, cfg.adam_beta1, cfg.adam_beta2, 1e-8});
    st.seed = cfg.seed;
    st.iter = 0;
    return st;
}

inline TrainerState state_from_checkpoint(Checkpoint ck) {
    TrainerState st;
    st.params = std::move(ck.params);
    st.opt_alpha = std::move(ck.opt_alpha);
    st.opt_beta = std::move(ck.opt_beta);
    st.seed = ck.seed;
    st.iter = ck.iter;
    return st;
}

// Monte Carlo learning gradient for the prior (Algorithm 1 step 4): the mean
// over the batch of grad_a f(z_i^+) - grad_a f(z_i^-). The two phases run as
// separate backward passes over one recorded graph and are subtracted
// entry-wise, so identical batches cancel exactly and swapping the batches
// negates the estimate exactly.
inline std::vector<Tensor> grad_alpha_estimate(const EbmPrior& alpha, const Tensor& z_plus,
                                               const Tensor& z_minus) {
    if (z_plus.rows() != z_minus.rows()) {
        throw std::invalid_argument("grad_alpha_estimate: phase batch sizes differ");
    }
    Tape tape;
    MlpNodes p = bind_mlp(alpha.net, tape);
    NodeId fp = tape.mean(tape.squeeze_col(mlp_apply(alpha.net, p, tape, tape.leaf(z_plus))));
    NodeId fm = tape.mean(tape.squeeze_col(mlp_apply(alpha.net, p, tape, tape.leaf(z_minus))));
    const std::vector<NodeId> ids = p.all();
    std::vector<Tensor> pos = tape.gradients(fp, ids);
    std::vector<Tensor> neg = tape.gradients(fm, ids);
    for (std::size_t k = 0; k < pos.size(); ++k) {
        for (std::size_t i = 0; i < pos[k].size(); ++i) pos[k][i] -= neg[k][i];
    }
    return pos;
}

// Monte Carlo learning gradient for the generator (Algorithm 1 step 5): the
// mean over the batch of grad_b log p_b(x_i | z_i^+).
inline std::vector<Tensor> grad_beta_estimate(const Generator& beta, const Tensor& x,
                                              const Tensor& z_plus) {
    if (z_plus.rows() != x.rows()) {
        throw std::invalid_argument("grad_beta_estimate: x and z batch sizes differ");
    }
    Tape tape;
    MlpNodes p = bind_mlp(beta.net, tape);
    NodeId out = mlp_apply(beta.net, p, tape, tape.leaf(z_plus));
    NodeId resid = tape.sub(tape.leaf(x), out);
    NodeId root = tape.scale(tape.mean(tape.row_sumsq(resid)),
                             -1.0 / (2.0 * beta.sigma * beta.sigma));
    const std::vector<NodeId> ids = p.all();
    return tape.gradients(root, ids);
}

namespace detail {

inline double grad_norm(const std::vector<Tensor>& grads) {
    double acc = 0.0;
    for (const Tensor& g : grads) acc += dot(g, g);
    return std::sqrt(acc);
}

inline double mean_of(const Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i];
    return acc / static_cast<double>(t.size());
}

inline void negate(std::vector<Tensor>& grads) {
    for (Tensor& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g[i];
}

inline IterationReport phase_report(const ModelParams& params, const Tensor& batch,
                                    const Tensor& z_plus, const Tensor& z_minus,
                                    const std::vector<Tensor>& ga,
                                    const std::vector<Tensor>& gb) {
    IterationReport rep;
    rep.f_pos_mean = mean_of(ebm_f(params.alpha, z_plus));
    rep.f_neg_mean = mean_of(ebm_f(params.alpha, z_minus));
    Tensor xhat = gen_mean(params.beta, z_plus);
    double se = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double r = batch[i] - xhat[i];
        se += r * r;
    }
    rep.recon_mse = se / static_cast<double>(batch.size());
    rep.grad_norm_alpha = grad_norm(ga);
    rep.grad_norm_beta = grad_norm(gb);
    return rep;
}

}  // namespace detail

// One step of Algorithm 1 on a given minibatch: prior sampling, posterior
// sampling, then Adam ascent for alpha (Eq. 11 direction) and beta (Eq. 12
// direction). Both updates use the z^+ sampled once under the pre-update
// parameters; there is no resampling between the two updates. All randomness
// derives from (seed, phase, iteration, chain), so a given iteration index
// always reproduces bit-identically.
inline IterationReport train_iteration(TrainerState& state, const Tensor& batch,
                                       const TrainConfig& cfg) {
    const std::int64_t t = state.iter;
    const Rng base(state.seed, 0);
    const auto m = batch.rows();

    Tensor z_minus, z_plus;
    try {
        z_minus = sample_prior_shortrun(state.params.alpha, m, cfg.prior_cfg(),
                                        base.fork({streams::k_prior_chain,
                                                   static_cast<std::uint64_t>(t)}),
                                        static_cast<int>(cfg.threads))
                      .z;
        z_plus = sample_posterior_shortrun(state.params, batch, cfg.posterior_cfg(),
                                           base.fork({streams::k_posterior_chain,
                                                      static_cast<std::uint64_t>(t)}),
                                           static_cast<int>(cfg.threads))
                     .z;
    } catch (const SamplerDivergence& e) {
        throw std::runtime_error("trainer: iteration " + std::to_string(t) + ": " + e.what());
    }

    std::vector<Tensor> ga = grad_alpha_estimate(state.params.alpha, z_plus, z_minus);
    std::vector<Tensor> gb = grad_beta_estimate(state.params.beta, batch, z_plus);
    IterationReport rep = detail::phase_report(state.params, batch, z_plus, z_minus, ga, gb);

    // Adam is written as descent; Algorithm 1 steps 4-5 are ascent.
    if (!cfg.freeze_alpha) {
        detail::negate(ga);
        state.opt_alpha.step(alpha_params(state.params.alpha), ga);
    }
    detail::negate(gb);
    state.opt_beta.step(beta_params(state.params.beta), gb);

    ++state.iter;
    return rep;
}

// Pre-update probe for the iteration-0 metrics row: same quantities as a
// training iteration, computed on dedicated metric streams, no updates.
inline IterationReport probe_report(const TrainerState& state, const Dataset& ds,
                                    const TrainConfig& cfg) {
    const Rng base(state.seed, 0);
    Rng batch_rng = base.fork({streams::k_metrics, 0});
    Tensor batch = batch_iter(ds, static_cast<std::size_t>(cfg.batch_size), batch_rng).next();
    Tensor z_minus = sample_prior_shortrun(state.params.alpha, batch.rows(), cfg.prior_cfg(),
                                           base.fork({streams::k_metrics, 1}),
                                           static_cast<int>(cfg.threads))
                         .z;
    Tensor z_plus = sample_posterior_shortrun(state.params, batch, cfg.posterior_cfg(),
                                              base.fork({streams::k_metrics, 2}),
                                              static_cast<int>(cfg.threads))
                        .z;
    std::vector<Tensor> ga = grad_alpha_estimate(state.params.alpha, z_plus, z_minus);
    std::vector<Tensor> gb = grad_beta_estimate(state.params.beta, batch, z_plus);
    return detail::phase_report(state.params, batch, z_plus, z_minus, ga, gb);
}

inline Checkpoint make_checkpoint(const TrainerState& state, const TrainConfig& cfg) {
    Checkpoint ck;
    ck.cfg = cfg;
    ck.config_text = canonical_config_text(cfg);
    ck.iter = state.iter;
    ck.seed = state.seed;
    ck.params = state.params;
    ck.opt_alpha = state.opt_alpha;
    ck.opt_beta = state.opt_beta;
    return ck;
}

struct TrainResult {
    TrainerState state;
    std::string checkpoint_path;
    std::string metrics_path;
};

namespace detail {

inline void write_metrics_row(std::ostream& os, std::int64_t iter, const IterationReport& r) {
    os << iter << "," << fmt_g17(r.f_pos_mean) << "," << fmt_g17(r.f_neg_mean) << ","
       << fmt_g17(r.recon_mse) << "," << fmt_g17(r.grad_norm_alpha) << ","
       << fmt_g17(r.grad_norm_beta) << "\n";
}

}  // namespace detail

// Runs iterations state.iter .. cfg.iterations with with-replacement
// minibatches drawn per iteration from the batch stream. Metrics rows land at
// iteration 0 (pre-training probe) and after every eval_every-th iteration;
// the checkpoint file is rewritten at the same cadence so an aborted run
// keeps its latest complete state.
inline TrainResult train_loop_from(TrainerState state, const TrainConfig& cfg,
                                   const Dataset& dataset, const std::string& out_dir,
                                   std::ostream* log = nullptr) {
    if (dataset.size() == 0) throw std::invalid_argument("train_loop: dataset empty");
    dataset.validate();
    std::filesystem::create_directories(out_dir);
    const std::string ck_path = out_dir + "/checkpoint.bin";
    const std::string metrics_path = out_dir + "/metrics.csv";

    const bool fresh = state.iter == 0;
    std::ofstream metrics(metrics_path,
                          std::ios::binary | (fresh ? std::ios::trunc : std::ios::app));
    if (!metrics) throw std::runtime_error("train_loop: cannot write " + metrics_path);
    if (fresh) {
        metrics << "iter,f_pos_mean,f_neg_mean,recon_mse,grad_norm_alpha,grad_norm_beta\n";
        detail::write_metrics_row(metrics, 0, probe_report(state, dataset, cfg));
        metrics.flush();
    }

    const Rng base(state.seed, 0);
    while (state.iter < cfg.iterations) {
        const std::int64_t t = state.iter;
        Rng batch_rng = base.fork({streams::k_batch, static_cast<std::uint64_t>(t)});
        Tensor batch =
            batch_iter(dataset, static_cast<std::size_t>(cfg.batch_size), batch_rng).next();
        IterationReport rep = train_iteration(state, batch, cfg);
        if (state.iter % cfg.eval_every == 0 || state.iter == cfg.iterations) {
            if (state.iter % cfg.eval_every == 0) {
                detail::write_metrics_row(metrics, state.iter, rep);
                metrics.flush();
            }
            save_checkpoint(ck_path, make_checkpoint(state, cfg));
            if (log) {
                (*log) << "iter " << state.iter << "  f+ " << rep.f_pos_mean << "  f- "
                       << rep.f_neg_mean << "  mse " << rep.recon_mse << "\n";
            }
        }
    }
    save_checkpoint(ck_path, make_checkpoint(state, cfg));
    return {std::move(state), ck_path, metrics_path};
}

inline TrainResult train_loop(const TrainConfig& cfg, const Dataset& dataset,
                              const std::string& out_dir, std::ostream* log = nullptr) {
    return train_loop_from(init_trainer(cfg, dataset.dim()), cfg, dataset, out_dir, log);
}

}  // namespace lebm
