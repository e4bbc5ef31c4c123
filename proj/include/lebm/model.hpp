#pragma once

#include <stdexcept>
#include <vector>

#include "lebm/gaussian.hpp"
#include "lebm/mlp.hpp"
#include "lebm/rng.hpp"
#include "lebm/tape.hpp"
#include "lebm/tensor.hpp"

namespace lebm {

// Energy-based prior p_a(z) = exp(f_a(z)) p0(z) / Z(a), with p0 = N(0, I_d)
// fixed and f_a a small MLP returning one scalar per row. f is the negative
// energy: larger f means higher prior density.
struct EbmPrior {
    Mlp net;  // d -> nef -> nef -> 1, leaky-relu hidden layers

    std::size_t latent_dim() const { return net.in_dim(); }
};

inline EbmPrior make_ebm_prior(std::size_t d, std::size_t nef, Rng& rng,
                               double slope = 0.2) {
    return EbmPrior{make_mlp({d, nef, nef, 1}, Activation::LeakyRelu, slope,
                             Activation::Identity, rng)};
}

// f identically zero: the model degenerates to the fixed N(0, I) prior.
inline EbmPrior make_zero_ebm_prior(std::size_t d, std::size_t nef, double slope = 0.2) {
    return EbmPrior{make_zero_mlp({d, nef, nef, 1}, Activation::LeakyRelu, slope,
                                  Activation::Identity)};
}

// Top-down generation model x = g_b(z) + eps, eps ~ N(0, sigma^2 I_D).
// Hidden activations are leaky-relu with slope 0.1; the output activation is
// tanh for [-1,1]-normalized image data and identity for unbounded toy data.
struct Generator {
    Mlp net;
    double sigma = 0.3;

    std::size_t latent_dim() const { return net.in_dim(); }
    std::size_t data_dim() const { return net.out_dim(); }
};

inline Generator make_generator(const std::vector<std::size_t>& dims,
                                Activation output_act, double sigma, Rng& rng,
                                double slope = 0.1) {
    if (!(sigma > 0.0)) throw std::invalid_argument("generator: sigma must be > 0");
    return Generator{make_mlp(dims, Activation::LeakyRelu, slope, output_act, rng), sigma};
}

// Single identity layer g(z) = z; used when the data-generating map is known.
inline Generator make_identity_generator(std::size_t d, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("generator: sigma must be > 0");
    Mlp net = make_zero_mlp({d, d}, Activation::Identity, 0.1, Activation::Identity);
    for (std::size_t i = 0; i < d; ++i) net.layers[0].weight.at(i, i) = 1.0;
    return Generator{std::move(net), sigma};
}

// Exact linear map g(z) = W z + b with W given as (D x d), matching the
// linear-Gaussian oracle's convention.
inline Generator make_linear_generator(const Tensor& w, const Tensor& b, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("generator: sigma must be > 0");
    const std::size_t bigd = w.rows(), d = w.cols();
    if (b.size() != bigd) throw std::invalid_argument("generator: bias length mismatch");
    Mlp net = make_zero_mlp({d, bigd}, Activation::Identity, 0.1, Activation::Identity);
    for (std::size_t k = 0; k < bigd; ++k)
        for (std::size_t j = 0; j < d; ++j) net.layers[0].weight.at(j, k) = w.at(k, j);
    for (std::size_t k = 0; k < bigd; ++k) net.layers[0].bias[k] = b[k];
    return Generator{std::move(net), sigma};
}

struct ModelParams {
    EbmPrior alpha;
    Generator beta;

    std::size_t latent_dim() const { return alpha.latent_dim(); }
    std::size_t data_dim() const { return beta.data_dim(); }
};

inline void validate_model(const ModelParams& p) {
    if (p.alpha.net.out_dim() != 1) {
        throw std::invalid_argument("model: EBM output dim must be 1");
    }
    if (p.alpha.latent_dim() != p.beta.latent_dim()) {
        throw std::invalid_argument("model: EBM and generator latent dims differ");
    }
}

// ---- negative energy and scores ------------------------------------------

// f_a(z), one scalar per row of z.
inline Tensor ebm_f(const EbmPrior& alpha, const Tensor& z) {
    z.require_finite("ebm_f input");
    Tensor out = mlp_value(alpha.net, z);
    Tensor f({out.rows()});
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = out[i];
    f.require_finite("ebm_f output");
    return f;
}

// d/dz sum_i f_a(z_i): per-row gradient of f.
inline Tensor grad_z_f(const EbmPrior& alpha, const Tensor& z) {
    Tape tape;
    MlpForward fwd = mlp_forward_nodes(alpha.net, tape, z);
    NodeId root = tape.sum(tape.squeeze_col(fwd.output));
    return tape.gradient(root, fwd.input);
}

// Score of the prior: grad_z log p_a(z) = grad_z f_a(z) - z.
// log Z(a) and the p0 normalizer drop; any constant added to f_a leaves the
// score bit-identical (the output bias never enters the backward path to z).
inline Tensor prior_score(const EbmPrior& alpha, const Tensor& z) {
    Tensor score = grad_z_f(alpha, z);
    for (std::size_t i = 0; i < score.size(); ++i) score[i] -= z[i];
    return score;
}

inline Tensor gen_mean(const Generator& beta, const Tensor& z) {
    return mlp_value(beta.net, z);
}

// log p_b(x|z) = -||x - g_b(z)||^2 / (2 sigma^2) - (D/2) log(2 pi sigma^2),
// per row. The normalizing constant is kept so scores stay comparable across
// sigma; it cancels in every gradient.
inline Tensor gen_loglik(const Generator& beta, const Tensor& x, const Tensor& z) {
    if (x.rows() != z.rows()) {
        throw std::invalid_argument("gen_loglik: x and z row counts differ");
    }
    Tensor g = gen_mean(beta, z);
    if (g.cols() != x.cols()) {
        throw std::invalid_argument("gen_loglik: generator output dim " +
                                    std::to_string(g.cols()) + " vs data dim " +
                                    std::to_string(x.cols()));
    }
    Tensor r({x.rows(), x.cols()});
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = x[i] - g[i];
    return iso_gaussian_logpdf(r, beta.sigma * beta.sigma);
}

// d/dz sum_i log p_b(x_i|z_i).
inline Tensor grad_z_gen_loglik(const Generator& beta, const Tensor& x, const Tensor& z) {
    Tape tape;
    MlpForward fwd = mlp_forward_nodes(beta.net, tape, z);
    NodeId xn = tape.leaf(x);
    NodeId resid = tape.sub(xn, fwd.output);
    // sum over rows of -||r||^2 / (2 sigma^2); the log-normalizer is constant in z
    NodeId root = tape.scale(tape.sum(tape.row_sumsq(resid)),
                             -1.0 / (2.0 * beta.sigma * beta.sigma));
    return tape.gradient(root, fwd.input);
}

// Score of the posterior p_th(z|x) up to its x-normalizer:
//   grad_z log p_th(z|x) = prior_score(a, z) + grad_z log p_b(x|z).
// Computed as that exact sum so the decomposition property holds by
// construction.
inline Tensor posterior_score(const ModelParams& params, const Tensor& x, const Tensor& z) {
    Tensor score = prior_score(params.alpha, z);
    Tensor lik = grad_z_gen_loglik(params.beta, x, z);
    for (std::size_t i = 0; i < score.size(); ++i) score[i] += lik[i];
    return score;
}

// Unnormalized joint log density, the anomaly decision function:
//   f_a(z) + log p0(z) + log p_b(x|z).
// log Z(a) is omitted; it is constant across test items so rankings are
// unaffected.
inline Tensor joint_logdensity_unnorm(const ModelParams& params, const Tensor& x,
                                      const Tensor& z) {
    Tensor f = ebm_f(params.alpha, z);
    Tensor p0 = iso_gaussian_logpdf(z, 1.0);
    Tensor ll = gen_loglik(params.beta, x, z);
    Tensor out({f.size()});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f[i] + p0[i] + ll[i];
    return out;
}

inline std::vector<ParamRef> alpha_params(EbmPrior& alpha) {
    return mlp_params(alpha.net, "alpha");
}

inline std::vector<ParamRef> beta_params(Generator& beta) {
    return mlp_params(beta.net, "beta");
}

}  // namespace lebm
