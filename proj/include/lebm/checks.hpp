#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lebm/eval.hpp"
#include "lebm/langevin.hpp"
#include "lebm/model.hpp"
#include "lebm/oracle.hpp"
#include "lebm/util.hpp"

namespace lebm {

// Self-contained oracle checks behind the `check` CLI command: finite
// difference gradients, grid partition functions, the tilted-Gaussian
// reference, linear-Gaussian stationarity, sampler stationarity, and the
// KL-vs-K profile. No dataset files needed; sized to finish well under two
// minutes single core (quick mode trims the Monte Carlo sizes further).
struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace checks {

// FD comparisons use |ad - fd| / max(|ad|, |fd|, 1e-3): the floor keeps
// finite-difference roundoff from dominating near-zero entries. Seeds whose
// leaky-relu pre-activations sit within 1e-3 of a kink are skipped (central
// differences are invalid across the kink).
inline double guarded_rel_err(double ad, double fd) {
    return std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-3});
}

inline bool preactivations_clear(const Mlp& net, const Tensor& input, double margin) {
    Tensor h = input;
    for (const MlpLayer& layer : net.layers) {
        Tensor z({h.rows(), layer.out_dim()});
        matmul(h, layer.weight, z);
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) += layer.bias[j];
        if (layer.act == Activation::LeakyRelu) {
            for (std::size_t i = 0; i < z.size(); ++i)
                if (std::abs(z[i]) < margin) return false;
            for (std::size_t i = 0; i < z.size(); ++i)
                if (z[i] < 0.0) z[i] *= layer.slope;
        } else if (layer.act == Activation::Tanh) {
            for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i]);
        }
        h = std::move(z);
    }
    return true;
}

inline std::vector<double> flatten_params(const Mlp& net) {
    std::vector<double> flat;
    for (const MlpLayer& l : net.layers) {
        for (std::size_t i = 0; i < l.weight.size(); ++i) flat.push_back(l.weight[i]);
        for (std::size_t i = 0; i < l.bias.size(); ++i) flat.push_back(l.bias[i]);
    }
    return flat;
}

inline void unflatten_params(Mlp& net, const Tensor& flat) {
    std::size_t pos = 0;
    for (MlpLayer& l : net.layers) {
        for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = flat[pos++];
        for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = flat[pos++];
    }
}

// Max guarded relative error of autodiff parameter+input gradients against
// central finite differences, for the scalar mean f_alpha(z) of a random
// small EBM and the mean gen_loglik of a random small generator.
inline double fd_worst_error(std::uint64_t seed, double h) {
    Rng rng(seed, 17);
    const std::size_t n = 3, d = 3, bigd = 4;

    EbmPrior alpha = make_ebm_prior(d, 8, rng);
    Generator beta = make_generator({d, 6, bigd}, Activation::Tanh, 0.3, rng);
    Tensor z = rng.standard_normal({n, d});
    Tensor x = rng.standard_normal({n, bigd});

    // resample z until no pre-activation sits on a leaky-relu kink
    for (int tries = 0; !preactivations_clear(alpha.net, z, 1e-3) && tries < 64; ++tries) {
        z = rng.standard_normal({n, d});
    }

    double worst = 0.0;

    {  // d mean f / d (params, z)
        Tape tape;
        MlpForward fwd = mlp_forward_nodes(alpha.net, tape, z);
        NodeId root = tape.mean(tape.squeeze_col(fwd.output));
        std::vector<NodeId> ids = fwd.params.all();
        ids.push_back(fwd.input);
        std::vector<Tensor> ad = tape.gradients(root, ids);

        std::vector<double> theta = flatten_params(alpha.net);
        Tensor theta_t = Tensor::vector(theta);
        EbmPrior probe = alpha;
        Tensor fd_params = finite_diff_grad(
            [&](const Tensor& p) {
                unflatten_params(probe.net, p);
                Tensor f = ebm_f(probe, z);
                double acc = 0.0;
                for (std::size_t i = 0; i < f.size(); ++i) acc += f[i];
                return acc / static_cast<double>(f.size());
            },
            theta_t, h);
        std::size_t pos = 0;
        for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
            const Tensor& g = ad[k];
            for (std::size_t i = 0; i < g.size(); ++i, ++pos) {
                worst = std::max(worst, guarded_rel_err(g[i], fd_params[pos]));
            }
        }
        Tensor fd_z = finite_diff_grad(
            [&](const Tensor& p) {
                Tensor q({n, d});
                for (std::size_t i = 0; i < q.size(); ++i) q[i] = p[i];
                Tensor f = ebm_f(alpha, q);
                double acc = 0.0;
                for (std::size_t i = 0; i < f.size(); ++i) acc += f[i];
                return acc / static_cast<double>(f.size());
            },
            Tensor({n * d}, std::vector<double>(z.data(), z.data() + n * d)), h);
        const Tensor& gz = ad.back();
        for (std::size_t i = 0; i < gz.size(); ++i) {
            worst = std::max(worst, guarded_rel_err(gz[i], fd_z[i]));
        }
    }

    {  // d mean gen_loglik / d (params, z)
        Tape tape;
        MlpForward fwd = mlp_forward_nodes(beta.net, tape, z);
        NodeId resid = tape.sub(tape.leaf(x), fwd.output);
        NodeId root = tape.scale(tape.mean(tape.row_sumsq(resid)),
                                 -1.0 / (2.0 * beta.sigma * beta.sigma));
        std::vector<NodeId> ids = fwd.params.all();
        ids.push_back(fwd.input);
        std::vector<Tensor> ad = tape.gradients(root, ids);

        auto mean_ll = [&](const Generator& g, const Tensor& zz) {
            Tensor ll = gen_loglik(g, x, zz);
            double acc = 0.0;
            for (std::size_t i = 0; i < ll.size(); ++i) acc += ll[i];
            return acc / static_cast<double>(ll.size());
        };

        std::vector<double> theta = flatten_params(beta.net);
        Generator probe = beta;
        Tensor fd_params = finite_diff_grad(
            [&](const Tensor& p) {
                unflatten_params(probe.net, p);
                return mean_ll(probe, z);
            },
            Tensor::vector(theta), h);
        std::size_t pos = 0;
        for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
            const Tensor& g = ad[k];
            for (std::size_t i = 0; i < g.size(); ++i, ++pos) {
                worst = std::max(worst, guarded_rel_err(g[i], fd_params[pos]));
            }
        }
        Tensor fd_z = finite_diff_grad(
            [&](const Tensor& p) {
                Tensor q({n, d});
                for (std::size_t i = 0; i < q.size(); ++i) q[i] = p[i];
                return mean_ll(beta, q);
            },
            Tensor({n * d}, std::vector<double>(z.data(), z.data() + n * d)), h);
        const Tensor& gz = ad.back();
        for (std::size_t i = 0; i < gz.size(); ++i) {
            worst = std::max(worst, guarded_rel_err(gz[i], fd_z[i]));
        }
    }
    return worst;
}

}  // namespace checks

inline std::vector<CheckResult> run_self_checks(bool quick) {
    std::vector<CheckResult> results;
    auto record = [&](const std::string& name, bool pass, const std::string& detail) {
        results.push_back({name, pass, detail});
    };

    {  // autodiff vs central finite differences
        const int seeds = quick ? 5 : 20;
        double worst = 0.0;
        for (int s = 0; s < seeds; ++s) {
            worst = std::max(worst, checks::fd_worst_error(1000 + s, 1e-5));
        }
        record("fd-gradients", worst < 1e-6,
               "max rel err " + fmt_g17(worst) + " over " + std::to_string(seeds) + " seeds");
    }

    {  // grid partition oracle
        Grid1D grid(-8.0, 8.0, 16000);
        const double z0 = grid_log_partition(zero_tilt(), grid);
        const double z1 = grid_log_partition(linear_tilt(1.5), grid) - 1.125;
        const double z2 = grid_log_partition(quadratic_tilt(-0.5), grid) + 0.5 * std::log(2.0);
        const bool ok = std::abs(z0) < 1e-8 && std::abs(z1) < 1e-6 && std::abs(z2) < 1e-6;
        record("grid-partition", ok,
               "|logZ| errors: " + fmt_g17(std::abs(z0)) + ", " + fmt_g17(std::abs(z1)) + ", " +
                   fmt_g17(std::abs(z2)));
    }

    {  // tilted reference vs grid density
        Grid1D grid(-8.0, 8.0, 16000);
        const double a = 2.0;
        std::vector<double> dens = grid_density(linear_tilt(a), grid);
        GaussianMoments ref = tilted_gaussian_reference(a);
        double worst = 0.0;
        for (std::size_t i = 0; i < dens.size(); ++i) {
            const double z = grid.node(i);
            const double pdf = std_normal_pdf(z - ref.mean);
            worst = std::max(worst, std::abs(dens[i] - pdf));
        }
        record("tilted-reference", worst < 1e-6, "max pdf diff " + fmt_g17(worst));
    }

    {  // linear-Gaussian posterior stationarity
        Rng rng(11, 5);
        const std::size_t d = 2, bigd = 3;
        Tensor w = rng.standard_normal({bigd, d});
        Tensor b = rng.standard_normal({bigd});
        Tensor x = rng.standard_normal({bigd});
        const double sigma = 0.7;
        GaussianPosterior post = linear_gaussian_posterior(w, b, sigma, x);
        ModelParams params{make_zero_ebm_prior(d, 8), make_linear_generator(w, b, sigma)};

        Tensor mu({1, d});
        for (std::size_t j = 0; j < d; ++j) mu.at(0, j) = post.mean[j];
        Tensor xr({1, bigd});
        for (std::size_t j = 0; j < bigd; ++j) xr.at(0, j) = x[j];
        const double res = l2_norm(posterior_score(params, xr, mu));
        record("posterior-stationarity", res < 1e-8, "score norm at oracle mean " + fmt_g17(res));
    }

    {  // sampler stationarity on the exact standard normal target
        const std::size_t n = quick ? 3000 : 6000;
        const std::int64_t k = quick ? 300 : 800;
        Rng rng(3, 0);
        EbmPrior zero = make_zero_ebm_prior(2, 4);
        Tensor z = sample_prior_shortrun(zero, n, {k, 0.1, false}, rng).z;
        double worst_mean = 0.0, worst_var = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            double m = 0.0, ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += z.at(i, j);
            m /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double c = z.at(i, j) - m;
                ss += c * c;
            }
            const double var = ss / static_cast<double>(n - 1);
            worst_mean = std::max(worst_mean, std::abs(m));
            worst_var = std::max(worst_var, std::abs(var - 1.0));
        }
        record("sampler-stationarity", worst_mean < 0.08 && worst_var < 0.09,
               "worst |mean| " + fmt_g17(worst_mean) + ", worst |var-1| " + fmt_g17(worst_var));
    }

    {  // KL profile: closed-form K=0 value and monotone decay
        Grid1D grid(-8.0, 8.0, 256);
        Rng rng(5, 0);
        const std::size_t n = quick ? 30000 : 100000;
        KlProfile prof = kl_profile(quadratic_tilt(-0.5), {0, 1, 2, 5, 10, 20, 40}, 0.4, n,
                                    grid, rng);
        const double expected0 = 0.5 * (2.0 - 1.0 - std::log(2.0));
        bool ok = std::abs(prof.points[0].kl - expected0) < 0.02;
        for (std::size_t i = 1; i < prof.points.size(); ++i) {
            if (prof.points[i].kl > prof.points[i - 1].kl + 0.01) ok = false;
        }
        record("kl-profile", ok,
               "K=0 value " + fmt_g17(prof.points[0].kl) + " (closed form " +
                   fmt_g17(expected0) + ")");
    }

    return results;
}

}  // namespace lebm
