#include <catch2/catch_amalgamated.hpp>

#include "lebm/langevin.hpp"
#include "lebm/oracle.hpp"

using namespace lebm;

namespace {

EbmPrior linear_ebm_1d(double a) {
    Mlp net = make_zero_mlp({1, 1}, Activation::Identity, 0.2, Activation::Identity);
    net.layers[0].weight[0] = a;
    return EbmPrior{std::move(net)};
}

struct Moments {
    double mean;
    double var;
};

Moments column_moments(const Tensor& z, std::size_t col) {
    const std::size_t n = z.rows();
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += z.at(i, col);
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = z.at(i, col) - m;
        ss += c * c;
    }
    return {m, ss / static_cast<double>(n - 1)};
}

}  // namespace

TEST_CASE("sample_p0", "[sampler]") {
    SECTION("fixed seed twice: identical") {
        Rng a(5), b(5);
        REQUIRE(sample_p0(a, 10, 3) == sample_p0(b, 10, 3));
    }
    SECTION("n = 1e5, d = 2: per-coordinate variance in (0.97, 1.03)") {
        Rng rng(6);
        Tensor z = sample_p0(rng, 100000, 2);
        for (std::size_t j = 0; j < 2; ++j) {
            Moments m = column_moments(z, j);
            REQUIRE(std::abs(m.mean) < 0.02);
            REQUIRE(m.var > 0.97);
            REQUIRE(m.var < 1.03);
        }
    }
}

TEST_CASE("langevin_run basics", "[sampler]") {
    Rng rng(7, 3);

    SECTION("K = 0 returns z0 unchanged") {
        Tensor z0 = rng.standard_normal({5, 2});
        LangevinResult res = langevin_run([](const Tensor& z) { return Tensor::zeros(z.shape()); },
                                          z0, {0, 0.4, false}, rng);
        REQUIRE(res.z == z0);
    }
    SECTION("zero score, K = 1: z1 = z0 + s * eps from the per-chain streams") {
        const double s = 0.7;
        Tensor z0 = rng.standard_normal({4, 3});
        LangevinResult res = langevin_run([](const Tensor& z) { return Tensor::zeros(z.shape()); },
                                          z0, {1, s, false}, rng);
        for (std::size_t i = 0; i < 4; ++i) {
            Rng chain = rng.fork({streams::k_chain_noise, i});
            for (std::size_t j = 0; j < 3; ++j) {
                const double expect = z0.at(i, j) + s * chain.next_normal();
                REQUIRE(res.z.at(i, j) == expect);
            }
        }
    }
    SECTION("divergence guard reports step and chain") {
        Tensor z0 = Tensor::zeros({3, 2});
        auto blowup = [](const Tensor& z) { return Tensor::full(z.shape(), 1e12); };
        try {
            langevin_run(blowup, z0, {5, 1.0, false}, rng);
            FAIL("expected SamplerDivergence");
        } catch (const SamplerDivergence& e) {
            REQUIRE(e.step == 1);
            REQUIRE(e.chain == 0);
        }
    }
    SECTION("trace records K+1 states and energies") {
        EbmPrior alpha = make_zero_ebm_prior(2, 4);
        LangevinResult res = sample_prior_shortrun(alpha, 3, {4, 0.3, true}, rng);
        REQUIRE(res.trace.has_value());
        REQUIRE(res.trace->states.size() == 5);
        REQUIRE(res.trace->energies.size() == 5);
        REQUIRE(res.trace->states.back() == res.z);
    }
}

TEST_CASE("prior sampler", "[sampler]") {
    SECTION("K = 0: returns the p0 draw untouched") {
        Rng rng(8, 1);
        EbmPrior alpha = make_zero_ebm_prior(3, 4);
        LangevinResult res = sample_prior_shortrun(alpha, 6, {0, 0.4, false}, rng);
        Rng init = rng.fork(streams::k_chain_init);
        REQUIRE(res.z == sample_p0(init, 6, 3));
    }
    SECTION("pure Gaussian target: chain stays at stationarity") {
        Rng rng(9, 0);
        EbmPrior alpha = make_zero_ebm_prior(2, 4);
        Tensor z = sample_prior_shortrun(alpha, 4000, {300, 0.1, false}, rng).z;
        for (std::size_t j = 0; j < 2; ++j) {
            Moments m = column_moments(z, j);
            REQUIRE(std::abs(m.mean) < 0.08);
            REQUIRE(m.var > 0.9);
            REQUIRE(m.var < 1.1);
        }
    }
    SECTION("linear tilt f = 2z: long chain recovers the N(2,1) reference") {
        Rng rng(10, 0);
        EbmPrior alpha = linear_ebm_1d(2.0);
        GaussianMoments ref = tilted_gaussian_reference(2.0);
        Tensor z = sample_prior_shortrun(alpha, 4000, {2000, 0.1, false}, rng).z;
        Moments m = column_moments(z, 0);
        REQUIRE(std::abs(m.mean - ref.mean) < 0.1);
        REQUIRE(std::abs(m.var - ref.variance) < 0.1);
    }
}

TEST_CASE("posterior sampler", "[sampler]") {
    SECTION("defaults: prior (60, 0.4), posterior (20, 0.1)") {
        REQUIRE(default_prior_config().steps == 60);
        REQUIRE(default_prior_config().step_size == 0.4);
        REQUIRE(default_posterior_config().steps == 20);
        REQUIRE(default_posterior_config().step_size == 0.1);
    }
    SECTION("linear-Gaussian posterior: moments within 5% of the closed form") {
        const std::size_t d = 2, bigd = 3, n = 20000;
        Tensor w({bigd, d}, {1, 0, 0, 1, 0.5, 0.5});
        Tensor b({bigd}, {0, 0, 0});
        Tensor x({bigd}, {1.0, 2.0, 3.0});
        const double sigma = 0.7;
        GaussianPosterior post = linear_gaussian_posterior(w, b, sigma, x);
        ModelParams params{make_zero_ebm_prior(d, 4), make_linear_generator(w, b, sigma)};

        Tensor xs({n, bigd});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < bigd; ++j) xs.at(i, j) = x[j];

        Rng rng(11, 0);
        Tensor z = sample_posterior_shortrun(params, xs, {2000, 0.1, false}, rng).z;

        Tensor mean({d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) mean[j] += z.at(i, j);
        for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
        Tensor cov({d, d});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t c = 0; c < d; ++c)
                    cov.at(a, c) += (z.at(i, a) - mean[a]) * (z.at(i, c) - mean[c]);
        }
        for (std::size_t i = 0; i < cov.size(); ++i) cov[i] /= static_cast<double>(n - 1);

        double mean_err = 0.0, mean_ref = 0.0, cov_err = 0.0, cov_ref = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            mean_err += (mean[j] - post.mean[j]) * (mean[j] - post.mean[j]);
            mean_ref += post.mean[j] * post.mean[j];
        }
        for (std::size_t i = 0; i < cov.size(); ++i) {
            cov_err += (cov[i] - post.covariance[i]) * (cov[i] - post.covariance[i]);
            cov_ref += post.covariance[i] * post.covariance[i];
        }
        REQUIRE(std::sqrt(mean_err / mean_ref) < 0.05);
        REQUIRE(std::sqrt(cov_err / cov_ref) < 0.05);
    }
    SECTION("sigma = 1e6: posterior chain equals prior chain to 1e-6 per step") {
        Rng rng(12, 0);
        EbmPrior alpha = make_ebm_prior(2, 8, rng);
        Generator beta = make_generator({2, 6, 3}, Activation::Identity, 1e6, rng);
        ModelParams params{alpha, beta};
        Tensor x = rng.standard_normal({16, 3});
        Rng sampler_rng(13, 0);
        Tensor zp = sample_posterior_shortrun(params, x, {20, 0.1, false}, sampler_rng).z;
        Tensor zq = sample_prior_shortrun(alpha, 16, {20, 0.1, false}, sampler_rng).z;
        for (std::size_t i = 0; i < zp.size(); ++i) {
            REQUIRE(std::abs(zp[i] - zq[i]) < 1e-6);
        }
    }
}

TEST_CASE("sampler invariants", "[sampler][property]") {
    SECTION("per-step noise freshness: var(z_{k+1} - z_k - drift) ~ s^2 across chains") {
        const double s = 0.3;
        const std::size_t n = 10000;
        Rng rng(14, 0);
        EbmPrior alpha = linear_ebm_1d(1.0);
        LangevinResult res = sample_prior_shortrun(alpha, n, {4, s, true}, rng);
        const double drift = 0.5 * s * s;
        for (std::size_t k = 0; k + 1 < res.trace->states.size(); ++k) {
            const Tensor& zk = res.trace->states[k];
            const Tensor& zk1 = res.trace->states[k + 1];
            Tensor score = prior_score(alpha, zk);
            double m = 0.0, ss = 0.0;
            std::vector<double> inc(n);
            for (std::size_t i = 0; i < n; ++i) {
                inc[i] = zk1[i] - zk[i] - drift * score[i];
                m += inc[i];
            }
            m /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) ss += (inc[i] - m) * (inc[i] - m);
            const double var = ss / static_cast<double>(n - 1);
            REQUIRE(std::abs(var - s * s) < 0.05 * s * s);
        }
    }
    SECTION("shift invariance: f + const gives bit-identical trajectories") {
        Rng rng(15, 0);
        EbmPrior alpha = make_ebm_prior(2, 8, rng);
        Rng sampler_rng(16, 0);
        LangevinResult before = sample_prior_shortrun(alpha, 8, {25, 0.4, true}, sampler_rng);
        alpha.net.layers.back().bias[0] += 10.0;
        LangevinResult after = sample_prior_shortrun(alpha, 8, {25, 0.4, true}, sampler_rng);
        REQUIRE(before.z == after.z);
        for (std::size_t k = 0; k < before.trace->states.size(); ++k) {
            REQUIRE(before.trace->states[k] == after.trace->states[k]);
        }
    }
    SECTION("thread fan-out is bit-identical to the serial path") {
        Rng rng(17, 0);
        EbmPrior alpha = make_ebm_prior(3, 8, rng);
        Generator beta = make_generator({3, 8, 4}, Activation::Tanh, 0.4, rng);
        ModelParams params{alpha, beta};
        Tensor x = rng.standard_normal({13, 4});
        Rng sampler_rng(18, 0);
        Tensor serial = sample_posterior_shortrun(params, x, {10, 0.1, false}, sampler_rng, 1).z;
        Tensor fanned = sample_posterior_shortrun(params, x, {10, 0.1, false}, sampler_rng, 2).z;
        REQUIRE(serial == fanned);
    }
}

TEST_CASE("trace csv export", "[sampler]") {
    Rng rng(19, 0);
    EbmPrior alpha = make_zero_ebm_prior(2, 4);
    LangevinResult res = sample_prior_shortrun(alpha, 2, {3, 0.4, true}, rng);
    std::ostringstream os;
    write_trace_csv(os, *res.trace);
    std::istringstream in(os.str());
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "step,chain,f_alpha,z_0,z_1");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    REQUIRE(rows == 4 * 2);  // (K+1) states x 2 chains

    // d > 8 exports energies only
    EbmPrior wide = make_zero_ebm_prior(9, 4);
    LangevinResult res9 = sample_prior_shortrun(wide, 1, {1, 0.4, true}, rng);
    std::ostringstream os9;
    write_trace_csv(os9, *res9.trace);
    std::istringstream in9(os9.str());
    std::getline(in9, header);
    REQUIRE(header == "step,chain,f_alpha");
}
