#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>

#include "lebm/tensor.hpp"

namespace lebm {

// Deterministic pseudo-random source. Algorithm, fixed for this repository:
//
//   * Generator: xoshiro256++ (Blackman & Vigna). Pure 64-bit integer
//     arithmetic, so the raw bit stream is identical on every platform.
//   * Seeding: the four state words are produced by SplitMix64 applied to
//     mix64({seed, stream}) (see `mix64` below). A (seed, stream) pair fully
//     determines the sequence; distinct stream ids give statistically
//     independent sequences.
//   * Uniforms: next_uniform() returns ((x >> 11) + 1) * 2^-53, i.e. a
//     uniform draw in (0, 1] so that log(u) is always finite.
//   * Gaussians: Marsaglia's polar method (the rejection form of Box-Muller;
//     uses only sqrt and log, no trig). Each accepted round yields two
//     variates; the second is cached and served by the next call.
//
// Stream derivation: every independent consumer of randomness (a Langevin
// chain, a training phase at iteration t, a dataset draw) gets its own
// stream id via mix64 over context words, e.g.
//     stream = mix64({parent_stream, phase_tag, iteration, chain_index}).
// mix64 folds each word through the SplitMix64 finalizer, so stream ids for
// distinct contexts collide only with negligible probability and results are
// independent of evaluation order (chains may run in any order or in
// parallel and still reproduce bit-identically).
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {
        std::uint64_t sm = mix64({seed, stream});
        for (auto& w : s_) w = splitmix64(sm);
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;  // all-zero state is invalid
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Child generator for an independent sub-stream; see stream derivation
    // notes above. The child starts from its own fresh state.
    Rng fork(std::uint64_t tag) const { return Rng(seed_, mix64({stream_, tag})); }
    Rng fork(std::initializer_list<std::uint64_t> tags) const {
        std::uint64_t s = stream_;
        for (std::uint64_t t : tags) s = mix64({s, t});
        return Rng(seed_, s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in (0, 1].
    double next_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal variate (polar method, cached spare).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_uniform() - 1.0;
            v = 2.0 * next_uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // i.i.d. standard-normal tensor; entries are drawn in flat row-major
    // order, so a prefix of the sequence is independent of the trailing
    // shape dimensions.
    Tensor standard_normal(std::vector<std::size_t> shape) {
        if (shape.empty()) throw std::invalid_argument("rng_standard_normal: empty shape");
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = next_normal();
        return t;
    }

    // SplitMix64 finalizer-based word mixer used for all stream derivation.
    static std::uint64_t mix64(std::initializer_list<std::uint64_t> words) {
        std::uint64_t h = 0x9E3779B97F4A7C15ull;
        for (std::uint64_t w : words) {
            h += w + 0x9E3779B97F4A7C15ull;
            h = fmix64(h);
        }
        return h;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t fmix64(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    static std::uint64_t splitmix64(std::uint64_t& state) {
        state += 0x9E3779B97F4A7C15ull;
        return fmix64(state);
    }

    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t s_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline Tensor rng_standard_normal(Rng& rng, std::vector<std::size_t> shape) {
    return rng.standard_normal(std::move(shape));
}

// Stream tags for the independent randomness consumers in this library.
// Values are arbitrary distinct constants; they are part of the persisted
// determinism contract, so do not renumber.
namespace streams {
inline constexpr std::uint64_t k_init_alpha = 0x01;
inline constexpr std::uint64_t k_init_beta = 0x02;
inline constexpr std::uint64_t k_batch = 0x03;
inline constexpr std::uint64_t k_prior_chain = 0x04;
inline constexpr std::uint64_t k_posterior_chain = 0x05;
inline constexpr std::uint64_t k_metrics = 0x06;
inline constexpr std::uint64_t k_dataset = 0x07;
inline constexpr std::uint64_t k_chain_init = 0x08;
inline constexpr std::uint64_t k_chain_noise = 0x09;
inline constexpr std::uint64_t k_eval = 0x0A;
}  // namespace streams

}  // namespace lebm
