#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lebm/mlp.hpp"
#include "lebm/tensor.hpp"

namespace lebm {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.5;  // both networks use betas (0.5, 0.999)
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam, descent form:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Ascent updates (the EBM and generator steps) are performed by handing in
// the negated gradient.
class AdamState {
public:
    AdamState() = default;

    AdamState(const std::vector<ParamRef>& params, AdamConfig cfg) : cfg_(cfg) {
        for (const ParamRef& p : params) {
            names_.push_back(p.name);
            m_.push_back(Tensor::zeros(p.tensor->shape()));
            v_.push_back(Tensor::zeros(p.tensor->shape()));
        }
    }

    void step(const std::vector<ParamRef>& params, std::span<const Tensor> grads) {
        if (params.size() != m_.size() || grads.size() != m_.size()) {
            throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = *params[k].tensor;
            const Tensor& g = grads[k];
            if (!p.same_shape(g)) {
                throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                            names_[k]);
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!std::isfinite(g[i])) {
                    throw std::runtime_error("adam_step: non-finite gradient in parameter " +
                                             names_[k]);
                }
            }
            Tensor& m = m_[k];
            Tensor& v = v_[k];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    std::int64_t t() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    // Serialization access (checkpointing).
    std::size_t slots() const { return m_.size(); }
    const std::string& name(std::size_t k) const { return names_[k]; }
    Tensor& first_moment(std::size_t k) { return m_[k]; }
    Tensor& second_moment(std::size_t k) { return v_[k]; }
    const Tensor& first_moment(std::size_t k) const { return m_[k]; }
    const Tensor& second_moment(std::size_t k) const { return v_[k]; }
    void set_t(std::int64_t t) { t_ = t; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::string> names_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

inline void adam_step(AdamState& state, const std::vector<ParamRef>& params,
                      std::span<const Tensor> grads) {
    state.step(params, grads);
}

}  // namespace lebm
