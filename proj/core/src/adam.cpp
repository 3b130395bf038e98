// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace sfelab {

AdamConfig adam_gan_config() {
    AdamConfig cfg;
    cfg.lr = 2e-4f;
    cfg.beta1 = 0.5f;
    return cfg;
}

void AdamState::step(std::span<Network::ParamRef> params) {
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros_like(*p.value));
            v_.push_back(Tensor::zeros_like(*p.value));
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter list changed between steps");
    ++t_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& w = *params[pi].value;
        const Tensor& g = *params[pi].grad;
        if (!w.same_shape(g) || !w.same_shape(m_[pi]))
            throw std::invalid_argument("adam: gradient shape mismatch for " + params[pi].name);
        if (!g.all_finite())
            throw std::runtime_error("adam: non-finite gradient for " + params[pi].name);
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (std::int64_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace sfelab
