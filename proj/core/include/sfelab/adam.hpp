// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sfelab/network.hpp"

namespace sfelab {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Standard GAN-friendly settings (lr 2e-4, beta1 0.5).
AdamConfig adam_gan_config();

/// Adam with bias correction. Moment buffers are allocated on the first
/// step and keyed positionally, so the caller must pass the same parameter
/// list every step.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    /// Applies one update using the gradients referenced by params.
    /// Non-finite gradients raise, naming the parameter.
    void step(std::span<Network::ParamRef> params);

    std::int64_t t() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace sfelab
