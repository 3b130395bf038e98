// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "sfelab/losses.hpp"

namespace sfelab {

namespace {
constexpr std::uint64_t kMaskSeed = 0xD0D0;
}

GradCheckLoss mse_check_loss(Tensor target) {
    GradCheckLoss loss;
    loss.value_and_grad = [target](const Tensor& out) {
        double v = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) {
            const double d = static_cast<double>(out[i]) - target[i];
            v += d * d;
        }
        v /= static_cast<double>(out.size());
        return std::make_pair(v, mse_grad(out, target));
    };
    loss.ref_value = [target](const RefOutput& out) {
        double v = 0.0;
        for (size_t i = 0; i < out.values.size(); ++i) {
            const double d = out.values[i] - target[static_cast<std::int64_t>(i)];
            v += d * d;
        }
        return v / static_cast<double>(out.values.size());
    };
    return loss;
}

GradCheckReport grad_check(Network& net, const Tensor& batch, const GradCheckLoss& loss, Mode mode, double h,
                           double atol) {
    GradCheckReport report;
    auto params = net.parameters();
    if (params.empty()) return report;

    net.zero_grads();
    net.set_rng_seed(kMaskSeed);
    Tensor out = net.forward(batch, mode, /*record=*/true);
    net.backward(loss.value_and_grad(out).second);

    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(*p.grad);

    auto eval = [&]() { return loss.ref_value(reference_forward(net, batch, mode, kMaskSeed)); };

    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& w = *params[pi].value;
        for (std::int64_t i = 0; i < w.size(); ++i) {
            const float keep = w[i];
            w[i] = static_cast<float>(keep + h);
            const double up = eval();
            w[i] = static_cast<float>(keep - h);
            const double down = eval();
            w[i] = keep;
            // differences use the float-rounded perturbed values
            const double numeric =
                (up - down) / (static_cast<double>(static_cast<float>(keep + h)) -
                               static_cast<double>(static_cast<float>(keep - h)));
            const double a = analytic[pi][i];
            if (std::fabs(a) < atol && std::fabs(numeric) < atol) continue;
            const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = params[pi].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace sfelab
