// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>

#include "sfelab/network.hpp"
#include "sfelab/reference.hpp"

namespace sfelab {

/// Scalar loss over the network output, float path: value plus gradient
/// w.r.t. the output.
using LossFn = std::function<std::pair<double, Tensor>(const Tensor& output)>;

/// The same loss evaluated on the double-precision reference output.
using RefLossFn = std::function<double(const RefOutput& output)>;

/// Both arms of a gradient check: the production float path supplies the
/// analytic gradient, the reference path supplies clean loss values for
/// central differences.
struct GradCheckLoss {
    LossFn value_and_grad;
    RefLossFn ref_value;
};

/// MSE against a fixed target, both arms.
GradCheckLoss mse_check_loss(Tensor target);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
};

/// Compares analytic parameter gradients against central finite
/// differences, perturbing every parameter element. Difference quotients
/// are taken on the double-precision reference forward, so the check
/// resolves well below float32 noise. The dropout stream is re-seeded
/// before each forward so stochastic layers see identical masks.
///
/// Returns max over parameters of |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-8); a frozen network yields 0. Elements
/// where both gradients sit below `atol` count as agreement (a true-zero
/// gradient, e.g. a bias feeding train-mode batchnorm, is pure noise in
/// the relative formula).
GradCheckReport grad_check(Network& net, const Tensor& batch, const GradCheckLoss& loss,
                           Mode mode = Mode::train, double h = 1e-3, double atol = 1e-4);

}  // namespace sfelab
