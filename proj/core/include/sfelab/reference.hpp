// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "sfelab/network.hpp"

namespace sfelab {

/// Output of the reference evaluator: double precision end to end.
struct RefOutput {
    std::vector<int> shape;
    std::vector<double> values;
};

/// Scalar-loop, double-precision forward pass over the same parameters.
/// Deliberately independent of the production implementation (no Eigen, no
/// im2col) so it can serve as the cross-check in finite-difference and
/// equivalence tests. Never mutates the network; dropout draws from
/// `dropout_seed` with the production layer's draw order.
RefOutput reference_forward(const Network& net, const Tensor& batch, Mode mode, std::uint64_t dropout_seed);

}  // namespace sfelab
