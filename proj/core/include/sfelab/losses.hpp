// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "sfelab/tensor.hpp"

namespace sfelab {

/// Probability clamp used in every log computation.
constexpr float kProbEps = 1e-7f;

/// Mean over all elements of the squared difference. Accumulates in double.
float mse(const Tensor& pred, const Tensor& target);
/// d mse / d pred, elementwise 2 (pred - target) / n.
Tensor mse_grad(const Tensor& pred, const Tensor& target);

/// Binary cross-entropy of a single prediction against label 0 or 1.
/// pred is clamped to [kProbEps, 1 - kProbEps].
float bce(float pred, int label);
/// Mean binary cross-entropy of a batch of scores against one shared label.
float bce(const Tensor& pred, int label);
/// d batch-mean-bce / d pred.
Tensor bce_grad(const Tensor& pred, int label);

enum class ScoreKind { logits, probs };

/// Negative log-likelihood of the true classes, mean over the batch.
/// With ScoreKind::logits a softmax is applied first (stable log-sum-exp);
/// with ScoreKind::probs rows are read as probabilities directly.
float categorical_ce(const Tensor& scores, std::span<const int> labels, ScoreKind kind);
float categorical_ce(const Tensor& scores, int label, ScoreKind kind);
/// d batch-mean-ce / d probs for the probability path; pairs with a
/// softmax output layer whose backward completes the chain.
Tensor categorical_ce_grad(const Tensor& probs, std::span<const int> labels);

}  // namespace sfelab
