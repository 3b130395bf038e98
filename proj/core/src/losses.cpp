// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sfelab {

namespace {

float clamp_prob(float p) { return std::clamp(p, kProbEps, 1.0f - kProbEps); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
}

}  // namespace

float mse(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse");
    if (pred.size() == 0) throw std::invalid_argument("mse: empty tensors");
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - target[i];
        acc += d * d;
    }
    return static_cast<float>(acc / static_cast<double>(pred.size()));
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse");
    Tensor g(pred.shape());
    const float scale = 2.0f / static_cast<float>(pred.size());
    for (std::int64_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

float bce(float pred, int label) {
    const float p = clamp_prob(pred);
    return label == 1 ? -std::log(p) : -std::log(1.0f - p);
}

float bce(const Tensor& pred, int label) {
    if (pred.size() == 0) throw std::invalid_argument("bce: empty tensor");
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) acc += bce(pred[i], label);
    return static_cast<float>(acc / static_cast<double>(pred.size()));
}

Tensor bce_grad(const Tensor& pred, int label) {
    Tensor g(pred.shape());
    const float inv_n = 1.0f / static_cast<float>(pred.size());
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const float p = clamp_prob(pred[i]);
        g[i] = inv_n * (label == 1 ? -1.0f / p : 1.0f / (1.0f - p));
    }
    return g;
}

float categorical_ce(const Tensor& scores, std::span<const int> labels, ScoreKind kind) {
    if (scores.rank() != 2) throw std::invalid_argument("categorical_ce: expects [N, classes]");
    const int n = scores.dim(0);
    const int k = scores.dim(1);
    if (static_cast<size_t>(n) != labels.size())
        throw std::invalid_argument("categorical_ce: label count mismatch");
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= k) throw std::out_of_range("categorical_ce: label " + std::to_string(y) +
                                                     " out of range for " + std::to_string(k) + " classes");
        const float* row = scores.data() + static_cast<std::int64_t>(i) * k;
        if (kind == ScoreKind::probs) {
            acc += -std::log(std::max(row[y], kProbEps));
        } else {
            float m = row[0];
            for (int c = 1; c < k; ++c) m = std::max(m, row[c]);
            double lse = 0.0;
            for (int c = 0; c < k; ++c) lse += std::exp(static_cast<double>(row[c]) - m);
            acc += std::log(lse) + m - row[y];
        }
    }
    return static_cast<float>(acc / n);
}

float categorical_ce(const Tensor& scores, int label, ScoreKind kind) {
    const Tensor row = scores.rank() == 1 ? scores.reshaped({1, scores.dim(0)}) : scores;
    const int labels[1] = {label};
    return categorical_ce(row, std::span<const int>(labels, 1), kind);
}

Tensor categorical_ce_grad(const Tensor& probs, std::span<const int> labels) {
    if (probs.rank() != 2) throw std::invalid_argument("categorical_ce: expects [N, classes]");
    const int n = probs.dim(0);
    const int k = probs.dim(1);
    Tensor g({n, k});
    const float inv_n = 1.0f / static_cast<float>(n);
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        g.at(i, y) = -inv_n / std::max(probs.at(i, y), kProbEps);
    }
    return g;
}

}  // namespace sfelab
