// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/reference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "sfelab/rng.hpp"

namespace sfelab {

namespace {
constexpr double kBatchNormEps = 1e-5;
}

RefOutput reference_forward(const Network& net, const Tensor& batch, Mode mode, std::uint64_t dropout_seed) {
    const int n = batch.dim(0);
    RefOutput cur;
    cur.shape = batch.shape();
    cur.values.assign(batch.data(), batch.data() + batch.size());
    // same stream a production forward sees after set_rng_seed(dropout_seed)
    Rng rng(dropout_seed);

    for (const detail::Layer& layer : net.layers()) {
        if (const auto* l = std::get_if<detail::DenseLayer>(&layer)) {
            const int in = l->in_features, out = l->spec.units;
            std::vector<double> next(static_cast<size_t>(n) * out);
            for (int i = 0; i < n; ++i)
                for (int o = 0; o < out; ++o) {
                    double acc = l->b[o];
                    for (int j = 0; j < in; ++j)
                        acc += cur.values[static_cast<size_t>(i) * in + j] * static_cast<double>(l->w.at(j, o));
                    next[static_cast<size_t>(i) * out + o] = acc;
                }
            cur.values = std::move(next);
            cur.shape = {n, out};
        } else if (const auto* l = std::get_if<detail::Conv2dLayer>(&layer)) {
            const int k = l->spec.kernel, s = l->spec.stride, p = l->pad;
            const int ih = l->in_h, iw = l->in_w, ic = l->in_c;
            const int oh = l->out_h, ow = l->out_w, oc = l->spec.out_channels;
            std::vector<double> next(static_cast<size_t>(n) * oh * ow * oc);
            for (int i = 0; i < n; ++i)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox)
                        for (int co = 0; co < oc; ++co) {
                            double acc = l->b[co];
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx) {
                                    const int iy = oy * s + ky - p;
                                    const int ix = ox * s + kx - p;
                                    if (iy < 0 || iy >= ih || ix < 0 || ix >= iw) continue;
                                    for (int ci = 0; ci < ic; ++ci) {
                                        const double v =
                                            cur.values[((static_cast<size_t>(i) * ih + iy) * iw + ix) * ic + ci];
                                        acc += v * static_cast<double>(
                                                       l->w.at((ky * k + kx) * ic + ci, co));
                                    }
                                }
                            next[((static_cast<size_t>(i) * oh + oy) * ow + ox) * oc + co] = acc;
                        }
            cur.values = std::move(next);
            cur.shape = {n, oh, ow, oc};
        } else if (const auto* l = std::get_if<detail::MaxPoolLayer>(&layer)) {
            const int w = l->spec.pool;
            const int ih = l->in_h, iw = l->in_w, c = l->in_c;
            const int oh = l->out_h, ow = l->out_w;
            std::vector<double> next(static_cast<size_t>(n) * oh * ow * c);
            for (int i = 0; i < n; ++i)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox)
                        for (int ci = 0; ci < c; ++ci) {
                            double best = -std::numeric_limits<double>::infinity();
                            for (int py = 0; py < w; ++py)
                                for (int px = 0; px < w; ++px) {
                                    const double v =
                                        cur.values[((static_cast<size_t>(i) * ih + oy * w + py) * iw + ox * w + px) *
                                                       c +
                                                   ci];
                                    if (v > best) best = v;
                                }
                            next[((static_cast<size_t>(i) * oh + oy) * ow + ox) * c + ci] = best;
                        }
            cur.values = std::move(next);
            cur.shape = {n, oh, ow, c};
        } else if (const auto* l = std::get_if<detail::FlattenLayer>(&layer)) {
            cur.shape = {n, static_cast<int>(shape_numel(l->in_shape))};
        } else if (const auto* l = std::get_if<detail::DropoutLayer>(&layer)) {
            if (mode == Mode::train && l->spec.rate > 0.0f) {
                const float keep = 1.0f - l->spec.rate;
                const float scale = 1.0f / keep;  // float constant, matching production
                for (double& v : cur.values) v *= rng.uniform() < keep ? static_cast<double>(scale) : 0.0;
            }
        } else if (const auto* l = std::get_if<detail::BatchNormLayer>(&layer)) {
            const int d = l->features;
            if (mode == Mode::train) {
                std::vector<double> mean(d, 0.0), var(d, 0.0);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) mean[j] += cur.values[static_cast<size_t>(i) * d + j];
                for (int j = 0; j < d; ++j) mean[j] /= n;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) {
                        const double dv = cur.values[static_cast<size_t>(i) * d + j] - mean[j];
                        var[j] += dv * dv;
                    }
                for (int j = 0; j < d; ++j) var[j] /= n;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) {
                        double& v = cur.values[static_cast<size_t>(i) * d + j];
                        v = l->gamma[j] * (v - mean[j]) / std::sqrt(var[j] + kBatchNormEps) + l->beta[j];
                    }
            } else {
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) {
                        double& v = cur.values[static_cast<size_t>(i) * d + j];
                        v = l->gamma[j] * (v - l->run_mean[j]) / std::sqrt(l->run_var[j] + kBatchNormEps) +
                            l->beta[j];
                    }
            }
        } else if (const auto* l = std::get_if<detail::ActivationLayer>(&layer)) {
            switch (l->spec.act) {
                case Activation::relu:
                    for (double& v : cur.values) v = v > 0.0 ? v : 0.0;
                    break;
                case Activation::leakyrelu: {
                    const double a = l->spec.alpha;
                    for (double& v : cur.values) v = v > 0.0 ? v : a * v;
                    break;
                }
                case Activation::tanh:
                    for (double& v : cur.values) v = std::tanh(v);
                    break;
                case Activation::sigmoid:
                    for (double& v : cur.values) v = 1.0 / (1.0 + std::exp(-v));
                    break;
                case Activation::softmax: {
                    const int cols = cur.shape.back();
                    const int rows = static_cast<int>(cur.values.size()) / cols;
                    for (int r = 0; r < rows; ++r) {
                        double* row = cur.values.data() + static_cast<size_t>(r) * cols;
                        double m = row[0];
                        for (int c = 1; c < cols; ++c) m = std::max(m, row[c]);
                        double sum = 0.0;
                        for (int c = 0; c < cols; ++c) {
                            row[c] = std::exp(row[c] - m);
                            sum += row[c];
                        }
                        for (int c = 0; c < cols; ++c) row[c] /= sum;
                    }
                    break;
                }
            }
        }
    }
    return cur;
}

}  // namespace sfelab
