// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/network.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace sfelab {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;
using MapArr = Eigen::Map<Eigen::ArrayXf>;
using MapConstArr = Eigen::Map<const Eigen::ArrayXf>;

namespace {

constexpr float kBatchNormEps = 1e-5f;

[[noreturn]] void layer_error(size_t index, const char* kind, const std::string& what) {
    throw std::runtime_error("layer " + std::to_string(index) + " (" + kind + "): " + what);
}

void check_finite(const Tensor& t, size_t index, const char* kind) {
    if (!MapConstArr(t.data(), t.size()).allFinite()) {
        layer_error(index, kind, "non-finite activation");
    }
}

int conv_out_extent(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::leakyrelu: return "leakyrelu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

LayerSpec LayerSpec::dense(int units) {
    LayerSpec s;
    s.kind = Kind::dense;
    s.units = units;
    return s;
}

LayerSpec LayerSpec::conv2d(int out_channels, int kernel, int stride, Padding padding) {
    LayerSpec s;
    s.kind = Kind::conv2d;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::maxpool(int window) {
    LayerSpec s;
    s.kind = Kind::maxpool;
    s.pool = window;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = Kind::flatten;
    return s;
}

LayerSpec LayerSpec::dropout(float rate) {
    LayerSpec s;
    s.kind = Kind::dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::batchnorm(float momentum) {
    LayerSpec s;
    s.kind = Kind::batchnorm;
    s.momentum = momentum;
    return s;
}

LayerSpec LayerSpec::activation(Activation a, float alpha) {
    LayerSpec s;
    s.kind = Kind::activation;
    s.act = a;
    s.alpha = alpha;
    return s;
}

const char* LayerSpec::kind_name() const {
    switch (kind) {
        case Kind::dense: return "dense";
        case Kind::conv2d: return "conv2d";
        case Kind::maxpool: return "maxpool";
        case Kind::flatten: return "flatten";
        case Kind::dropout: return "dropout";
        case Kind::batchnorm: return "batchnorm";
        case Kind::activation: return "activation";
    }
    return "?";
}

void LayerSpec::validate() const {
    switch (kind) {
        case Kind::dense:
            if (units <= 0) throw std::invalid_argument("dense: units must be positive");
            break;
        case Kind::conv2d:
            if (out_channels <= 0 || kernel <= 0 || stride <= 0)
                throw std::invalid_argument("conv2d: channels, kernel and stride must be positive");
            break;
        case Kind::maxpool:
            if (pool <= 0) throw std::invalid_argument("maxpool: window must be positive");
            break;
        case Kind::dropout:
            if (!(rate >= 0.0f && rate < 1.0f)) throw std::invalid_argument("dropout: rate must be in [0,1)");
            break;
        case Kind::batchnorm:
            if (!(momentum > 0.0f && momentum < 1.0f))
                throw std::invalid_argument("batchnorm: momentum must be in (0,1)");
            break;
        case Kind::activation:
            if (act == Activation::leakyrelu && !(alpha > 0.0f))
                throw std::invalid_argument("leakyrelu: alpha must be positive");
            break;
        case Kind::flatten:
            break;
    }
}

void push_dense(std::vector<LayerSpec>& specs, int units, Activation act, float alpha) {
    specs.push_back(LayerSpec::dense(units));
    specs.push_back(LayerSpec::activation(act, alpha));
}

// ---------------------------------------------------------------------------
// construction

namespace {

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

Network::Network(std::vector<LayerSpec> specs, std::vector<int> input_shape, std::uint64_t init_seed)
    : input_shape_(std::move(input_shape)), rng_(Rng::derive(init_seed, 0x5eed)) {
    std::vector<int> shape = input_shape_;
    size_t index = 0;
    for (const LayerSpec& spec : specs) {
        spec.validate();
        Rng init_rng(Rng::derive(init_seed, index));
        switch (spec.kind) {
            case LayerSpec::Kind::dense: {
                if (shape.size() != 1)
                    layer_error(index, "dense", "expects rank-2 input [N, features], got feature shape " +
                                                    shape_to_string(shape));
                detail::DenseLayer l;
                l.spec = spec;
                l.in_features = shape[0];
                l.w = glorot_uniform({l.in_features, spec.units}, l.in_features, spec.units, init_rng);
                l.b = Tensor({spec.units});
                l.gw = Tensor::zeros_like(l.w);
                l.gb = Tensor::zeros_like(l.b);
                layers_.emplace_back(std::move(l));
                shape = {spec.units};
                break;
            }
            case LayerSpec::Kind::conv2d: {
                if (shape.size() != 3)
                    layer_error(index, "conv2d", "expects rank-4 input [N, H, W, C], got feature shape " +
                                                     shape_to_string(shape));
                detail::Conv2dLayer l;
                l.spec = spec;
                l.in_h = shape[0];
                l.in_w = shape[1];
                l.in_c = shape[2];
                l.pad = spec.padding == Padding::same ? (spec.kernel - 1) / 2 : 0;
                l.out_h = conv_out_extent(l.in_h, spec.kernel, spec.stride, l.pad);
                l.out_w = conv_out_extent(l.in_w, spec.kernel, spec.stride, l.pad);
                if (l.out_h <= 0 || l.out_w <= 0)
                    layer_error(index, "conv2d", "kernel larger than input " + shape_to_string(shape));
                const int kkc = spec.kernel * spec.kernel * l.in_c;
                l.w = glorot_uniform({kkc, spec.out_channels}, kkc, spec.kernel * spec.kernel * spec.out_channels,
                                     init_rng);
                l.b = Tensor({spec.out_channels});
                l.gw = Tensor::zeros_like(l.w);
                l.gb = Tensor::zeros_like(l.b);
                layers_.emplace_back(std::move(l));
                shape = {l.out_h, l.out_w, spec.out_channels};
                break;
            }
            case LayerSpec::Kind::maxpool: {
                if (shape.size() != 3)
                    layer_error(index, "maxpool", "expects rank-4 input [N, H, W, C], got feature shape " +
                                                      shape_to_string(shape));
                detail::MaxPoolLayer l;
                l.spec = spec;
                l.in_h = shape[0];
                l.in_w = shape[1];
                l.in_c = shape[2];
                l.out_h = shape[0] / spec.pool;
                l.out_w = shape[1] / spec.pool;
                if (l.out_h <= 0 || l.out_w <= 0)
                    layer_error(index, "maxpool", "window larger than input " + shape_to_string(shape));
                l.in_shape = shape;
                layers_.emplace_back(std::move(l));
                shape = {l.out_h, l.out_w, l.in_c};
                break;
            }
            case LayerSpec::Kind::flatten: {
                detail::FlattenLayer l;
                l.spec = spec;
                l.in_shape = shape;
                layers_.emplace_back(std::move(l));
                shape = {static_cast<int>(shape_numel(shape))};
                break;
            }
            case LayerSpec::Kind::dropout: {
                detail::DropoutLayer l;
                l.spec = spec;
                layers_.emplace_back(std::move(l));
                break;
            }
            case LayerSpec::Kind::batchnorm: {
                if (shape.size() != 1)
                    layer_error(index, "batchnorm", "expects rank-2 input [N, features], got feature shape " +
                                                        shape_to_string(shape));
                detail::BatchNormLayer l;
                l.spec = spec;
                l.features = shape[0];
                l.gamma = Tensor::full({l.features}, 1.0f);
                l.beta = Tensor({l.features});
                l.run_mean = Tensor({l.features});
                l.run_var = Tensor::full({l.features}, 1.0f);
                l.ggamma = Tensor::zeros_like(l.gamma);
                l.gbeta = Tensor::zeros_like(l.beta);
                layers_.emplace_back(std::move(l));
                break;
            }
            case LayerSpec::Kind::activation: {
                if (spec.act == Activation::softmax && shape.size() != 1)
                    layer_error(index, "activation", "softmax expects rank-2 input [N, classes]");
                detail::ActivationLayer l;
                l.spec = spec;
                layers_.emplace_back(std::move(l));
                break;
            }
        }
        shapes_.push_back(shape);
        ++index;
    }
    output_shape_ = shape;
}

const LayerSpec& Network::layer_spec(size_t i) const {
    return std::visit([](const auto& l) -> const LayerSpec& { return l.spec; }, layers_[i]);
}

std::vector<std::vector<int>> Network::layer_output_shapes() const { return shapes_; }

// ---------------------------------------------------------------------------
// forward

namespace {

// Gathers convolution patches for image `img` into `col` [out_h*out_w, k*k*c].
// Rows of k*c contiguous floats are copied per (oy, ox, ky); out-of-range
// rows (padding) are zeroed.
void im2col(const float* img, int in_h, int in_w, int in_c, int kernel, int stride, int pad, int out_h,
            int out_w, float* col) {
    const int kc = kernel * in_c;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            float* row = col + (static_cast<std::int64_t>(oy) * out_w + ox) * kernel * kc;
            const int iy0 = oy * stride - pad;
            const int ix0 = ox * stride - pad;
            for (int ky = 0; ky < kernel; ++ky) {
                float* dst = row + ky * kc;
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= in_h) {
                    std::memset(dst, 0, sizeof(float) * static_cast<size_t>(kc));
                    continue;
                }
                int kx_lo = ix0 < 0 ? -ix0 : 0;
                int kx_hi = ix0 + kernel > in_w ? in_w - ix0 : kernel;
                if (kx_lo > 0) std::memset(dst, 0, sizeof(float) * static_cast<size_t>(kx_lo) * in_c);
                if (kx_hi < kernel)
                    std::memset(dst + kx_hi * in_c, 0, sizeof(float) * static_cast<size_t>(kernel - kx_hi) * in_c);
                if (kx_hi > kx_lo) {
                    const float* src = img + (static_cast<std::int64_t>(iy) * in_w + (ix0 + kx_lo)) * in_c;
                    std::memcpy(dst + kx_lo * in_c, src, sizeof(float) * static_cast<size_t>(kx_hi - kx_lo) * in_c);
                }
            }
        }
    }
}

// Scatter-adds column gradients back onto the input image.
void col2im(const float* col, int in_h, int in_w, int in_c, int kernel, int stride, int pad, int out_h,
            int out_w, float* img) {
    const int kc = kernel * in_c;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const float* row = col + (static_cast<std::int64_t>(oy) * out_w + ox) * kernel * kc;
            const int iy0 = oy * stride - pad;
            const int ix0 = ox * stride - pad;
            for (int ky = 0; ky < kernel; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= in_h) continue;
                int kx_lo = ix0 < 0 ? -ix0 : 0;
                int kx_hi = ix0 + kernel > in_w ? in_w - ix0 : kernel;
                if (kx_hi <= kx_lo) continue;
                const float* src = row + ky * kc + kx_lo * in_c;
                float* dst = img + (static_cast<std::int64_t>(iy) * in_w + (ix0 + kx_lo)) * in_c;
                const int count = (kx_hi - kx_lo) * in_c;
                for (int i = 0; i < count; ++i) dst[i] += src[i];
            }
        }
    }
}

void apply_softmax_rows(const float* in, float* out, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const float* x = in + static_cast<std::int64_t>(r) * cols;
        float* y = out + static_cast<std::int64_t>(r) * cols;
        float m = x[0];
        for (int c = 1; c < cols; ++c) m = std::max(m, x[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - m);
            sum += y[c];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int c = 0; c < cols; ++c) y[c] *= inv;
    }
}

}  // namespace

Tensor Network::forward(const Tensor& batch, Mode mode, bool record) {
    if (batch.rank() < 1) throw std::runtime_error("forward: batch must have a leading batch dimension");
    const std::vector<int> feature_shape(batch.shape().begin() + 1, batch.shape().end());
    if (feature_shape != input_shape_) {
        throw std::runtime_error("forward: input feature shape " + shape_to_string(feature_shape) +
                                 " does not match network input " + shape_to_string(input_shape_));
    }
    const int n = batch.dim(0);
    Tensor x = batch;
    size_t index = 0;
    for (detail::Layer& layer : layers_) {
        switch (layer.index()) {
            case 0: {  // dense
                auto& l = std::get<detail::DenseLayer>(layer);
                Tensor y({n, l.spec.units});
                MapConstMat xm(x.data(), n, l.in_features);
                MapConstMat wm(l.w.data(), l.in_features, l.spec.units);
                MapMat ym(y.data(), n, l.spec.units);
                ym.noalias() = xm * wm;
                ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(l.b.data(), l.spec.units);
                if (record) l.cached_in = std::move(x);
                x = std::move(y);
                check_finite(x, index, "dense");
                break;
            }
            case 1: {  // conv2d
                auto& l = std::get<detail::Conv2dLayer>(layer);
                const int k = l.spec.kernel;
                const int kkc = k * k * l.in_c;
                const std::int64_t in_sz = static_cast<std::int64_t>(l.in_h) * l.in_w * l.in_c;
                const std::int64_t out_px = static_cast<std::int64_t>(l.out_h) * l.out_w;
                Tensor y({n, l.out_h, l.out_w, l.spec.out_channels});
                std::vector<float> col(static_cast<size_t>(out_px) * kkc);
                MapConstMat wm(l.w.data(), kkc, l.spec.out_channels);
                for (int i = 0; i < n; ++i) {
                    im2col(x.data() + i * in_sz, l.in_h, l.in_w, l.in_c, k, l.spec.stride, l.pad, l.out_h,
                           l.out_w, col.data());
                    MapConstMat cm(col.data(), out_px, kkc);
                    MapMat ym(y.data() + i * out_px * l.spec.out_channels, out_px, l.spec.out_channels);
                    ym.noalias() = cm * wm;
                    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(l.b.data(), l.spec.out_channels);
                }
                if (record) l.cached_in = std::move(x);
                x = std::move(y);
                check_finite(x, index, "conv2d");
                break;
            }
            case 2: {  // maxpool
                auto& l = std::get<detail::MaxPoolLayer>(layer);
                const int p = l.spec.pool;
                const std::int64_t in_sz = static_cast<std::int64_t>(l.in_h) * l.in_w * l.in_c;
                const std::int64_t out_sz = static_cast<std::int64_t>(l.out_h) * l.out_w * l.in_c;
                Tensor y({n, l.out_h, l.out_w, l.in_c});
                if (record) l.argmax.assign(static_cast<size_t>(n) * out_sz, 0);
                for (int i = 0; i < n; ++i) {
                    const float* in = x.data() + i * in_sz;
                    float* out = y.data() + i * out_sz;
                    for (int oy = 0; oy < l.out_h; ++oy) {
                        for (int ox = 0; ox < l.out_w; ++ox) {
                            for (int c = 0; c < l.in_c; ++c) {
                                float best = -std::numeric_limits<float>::infinity();
                                std::int64_t best_idx = 0;
                                for (int py = 0; py < p; ++py) {
                                    for (int px = 0; px < p; ++px) {
                                        const std::int64_t idx =
                                            (static_cast<std::int64_t>(oy * p + py) * l.in_w + (ox * p + px)) *
                                                l.in_c +
                                            c;
                                        if (in[idx] > best) {
                                            best = in[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                const std::int64_t o =
                                    (static_cast<std::int64_t>(oy) * l.out_w + ox) * l.in_c + c;
                                out[o] = best;
                                if (record) l.argmax[static_cast<size_t>(i * out_sz + o)] = i * in_sz + best_idx;
                            }
                        }
                    }
                }
                x = std::move(y);
                break;
            }
            case 3: {  // flatten
                auto& l = std::get<detail::FlattenLayer>(layer);
                x = x.reshaped({n, static_cast<int>(shape_numel(l.in_shape))});
                break;
            }
            case 4: {  // dropout
                auto& l = std::get<detail::DropoutLayer>(layer);
                if (mode == Mode::train && l.spec.rate > 0.0f) {
                    const float keep = 1.0f - l.spec.rate;
                    const float scale = 1.0f / keep;
                    Tensor mask(x.shape());
                    for (std::int64_t i = 0; i < x.size(); ++i) {
                        mask[i] = rng_.uniform() < keep ? scale : 0.0f;
                        x[i] *= mask[i];
                    }
                    if (record) l.mask = std::move(mask);
                } else if (record) {
                    l.mask = Tensor();  // identity
                }
                break;
            }
            case 5: {  // batchnorm
                auto& l = std::get<detail::BatchNormLayer>(layer);
                const int d = l.features;
                if (mode == Mode::train) {
                    std::vector<double> mean(d, 0.0), var(d, 0.0);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < d; ++j) mean[j] += x.at(i, j);
                    for (int j = 0; j < d; ++j) mean[j] /= n;
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < d; ++j) {
                            const double dv = x.at(i, j) - mean[j];
                            var[j] += dv * dv;
                        }
                    for (int j = 0; j < d; ++j) var[j] /= n;
                    Tensor xhat({n, d});
                    Tensor invstd({d});
                    for (int j = 0; j < d; ++j)
                        invstd[j] = static_cast<float>(1.0 / std::sqrt(var[j] + kBatchNormEps));
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < d; ++j) {
                            xhat.at(i, j) = (x.at(i, j) - static_cast<float>(mean[j])) * invstd[j];
                            x.at(i, j) = l.gamma[j] * xhat.at(i, j) + l.beta[j];
                        }
                    const float m = l.spec.momentum;
                    for (int j = 0; j < d; ++j) {
                        l.run_mean[j] = m * l.run_mean[j] + (1.0f - m) * static_cast<float>(mean[j]);
                        l.run_var[j] = m * l.run_var[j] + (1.0f - m) * static_cast<float>(var[j]);
                    }
                    if (record) {
                        l.cached_xhat = std::move(xhat);
                        l.batch_invstd = std::move(invstd);
                        l.cached_train_stats = true;
                    }
                } else {
                    Tensor invstd({d});
                    for (int j = 0; j < d; ++j)
                        invstd[j] = 1.0f / std::sqrt(l.run_var[j] + kBatchNormEps);
                    Tensor xhat = record ? Tensor({n, d}) : Tensor();
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < d; ++j) {
                            const float xh = (x.at(i, j) - l.run_mean[j]) * invstd[j];
                            if (record) xhat.at(i, j) = xh;
                            x.at(i, j) = l.gamma[j] * xh + l.beta[j];
                        }
                    if (record) {
                        l.cached_xhat = std::move(xhat);
                        l.batch_invstd = std::move(invstd);
                        l.cached_train_stats = false;
                    }
                }
                check_finite(x, index, "batchnorm");
                break;
            }
            case 6: {  // activation
                auto& l = std::get<detail::ActivationLayer>(layer);
                switch (l.spec.act) {
                    case Activation::relu:
                        for (std::int64_t i = 0; i < x.size(); ++i) x[i] = x[i] > 0.0f ? x[i] : 0.0f;
                        break;
                    case Activation::leakyrelu: {
                        const float a = l.spec.alpha;
                        for (std::int64_t i = 0; i < x.size(); ++i) x[i] = x[i] > 0.0f ? x[i] : a * x[i];
                        break;
                    }
                    case Activation::tanh:
                        for (std::int64_t i = 0; i < x.size(); ++i) x[i] = std::tanh(x[i]);
                        break;
                    case Activation::sigmoid:
                        for (std::int64_t i = 0; i < x.size(); ++i) x[i] = 1.0f / (1.0f + std::exp(-x[i]));
                        break;
                    case Activation::softmax: {
                        const int cols = x.dim(x.rank() - 1);
                        apply_softmax_rows(x.data(), x.data(), static_cast<int>(x.size() / cols), cols);
                        break;
                    }
                }
                if (record) l.cached_out = x;
                check_finite(x, index, "activation");
                break;
            }
        }
        ++index;
    }
    recorded_ = record;
    return x;
}

// ---------------------------------------------------------------------------
// backward

Tensor Network::backward(const Tensor& output_grad) {
    if (!recorded_) throw std::runtime_error("backward called without a recorded forward pass");
    Tensor g = output_grad;
    const int n = g.dim(0);
    for (size_t li = layers_.size(); li-- > 0;) {
        detail::Layer& layer = layers_[li];
        switch (layer.index()) {
            case 0: {  // dense
                auto& l = std::get<detail::DenseLayer>(layer);
                MapConstMat gy(g.data(), n, l.spec.units);
                MapConstMat xin(l.cached_in.data(), n, l.in_features);
                if (trainable_) {
                    MapMat gw(l.gw.data(), l.in_features, l.spec.units);
                    gw.noalias() += xin.transpose() * gy;
                    Eigen::Map<Eigen::RowVectorXf>(l.gb.data(), l.spec.units) += gy.colwise().sum();
                }
                Tensor gx({n, l.in_features});
                MapMat gxm(gx.data(), n, l.in_features);
                MapConstMat wm(l.w.data(), l.in_features, l.spec.units);
                gxm.noalias() = gy * wm.transpose();
                g = std::move(gx);
                break;
            }
            case 1: {  // conv2d
                auto& l = std::get<detail::Conv2dLayer>(layer);
                const int k = l.spec.kernel;
                const int kkc = k * k * l.in_c;
                const int oc = l.spec.out_channels;
                const std::int64_t in_sz = static_cast<std::int64_t>(l.in_h) * l.in_w * l.in_c;
                const std::int64_t out_px = static_cast<std::int64_t>(l.out_h) * l.out_w;
                Tensor gx({n, l.in_h, l.in_w, l.in_c});
                std::vector<float> col(static_cast<size_t>(out_px) * kkc);
                std::vector<float> gcol(static_cast<size_t>(out_px) * kkc);
                MapConstMat wm(l.w.data(), kkc, oc);
                MapMat gw(l.gw.data(), kkc, oc);
                Eigen::Map<Eigen::RowVectorXf> gb(l.gb.data(), oc);
                for (int i = 0; i < n; ++i) {
                    MapConstMat gy(g.data() + i * out_px * oc, out_px, oc);
                    if (trainable_) {
                        im2col(l.cached_in.data() + i * in_sz, l.in_h, l.in_w, l.in_c, k, l.spec.stride, l.pad,
                               l.out_h, l.out_w, col.data());
                        MapConstMat cm(col.data(), out_px, kkc);
                        gw.noalias() += cm.transpose() * gy;
                        gb += gy.colwise().sum();
                    }
                    MapMat gc(gcol.data(), out_px, kkc);
                    gc.noalias() = gy * wm.transpose();
                    col2im(gcol.data(), l.in_h, l.in_w, l.in_c, k, l.spec.stride, l.pad, l.out_h, l.out_w,
                           gx.data() + i * in_sz);
                }
                g = std::move(gx);
                break;
            }
            case 2: {  // maxpool
                auto& l = std::get<detail::MaxPoolLayer>(layer);
                Tensor gx({n, l.in_h, l.in_w, l.in_c});
                for (size_t i = 0; i < l.argmax.size(); ++i) {
                    gx[l.argmax[i]] += g[static_cast<std::int64_t>(i)];
                }
                g = std::move(gx);
                break;
            }
            case 3: {  // flatten
                auto& l = std::get<detail::FlattenLayer>(layer);
                std::vector<int> shape = l.in_shape;
                shape.insert(shape.begin(), n);
                g = g.reshaped(std::move(shape));
                break;
            }
            case 4: {  // dropout
                auto& l = std::get<detail::DropoutLayer>(layer);
                if (!l.mask.empty()) {
                    for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= l.mask[i];
                }
                break;
            }
            case 5: {  // batchnorm
                auto& l = std::get<detail::BatchNormLayer>(layer);
                const int d = l.features;
                if (l.cached_train_stats) {
                    // train mode: batch statistics participate in the gradient
                    const Tensor& xh = l.cached_xhat;
                    std::vector<double> sum_gy(d, 0.0), sum_gy_xh(d, 0.0);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < d; ++j) {
                            sum_gy[j] += g.at(i, j);
                            sum_gy_xh[j] += static_cast<double>(g.at(i, j)) * xh.at(i, j);
                        }
                    if (trainable_) {
                        for (int j = 0; j < d; ++j) {
                            l.ggamma[j] += static_cast<float>(sum_gy_xh[j]);
                            l.gbeta[j] += static_cast<float>(sum_gy[j]);
                        }
                    }
                    const float inv_n = 1.0f / static_cast<float>(n);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < d; ++j) {
                            const float scale = l.gamma[j] * l.batch_invstd[j] * inv_n;
                            g.at(i, j) = scale * (n * g.at(i, j) - static_cast<float>(sum_gy[j]) -
                                                  xh.at(i, j) * static_cast<float>(sum_gy_xh[j]));
                        }
                } else {
                    // infer mode: affine in x through the running statistics
                    if (trainable_) {
                        const Tensor& xh = l.cached_xhat;
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < d; ++j) {
                                l.ggamma[j] += g.at(i, j) * xh.at(i, j);
                                l.gbeta[j] += g.at(i, j);
                            }
                    }
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < d; ++j) g.at(i, j) *= l.gamma[j] * l.batch_invstd[j];
                }
                break;
            }
            case 6: {  // activation
                auto& l = std::get<detail::ActivationLayer>(layer);
                const Tensor& out = l.cached_out;
                switch (l.spec.act) {
                    case Activation::relu:
                        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = out[i] > 0.0f ? g[i] : 0.0f;
                        break;
                    case Activation::leakyrelu: {
                        const float a = l.spec.alpha;
                        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = out[i] > 0.0f ? g[i] : a * g[i];
                        break;
                    }
                    case Activation::tanh:
                        for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= 1.0f - out[i] * out[i];
                        break;
                    case Activation::sigmoid:
                        for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (1.0f - out[i]);
                        break;
                    case Activation::softmax: {
                        const int cols = g.dim(g.rank() - 1);
                        const int rows = static_cast<int>(g.size() / cols);
                        for (int r = 0; r < rows; ++r) {
                            float* gr = g.data() + static_cast<std::int64_t>(r) * cols;
                            const float* yr = out.data() + static_cast<std::int64_t>(r) * cols;
                            double dot = 0.0;
                            for (int c = 0; c < cols; ++c) dot += static_cast<double>(gr[c]) * yr[c];
                            for (int c = 0; c < cols; ++c)
                                gr[c] = yr[c] * (gr[c] - static_cast<float>(dot));
                        }
                        break;
                    }
                }
                break;
            }
        }
    }
    return g;
}

std::vector<Network::ParamRef> Network::parameters() {
    std::vector<ParamRef> out;
    if (!trainable_) return out;
    for (size_t i = 0; i < layers_.size(); ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        if (auto* d = std::get_if<detail::DenseLayer>(&layers_[i])) {
            out.push_back({prefix + "w", &d->w, &d->gw});
            out.push_back({prefix + "b", &d->b, &d->gb});
        } else if (auto* c = std::get_if<detail::Conv2dLayer>(&layers_[i])) {
            out.push_back({prefix + "w", &c->w, &c->gw});
            out.push_back({prefix + "b", &c->b, &c->gb});
        } else if (auto* bn = std::get_if<detail::BatchNormLayer>(&layers_[i])) {
            out.push_back({prefix + "gamma", &bn->gamma, &bn->ggamma});
            out.push_back({prefix + "beta", &bn->beta, &bn->gbeta});
        }
    }
    return out;
}

std::vector<Network::ParamRef> Network::state() {
    std::vector<ParamRef> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        if (auto* d = std::get_if<detail::DenseLayer>(&layers_[i])) {
            out.push_back({prefix + "w", &d->w, &d->gw});
            out.push_back({prefix + "b", &d->b, &d->gb});
        } else if (auto* c = std::get_if<detail::Conv2dLayer>(&layers_[i])) {
            out.push_back({prefix + "w", &c->w, &c->gw});
            out.push_back({prefix + "b", &c->b, &c->gb});
        } else if (auto* bn = std::get_if<detail::BatchNormLayer>(&layers_[i])) {
            out.push_back({prefix + "gamma", &bn->gamma, &bn->ggamma});
            out.push_back({prefix + "beta", &bn->beta, &bn->gbeta});
            out.push_back({prefix + "run_mean", &bn->run_mean, nullptr});
            out.push_back({prefix + "run_var", &bn->run_var, nullptr});
        }
    }
    return out;
}

void Network::zero_grads() {
    for (detail::Layer& layer : layers_) {
        if (auto* d = std::get_if<detail::DenseLayer>(&layer)) {
            d->gw.fill(0.0f);
            d->gb.fill(0.0f);
        } else if (auto* c = std::get_if<detail::Conv2dLayer>(&layer)) {
            c->gw.fill(0.0f);
            c->gb.fill(0.0f);
        } else if (auto* bn = std::get_if<detail::BatchNormLayer>(&layer)) {
            bn->ggamma.fill(0.0f);
            bn->gbeta.fill(0.0f);
        }
    }
}

std::int64_t Network::parameter_count() {
    std::int64_t n = 0;
    for (const auto& p : state())
        if (p.grad) n += p.value->size();
    return n;
}

}  // namespace sfelab
