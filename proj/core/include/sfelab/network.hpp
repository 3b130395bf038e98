// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "sfelab/rng.hpp"
#include "sfelab/tensor.hpp"

namespace sfelab {

enum class Mode { train, infer };

enum class Activation { relu, leakyrelu, tanh, sigmoid, softmax };

enum class Padding { valid, same };

const char* activation_name(Activation a);

/// Declarative description of one layer. Networks are built from ordered
/// LayerSpec lists; shapes are resolved at build time.
struct LayerSpec {
    enum class Kind { dense, conv2d, maxpool, flatten, dropout, batchnorm, activation };

    Kind kind = Kind::dense;
    int units = 0;          // dense
    int out_channels = 0;   // conv2d
    int kernel = 0;         // conv2d, square
    int stride = 1;         // conv2d
    Padding padding = Padding::valid;
    int pool = 2;           // maxpool window (stride equals window)
    float rate = 0.0f;      // dropout, in [0,1)
    float momentum = 0.0f;  // batchnorm, in (0,1)
    Activation act = Activation::relu;
    float alpha = 0.0f;     // leakyrelu slope, > 0

    static LayerSpec dense(int units);
    static LayerSpec conv2d(int out_channels, int kernel, int stride = 1, Padding padding = Padding::valid);
    static LayerSpec maxpool(int window = 2);
    static LayerSpec flatten();
    static LayerSpec dropout(float rate);
    static LayerSpec batchnorm(float momentum);
    static LayerSpec activation(Activation a, float alpha = 0.2f);

    void validate() const;
    const char* kind_name() const;
};

namespace detail {

struct DenseLayer {
    LayerSpec spec;
    int in_features = 0;
    Tensor w, b;        // [in, units], [units]
    Tensor gw, gb;
    Tensor cached_in;   // [N, in]
};

struct Conv2dLayer {
    LayerSpec spec;
    int in_h = 0, in_w = 0, in_c = 0;
    int out_h = 0, out_w = 0;
    int pad = 0;        // symmetric, resolved from padding mode
    Tensor w, b;        // [kernel*kernel*in_c, out_channels], [out_channels]
    Tensor gw, gb;
    Tensor cached_in;   // [N, in_h, in_w, in_c]
};

struct MaxPoolLayer {
    LayerSpec spec;
    int in_h = 0, in_w = 0, in_c = 0;
    int out_h = 0, out_w = 0;
    std::vector<int> in_shape;
    std::vector<std::int64_t> argmax;  // flat input index per output element
};

struct FlattenLayer {
    LayerSpec spec;
    std::vector<int> in_shape;  // without batch dim
};

struct DropoutLayer {
    LayerSpec spec;
    Tensor mask;  // 0 or 1/(1-rate), shaped like the input
};

struct BatchNormLayer {
    LayerSpec spec;
    int features = 0;
    Tensor gamma, beta;
    Tensor run_mean, run_var;
    Tensor ggamma, gbeta;
    // recorded-forward caches
    Tensor cached_xhat;
    Tensor batch_invstd;  // [features]
    bool cached_train_stats = false;
};

struct ActivationLayer {
    LayerSpec spec;
    Tensor cached_out;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, MaxPoolLayer, FlattenLayer, DropoutLayer,
                           BatchNormLayer, ActivationLayer>;

}  // namespace detail

/// Ordered layer stack with explicit forward/backward. A forward pass with
/// record=true keeps per-layer state; backward consumes it and fills the
/// parameter gradients. Infer-mode forward with record=false mutates
/// nothing and is safe to share across threads.
class Network {
public:
    Network() = default;
    /// input_shape excludes the batch dimension, e.g. {28, 28, 1} or {128}.
    Network(std::vector<LayerSpec> specs, std::vector<int> input_shape, std::uint64_t init_seed);

    Tensor forward(const Tensor& batch, Mode mode, bool record = false);
    /// Returns the gradient w.r.t. the network input; parameter gradients
    /// are accumulated into the layers (see parameters()). Requires a
    /// recorded forward.
    Tensor backward(const Tensor& output_grad);

    struct ParamRef {
        std::string name;
        Tensor* value;
        Tensor* grad;  // null for running statistics
    };
    /// Trainable parameters, empty when the network is frozen.
    std::vector<ParamRef> parameters();
    /// Parameters plus running statistics, for checkpointing.
    std::vector<ParamRef> state();
    void zero_grads();

    bool trainable() const { return trainable_; }
    void set_trainable(bool t) { trainable_ = t; }

    /// Reseeds the dropout stream (next forward draws from this seed).
    void set_rng_seed(std::uint64_t seed) { rng_ = Rng(seed); }

    const std::vector<int>& input_shape() const { return input_shape_; }
    const std::vector<int>& output_shape() const { return output_shape_; }
    size_t layer_count() const { return layers_.size(); }
    const std::vector<detail::Layer>& layers() const { return layers_; }
    const LayerSpec& layer_spec(size_t i) const;
    /// Output widths per layer, for structural comparisons.
    std::vector<std::vector<int>> layer_output_shapes() const;

    std::int64_t parameter_count();

private:
    std::vector<detail::Layer> layers_;
    std::vector<int> input_shape_;
    std::vector<int> output_shape_;
    std::vector<std::vector<int>> shapes_;  // per-layer output shape, sans batch
    bool trainable_ = true;
    bool recorded_ = false;
    Rng rng_{0};
};

/// Appends the dense-block idiom used throughout the model stacks:
/// dense -> activation (and optional batchnorm in between callers add
/// explicitly).
void push_dense(std::vector<LayerSpec>& specs, int units, Activation act, float alpha = 0.2f);

}  // namespace sfelab
