// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfelab/classifier.hpp"
#include "sfelab/dataset.hpp"
#include "sfelab/network.hpp"

namespace sfelab {

/// Aligned benign/adversarial feature rows plus their reconstruction
/// targets: for a benign row both targets are its own feature; for an
/// adversarial row the salient target is the benign partner's feature and
/// the trivial target is its own.
struct FeaturePairSet {
    Tensor benign_features;       // [N, d] h(x)
    Tensor adversarial_features;  // [N, d] h(x*)

    int count() const { return benign_features.empty() ? 0 : benign_features.dim(0); }
    int dim() const { return benign_features.empty() ? 0 : benign_features.dim(1); }
};

/// Extracts h(x)/h(x*) for the success-flagged pairs only.
FeaturePairSet extract_feature_pairs(Classifier& clf, const PairDataset& pairs, int batch = 256);

/// Per-dimension affine map onto [-1,1] fitted on the training features,
/// so tanh generator outputs can reproduce them. Out-of-range inputs clamp.
struct FeatureNorm {
    Tensor lo, hi;  // [d]

    static FeatureNorm fit(std::span<const Tensor* const> feature_sets);
    Tensor normalize(const Tensor& features) const;
    Tensor denormalize(const Tensor& normalized) const;
};

/// Discriminator output head: the MNIST table variant emits tanh mapped to
/// (t+1)/2; the sigmoid variant emits the probability directly.
enum class DiscOutput { tanh_unit, sigmoid };

struct SfeTrainLogEntry {
    int iteration;
    double loss_pg, loss_ng, loss_d;
};

/// Coupled-GAN salient feature extractor: positive generator, negative
/// generator, one shared discriminator. The generators are structurally
/// identical; the discriminator is a single parameter set used by both
/// branches.
class SfeModel {
public:
    SfeModel() = default;
    SfeModel(Network pg, Network ng, Network d, int feature_dim, DiscOutput disc_out);

    Network& pg() { return pg_; }
    Network& ng() { return ng_; }
    Network& d() { return d_; }
    FeatureNorm& norm() { return norm_; }
    const FeatureNorm& norm() const { return norm_; }
    int feature_dim() const { return feature_dim_; }
    DiscOutput disc_output() const { return disc_out_; }

    /// Raw discriminator output mapped to a probability in (0,1).
    Tensor discriminator_prob(const Tensor& raw) const;

    int k_d = 5;
    int minibatch = 64;

private:
    Network pg_, ng_, d_;
    FeatureNorm norm_;
    int feature_dim_ = 0;
    DiscOutput disc_out_ = DiscOutput::tanh_unit;
};

/// Generators: Dense256/512/1024 with LeakyReLU(0.2) + BatchNorm(0.8),
/// tanh output of width d_F. Discriminator (MNIST variant): Dense512/256
/// with LeakyReLU(0.2), Dense1 tanh.
SfeModel build_sfe(int d_F, std::uint64_t seed, DiscOutput disc_out = DiscOutput::tanh_unit);

/// Eq-style loss evaluations on normalized features, infer mode:
///   loss_pg   = MSE(PG(x_F), x_SF) + CE(D(PG(x_F)), 1)
///   loss_d_pg = CE(D(PG(x_F)), 0) + CE(D(x_SF), 1)
/// and the NG twins with x_TF.
float loss_pg(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xsf_norm);
float loss_ng(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xtf_norm);
float loss_d_pg(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xsf_norm);
float loss_d_ng(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xtf_norm);

/// Fits the normalization on the feature set and runs the k_D
/// discriminator pre-training steps with frozen generators.
void pretrain_discriminator(SfeModel& sfe, const FeaturePairSet& feats, int k_d, int m_b,
                            std::uint64_t seed);

/// Alternating updates, one PG, one NG, then one shared-D step per
/// iteration. Minibatches hold both rows of every sampled pair. Aborts on
/// a non-finite loss, naming the iteration.
std::vector<SfeTrainLogEntry> train_sfe(SfeModel& sfe, const FeaturePairSet& feats, int iterations, int m_b,
                                        std::uint64_t seed);

/// Salient / trivial reconstructions in raw feature space.
Tensor generate_sf(SfeModel& sfe, const Tensor& features);
Tensor generate_tf(SfeModel& sfe, const Tensor& features);
/// Normalized-space reconstructions (the detector's input space).
Tensor generate_sf_normalized(SfeModel& sfe, const Tensor& features);
Tensor generate_tf_normalized(SfeModel& sfe, const Tensor& features);

/// Analytic optimal discriminator on a finite support:
/// D*(x) = p_data(x) / (p_data(x) + p_g(x)); points where both densities
/// vanish are excluded.
std::vector<std::optional<double>> optimal_d_oracle(std::span<const double> p_data,
                                                    std::span<const double> p_g);

void save_sfe(SfeModel& sfe, const std::string& path);
SfeModel load_sfe(const std::string& path);

}  // namespace sfelab
