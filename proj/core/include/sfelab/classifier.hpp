// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfelab/dataset.hpp"
#include "sfelab/network.hpp"

namespace sfelab {

/// Where the feature tap sits: the penultimate dense activation (128-d)
/// or the pre-softmax logits (10-d).
enum class FeatureTap { dense128, logits };

struct Prediction {
    std::vector<int> labels;
    Tensor probabilities;  // [N, classes]
};

/// Layered image classifier split at a designated feature tap:
/// predict(x) == head(body(x)) exactly, by construction.
class Classifier {
public:
    Classifier() = default;
    Classifier(Network body, Network head, int tap_dim, std::string name);

    Prediction predict(const Tensor& images);
    Tensor extract_feature(const Tensor& images);
    Prediction classify_from_feature(const Tensor& features);

    /// Forward through body+head with recording, for input gradients.
    Tensor forward_recorded(const Tensor& images, Mode mode);
    /// Backward through head then body; returns the image gradient.
    Tensor backward_to_input(const Tensor& output_grad);

    Network& body() { return body_; }
    Network& head() { return head_; }
    int tap_dim() const { return tap_dim_; }
    const std::string& name() const { return name_; }

private:
    Network body_;
    Network head_;
    int tap_dim_ = 0;
    std::string name_;
};

/// Builds "cnn1" or "cnn2" with the feature tap after the 128-unit dense
/// layer (or at the logits).
Classifier build_cnn(const std::string& spec_name, std::uint64_t seed, FeatureTap tap = FeatureTap::dense128);

struct TrainLogEntry {
    int epoch;
    double mean_loss;
    double train_accuracy;
    double seconds;
};

/// Minimizes categorical cross-entropy with Adam (lr 1e-3). Deterministic
/// under the seed; aborts on a non-finite loss.
std::vector<TrainLogEntry> train_classifier(Classifier& clf, const ImageSet& train, int epochs, int batch,
                                            std::uint64_t seed);

double accuracy(Classifier& clf, const ImageSet& set, int batch = 256);

void save_classifier(Classifier& clf, const std::string& path);
Classifier load_classifier(const std::string& path);

}  // namespace sfelab
