// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfelab/sfe.hpp"

namespace sfelab {

/// Binary detector over concatenated (salient, trivial) reconstructions.
/// Five dense layers; input width 2 * d_F; sigmoid score in (0,1) with
/// 1 = adversarial. It never sees pixels: its only input path runs through
/// the frozen generators on classifier features.
class AdvDetector {
public:
    AdvDetector() = default;
    AdvDetector(Network net, int feature_dim, float threshold);

    Network& net() { return net_; }
    int feature_dim() const { return feature_dim_; }
    float threshold() const { return threshold_; }
    void set_threshold(float t) { threshold_ = t; }

private:
    Network net_;
    int feature_dim_ = 0;
    float threshold_ = 0.5f;
};

/// Dense 512/256/128/64 with ReLU + BatchNorm + Dropout(0.25, final 0.125),
/// then Dense 1 sigmoid.
AdvDetector build_detector(int d_F, std::uint64_t seed);

/// Concat(PG(x_hat), NG(x_hat)) in normalized feature space, order
/// (salient, trivial); width 2 * d_F.
Tensor build_detector_input(SfeModel& sfe, const Tensor& features);

struct DetectorTrainLogEntry {
    int epoch;
    double mean_loss;
    double train_accuracy;
};

/// BCE over both rows of every pair: benign -> 0, adversarial -> 1. The
/// targeted model and both generators stay frozen; label balance is exactly
/// 1:1 by construction.
std::vector<DetectorTrainLogEntry> train_advd(AdvDetector& det, SfeModel& sfe, Classifier& clf,
                                              const PairDataset& train_pairs, int epochs, int batch,
                                              std::uint64_t seed);

struct DetectionResult {
    std::vector<float> scores;           // in (0,1)
    std::vector<std::uint8_t> verdicts;  // 1 = adversarial
};

/// Scores a batch of images: feature extraction, reconstruction, detector,
/// threshold. Deterministic in infer mode.
DetectionResult detect(AdvDetector& det, SfeModel& sfe, Classifier& clf, const Tensor& images);
/// Same, but starting from precomputed features.
DetectionResult detect_features(AdvDetector& det, SfeModel& sfe, const Tensor& features);

void save_detector(AdvDetector& det, const std::string& path);
AdvDetector load_detector(const std::string& path);

}  // namespace sfelab
