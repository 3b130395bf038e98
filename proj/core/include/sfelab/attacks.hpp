// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfelab/classifier.hpp"
#include "sfelab/dataset.hpp"

namespace sfelab {

/// Label/score oracle handed to black-box attacks: prediction only, no
/// gradient path exists through this interface.
class PredictOracle {
public:
    explicit PredictOracle(Classifier& clf) : clf_(&clf) {}
    Prediction predict(const Tensor& images) const { return clf_->predict(images); }
    std::vector<int> labels(const Tensor& images) const { return clf_->predict(images).labels; }

private:
    Classifier* clf_;
};

struct AttackSpec {
    std::string name;        // fgsm | bim | mifgsm | pgd | deepfool | auna | cra | pwa
    float epsilon = 0.0f;    // L-inf budget for the eps-ball family
    float step_size = 0.0f;
    int iterations = 1;
    float decay_factor = 0.0f;  // mi-fgsm momentum
    int max_iter = 100;         // deepfool
    float overshoot = 1e-6f;    // deepfool
    int schedule_steps = 1000;  // cra contrast levels
    std::uint64_t seed = 0;

    /// The per-method defaults for MNIST (the eps-ball attacks at
    /// epsilon 0.3, deepfool overshoot 1e-6/100 iterations, cra 1000
    /// levels).
    static AttackSpec preset(const std::string& name);
    /// One-line "key=value,..." rendering for report metadata.
    std::string params_string() const;
    void validate() const;
};

/// All attack entry points return images clipped to [0,1] with the same
/// shape as the input. Batched variants attack each row independently.

// -- white-box (gradient) attacks -------------------------------------------

Tensor fgsm(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon);
Tensor bim(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon, float step_size,
           int iterations);
Tensor mi_fgsm(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon, float step_size,
               int iterations, float decay_factor);
Tensor pgd(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon, float step_size,
           int iterations, std::uint64_t seed);
/// Multiclass L2 DeepFool; steps across the nearest linearized decision
/// boundary until the prediction leaves y or max_iter is hit. Rows already
/// misclassified come back unchanged after zero iterations.
Tensor deepfool(Classifier& clf, const Tensor& x, const std::vector<int>& y, float overshoot, int max_iter);

// -- black-box (decision) attacks --------------------------------------------

struct BlackBoxResult {
    Tensor images;
    std::vector<std::uint8_t> found;  // per-row: schedule produced a misclassification
};

/// Additive uniform noise with an increasing scale schedule; returns the
/// first misclassified candidate per image.
BlackBoxResult auna(const PredictOracle& oracle, const Tensor& x, const std::vector<int>& y,
                    std::uint64_t seed);
/// Contrast reduction x(c) = (x - 0.5) c + 0.5 for c descending from 1.
BlackBoxResult cra(const PredictOracle& oracle, const Tensor& x, const std::vector<int>& y,
                   int schedule_steps);
/// Pointwise refinement of an adversarial seed (auna) toward the original:
/// per-dimension reset, then per-dimension binary search, repeated until no
/// dimension improves. Output stays misclassified and never gains L2 size.
BlackBoxResult pwa(const PredictOracle& oracle, const Tensor& x, const std::vector<int>& y,
                   std::uint64_t seed);

// -- suite -------------------------------------------------------------------

struct AttackRunStats {
    int attacked = 0;
    int succeeded = 0;
    bool asr_defined = false;  // false when nothing was attacked
    double asr = 0.0;
    double mean_rho_l2 = 0.0;     // mean L2 norm of the perturbation
    double mean_rho_pixel = 0.0;  // mean absolute per-pixel perturbation
};

/// Runs one attack over the correctly-classified rows of a set and packs
/// the results as aligned pairs. ASR and both perturbation readings land
/// in the PairDataset metadata. max_images > 0 caps the attacked subset.
PairDataset run_attack(Classifier& clf, const ImageSet& set, const AttackSpec& spec, int max_images = 0,
                       AttackRunStats* stats_out = nullptr);

}  // namespace sfelab
