// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfelab/tensor.hpp"

namespace sfelab {

/// Labeled images, pixels in [0,1], shape [N, H, W, C].
struct ImageSet {
    Tensor images;
    std::vector<int> labels;

    int count() const { return images.empty() ? 0 : images.dim(0); }
    /// Copies rows [begin, begin+count).
    ImageSet subset(int begin, int count) const;
    /// Copies the given rows in order.
    ImageSet select(const std::vector<int>& indices) const;
    void validate() const;
};

/// Aligned benign/adversarial example pairs with attack provenance.
/// Row i of `adversarial` was produced from row i of `benign`; the success
/// flag records whether the targeted classifier misclassifies it.
struct PairDataset {
    ImageSet benign;
    Tensor adversarial;
    std::string attack_name;
    std::string attack_params;
    std::vector<std::uint8_t> success;

    int count() const { return benign.count(); }
    int success_count() const;
    /// Keeps only the success-flagged pairs.
    PairDataset successful() const;
    PairDataset select(const std::vector<int>& indices) const;
    void validate() const;
};

/// Deterministic shuffled split preserving pair alignment.
/// ratio is the train fraction, in (0,1).
struct SplitPairs {
    PairDataset train;
    PairDataset test;
};
SplitPairs split_detection_set(const PairDataset& pairs, double ratio, std::uint64_t seed);

/// Pair files reuse the SFEL checkpoint container with reserved header
/// fields for the attack metadata.
void save_pairs(const PairDataset& pairs, const std::string& path);
PairDataset load_pairs(const std::string& path);

}  // namespace sfelab
