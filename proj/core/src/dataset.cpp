// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/dataset.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "sfelab/checkpoint.hpp"
#include "sfelab/rng.hpp"

namespace sfelab {

namespace {

Tensor select_rows(const Tensor& t, const std::vector<int>& indices) {
    if (t.rank() < 1) throw std::invalid_argument("select_rows: rank-0 tensor");
    std::vector<int> shape = t.shape();
    const std::int64_t row = t.size() / std::max(1, shape[0]);
    shape[0] = static_cast<int>(indices.size());
    Tensor out(shape);
    for (size_t i = 0; i < indices.size(); ++i) {
        std::memcpy(out.data() + static_cast<std::int64_t>(i) * row,
                    t.data() + static_cast<std::int64_t>(indices[i]) * row,
                    static_cast<size_t>(row) * sizeof(float));
    }
    return out;
}

}  // namespace

void ImageSet::validate() const {
    if (images.rank() != 4) throw std::invalid_argument("ImageSet: images must be [N, H, W, C]");
    if (images.dim(0) != static_cast<int>(labels.size()))
        throw std::invalid_argument("ImageSet: image/label count mismatch");
    for (std::int64_t i = 0; i < images.size(); ++i) {
        const float v = images[i];
        if (!(v >= 0.0f && v <= 1.0f))
            throw std::invalid_argument("ImageSet: pixel value " + std::to_string(v) + " outside [0,1]");
    }
    for (int l : labels)
        if (l < 0 || l > 9) throw std::invalid_argument("ImageSet: label " + std::to_string(l) + " outside [0,9]");
}

ImageSet ImageSet::subset(int begin, int n) const {
    if (begin < 0 || begin + n > count()) throw std::out_of_range("ImageSet::subset: range out of bounds");
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), begin);
    return select(idx);
}

ImageSet ImageSet::select(const std::vector<int>& indices) const {
    ImageSet out;
    out.images = select_rows(images, indices);
    out.labels.reserve(indices.size());
    for (int i : indices) out.labels.push_back(labels[static_cast<size_t>(i)]);
    return out;
}

int PairDataset::success_count() const {
    int n = 0;
    for (std::uint8_t s : success) n += s ? 1 : 0;
    return n;
}

PairDataset PairDataset::successful() const {
    std::vector<int> idx;
    for (size_t i = 0; i < success.size(); ++i)
        if (success[i]) idx.push_back(static_cast<int>(i));
    return select(idx);
}

PairDataset PairDataset::select(const std::vector<int>& indices) const {
    PairDataset out;
    out.benign = benign.select(indices);
    out.adversarial = select_rows(adversarial, indices);
    out.attack_name = attack_name;
    out.attack_params = attack_params;
    out.success.reserve(indices.size());
    for (int i : indices) out.success.push_back(success[static_cast<size_t>(i)]);
    return out;
}

void PairDataset::validate() const {
    benign.validate();
    if (!adversarial.same_shape(benign.images))
        throw std::invalid_argument("PairDataset: benign/adversarial shape mismatch");
    if (success.size() != static_cast<size_t>(count()))
        throw std::invalid_argument("PairDataset: success flag count mismatch");
    for (std::int64_t i = 0; i < adversarial.size(); ++i) {
        const float v = adversarial[i];
        if (!(v >= 0.0f && v <= 1.0f))
            throw std::invalid_argument("PairDataset: adversarial pixel outside [0,1]");
    }
}

SplitPairs split_detection_set(const PairDataset& pairs, double ratio, std::uint64_t seed) {
    if (pairs.count() == 0) throw std::invalid_argument("split_detection_set: empty dataset");
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split_detection_set: ratio must be in (0,1)");
    std::vector<int> idx(static_cast<size_t>(pairs.count()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    const int n_train = static_cast<int>(std::llround(ratio * pairs.count()));
    SplitPairs out;
    out.train = pairs.select({idx.begin(), idx.begin() + n_train});
    out.test = pairs.select({idx.begin() + n_train, idx.end()});
    return out;
}

void save_pairs(const PairDataset& pairs, const std::string& path) {
    Checkpoint ckpt;
    ckpt.set_meta("container", "pairs");
    ckpt.set_meta("attack_name", pairs.attack_name);
    ckpt.set_meta("attack_params", pairs.attack_params);
    ckpt.add("benign_images", pairs.benign.images);
    Tensor labels({pairs.count()});
    for (int i = 0; i < pairs.count(); ++i) labels[i] = static_cast<float>(pairs.benign.labels[static_cast<size_t>(i)]);
    ckpt.add("benign_labels", std::move(labels));
    ckpt.add("adversarial_images", pairs.adversarial);
    Tensor succ({pairs.count()});
    for (int i = 0; i < pairs.count(); ++i) succ[i] = pairs.success[static_cast<size_t>(i)] ? 1.0f : 0.0f;
    ckpt.add("success", std::move(succ));
    ckpt.save(path);
}

PairDataset load_pairs(const std::string& path) {
    const Checkpoint ckpt = Checkpoint::load(path);
    if (ckpt.meta_or("container", "") != "pairs")
        throw std::runtime_error("load_pairs: '" + path + "' is not a pairs container");
    PairDataset pairs;
    pairs.attack_name = ckpt.meta_or("attack_name", "");
    pairs.attack_params = ckpt.meta_or("attack_params", "");
    pairs.benign.images = ckpt.require("benign_images");
    const Tensor& labels = ckpt.require("benign_labels");
    pairs.benign.labels.resize(static_cast<size_t>(labels.size()));
    for (std::int64_t i = 0; i < labels.size(); ++i)
        pairs.benign.labels[static_cast<size_t>(i)] = static_cast<int>(labels[i]);
    pairs.adversarial = ckpt.require("adversarial_images");
    const Tensor& succ = ckpt.require("success");
    pairs.success.resize(static_cast<size_t>(succ.size()));
    for (std::int64_t i = 0; i < succ.size(); ++i) pairs.success[static_cast<size_t>(i)] = succ[i] != 0.0f;
    pairs.validate();
    return pairs;
}

}  // namespace sfelab
