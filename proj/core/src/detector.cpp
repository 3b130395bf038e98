// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/detector.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sfelab/adam.hpp"
#include "sfelab/checkpoint.hpp"
#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"

namespace sfelab {

AdvDetector::AdvDetector(Network net, int feature_dim, float threshold)
    : net_(std::move(net)), feature_dim_(feature_dim), threshold_(threshold) {}

AdvDetector build_detector(int d_F, std::uint64_t seed) {
    std::vector<LayerSpec> s;
    const int widths[] = {512, 256, 128, 64};
    for (int i = 0; i < 4; ++i) {
        push_dense(s, widths[i], Activation::relu);
        s.push_back(LayerSpec::batchnorm(0.8f));
        s.push_back(LayerSpec::dropout(i == 3 ? 0.125f : 0.25f));
    }
    push_dense(s, 1, Activation::sigmoid);
    return AdvDetector(Network(std::move(s), {2 * d_F}, seed), d_F, 0.5f);
}

Tensor build_detector_input(SfeModel& sfe, const Tensor& features) {
    const int d = sfe.feature_dim();
    if (features.rank() != 2 || features.dim(1) != d)
        throw std::invalid_argument("build_detector_input: expected [N, " + std::to_string(d) + "], got " +
                                    features.shape_str());
    const Tensor sf = generate_sf_normalized(sfe, features);
    const Tensor tf = generate_tf_normalized(sfe, features);
    const int n = features.dim(0);
    Tensor out({n, 2 * d});
    for (int i = 0; i < n; ++i) {
        std::copy_n(sf.data() + static_cast<std::int64_t>(i) * d, d,
                    out.data() + static_cast<std::int64_t>(i) * 2 * d);
        std::copy_n(tf.data() + static_cast<std::int64_t>(i) * d, d,
                    out.data() + static_cast<std::int64_t>(i) * 2 * d + d);
    }
    return out;
}

std::vector<DetectorTrainLogEntry> train_advd(AdvDetector& det, SfeModel& sfe, Classifier& clf,
                                              const PairDataset& train_pairs, int epochs, int batch,
                                              std::uint64_t seed) {
    if (train_pairs.count() == 0) throw std::invalid_argument("train_advd: empty training set");

    // one benign and one adversarial row per pair, through the frozen stack
    const Tensor benign_feat = clf.extract_feature(train_pairs.benign.images);
    const Tensor adv_feat = clf.extract_feature(train_pairs.adversarial);
    const Tensor benign_in = build_detector_input(sfe, benign_feat);
    const Tensor adv_in = build_detector_input(sfe, adv_feat);

    const int n_pairs = train_pairs.count();
    const int width = benign_in.dim(1);
    Tensor inputs({2 * n_pairs, width});
    std::vector<int> labels(static_cast<size_t>(2 * n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        std::copy_n(benign_in.data() + static_cast<std::int64_t>(i) * width, width,
                    inputs.data() + static_cast<std::int64_t>(2 * i) * width);
        labels[static_cast<size_t>(2 * i)] = 0;
        std::copy_n(adv_in.data() + static_cast<std::int64_t>(i) * width, width,
                    inputs.data() + static_cast<std::int64_t>(2 * i + 1) * width);
        labels[static_cast<size_t>(2 * i + 1)] = 1;
    }

    AdamState opt(AdamConfig{});
    Rng shuffle_rng(Rng::derive(seed, 1));
    det.net().set_rng_seed(Rng::derive(seed, 2));
    std::vector<int> order(static_cast<size_t>(2 * n_pairs));
    std::iota(order.begin(), order.end(), 0);

    std::vector<DetectorTrainLogEntry> log;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        std::int64_t correct = 0;
        for (int start = 0; start < 2 * n_pairs; start += batch) {
            const int m = std::min(batch, 2 * n_pairs - start);
            Tensor mb({m, width});
            Tensor target({m, 1});
            for (int i = 0; i < m; ++i) {
                const int src = order[static_cast<size_t>(start + i)];
                std::copy_n(inputs.data() + static_cast<std::int64_t>(src) * width, width,
                            mb.data() + static_cast<std::int64_t>(i) * width);
                target[i] = static_cast<float>(labels[static_cast<size_t>(src)]);
            }
            Tensor score = det.net().forward(mb, Mode::train, /*record=*/true);
            double loss = 0.0;
            Tensor g({m, 1});
            const float inv_m = 1.0f / static_cast<float>(m);
            for (int i = 0; i < m; ++i) {
                const int label = target[i] > 0.5f ? 1 : 0;
                loss += bce(score[i], label);
                const float p = std::clamp(score[i], kProbEps, 1.0f - kProbEps);
                g[i] = inv_m * (label == 1 ? -1.0f / p : 1.0f / (1.0f - p));
                correct += (score[i] >= det.threshold()) == (label == 1) ? 1 : 0;
            }
            loss /= m;
            if (!std::isfinite(loss))
                throw std::runtime_error("train_advd: non-finite loss at epoch " + std::to_string(epoch + 1));
            loss_sum += loss;
            ++batches;
            det.net().zero_grads();
            det.net().backward(g);
            auto params = det.net().parameters();
            opt.step(params);
        }
        log.push_back({epoch + 1, loss_sum / std::max(1, batches),
                       static_cast<double>(correct) / (2.0 * n_pairs)});
    }
    return log;
}

DetectionResult detect_features(AdvDetector& det, SfeModel& sfe, const Tensor& features) {
    const Tensor input = build_detector_input(sfe, features);
    const Tensor score = det.net().forward(input, Mode::infer);
    DetectionResult res;
    res.scores.assign(score.data(), score.data() + score.size());
    res.verdicts.resize(res.scores.size());
    for (size_t i = 0; i < res.scores.size(); ++i)
        res.verdicts[i] = res.scores[i] >= det.threshold() ? 1 : 0;
    return res;
}

DetectionResult detect(AdvDetector& det, SfeModel& sfe, Classifier& clf, const Tensor& images) {
    return detect_features(det, sfe, clf.extract_feature(images));
}

void save_detector(AdvDetector& det, const std::string& path) {
    Checkpoint ckpt;
    ckpt.set_meta("container", "advd");
    ckpt.set_meta("feature_dim", std::to_string(det.feature_dim()));
    ckpt.set_meta("threshold", std::to_string(det.threshold()));
    checkpoint_put_network(ckpt, "net", det.net());
    ckpt.save(path);
}

AdvDetector load_detector(const std::string& path) {
    const Checkpoint ckpt = Checkpoint::load(path);
    if (ckpt.meta_or("container", "") != "advd")
        throw std::runtime_error("load_detector: '" + path + "' is not a detector checkpoint");
    const int d_f = std::stoi(ckpt.meta_or("feature_dim", "128"));
    AdvDetector det = build_detector(d_f, 0);
    checkpoint_get_network(ckpt, "net", det.net());
    det.set_threshold(std::stof(ckpt.meta_or("threshold", "0.5")));
    return det;
}

}  // namespace sfelab
