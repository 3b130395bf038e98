// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/classifier.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sfelab/adam.hpp"
#include "sfelab/checkpoint.hpp"
#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"

namespace sfelab {

Classifier::Classifier(Network body, Network head, int tap_dim, std::string name)
    : body_(std::move(body)), head_(std::move(head)), tap_dim_(tap_dim), name_(std::move(name)) {}

namespace {

Prediction to_prediction(Tensor probs) {
    Prediction p;
    const int n = probs.dim(0);
    const int k = probs.dim(1);
    p.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (probs.at(i, c) > probs.at(i, best)) best = c;
        p.labels[static_cast<size_t>(i)] = best;
    }
    p.probabilities = std::move(probs);
    return p;
}

}  // namespace

Prediction Classifier::predict(const Tensor& images) {
    Tensor feat = body_.forward(images, Mode::infer);
    return to_prediction(head_.forward(feat, Mode::infer));
}

Tensor Classifier::extract_feature(const Tensor& images) { return body_.forward(images, Mode::infer); }

Prediction Classifier::classify_from_feature(const Tensor& features) {
    if (features.rank() != 2 || features.dim(1) != tap_dim_)
        throw std::invalid_argument("classify_from_feature: expected [N, " + std::to_string(tap_dim_) +
                                    "], got " + features.shape_str());
    return to_prediction(head_.forward(features, Mode::infer));
}

Tensor Classifier::forward_recorded(const Tensor& images, Mode mode) {
    Tensor feat = body_.forward(images, mode, /*record=*/true);
    return head_.forward(feat, mode, /*record=*/true);
}

Tensor Classifier::backward_to_input(const Tensor& output_grad) {
    Tensor g = head_.backward(output_grad);
    return body_.backward(g);
}

Classifier build_cnn(const std::string& spec_name, std::uint64_t seed, FeatureTap tap) {
    std::vector<LayerSpec> body;
    if (spec_name == "cnn1") {
        body.push_back(LayerSpec::conv2d(32, 5));
        body.push_back(LayerSpec::activation(Activation::relu));
        body.push_back(LayerSpec::conv2d(64, 5));
        body.push_back(LayerSpec::activation(Activation::relu));
        body.push_back(LayerSpec::maxpool(2));
        body.push_back(LayerSpec::flatten());
        body.push_back(LayerSpec::dropout(0.5f));
        body.push_back(LayerSpec::dense(128));
    } else if (spec_name == "cnn2") {
        body.push_back(LayerSpec::conv2d(16, 5));
        body.push_back(LayerSpec::activation(Activation::relu));
        body.push_back(LayerSpec::maxpool(2));
        body.push_back(LayerSpec::conv2d(32, 5));
        body.push_back(LayerSpec::activation(Activation::relu));
        body.push_back(LayerSpec::maxpool(2));
        body.push_back(LayerSpec::flatten());
        body.push_back(LayerSpec::dropout(0.25f));
        body.push_back(LayerSpec::dense(128));
    } else {
        throw std::invalid_argument("build_cnn: unknown model '" + spec_name + "' (expected cnn1 or cnn2)");
    }
    std::vector<LayerSpec> head;
    head.push_back(LayerSpec::dropout(0.5f));
    head.push_back(LayerSpec::dense(10));
    head.push_back(LayerSpec::activation(Activation::softmax));

    if (tap == FeatureTap::logits) {
        // move everything up to the logits into the body
        body.push_back(head[0]);
        body.push_back(head[1]);
        head.erase(head.begin(), head.begin() + 2);
    }

    Network body_net(body, {28, 28, 1}, Rng::derive(seed, 1));
    const int tap_dim = body_net.output_shape()[0];
    Network head_net(head, {tap_dim}, Rng::derive(seed, 2));
    return Classifier(std::move(body_net), std::move(head_net), tap_dim, spec_name);
}

std::vector<TrainLogEntry> train_classifier(Classifier& clf, const ImageSet& train, int epochs, int batch,
                                            std::uint64_t seed) {
    if (train.count() == 0) throw std::invalid_argument("train_classifier: empty training set");
    AdamState opt_body(AdamConfig{});
    AdamState opt_head(AdamConfig{});
    Rng shuffle_rng(Rng::derive(seed, 11));
    clf.body().set_rng_seed(Rng::derive(seed, 12));
    clf.head().set_rng_seed(Rng::derive(seed, 13));

    std::vector<TrainLogEntry> log;
    std::vector<int> order(static_cast<size_t>(train.count()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        int batches = 0;
        for (int start = 0; start < train.count(); start += batch) {
            const int n = std::min(batch, train.count() - start);
            const ImageSet mb = train.select({order.begin() + start, order.begin() + start + n});
            Tensor probs = clf.forward_recorded(mb.images, Mode::train);
            const float loss = categorical_ce(probs, std::span<const int>(mb.labels), ScoreKind::probs);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_classifier: non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += loss;
            ++batches;
            for (int i = 0; i < n; ++i) {
                int best = 0;
                for (int c = 1; c < 10; ++c)
                    if (probs.at(i, c) > probs.at(i, best)) best = c;
                correct += best == mb.labels[static_cast<size_t>(i)] ? 1 : 0;
            }
            clf.body().zero_grads();
            clf.head().zero_grads();
            clf.backward_to_input(categorical_ce_grad(probs, std::span<const int>(mb.labels)));
            auto bp = clf.body().parameters();
            auto hp = clf.head().parameters();
            opt_body.step(bp);
            opt_head.step(hp);
        }
        const auto t1 = std::chrono::steady_clock::now();
        log.push_back({epoch + 1, loss_sum / std::max(1, batches),
                       static_cast<double>(correct) / train.count(),
                       std::chrono::duration<double>(t1 - t0).count()});
    }
    return log;
}

double accuracy(Classifier& clf, const ImageSet& set, int batch) {
    std::int64_t correct = 0;
    for (int start = 0; start < set.count(); start += batch) {
        const int n = std::min(batch, set.count() - start);
        const ImageSet mb = set.subset(start, n);
        const Prediction p = clf.predict(mb.images);
        for (int i = 0; i < n; ++i)
            correct += p.labels[static_cast<size_t>(i)] == mb.labels[static_cast<size_t>(i)] ? 1 : 0;
    }
    return set.count() ? static_cast<double>(correct) / set.count() : 0.0;
}

void save_classifier(Classifier& clf, const std::string& path) {
    Checkpoint ckpt;
    ckpt.set_meta("container", "classifier");
    ckpt.set_meta("model", clf.name());
    ckpt.set_meta("tap_dim", std::to_string(clf.tap_dim()));
    checkpoint_put_network(ckpt, "body", clf.body());
    checkpoint_put_network(ckpt, "head", clf.head());
    ckpt.save(path);
}

Classifier load_classifier(const std::string& path) {
    const Checkpoint ckpt = Checkpoint::load(path);
    if (ckpt.meta_or("container", "") != "classifier")
        throw std::runtime_error("load_classifier: '" + path + "' is not a classifier checkpoint");
    const std::string model = ckpt.meta_or("model", "cnn1");
    const int tap_dim = std::stoi(ckpt.meta_or("tap_dim", "128"));
    Classifier clf = build_cnn(model, 0, tap_dim == 10 ? FeatureTap::logits : FeatureTap::dense128);
    checkpoint_get_network(ckpt, "body", clf.body());
    checkpoint_get_network(ckpt, "head", clf.head());
    return clf;
}

}  // namespace sfelab
