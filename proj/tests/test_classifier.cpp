#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "sfelab/classifier.hpp"
#include "sfelab/gradcheck.hpp"
#include "sfelab/reference.hpp"
#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"

using namespace sfelab;

namespace {

ImageSet toy_digits(int n, std::uint64_t seed) {
    // two separable blob patterns, labels 0/1
    ImageSet set;
    set.images = Tensor({n, 28, 28, 1});
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        set.labels.push_back(label);
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x) {
                const bool lit = label == 0 ? (x < 14) : (x >= 14);
                set.images[(static_cast<std::int64_t>(i) * 28 + y) * 28 + x] =
                    lit ? 0.8f + 0.2f * rng.uniform() : 0.1f * rng.uniform();
            }
    }
    return set;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("cnn1 and cnn2 expose the documented tap and output widths") {
    Classifier c1 = build_cnn("cnn1", 7);
    CHECK(c1.tap_dim() == 128);
    Classifier c2 = build_cnn("cnn2", 7);
    CHECK(c2.tap_dim() == 128);
    CHECK_THROWS(build_cnn("alexnet", 7));

    Tensor zero({1, 28, 28, 1});
    const Prediction p = c1.predict(zero);
    CHECK(p.probabilities.shape() == std::vector<int>{1, 10});
    double sum = 0.0;
    for (int c = 0; c < 10; ++c) sum += p.probabilities.at(0, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

    Classifier logits_tap = build_cnn("cnn1", 7, FeatureTap::logits);
    CHECK(logits_tap.tap_dim() == 10);
}

TEST_CASE("predict equals head(body(x)) bit-exactly") {
    Classifier clf = build_cnn("cnn1", 3);
    Rng rng(12);
    Tensor x({4, 28, 28, 1});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    const Prediction direct = clf.predict(x);
    const Tensor feat = clf.extract_feature(x);
    CHECK(feat.shape() == std::vector<int>{4, 128});
    const Prediction composed = clf.classify_from_feature(feat);
    for (std::int64_t i = 0; i < direct.probabilities.size(); ++i)
        CHECK(direct.probabilities[i] == composed.probabilities[i]);
    CHECK(direct.labels == composed.labels);

    // argmax consistency and infer-mode determinism
    const Prediction again = clf.predict(x);
    CHECK(again.labels == direct.labels);
    for (int i = 0; i < 4; ++i) {
        int best = 0;
        for (int c = 1; c < 10; ++c)
            if (direct.probabilities.at(i, c) > direct.probabilities.at(i, best)) best = c;
        CHECK(direct.labels[static_cast<size_t>(i)] == best);
    }
}

TEST_CASE("input gradients flow through a toy conv net") {
    // finite differences against the image, not the parameters
    Network net({LayerSpec::conv2d(2, 3), LayerSpec::activation(Activation::relu), LayerSpec::maxpool(2),
                 LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::activation(Activation::softmax)},
                {4, 4, 1}, 5);
    Rng rng(6);
    Tensor x({2, 4, 4, 1});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    const std::vector<int> labels{1, 2};

    Tensor probs = net.forward(x, Mode::infer, /*record=*/true);
    Tensor gx = net.backward(categorical_ce_grad(probs, labels));

    auto ref_ce = [&]() {
        const RefOutput out = reference_forward(net, x, Mode::infer, 0);
        double acc = 0.0;
        for (size_t i = 0; i < labels.size(); ++i)
            acc += -std::log(out.values[i * 3 + static_cast<size_t>(labels[i])]);
        return acc / static_cast<double>(labels.size());
    };

    double max_rel = 0.0;
    const double h = 1e-3;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const float keep = x[i];
        x[i] = static_cast<float>(keep + h);
        const double up = ref_ce();
        x[i] = static_cast<float>(keep - h);
        const double down = ref_ce();
        x[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        // dead-path pixels (relu, pool) have true-zero gradients below difference noise
        if (std::fabs(gx[i]) < 1e-4 && std::fabs(numeric) < 1e-4) continue;
        const double rel = std::fabs(gx[i] - numeric) / std::max({std::fabs((double)gx[i]), std::fabs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("zero epochs leaves parameters unchanged") {
    Classifier clf = build_cnn("cnn2", 11);
    const Tensor before = *clf.body().parameters()[0].value;
    const ImageSet train = toy_digits(8, 2);
    train_classifier(clf, train, /*epochs=*/0, /*batch=*/4, /*seed=*/1);
    const Tensor& after = *clf.body().parameters()[0].value;
    CHECK(std::equal(before.data(), before.data() + before.size(), after.data()));
}

TEST_CASE("training fits a separable toy problem deterministically") {
    const ImageSet train = toy_digits(32, 2);
    Classifier a = build_cnn("cnn2", 11);
    auto log_a = train_classifier(a, train, 3, 8, 5);
    CHECK(log_a.size() == 3);
    CHECK(accuracy(a, train) == doctest::Approx(1.0));

    Classifier b = build_cnn("cnn2", 11);
    train_classifier(b, train, 3, 8, 5);
    const Prediction pa = a.predict(train.images);
    const Prediction pb = b.predict(train.images);
    for (std::int64_t i = 0; i < pa.probabilities.size(); ++i)
        CHECK(pa.probabilities[i] == pb.probabilities[i]);  // same seed, bit-identical
}

TEST_CASE("classifier checkpoint preserves predictions bit-exactly") {
    const ImageSet train = toy_digits(16, 9);
    Classifier clf = build_cnn("cnn2", 13);
    train_classifier(clf, train, 2, 8, 3);

    const std::string path = temp_path("sfelab_clf_test.sfel");
    save_classifier(clf, path);
    Classifier loaded = load_classifier(path);
    CHECK(loaded.name() == "cnn2");
    CHECK(loaded.tap_dim() == 128);

    const Prediction p1 = clf.predict(train.images);
    const Prediction p2 = loaded.predict(train.images);
    for (std::int64_t i = 0; i < p1.probabilities.size(); ++i)
        CHECK(p1.probabilities[i] == p2.probabilities[i]);
    std::remove(path.c_str());
}

TEST_CASE("classify_from_feature rejects the wrong width and accepts zeros") {
    Classifier clf = build_cnn("cnn1", 3);
    CHECK_THROWS(clf.classify_from_feature(Tensor({1, 64})));
    const Prediction p = clf.classify_from_feature(Tensor({1, 128}));
    double sum = 0.0;
    for (int c = 0; c < 10; ++c) sum += p.probabilities.at(0, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}
