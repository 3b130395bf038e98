#include <doctest.h>

#include <cmath>

#include "sfelab/attacks.hpp"
#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"

using namespace sfelab;

namespace {

/// Linear two-class model on d inputs: logits = x W, no hidden layers.
Classifier linear_model(const std::vector<float>& w_col0, const std::vector<float>& w_col1) {
    const int d = static_cast<int>(w_col0.size());
    Network body({LayerSpec::flatten()}, {d, 1, 1}, 1);  // images [N, d, 1, 1]
    Network head({LayerSpec::dense(2), LayerSpec::activation(Activation::softmax)}, {d}, 1);
    auto params = head.parameters();
    for (int i = 0; i < d; ++i) {
        params[0].value->at(i, 0) = w_col0[static_cast<size_t>(i)];
        params[0].value->at(i, 1) = w_col1[static_cast<size_t>(i)];
    }
    params[1].value->fill(0.0f);
    return Classifier(std::move(body), std::move(head), d, "linear");
}

/// Small trainable classifier over 4x4 images for end-to-end attack runs.
Classifier blob_model(std::uint64_t seed) {
    Network body({LayerSpec::flatten(), LayerSpec::dense(16), LayerSpec::activation(Activation::relu)},
                 {4, 4, 1}, seed);
    Network head({LayerSpec::dense(10), LayerSpec::activation(Activation::softmax)}, {16}, seed + 1);
    return Classifier(std::move(body), std::move(head), 16, "blob");
}

ImageSet blob_set(int n, std::uint64_t seed) {
    ImageSet set;
    set.images = Tensor({n, 4, 4, 1});
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        set.labels.push_back(label);
        for (int j = 0; j < 16; ++j)
            set.images[i * 16 + j] = (label == 0) == (j < 8) ? 0.7f + 0.25f * rng.uniform()
                                                             : 0.05f + 0.1f * rng.uniform();
    }
    return set;
}

Classifier trained_blob_model(std::uint64_t seed = 3) {
    Classifier clf = blob_model(seed);
    const ImageSet train = blob_set(64, seed + 10);
    train_classifier(clf, train, 30, 16, seed + 20);
    return clf;
}

double linf(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs((double)a[i] - b[i]));
    return m;
}

double l2(const Tensor& a, const Tensor& b, int img, std::int64_t row) {
    double s = 0.0;
    for (std::int64_t j = 0; j < row; ++j) {
        const double d = static_cast<double>(a[img * row + j]) - b[img * row + j];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("fgsm with epsilon zero is the identity") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(8, 1);
    const Tensor adv = fgsm(clf, set.images, set.labels, 0.0f);
    for (std::int64_t i = 0; i < adv.size(); ++i) CHECK(adv[i] == set.images[i]);
}

TEST_CASE("fgsm direction matches the analytic sign on a logistic model") {
    // logits: z0 = x0 - x1, z1 = 0. For label 1, dCE/dx = p0 * [1, -1]:
    // positive in coordinate 0, negative in coordinate 1.
    Classifier clf = linear_model({1.0f, -1.0f}, {0.0f, 0.0f});
    Tensor x({1, 2, 1, 1}, {0.5f, 0.5f});
    const std::vector<int> y{1};
    const float eps = 0.25f;
    const Tensor adv = fgsm(clf, x, y, eps);
    CHECK(adv[0] == doctest::Approx(0.5f + eps));
    CHECK(adv[1] == doctest::Approx(0.5f - eps));
}

TEST_CASE("bim with one step of size epsilon reproduces fgsm exactly") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(8, 2);
    const Tensor a = fgsm(clf, set.images, set.labels, 0.3f);
    const Tensor b = bim(clf, set.images, set.labels, 0.3f, 0.3f, 1);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("eps-ball attacks respect the L-inf bound and [0,1] on random sweeps") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(12, 4);
    const float eps = 0.2f;
    const Tensor variants[] = {
        bim(clf, set.images, set.labels, eps, 0.07f, 6),
        mi_fgsm(clf, set.images, set.labels, eps, 0.07f, 6, 1.0f),
        pgd(clf, set.images, set.labels, eps, 0.05f, 8, 77),
        fgsm(clf, set.images, set.labels, eps),
    };
    for (const Tensor& adv : variants) {
        CHECK(linf(adv, set.images) <= eps + 1e-6);
        for (std::int64_t i = 0; i < adv.size(); ++i) {
            CHECK(adv[i] >= 0.0f);
            CHECK(adv[i] <= 1.0f);
        }
    }
}

TEST_CASE("mi-fgsm with zero decay equals bim step for step") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(8, 5);
    const Tensor a = bim(clf, set.images, set.labels, 0.3f, 0.06f, 5);
    const Tensor b = mi_fgsm(clf, set.images, set.labels, 0.3f, 0.06f, 5, 0.0f);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("pgd is deterministic under its seed") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(6, 6);
    const Tensor a = pgd(clf, set.images, set.labels, 0.3f, 0.05f, 5, 123);
    const Tensor b = pgd(clf, set.images, set.labels, 0.3f, 0.05f, 5, 123);
    const Tensor c = pgd(clf, set.images, set.labels, 0.3f, 0.05f, 5, 124);
    bool same_ab = true, same_ac = true;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        same_ab = same_ab && a[i] == b[i];
        same_ac = same_ac && a[i] == c[i];
    }
    CHECK(same_ab);
    CHECK_FALSE(same_ac);
}

TEST_CASE("deepfool leaves an already-misclassified input unchanged") {
    Classifier clf = linear_model({1.0f, 0.0f}, {0.0f, 1.0f});
    Tensor x({1, 2, 1, 1}, {0.3f, 0.5f});  // predicted class 1
    const Tensor adv = deepfool(clf, x, {0}, 1e-6f, 50);  // caller says the true label is 0
    CHECK(adv[0] == x[0]);
    CHECK(adv[1] == x[1]);
}

TEST_CASE("deepfool matches the affine closed form") {
    // binary affine classifier f(x) = w.x + b via logits [0, w.x + b]
    const std::vector<float> w{0.8f, -0.6f, 0.4f};
    Classifier clf = linear_model({0.0f, 0.0f, 0.0f}, w);
    Tensor x({1, 3, 1, 1}, {0.4f, 0.6f, 0.3f});
    // f(x) = 0.32 - 0.36 + 0.12 = 0.08 > 0 -> predicted class 1
    const Tensor adv = deepfool(clf, x, {1}, 1e-6f, 100);
    const double f = 0.8 * 0.4 - 0.6 * 0.6 + 0.4 * 0.3;
    const double nw2 = 0.64 + 0.36 + 0.16;
    for (int j = 0; j < 3; ++j) {
        const double expect = x[j] - f / nw2 * w[static_cast<size_t>(j)];
        CHECK(adv[j] == doctest::Approx(expect).epsilon(2e-3));
    }
    // and it flipped
    CHECK(clf.predict(adv).labels[0] == 0);
}

TEST_CASE("black-box attacks return in-range images and honest flags") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(10, 7);
    const PredictOracle oracle(clf);

    const BlackBoxResult a = auna(oracle, set.images, set.labels, 5);
    const BlackBoxResult c = cra(oracle, set.images, set.labels, 200);
    const BlackBoxResult p = pwa(oracle, set.images, set.labels, 5);
    for (const BlackBoxResult* r : {&a, &c, &p}) {
        for (std::int64_t i = 0; i < r->images.size(); ++i) {
            CHECK(r->images[i] >= 0.0f);
            CHECK(r->images[i] <= 1.0f);
        }
        for (int i = 0; i < set.count(); ++i) {
            const Tensor one = [&] {
                Tensor t({1, 4, 4, 1});
                std::copy_n(r->images.data() + i * 16, 16, t.data());
                return t;
            }();
            const int pred = clf.predict(one).labels[0];
            if (r->found[static_cast<size_t>(i)]) {
                CHECK(pred != set.labels[static_cast<size_t>(i)]);
            } else {
                // failed rows come back unchanged
                for (int j = 0; j < 16; ++j) CHECK(r->images[i * 16 + j] == set.images[i * 16 + j]);
            }
        }
    }
}

TEST_CASE("auna and cra return already-misclassified inputs unchanged") {
    Classifier clf = trained_blob_model();
    ImageSet set = blob_set(6, 9);
    // lie about the labels so every input counts as misclassified
    for (auto& l : set.labels) l = 9;
    const PredictOracle oracle(clf);
    const BlackBoxResult a = auna(oracle, set.images, set.labels, 3);
    const BlackBoxResult c = cra(oracle, set.images, set.labels, 100);
    for (const BlackBoxResult* r : {&a, &c}) {
        for (int i = 0; i < set.count(); ++i) CHECK(r->found[static_cast<size_t>(i)] == 1);
        for (std::int64_t i = 0; i < set.images.size(); ++i) CHECK(r->images[i] == set.images[i]);
    }
}

TEST_CASE("contrast transform endpoints behave as documented") {
    // c = 1 keeps the image (up to rounding), c = 0 collapses to the 0.5 plateau
    Tensor x({1, 2, 1, 1}, {0.9f, 0.2f});
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK((x[i] - 0.5f) * 1.0f + 0.5f == doctest::Approx(x[i]).epsilon(1e-7));
        CHECK((x[i] - 0.5f) * 0.0f + 0.5f == 0.5f);
    }
}

TEST_CASE("pwa shrinks the perturbation and keeps the misclassification") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(10, 11);
    const PredictOracle oracle(clf);
    const BlackBoxResult start = auna(oracle, set.images, set.labels, Rng::derive(21, 0xA0));
    const BlackBoxResult refined = pwa(oracle, set.images, set.labels, 21);
    for (int i = 0; i < set.count(); ++i) {
        if (!refined.found[static_cast<size_t>(i)]) continue;
        REQUIRE(start.found[static_cast<size_t>(i)] == 1);  // same starter seed stream
        CHECK(l2(refined.images, set.images, i, 16) <= l2(start.images, set.images, i, 16) + 1e-6);
    }
}

TEST_CASE("pwa flags failure when no adversarial seed exists") {
    // constant classifier: always predicts class 0, so label-0 inputs
    // can never be misclassified by any noise
    Classifier clf = linear_model({0.0f, 0.0f}, {0.0f, 0.0f});
    Tensor x({2, 2, 1, 1}, {0.4f, 0.6f, 0.2f, 0.8f});
    const std::vector<int> y{0, 0};
    const PredictOracle oracle(clf);
    const BlackBoxResult r = pwa(oracle, x, y, 1);
    CHECK(r.found[0] == 0);
    CHECK(r.found[1] == 0);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(r.images[i] == x[i]);
}

TEST_CASE("run_attack packs pairs with success flags and stats") {
    Classifier clf = trained_blob_model();
    const ImageSet set = blob_set(24, 13);
    AttackSpec spec = AttackSpec::preset("bim");
    spec.epsilon = 0.4f;
    AttackRunStats stats;
    const PairDataset pairs = run_attack(clf, set, spec, 0, &stats);
    pairs.validate();
    CHECK(pairs.attack_name == "bim");
    CHECK(stats.asr_defined);
    CHECK(stats.attacked == pairs.count());
    CHECK(stats.asr == doctest::Approx(static_cast<double>(pairs.success_count()) /
                                       std::max(1, pairs.count())));
    // success flag means exactly: the model misclassifies the adversarial row
    for (int i = 0; i < pairs.count(); ++i) {
        Tensor one({1, 4, 4, 1});
        std::copy_n(pairs.adversarial.data() + i * 16, 16, one.data());
        const bool mis = clf.predict(one).labels[0] != pairs.benign.labels[static_cast<size_t>(i)];
        CHECK(mis == (pairs.success[static_cast<size_t>(i)] == 1));
    }

    // determinism: the whole pair file is bit-identical under a fixed seed
    const PairDataset again = run_attack(clf, set, spec, 0, nullptr);
    CHECK(std::equal(pairs.adversarial.data(), pairs.adversarial.data() + pairs.adversarial.size(),
                     again.adversarial.data()));

    // cap honored
    const PairDataset capped = run_attack(clf, set, spec, 5, nullptr);
    CHECK(capped.count() <= 5);

    CHECK_THROWS(run_attack(clf, set, AttackSpec::preset("jsma")));
}

TEST_CASE("run_attack on an empty set yields an empty pair set with ASR undefined") {
    Classifier clf = trained_blob_model();
    ImageSet empty;
    empty.images = Tensor({0, 4, 4, 1});
    AttackRunStats stats;
    const PairDataset pairs = run_attack(clf, empty, AttackSpec::preset("fgsm"), 0, &stats);
    CHECK(pairs.count() == 0);
    CHECK_FALSE(stats.asr_defined);
}
