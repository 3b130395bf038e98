#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "sfelab/attacks.hpp"
#include "sfelab/detector.hpp"
#include "sfelab/evaluation.hpp"
#include "sfelab/rng.hpp"

using namespace sfelab;

namespace {

/// Tiny end-to-end stack over 4x4 images: trained two-blob classifier,
/// pairs whose adversarial side is heavy uniform noise (always
/// misclassified rows are kept by the success flags).
struct ToyStack {
    Classifier clf;
    PairDataset pairs;
    SfeModel sfe;
};

ToyStack make_stack(std::uint64_t seed) {
    ToyStack s;
    Network body({LayerSpec::flatten(), LayerSpec::dense(16), LayerSpec::activation(Activation::relu)},
                 {4, 4, 1}, seed);
    Network head({LayerSpec::dense(10), LayerSpec::activation(Activation::softmax)}, {16}, seed + 1);
    s.clf = Classifier(std::move(body), std::move(head), 16, "blob");

    ImageSet train;
    train.images = Tensor({64, 4, 4, 1});
    Rng rng(seed + 2);
    for (int i = 0; i < 64; ++i) {
        const int label = i % 2;
        train.labels.push_back(label);
        for (int j = 0; j < 16; ++j)
            train.images[i * 16 + j] = (label == 0) == (j < 8) ? 0.8f + 0.2f * rng.uniform()
                                                               : 0.1f * rng.uniform();
    }
    train_classifier(s.clf, train, 30, 16, seed + 3);

    // pairs from a genuine gradient attack, so adversarial features sit off
    // the benign manifold instead of on the rival class
    ImageSet victim;
    victim.images = Tensor({48, 4, 4, 1});
    for (int i = 0; i < 48; ++i) {
        const int label = i % 2;
        victim.labels.push_back(label);
        for (int j = 0; j < 16; ++j)
            victim.images[i * 16 + j] = (label == 0) == (j < 8) ? 0.8f + 0.2f * rng.uniform()
                                                                : 0.1f * rng.uniform();
    }
    AttackSpec spec = AttackSpec::preset("bim");
    spec.epsilon = 0.5f;
    spec.step_size = 0.1f;
    s.pairs = run_attack(s.clf, victim, spec);

    const FeaturePairSet feats = extract_feature_pairs(s.clf, s.pairs);
    if (feats.count() < 12) throw std::runtime_error("toy stack: attack produced too few pairs");
    s.sfe = build_sfe(16, seed + 4);
    pretrain_discriminator(s.sfe, feats, 5, 16, seed + 5);
    train_sfe(s.sfe, feats, 250, 16, seed + 6);
    return s;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("detector structure: five dense layers, doubled input width, scores in (0,1)") {
    AdvDetector det = build_detector(128, 7);
    int dense_layers = 0;
    for (size_t i = 0; i < det.net().layer_count(); ++i)
        if (det.net().layer_spec(i).kind == LayerSpec::Kind::dense) ++dense_layers;
    CHECK(dense_layers == 5);
    CHECK(det.net().input_shape() == std::vector<int>{256});
    CHECK(det.net().output_shape() == std::vector<int>{1});

    Rng rng(3);
    Tensor x({6, 256});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0f, 1.0f);
    const Tensor score = det.net().forward(x, Mode::infer);
    for (std::int64_t i = 0; i < score.size(); ++i) {
        CHECK(score[i] > 0.0f);
        CHECK(score[i] < 1.0f);
    }
}

TEST_CASE("detector input is the (salient, trivial) concatenation in normalized space") {
    ToyStack s = make_stack(11);
    const int n = s.pairs.count();
    REQUIRE(n >= 16);
    const Tensor feats = s.clf.extract_feature(s.pairs.benign.images);
    const Tensor input = build_detector_input(s.sfe, feats);
    CHECK(input.shape() == std::vector<int>{n, 32});

    const Tensor sf = generate_sf_normalized(s.sfe, feats);
    const Tensor tf = generate_tf_normalized(s.sfe, feats);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 16; ++j) {
            CHECK(input.at(i, j) == sf.at(i, j));
            CHECK(input.at(i, 16 + j) == tf.at(i, j));
        }

    const Tensor again = build_detector_input(s.sfe, feats);
    CHECK(std::equal(input.data(), input.data() + input.size(), again.data()));
    CHECK_THROWS(build_detector_input(s.sfe, Tensor({2, 7})));
}

TEST_CASE("an untrained detector sits at chance on a balanced set") {
    ToyStack s = make_stack(13);
    AdvDetector det = build_detector(16, 5);
    const PairDataset ok = s.pairs.successful();
    const double dr = detection_rate(det, s.sfe, s.clf, ok);
    CHECK(dr > 0.3);
    CHECK(dr < 0.7);
}

TEST_CASE("training the detector separates the toy benign/adversarial rows") {
    ToyStack s = make_stack(17);
    const PairDataset ok = s.pairs.successful();
    REQUIRE(ok.count() >= 20);
    AdvDetector det = build_detector(16, 29);
    const auto log = train_advd(det, s.sfe, s.clf, ok, 30, 16, 31);
    CHECK(log.size() == 30);
    CHECK(log.back().mean_loss < log.front().mean_loss);
    const double dr = detection_rate(det, s.sfe, s.clf, ok);
    CHECK(dr >= 0.9);

    // verdicts are a deterministic threshold function of the scores
    const DetectionResult r1 = detect(det, s.sfe, s.clf, ok.benign.images);
    const DetectionResult r2 = detect(det, s.sfe, s.clf, ok.benign.images);
    CHECK(r1.scores == r2.scores);
    CHECK(r1.verdicts == r2.verdicts);
    for (size_t i = 0; i < r1.scores.size(); ++i)
        CHECK(r1.verdicts[i] == (r1.scores[i] >= det.threshold() ? 1 : 0));

    det.set_threshold(0.0f);
    const DetectionResult all = detect(det, s.sfe, s.clf, ok.benign.images);
    for (std::uint8_t v : all.verdicts) CHECK(v == 1);

    CHECK_THROWS(train_advd(det, s.sfe, s.clf, PairDataset{}, 1, 16, 1));
}

TEST_CASE("detector checkpoints restore scores bit-exactly") {
    ToyStack s = make_stack(19);
    const PairDataset ok = s.pairs.successful();
    AdvDetector det = build_detector(16, 37);
    train_advd(det, s.sfe, s.clf, ok, 10, 16, 38);

    const std::string path = temp_path("sfelab_advd_test.sfel");
    save_detector(det, path);
    AdvDetector back = load_detector(path);
    CHECK(back.threshold() == det.threshold());

    const DetectionResult a = detect(det, s.sfe, s.clf, ok.adversarial);
    const DetectionResult b = detect(back, s.sfe, s.clf, ok.adversarial);
    CHECK(a.scores == b.scores);
    std::remove(path.c_str());
}
