#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"
#include "sfelab/sfe.hpp"

using namespace sfelab;

namespace {

/// Toy feature pairs: per-class benign centers, adversarial features
/// shifted toward a rival center (the geometry the extractor must undo).
FeaturePairSet toy_features(int n, int d, std::uint64_t seed) {
    FeaturePairSet f;
    f.benign_features = Tensor({n, d});
    f.adversarial_features = Tensor({n, d});
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int cls = i % 4;
        for (int j = 0; j < d; ++j) {
            const float center = cls == j % 4 ? 2.0f : -1.0f;
            const float benign = center + 0.3f * rng.normal();
            f.benign_features.at(i, j) = benign;
            f.adversarial_features.at(i, j) = -0.7f * benign + 0.4f * rng.normal();
        }
    }
    return f;
}

void zero_discriminator_head(SfeModel& sfe) {
    // final dense layer -> 0 raw output -> probability exactly 0.5
    auto params = sfe.d().parameters();
    params[params.size() - 2].value->fill(0.0f);
    params[params.size() - 1].value->fill(0.0f);
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generators are structurally identical and sized by the feature width") {
    SfeModel sfe = build_sfe(128, 3);
    CHECK(sfe.pg().layer_output_shapes() == sfe.ng().layer_output_shapes());
    CHECK(sfe.pg().output_shape() == std::vector<int>{128});
    CHECK(sfe.ng().output_shape() == std::vector<int>{128});
    CHECK(sfe.d().output_shape() == std::vector<int>{1});
    CHECK_THROWS(build_sfe(0, 3));

    // fresh generator output lies strictly inside (-1, 1)
    Tensor zeros({2, 128});
    const Tensor out = sfe.pg().forward(zeros, Mode::infer);
    for (std::int64_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] > -1.0f);
        CHECK(out[i] < 1.0f);
    }
}

TEST_CASE("feature normalization round-trips in-range values and clamps outliers") {
    FeaturePairSet feats = toy_features(32, 6, 5);
    const Tensor* sets[] = {&feats.benign_features, &feats.adversarial_features};
    const FeatureNorm norm = FeatureNorm::fit(sets);

    const Tensor n = norm.normalize(feats.benign_features);
    for (std::int64_t i = 0; i < n.size(); ++i) {
        CHECK(n[i] >= -1.0f);
        CHECK(n[i] <= 1.0f);
    }
    const Tensor back = norm.denormalize(n);
    for (std::int64_t i = 0; i < back.size(); ++i)
        CHECK(back[i] == doctest::Approx(feats.benign_features[i]).epsilon(1e-5));

    Tensor wild({1, 6});
    wild.fill(1e6f);
    const Tensor clamped = norm.normalize(wild);
    for (int j = 0; j < 6; ++j) CHECK(clamped[j] == 1.0f);
}

TEST_CASE("generator loss decomposes into mse plus bce against a composed oracle") {
    SfeModel sfe = build_sfe(8, 11);
    zero_discriminator_head(sfe);
    Rng rng(4);
    Tensor xf({4, 8}), target({4, 8});
    for (std::int64_t i = 0; i < xf.size(); ++i) {
        xf[i] = rng.uniform(-1.0f, 1.0f);
        target[i] = rng.uniform(-1.0f, 1.0f);
    }
    // independent composition from the public pieces
    const Tensor out = sfe.pg().forward(xf, Mode::infer);
    const Tensor prob = sfe.discriminator_prob(sfe.d().forward(out, Mode::infer));
    const float composed = mse(out, target) + bce(prob, 1);
    CHECK(loss_pg(sfe, xf, target) == doctest::Approx(composed).epsilon(1e-6));

    // generator output equal to the target with D at 0.5: loss is exactly ln 2
    CHECK(loss_pg(sfe, xf, out) == doctest::Approx(std::log(2.0)).epsilon(1e-5));

    // discriminator branch at 0.5 on both terms: 2 ln 2
    CHECK(loss_d_pg(sfe, xf, target) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-5));
    CHECK(loss_d_ng(sfe, xf, target) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-5));

    const Tensor ng_out = sfe.ng().forward(xf, Mode::infer);
    const Tensor ng_prob = sfe.discriminator_prob(sfe.d().forward(ng_out, Mode::infer));
    const float ng_composed = mse(ng_out, target) + bce(ng_prob, 1);
    CHECK(loss_ng(sfe, xf, target) == doctest::Approx(ng_composed).epsilon(1e-6));
}

TEST_CASE("discriminator pretraining separates real from generated") {
    FeaturePairSet feats = toy_features(64, 8, 9);
    SfeModel sfe = build_sfe(8, 13);
    const Tensor d_before = *sfe.d().parameters()[0].value;

    pretrain_discriminator(sfe, feats, /*k_d=*/0, 16, 3);
    CHECK(std::equal(d_before.data(), d_before.data() + d_before.size(),
                     sfe.d().parameters()[0].value->data()));  // k_D = 0 leaves D alone

    pretrain_discriminator(sfe, feats, /*k_d=*/60, 16, 3);
    const Tensor real_n = sfe.norm().normalize(feats.benign_features);
    const Tensor gen = sfe.pg().forward(sfe.norm().normalize(feats.adversarial_features), Mode::infer);
    const Tensor p_real = sfe.discriminator_prob(sfe.d().forward(real_n, Mode::infer));
    const Tensor p_gen = sfe.discriminator_prob(sfe.d().forward(gen, Mode::infer));
    double mean_real = 0.0, mean_gen = 0.0;
    for (std::int64_t i = 0; i < p_real.size(); ++i) mean_real += p_real[i];
    for (std::int64_t i = 0; i < p_gen.size(); ++i) mean_gen += p_gen[i];
    CHECK(mean_real / p_real.size() > mean_gen / p_gen.size());

    CHECK_THROWS(pretrain_discriminator(sfe, FeaturePairSet{}, 5, 16, 3));
}

TEST_CASE("sfe training moves adversarial features toward their benign partners") {
    const FeaturePairSet train = toy_features(96, 8, 21);
    const FeaturePairSet held_out = toy_features(32, 8, 22);

    SfeModel sfe = build_sfe(8, 31);
    pretrain_discriminator(sfe, train, 5, 16, 41);
    const auto log = train_sfe(sfe, train, 500, 16, 42);
    CHECK(log.size() == 500);

    const Tensor sf = generate_sf(sfe, held_out.adversarial_features);
    const Tensor tf = generate_tf(sfe, held_out.adversarial_features);
    // PG pulls adversarial features toward the benign partner
    CHECK(mse(sf, held_out.benign_features) < mse(held_out.adversarial_features, held_out.benign_features));
    // NG reconstructs the feature's own identity better than PG does
    CHECK(mse(tf, held_out.adversarial_features) < mse(sf, held_out.adversarial_features));
}

TEST_CASE("zero iterations leaves the model unchanged and training is seed-reproducible") {
    const FeaturePairSet feats = toy_features(48, 6, 7);

    SfeModel a = build_sfe(6, 17);
    pretrain_discriminator(a, feats, 3, 16, 5);
    const Tensor pg_before = *a.pg().parameters()[0].value;
    const auto empty_log = train_sfe(a, feats, 0, 16, 6);
    CHECK(empty_log.empty());
    CHECK(std::equal(pg_before.data(), pg_before.data() + pg_before.size(),
                     a.pg().parameters()[0].value->data()));

    train_sfe(a, feats, 120, 16, 6);
    SfeModel b = build_sfe(6, 17);
    pretrain_discriminator(b, feats, 3, 16, 5);
    train_sfe(b, feats, 120, 16, 6);
    const Tensor& wa = *a.pg().parameters()[0].value;
    const Tensor& wb = *b.pg().parameters()[0].value;
    CHECK(std::equal(wa.data(), wa.data() + wa.size(), wb.data()));
}

TEST_CASE("the discriminator is one shared parameter set across branches") {
    const FeaturePairSet feats = toy_features(48, 6, 3);
    SfeModel sfe = build_sfe(6, 19);
    pretrain_discriminator(sfe, feats, 4, 16, 2);

    Rng rng(6);
    Tensor xf({4, 6}), t({4, 6});
    for (std::int64_t i = 0; i < xf.size(); ++i) {
        xf[i] = rng.uniform(-1.0f, 1.0f);
        t[i] = rng.uniform(-1.0f, 1.0f);
    }
    const float before = loss_d_pg(sfe, xf, t);
    // perturb D through whichever handle: there is only one network
    (*sfe.d().parameters()[0].value)[0] += 0.25f;
    const float after = loss_d_pg(sfe, xf, t);
    CHECK(before != after);
    CHECK(&sfe.d() == &sfe.d());  // single accessor, single parameter set
}

TEST_CASE("optimal discriminator oracle follows the analytic formula") {
    const double p_data[] = {0.2, 0.2, 0.2, 0.2, 0.2};
    const double p_same[] = {0.2, 0.2, 0.2, 0.2, 0.2};
    auto d_same = optimal_d_oracle(p_data, p_same);
    for (const auto& v : d_same) {
        REQUIRE(v.has_value());
        CHECK(*v == doctest::Approx(0.5));
    }

    const double pa[] = {0.8, 0.1, 0.1, 0.0, 0.0};
    const double pb[] = {0.2, 0.3, 0.1, 0.4, 0.0};
    auto d = optimal_d_oracle(pa, pb);
    CHECK(*d[0] == doctest::Approx(0.8));
    CHECK(*d[1] == doctest::Approx(0.25));
    CHECK(*d[2] == doctest::Approx(0.5));
    CHECK(*d[3] == doctest::Approx(0.0));
    CHECK_FALSE(d[4].has_value());  // both densities vanish: excluded

    const double bad[] = {0.5, 0.1, 0.1, 0.1, 0.1};
    CHECK_THROWS(optimal_d_oracle(pa, bad));
}

TEST_CASE("sfe checkpoints reproduce reconstructions bit-exactly") {
    const FeaturePairSet feats = toy_features(48, 6, 8);
    SfeModel sfe = build_sfe(6, 23);
    pretrain_discriminator(sfe, feats, 3, 16, 9);
    train_sfe(sfe, feats, 80, 16, 10);

    const std::string path = temp_path("sfelab_sfe_test.sfel");
    save_sfe(sfe, path);
    SfeModel back = load_sfe(path);
    CHECK(back.feature_dim() == 6);

    const Tensor a = generate_sf(sfe, feats.adversarial_features);
    const Tensor b = generate_sf(back, feats.adversarial_features);
    CHECK(std::equal(a.data(), a.data() + a.size(), b.data()));
    std::remove(path.c_str());
}
