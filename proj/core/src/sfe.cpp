// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/sfe.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sfelab/adam.hpp"
#include "sfelab/checkpoint.hpp"
#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"

namespace sfelab {

FeaturePairSet extract_feature_pairs(Classifier& clf, const PairDataset& pairs, int batch) {
    const PairDataset ok = pairs.successful();
    FeaturePairSet out;
    const int n = ok.count();
    if (n == 0) return out;
    out.benign_features = Tensor({n, clf.tap_dim()});
    out.adversarial_features = Tensor({n, clf.tap_dim()});
    for (int start = 0; start < n; start += batch) {
        const int m = std::min(batch, n - start);
        std::vector<int> idx(static_cast<size_t>(m));
        std::iota(idx.begin(), idx.end(), start);
        const Tensor fb = clf.extract_feature(ok.benign.select(idx).images);
        const PairDataset sel = ok.select(idx);
        const Tensor fa = clf.extract_feature(sel.adversarial);
        std::copy_n(fb.data(), fb.size(), out.benign_features.data() + static_cast<std::int64_t>(start) * clf.tap_dim());
        std::copy_n(fa.data(), fa.size(),
                    out.adversarial_features.data() + static_cast<std::int64_t>(start) * clf.tap_dim());
    }
    return out;
}

// ---------------------------------------------------------------------------
// normalization

FeatureNorm FeatureNorm::fit(std::span<const Tensor* const> feature_sets) {
    if (feature_sets.empty()) throw std::invalid_argument("FeatureNorm: no feature sets");
    const int d = feature_sets.front()->dim(1);
    FeatureNorm norm;
    norm.lo = Tensor::full({d}, std::numeric_limits<float>::max());
    norm.hi = Tensor::full({d}, std::numeric_limits<float>::lowest());
    for (const Tensor* set : feature_sets) {
        if (set->rank() != 2 || set->dim(1) != d)
            throw std::invalid_argument("FeatureNorm: inconsistent feature width");
        const int n = set->dim(0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                norm.lo[j] = std::min(norm.lo[j], set->at(i, j));
                norm.hi[j] = std::max(norm.hi[j], set->at(i, j));
            }
    }
    return norm;
}

Tensor FeatureNorm::normalize(const Tensor& features) const {
    const int d = lo.dim(0);
    if (features.rank() != 2 || features.dim(1) != d)
        throw std::invalid_argument("FeatureNorm: width mismatch, expected " + std::to_string(d) + ", got " +
                                    features.shape_str());
    Tensor out(features.shape());
    for (int i = 0; i < features.dim(0); ++i)
        for (int j = 0; j < d; ++j) {
            const float span = std::max(hi[j] - lo[j], 1e-6f);
            const float v = 2.0f * (features.at(i, j) - lo[j]) / span - 1.0f;
            out.at(i, j) = std::clamp(v, -1.0f, 1.0f);
        }
    return out;
}

Tensor FeatureNorm::denormalize(const Tensor& normalized) const {
    const int d = lo.dim(0);
    if (normalized.rank() != 2 || normalized.dim(1) != d)
        throw std::invalid_argument("FeatureNorm: width mismatch on denormalize");
    Tensor out(normalized.shape());
    for (int i = 0; i < normalized.dim(0); ++i)
        for (int j = 0; j < d; ++j) {
            const float span = std::max(hi[j] - lo[j], 1e-6f);
            out.at(i, j) = lo[j] + (normalized.at(i, j) + 1.0f) * 0.5f * span;
        }
    return out;
}

// ---------------------------------------------------------------------------
// model

SfeModel::SfeModel(Network pg, Network ng, Network d, int feature_dim, DiscOutput disc_out)
    : pg_(std::move(pg)), ng_(std::move(ng)), d_(std::move(d)), feature_dim_(feature_dim),
      disc_out_(disc_out) {}

Tensor SfeModel::discriminator_prob(const Tensor& raw) const {
    if (disc_out_ == DiscOutput::sigmoid) return raw;
    Tensor p(raw.shape());
    for (std::int64_t i = 0; i < raw.size(); ++i) p[i] = (raw[i] + 1.0f) * 0.5f;
    return p;
}

namespace {

std::vector<LayerSpec> generator_specs(int d_f) {
    std::vector<LayerSpec> s;
    push_dense(s, 256, Activation::leakyrelu, 0.2f);
    s.push_back(LayerSpec::batchnorm(0.8f));
    push_dense(s, 512, Activation::leakyrelu, 0.2f);
    s.push_back(LayerSpec::batchnorm(0.8f));
    push_dense(s, 1024, Activation::leakyrelu, 0.2f);
    s.push_back(LayerSpec::batchnorm(0.8f));
    push_dense(s, d_f, Activation::tanh);
    return s;
}

std::vector<LayerSpec> discriminator_specs(DiscOutput out) {
    std::vector<LayerSpec> s;
    push_dense(s, 512, Activation::leakyrelu, 0.2f);
    push_dense(s, 256, Activation::leakyrelu, 0.2f);
    push_dense(s, 1, out == DiscOutput::tanh_unit ? Activation::tanh : Activation::sigmoid);
    return s;
}

}  // namespace

SfeModel build_sfe(int d_F, std::uint64_t seed, DiscOutput disc_out) {
    if (d_F < 1) throw std::invalid_argument("build_sfe: d_F must be >= 1");
    Network pg(generator_specs(d_F), {d_F}, Rng::derive(seed, 1));
    Network ng(generator_specs(d_F), {d_F}, Rng::derive(seed, 2));
    Network d(discriminator_specs(disc_out), {d_F}, Rng::derive(seed, 3));
    SfeModel sfe(std::move(pg), std::move(ng), std::move(d), d_F, disc_out);
    // identity map until pretraining fits the real statistics
    sfe.norm().lo = Tensor::full({d_F}, -1.0f);
    sfe.norm().hi = Tensor::full({d_F}, 1.0f);
    return sfe;
}

// ---------------------------------------------------------------------------
// loss evaluations (infer mode, deterministic)

namespace {

float generator_loss_eval(SfeModel& sfe, Network& gen, const Tensor& xf, const Tensor& target) {
    const Tensor out = gen.forward(xf, Mode::infer);
    const Tensor prob = sfe.discriminator_prob(sfe.d().forward(out, Mode::infer));
    return mse(out, target) + bce(prob, 1);
}

float disc_loss_eval(SfeModel& sfe, Network& gen, const Tensor& xf, const Tensor& real) {
    const Tensor generated = gen.forward(xf, Mode::infer);
    const Tensor p_fake = sfe.discriminator_prob(sfe.d().forward(generated, Mode::infer));
    const Tensor p_real = sfe.discriminator_prob(sfe.d().forward(real, Mode::infer));
    return bce(p_fake, 0) + bce(p_real, 1);
}

}  // namespace

float loss_pg(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xsf_norm) {
    return generator_loss_eval(sfe, sfe.pg(), xf_norm, xsf_norm);
}
float loss_ng(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xtf_norm) {
    return generator_loss_eval(sfe, sfe.ng(), xf_norm, xtf_norm);
}
float loss_d_pg(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xsf_norm) {
    return disc_loss_eval(sfe, sfe.pg(), xf_norm, xsf_norm);
}
float loss_d_ng(SfeModel& sfe, const Tensor& xf_norm, const Tensor& xtf_norm) {
    return disc_loss_eval(sfe, sfe.ng(), xf_norm, xtf_norm);
}

// ---------------------------------------------------------------------------
// training

namespace {

/// Chain rule through the probability mapping of the discriminator head.
Tensor prob_grad_to_raw(const SfeModel& sfe, const Tensor& g_prob) {
    if (sfe.disc_output() == DiscOutput::sigmoid) return g_prob;
    Tensor g(g_prob.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = 0.5f * g_prob[i];
    return g;
}

struct MinibatchRows {
    Tensor xf, xsf, xtf;  // each [2m, d], normalized
};

/// Both rows of every sampled pair, targets per the salient/trivial
/// definition table.
MinibatchRows sample_rows(const Tensor& benign_n, const Tensor& adv_n, const std::vector<int>& pick) {
    const int d = benign_n.dim(1);
    const int m = static_cast<int>(pick.size());
    MinibatchRows rows{Tensor({2 * m, d}), Tensor({2 * m, d}), Tensor({2 * m, d})};
    for (int i = 0; i < m; ++i) {
        const float* hb = benign_n.data() + static_cast<std::int64_t>(pick[static_cast<size_t>(i)]) * d;
        const float* ha = adv_n.data() + static_cast<std::int64_t>(pick[static_cast<size_t>(i)]) * d;
        // benign row: x_F = x_SF = x_TF = h(x)
        std::copy_n(hb, d, rows.xf.data() + static_cast<std::int64_t>(i) * d);
        std::copy_n(hb, d, rows.xsf.data() + static_cast<std::int64_t>(i) * d);
        std::copy_n(hb, d, rows.xtf.data() + static_cast<std::int64_t>(i) * d);
        // adversarial row: x_F = h(x*), x_SF = h(x), x_TF = h(x*)
        std::copy_n(ha, d, rows.xf.data() + static_cast<std::int64_t>(m + i) * d);
        std::copy_n(hb, d, rows.xsf.data() + static_cast<std::int64_t>(m + i) * d);
        std::copy_n(ha, d, rows.xtf.data() + static_cast<std::int64_t>(m + i) * d);
    }
    return rows;
}

/// One generator update: minimize MSE(G(xf), target) + CE(D(G(xf)), 1).
double generator_step(SfeModel& sfe, Network& gen, AdamState& opt, const Tensor& xf, const Tensor& target) {
    Network& d = sfe.d();
    Tensor out = gen.forward(xf, Mode::train, /*record=*/true);
    Tensor d_raw = d.forward(out, Mode::train, /*record=*/true);
    Tensor prob = sfe.discriminator_prob(d_raw);
    const double loss = static_cast<double>(mse(out, target)) + bce(prob, 1);

    d.set_trainable(false);  // gradient flows through D, parameters stay
    Tensor g_out = d.backward(prob_grad_to_raw(sfe, bce_grad(prob, 1)));
    d.set_trainable(true);
    const Tensor g_mse = mse_grad(out, target);
    for (std::int64_t i = 0; i < g_out.size(); ++i) g_out[i] += g_mse[i];

    gen.zero_grads();
    gen.backward(g_out);
    auto params = gen.parameters();
    opt.step(params);
    return loss;
}

/// One shared-discriminator update on both branches:
/// CE(D(PG(xf)),0) + CE(D(x_SF),1) + CE(D(NG(xf)),0) + CE(D(x_TF),1).
double discriminator_step(SfeModel& sfe, AdamState& opt, const MinibatchRows& rows) {
    Network& d = sfe.d();
    d.zero_grads();
    double loss = 0.0;
    const Tensor fake_pg = sfe.pg().forward(rows.xf, Mode::train);
    const Tensor fake_ng = sfe.ng().forward(rows.xf, Mode::train);
    const struct {
        const Tensor* input;
        int label;
    } terms[] = {{&fake_pg, 0}, {&rows.xsf, 1}, {&fake_ng, 0}, {&rows.xtf, 1}};
    for (const auto& term : terms) {
        Tensor raw = d.forward(*term.input, Mode::train, /*record=*/true);
        Tensor prob = sfe.discriminator_prob(raw);
        loss += bce(prob, term.label);
        d.backward(prob_grad_to_raw(sfe, bce_grad(prob, term.label)));
    }
    auto params = d.parameters();
    opt.step(params);
    return loss;
}

}  // namespace

void pretrain_discriminator(SfeModel& sfe, const FeaturePairSet& feats, int k_d, int m_b,
                            std::uint64_t seed) {
    if (feats.count() == 0) throw std::invalid_argument("pretrain_discriminator: empty feature set");
    const Tensor* sets[] = {&feats.benign_features, &feats.adversarial_features};
    sfe.norm() = FeatureNorm::fit(sets);
    if (k_d <= 0) return;

    const Tensor benign_n = sfe.norm().normalize(feats.benign_features);
    const Tensor adv_n = sfe.norm().normalize(feats.adversarial_features);
    AdamState opt(adam_gan_config());
    Rng rng(Rng::derive(seed, 0xD15C));
    for (int step = 0; step < k_d; ++step) {
        std::vector<int> pick(static_cast<size_t>(std::min(m_b, feats.count())));
        for (int& p : pick) p = rng.uniform_int(feats.count());
        discriminator_step(sfe, opt, sample_rows(benign_n, adv_n, pick));
    }
}

std::vector<SfeTrainLogEntry> train_sfe(SfeModel& sfe, const FeaturePairSet& feats, int iterations, int m_b,
                                        std::uint64_t seed) {
    if (feats.count() == 0) throw std::invalid_argument("train_sfe: empty feature set");
    const Tensor benign_n = sfe.norm().normalize(feats.benign_features);
    const Tensor adv_n = sfe.norm().normalize(feats.adversarial_features);

    AdamState opt_pg(adam_gan_config());
    AdamState opt_ng(adam_gan_config());
    AdamState opt_d(adam_gan_config());
    Rng rng(Rng::derive(seed, 0x5FE));
    sfe.pg().set_rng_seed(Rng::derive(seed, 0x9A));
    sfe.ng().set_rng_seed(Rng::derive(seed, 0x9B));

    std::vector<SfeTrainLogEntry> log;
    log.reserve(static_cast<size_t>(iterations));
    for (int it = 0; it < iterations; ++it) {
        std::vector<int> pick(static_cast<size_t>(std::min(m_b, feats.count())));
        for (int& p : pick) p = rng.uniform_int(feats.count());
        const MinibatchRows rows = sample_rows(benign_n, adv_n, pick);

        SfeTrainLogEntry entry;
        entry.iteration = it + 1;
        entry.loss_pg = generator_step(sfe, sfe.pg(), opt_pg, rows.xf, rows.xsf);
        entry.loss_ng = generator_step(sfe, sfe.ng(), opt_ng, rows.xf, rows.xtf);
        entry.loss_d = discriminator_step(sfe, opt_d, rows);
        if (!std::isfinite(entry.loss_pg) || !std::isfinite(entry.loss_ng) || !std::isfinite(entry.loss_d))
            throw std::runtime_error("train_sfe: non-finite loss at iteration " + std::to_string(it + 1));
        log.push_back(entry);
    }
    return log;
}

// ---------------------------------------------------------------------------
// inference

Tensor generate_sf_normalized(SfeModel& sfe, const Tensor& features) {
    return sfe.pg().forward(sfe.norm().normalize(features), Mode::infer);
}

Tensor generate_tf_normalized(SfeModel& sfe, const Tensor& features) {
    return sfe.ng().forward(sfe.norm().normalize(features), Mode::infer);
}

Tensor generate_sf(SfeModel& sfe, const Tensor& features) {
    return sfe.norm().denormalize(generate_sf_normalized(sfe, features));
}

Tensor generate_tf(SfeModel& sfe, const Tensor& features) {
    return sfe.norm().denormalize(generate_tf_normalized(sfe, features));
}

std::vector<std::optional<double>> optimal_d_oracle(std::span<const double> p_data,
                                                    std::span<const double> p_g) {
    if (p_data.size() != p_g.size()) throw std::invalid_argument("optimal_d_oracle: support size mismatch");
    auto check_dist = [](std::span<const double> p, const char* name) {
        double sum = 0.0;
        for (double v : p) {
            if (v < 0.0) throw std::invalid_argument(std::string("optimal_d_oracle: negative mass in ") + name);
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw std::invalid_argument(std::string("optimal_d_oracle: ") + name + " does not sum to 1");
    };
    check_dist(p_data, "p_data");
    check_dist(p_g, "p_g");
    std::vector<std::optional<double>> out(p_data.size());
    for (size_t i = 0; i < p_data.size(); ++i) {
        const double denom = p_data[i] + p_g[i];
        if (denom > 0.0) out[i] = p_data[i] / denom;
    }
    return out;
}

// ---------------------------------------------------------------------------
// persistence

void save_sfe(SfeModel& sfe, const std::string& path) {
    Checkpoint ckpt;
    ckpt.set_meta("container", "sfe");
    ckpt.set_meta("feature_dim", std::to_string(sfe.feature_dim()));
    ckpt.set_meta("disc_output", sfe.disc_output() == DiscOutput::tanh_unit ? "tanh" : "sigmoid");
    ckpt.set_meta("k_d", std::to_string(sfe.k_d));
    ckpt.set_meta("minibatch", std::to_string(sfe.minibatch));
    checkpoint_put_network(ckpt, "pg", sfe.pg());
    checkpoint_put_network(ckpt, "ng", sfe.ng());
    checkpoint_put_network(ckpt, "d", sfe.d());
    ckpt.add("norm.lo", sfe.norm().lo);
    ckpt.add("norm.hi", sfe.norm().hi);
    ckpt.save(path);
}

SfeModel load_sfe(const std::string& path) {
    const Checkpoint ckpt = Checkpoint::load(path);
    if (ckpt.meta_or("container", "") != "sfe")
        throw std::runtime_error("load_sfe: '" + path + "' is not an sfe checkpoint");
    const int d_f = std::stoi(ckpt.meta_or("feature_dim", "128"));
    const DiscOutput out =
        ckpt.meta_or("disc_output", "tanh") == "sigmoid" ? DiscOutput::sigmoid : DiscOutput::tanh_unit;
    SfeModel sfe = build_sfe(d_f, 0, out);
    checkpoint_get_network(ckpt, "pg", sfe.pg());
    checkpoint_get_network(ckpt, "ng", sfe.ng());
    checkpoint_get_network(ckpt, "d", sfe.d());
    sfe.norm().lo = ckpt.require("norm.lo");
    sfe.norm().hi = ckpt.require("norm.hi");
    sfe.k_d = std::stoi(ckpt.meta_or("k_d", "5"));
    sfe.minibatch = std::stoi(ckpt.meta_or("minibatch", "64"));
    return sfe;
}

}  // namespace sfelab
