// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"

namespace sfelab {

namespace {

constexpr int kChunk = 128;  // bounds recorded-activation memory during gradient attacks

float clip01(float v) { return std::clamp(v, 0.0f, 1.0f); }

std::vector<int> shape_with_rows(const Tensor& t, int rows) {
    std::vector<int> shape = t.shape();
    shape[0] = rows;
    return shape;
}

Tensor gather_rows(const Tensor& t, const std::vector<int>& idx) {
    std::vector<int> shape = t.shape();
    const std::int64_t row = t.size() / shape[0];
    shape[0] = static_cast<int>(idx.size());
    Tensor out(shape);
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy_n(t.data() + idx[i] * row, row, out.data() + static_cast<std::int64_t>(i) * row);
    return out;
}

void scatter_rows(Tensor& dst, const Tensor& rows, const std::vector<int>& idx) {
    const std::int64_t row = dst.size() / dst.dim(0);
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy_n(rows.data() + static_cast<std::int64_t>(i) * row, row, dst.data() + idx[i] * row);
}

/// Gradient of the mean cross-entropy w.r.t. the input pixels.
Tensor ce_input_gradient(Classifier& clf, const Tensor& x, const std::vector<int>& y) {
    Tensor probs = clf.forward_recorded(x, Mode::infer);
    Tensor g = clf.backward_to_input(categorical_ce_grad(probs, y));
    if (!g.all_finite()) throw std::runtime_error("attack: non-finite input gradient");
    return g;
}

std::vector<int> predict_labels(Classifier& clf, const Tensor& x, int batch = 512) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(x.dim(0)));
    std::vector<int> idx(static_cast<size_t>(x.dim(0)));
    std::iota(idx.begin(), idx.end(), 0);
    for (int start = 0; start < x.dim(0); start += batch) {
        const int n = std::min(batch, x.dim(0) - start);
        const Tensor chunk = gather_rows(x, {idx.begin() + start, idx.begin() + start + n});
        const auto labels = clf.predict(chunk).labels;
        out.insert(out.end(), labels.begin(), labels.end());
    }
    return out;
}

/// Per-image rng so results stay identical under any chunking or
/// threading of the image loop.
Rng image_rng(std::uint64_t seed, int image_index) { return Rng(Rng::derive(seed, 0x1000 + image_index)); }

struct Frozen {
    // attacks never update the classifier; freezing also skips parameter
    // gradient work in backward
    explicit Frozen(Classifier& clf) : clf_(clf), body_(clf.body().trainable()), head_(clf.head().trainable()) {
        clf_.body().set_trainable(false);
        clf_.head().set_trainable(false);
    }
    ~Frozen() {
        clf_.body().set_trainable(body_);
        clf_.head().set_trainable(head_);
    }
    Classifier& clf_;
    bool body_, head_;
};

using StepFn = void (*)(Tensor&, const Tensor&, const Tensor&, int);

}  // namespace

AttackSpec AttackSpec::preset(const std::string& name) {
    AttackSpec s;
    s.name = name;
    if (name == "fgsm") {
        s.epsilon = 0.3f;
    } else if (name == "bim") {
        s.epsilon = 0.3f;
        s.step_size = 0.05f;
        s.iterations = 10;
    } else if (name == "mifgsm") {
        s.epsilon = 0.3f;
        s.step_size = 0.06f;
        s.iterations = 10;
        s.decay_factor = 1.0f;
    } else if (name == "pgd") {
        s.epsilon = 0.3f;
        s.step_size = 0.01f;
        s.iterations = 100;
    } else if (name == "deepfool") {
        s.overshoot = 1e-6f;
        s.max_iter = 100;
    } else if (name == "auna") {
        // 20 scales, std 0.05..1.0, 10 samples each
    } else if (name == "cra") {
        s.schedule_steps = 1000;
    } else if (name == "pwa") {
        // auna starter plus pointwise refinement
    } else {
        throw std::invalid_argument("unknown attack '" + name + "'");
    }
    return s;
}

std::string AttackSpec::params_string() const {
    std::ostringstream os;
    if (name == "fgsm") {
        os << "epsilon=" << epsilon;
    } else if (name == "bim") {
        os << "epsilon=" << epsilon << ",stepsize=" << step_size << ",iterations=" << iterations;
    } else if (name == "mifgsm") {
        os << "epsilon=" << epsilon << ",stepsize=" << step_size << ",iterations=" << iterations
           << ",decayfactor=" << decay_factor;
    } else if (name == "pgd") {
        os << "epsilon=" << epsilon << ",stepsize=" << step_size << ",iterations=" << iterations;
    } else if (name == "deepfool") {
        os << "epsilon=" << overshoot << ",maxiter=" << max_iter;
    } else if (name == "cra") {
        os << "epsilons=" << schedule_steps;
    } else {
        os << "";
    }
    return os.str();
}

void AttackSpec::validate() const {
    if (epsilon < 0.0f) throw std::invalid_argument("attack: epsilon must be >= 0");
    if (name == "bim" || name == "mifgsm" || name == "pgd") {
        if (iterations < 1) throw std::invalid_argument("attack: iterations must be >= 1");
        if (step_size < 0.0f) throw std::invalid_argument("attack: step size must be >= 0");
    }
    if (name == "deepfool" && max_iter < 1) throw std::invalid_argument("attack: max_iter must be >= 1");
    if (name == "cra" && schedule_steps < 1) throw std::invalid_argument("attack: schedule_steps must be >= 1");
}

// ---------------------------------------------------------------------------
// eps-ball family

namespace {

/// Shared skeleton for the signed-ascent family. step() mutates the chunk
/// given the gradient; the skeleton projects to the eps ball and [0,1].
template <typename InitFn, typename DirFn>
Tensor signed_ascent(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon,
                     int iterations, InitFn&& init, DirFn&& direction) {
    Frozen freeze(clf);
    Tensor out = x;
    std::vector<int> all(static_cast<size_t>(x.dim(0)));
    std::iota(all.begin(), all.end(), 0);
    for (int start = 0; start < x.dim(0); start += kChunk) {
        const int n = std::min(kChunk, x.dim(0) - start);
        const std::vector<int> idx(all.begin() + start, all.begin() + start + n);
        const Tensor orig = gather_rows(x, idx);
        const std::vector<int> labels(y.begin() + start, y.begin() + start + n);
        Tensor cur = orig;
        init(cur, orig, idx);
        const std::int64_t row = orig.size() / n;
        for (int it = 0; it < iterations; ++it) {
            const Tensor dir = direction(clf, cur, labels, it);
            for (int i = 0; i < n; ++i) {
                for (std::int64_t j = 0; j < row; ++j) {
                    const std::int64_t k = i * row + j;
                    float v = cur[k] + dir[k];
                    v = std::clamp(v, orig[k] - epsilon, orig[k] + epsilon);
                    cur[k] = clip01(v);
                }
            }
        }
        scatter_rows(out, cur, idx);
    }
    return out;
}

}  // namespace

Tensor fgsm(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon) {
    return signed_ascent(
        clf, x, y, epsilon, 1, [](Tensor&, const Tensor&, const std::vector<int>&) {},
        [epsilon](Classifier& c, const Tensor& cur, const std::vector<int>& labels, int) {
            Tensor g = ce_input_gradient(c, cur, labels);
            for (std::int64_t i = 0; i < g.size(); ++i)
                g[i] = epsilon * (g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f));
            return g;
        });
}

Tensor bim(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon, float step_size,
           int iterations) {
    return signed_ascent(
        clf, x, y, epsilon, iterations, [](Tensor&, const Tensor&, const std::vector<int>&) {},
        [step_size](Classifier& c, const Tensor& cur, const std::vector<int>& labels, int) {
            Tensor g = ce_input_gradient(c, cur, labels);
            for (std::int64_t i = 0; i < g.size(); ++i)
                g[i] = step_size * (g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f));
            return g;
        });
}

Tensor mi_fgsm(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon, float step_size,
               int iterations, float decay_factor) {
    Tensor momentum;  // lives across iterations of one chunk
    return signed_ascent(
        clf, x, y, epsilon, iterations,
        [&momentum](Tensor& cur, const Tensor&, const std::vector<int>&) { momentum = Tensor::zeros_like(cur); },
        [step_size, decay_factor, &momentum](Classifier& c, const Tensor& cur, const std::vector<int>& labels,
                                             int) {
            const Tensor g = ce_input_gradient(c, cur, labels);
            const int n = cur.dim(0);
            const std::int64_t row = cur.size() / n;
            for (int i = 0; i < n; ++i) {
                double l1 = 0.0;
                for (std::int64_t j = 0; j < row; ++j) l1 += std::fabs(g[i * row + j]);
                // zero gradient contributes nothing this step
                const float inv = l1 > 0.0 ? static_cast<float>(1.0 / l1) : 0.0f;
                for (std::int64_t j = 0; j < row; ++j) {
                    const std::int64_t k = i * row + j;
                    momentum[k] = decay_factor * momentum[k] + g[k] * inv;
                }
            }
            Tensor dir = Tensor::zeros_like(cur);
            for (std::int64_t k = 0; k < dir.size(); ++k)
                dir[k] =
                    step_size * (momentum[k] > 0.0f ? 1.0f : (momentum[k] < 0.0f ? -1.0f : 0.0f));
            return dir;
        });
}

Tensor pgd(Classifier& clf, const Tensor& x, const std::vector<int>& y, float epsilon, float step_size,
           int iterations, std::uint64_t seed) {
    return signed_ascent(
        clf, x, y, epsilon, iterations,
        [seed, epsilon](Tensor& cur, const Tensor& orig, const std::vector<int>& idx) {
            const int n = cur.dim(0);
            const std::int64_t row = cur.size() / n;
            for (int i = 0; i < n; ++i) {
                Rng rng = image_rng(seed, idx[static_cast<size_t>(i)]);
                for (std::int64_t j = 0; j < row; ++j) {
                    const std::int64_t k = i * row + j;
                    cur[k] = clip01(orig[k] + rng.uniform(-epsilon, epsilon));
                }
            }
        },
        [step_size](Classifier& c, const Tensor& cur, const std::vector<int>& labels, int) {
            Tensor g = ce_input_gradient(c, cur, labels);
            for (std::int64_t i = 0; i < g.size(); ++i)
                g[i] = step_size * (g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f));
            return g;
        });
}

// ---------------------------------------------------------------------------
// deepfool

Tensor deepfool(Classifier& clf, const Tensor& x, const std::vector<int>& y, float overshoot, int max_iter) {
    Frozen freeze(clf);
    const int total = x.dim(0);
    const std::int64_t row = x.size() / total;
    Tensor out = x;

    // already-misclassified rows never become active
    std::vector<int> active;
    {
        const std::vector<int> now = predict_labels(clf, x);
        for (int i = 0; i < total; ++i)
            if (now[static_cast<size_t>(i)] == y[static_cast<size_t>(i)]) active.push_back(i);
    }
    Tensor cur = x;

    for (int iter = 0; iter < max_iter && !active.empty(); ++iter) {
        const Tensor sub = gather_rows(cur, active);
        const int n = static_cast<int>(active.size());
        Tensor probs = clf.forward_recorded(sub, Mode::infer);
        const int k = probs.dim(1);

        // per-class input gradients of log p_c from one recorded forward
        std::vector<Tensor> w(static_cast<size_t>(k));
        for (int c = 0; c < k; ++c) {
            Tensor og({n, k});
            for (int i = 0; i < n; ++i) og.at(i, c) = 1.0f / std::max(probs.at(i, c), kProbEps);
            w[static_cast<size_t>(c)] = clf.backward_to_input(og);
        }

        Tensor stepped = sub;
        for (int i = 0; i < n; ++i) {
            const int y0 = y[static_cast<size_t>(active[static_cast<size_t>(i)])];
            const float logp_y = std::log(std::max(probs.at(i, y0), kProbEps));
            double best_ratio = std::numeric_limits<double>::infinity();
            int best_c = -1;
            double best_fk = 0.0, best_norm2 = 0.0;
            for (int c = 0; c < k; ++c) {
                if (c == y0) continue;
                // logit difference equals log-prob difference
                const double fk = std::log(std::max(probs.at(i, c), kProbEps)) - logp_y;
                double norm2 = 0.0;
                for (std::int64_t j = 0; j < row; ++j) {
                    const double d = static_cast<double>(w[static_cast<size_t>(c)][i * row + j]) -
                                     w[static_cast<size_t>(y0)][i * row + j];
                    norm2 += d * d;
                }
                if (norm2 < 1e-20) continue;
                const double ratio = std::fabs(fk) / std::sqrt(norm2);
                if (ratio < best_ratio) {
                    best_ratio = ratio;
                    best_c = c;
                    best_fk = fk;
                    best_norm2 = norm2;
                }
            }
            if (best_c < 0) continue;
            const double scale = (std::fabs(best_fk) + 1e-6) / best_norm2;
            for (std::int64_t j = 0; j < row; ++j) {
                const double d = static_cast<double>(w[static_cast<size_t>(best_c)][i * row + j]) -
                                 w[static_cast<size_t>(y0)][i * row + j];
                stepped[i * row + j] = clip01(stepped[i * row + j] + static_cast<float>(scale * d));
            }
        }
        scatter_rows(cur, stepped, active);

        const std::vector<int> now = clf.predict(stepped).labels;
        std::vector<int> still;
        for (int i = 0; i < n; ++i) {
            if (now[static_cast<size_t>(i)] == y[static_cast<size_t>(active[static_cast<size_t>(i)])])
                still.push_back(active[static_cast<size_t>(i)]);
        }
        active = std::move(still);
    }

    // final perturbation scaled by (1 + overshoot)
    for (int i = 0; i < total; ++i)
        for (std::int64_t j = 0; j < row; ++j) {
            const std::int64_t p = i * row + j;
            out[p] = clip01(x[p] + (1.0f + overshoot) * (cur[p] - x[p]));
        }
    return out;
}

// ---------------------------------------------------------------------------
// black-box attacks

BlackBoxResult auna(const PredictOracle& oracle, const Tensor& x, const std::vector<int>& y,
                    std::uint64_t seed) {
    const int total = x.dim(0);
    const std::int64_t row = x.size() / total;
    BlackBoxResult res;
    res.images = x;
    res.found.assign(static_cast<size_t>(total), 0);

    std::vector<int> open;
    {
        const std::vector<int> now = oracle.labels(x);
        for (int i = 0; i < total; ++i) {
            if (now[static_cast<size_t>(i)] != y[static_cast<size_t>(i)])
                res.found[static_cast<size_t>(i)] = 1;  // already misclassified, returned unchanged
            else
                open.push_back(i);
        }
    }

    std::vector<Rng> rngs;
    rngs.reserve(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) rngs.push_back(image_rng(seed, i));

    constexpr int kScales = 20;
    constexpr int kSamplesPerScale = 10;
    for (int si = 0; si < kScales && !open.empty(); ++si) {
        const float stddev = 0.05f + (1.0f - 0.05f) * static_cast<float>(si) / (kScales - 1);
        const float bound = stddev * 1.7320508f;  // uniform on [-b, b] has std b/sqrt(3)
        for (int t = 0; t < kSamplesPerScale && !open.empty(); ++t) {
            Tensor cand(shape_with_rows(x, static_cast<int>(open.size())));
            for (size_t i = 0; i < open.size(); ++i) {
                Rng& rng = rngs[static_cast<size_t>(open[i])];
                for (std::int64_t j = 0; j < row; ++j)
                    cand[static_cast<std::int64_t>(i) * row + j] =
                        clip01(x[open[i] * row + j] + rng.uniform(-bound, bound));
            }
            const std::vector<int> now = oracle.labels(cand);
            std::vector<int> keep;
            for (size_t i = 0; i < open.size(); ++i) {
                if (now[i] != y[static_cast<size_t>(open[i])]) {
                    res.found[static_cast<size_t>(open[i])] = 1;
                    std::copy_n(cand.data() + static_cast<std::int64_t>(i) * row, row,
                                res.images.data() + open[i] * row);
                } else {
                    keep.push_back(open[i]);
                }
            }
            open = std::move(keep);
        }
    }
    return res;
}

BlackBoxResult cra(const PredictOracle& oracle, const Tensor& x, const std::vector<int>& y,
                   int schedule_steps) {
    const int total = x.dim(0);
    const std::int64_t row = x.size() / total;
    BlackBoxResult res;
    res.images = x;
    res.found.assign(static_cast<size_t>(total), 0);

    std::vector<int> open;
    {
        const std::vector<int> now = oracle.labels(x);
        for (int i = 0; i < total; ++i) {
            if (now[static_cast<size_t>(i)] != y[static_cast<size_t>(i)])
                res.found[static_cast<size_t>(i)] = 1;
            else
                open.push_back(i);
        }
    }

    for (int t = 1; t <= schedule_steps && !open.empty(); ++t) {
        const float c = 1.0f - static_cast<float>(t) / static_cast<float>(schedule_steps);
        Tensor cand(shape_with_rows(x, static_cast<int>(open.size())));
        for (size_t i = 0; i < open.size(); ++i)
            for (std::int64_t j = 0; j < row; ++j)
                cand[static_cast<std::int64_t>(i) * row + j] =
                    clip01((x[open[i] * row + j] - 0.5f) * c + 0.5f);
        const std::vector<int> now = oracle.labels(cand);
        std::vector<int> keep;
        for (size_t i = 0; i < open.size(); ++i) {
            if (now[i] != y[static_cast<size_t>(open[i])]) {
                res.found[static_cast<size_t>(open[i])] = 1;
                std::copy_n(cand.data() + static_cast<std::int64_t>(i) * row, row,
                            res.images.data() + open[i] * row);
            } else {
                keep.push_back(open[i]);
            }
        }
        open = std::move(keep);
    }
    return res;
}

namespace {

/// Tries resetting the dims in [lo, hi) of each listed image to the
/// original pixels; keeps the change where the image stays misclassified,
/// otherwise splits the range (group testing). Returns true if anything
/// changed.
bool group_reset(const PredictOracle& oracle, const Tensor& orig, const std::vector<int>& y, Tensor& cur,
                 const std::vector<std::vector<int>>& order, std::vector<int> imgs, size_t lo, size_t hi,
                 std::int64_t row) {
    if (imgs.empty() || lo >= hi) return false;
    std::vector<int> tried;
    for (size_t i = 0; i < imgs.size(); ++i) {
        const int img = imgs[i];
        bool differs = false;
        for (size_t d = lo; d < hi && d < order[static_cast<size_t>(img)].size(); ++d) {
            const int dim = order[static_cast<size_t>(img)][d];
            if (cur[img * row + dim] != orig[img * row + dim]) differs = true;
        }
        if (differs) tried.push_back(img);
    }
    if (tried.empty()) return false;

    Tensor batch(shape_with_rows(orig, static_cast<int>(tried.size())));
    for (size_t i = 0; i < tried.size(); ++i) {
        const int img = tried[i];
        std::copy_n(cur.data() + img * row, row, batch.data() + static_cast<std::int64_t>(i) * row);
        for (size_t d = lo; d < hi && d < order[static_cast<size_t>(img)].size(); ++d) {
            const int dim = order[static_cast<size_t>(img)][d];
            batch[static_cast<std::int64_t>(i) * row + dim] = orig[img * row + dim];
        }
    }
    const std::vector<int> now = oracle.labels(batch);
    bool changed = false;
    std::vector<int> failed;
    for (size_t i = 0; i < tried.size(); ++i) {
        if (now[i] != y[static_cast<size_t>(tried[i])]) {
            std::copy_n(batch.data() + static_cast<std::int64_t>(i) * row, row, cur.data() + tried[i] * row);
            changed = true;
        } else {
            failed.push_back(tried[i]);
        }
    }
    if (!failed.empty() && hi - lo > 1) {
        const size_t mid = lo + (hi - lo) / 2;
        const bool a = group_reset(oracle, orig, y, cur, order, failed, lo, mid, row);
        const bool b = group_reset(oracle, orig, y, cur, order, failed, mid, hi, row);
        changed = changed || a || b;
    }
    return changed;
}

}  // namespace

BlackBoxResult pwa(const PredictOracle& oracle, const Tensor& x, const std::vector<int>& y,
                   std::uint64_t seed) {
    const int total = x.dim(0);
    const std::int64_t row = x.size() / total;

    // adversarial starting points
    BlackBoxResult res = auna(oracle, x, y, Rng::derive(seed, 0xA0));
    std::vector<int> imgs;
    for (int i = 0; i < total; ++i)
        if (res.found[static_cast<size_t>(i)]) imgs.push_back(i);
    if (imgs.empty()) return res;

    Tensor& cur = res.images;

    // seeded per-image dimension orders
    std::vector<std::vector<int>> order(static_cast<size_t>(total));
    for (int i : imgs) {
        order[static_cast<size_t>(i)].resize(static_cast<size_t>(row));
        std::iota(order[static_cast<size_t>(i)].begin(), order[static_cast<size_t>(i)].end(), 0);
        Rng rng = image_rng(Rng::derive(seed, 0xB0), i);
        rng.shuffle(order[static_cast<size_t>(i)]);
    }

    // phase 1: reset dims to the original wherever the image stays
    // misclassified; group testing keeps the query count down
    constexpr int kGroup = 16;
    for (int sweep = 0; sweep < 8; ++sweep) {
        bool changed = false;
        for (size_t lo = 0; lo < static_cast<size_t>(row); lo += kGroup) {
            const size_t hi = std::min<size_t>(lo + kGroup, static_cast<size_t>(row));
            changed = group_reset(oracle, x, y, cur, order, imgs, lo, hi, row) || changed;
        }
        if (!changed) break;
    }

    // phase 2: per-dimension binary search toward the original value
    constexpr int kBisect = 8;
    constexpr float kTol = 1e-3f;
    for (int sweep = 0; sweep < 3; ++sweep) {
        bool improved = false;
        for (std::int64_t pos = 0; pos < row; ++pos) {
            std::vector<int> active;
            for (int img : imgs) {
                const int dim = order[static_cast<size_t>(img)][static_cast<size_t>(pos)];
                if (std::fabs(cur[img * row + dim] - x[img * row + dim]) > kTol) active.push_back(img);
            }
            if (active.empty()) continue;
            std::vector<float> lo_v(active.size()), hi_v(active.size());
            for (size_t i = 0; i < active.size(); ++i) {
                const int img = active[i];
                const int dim = order[static_cast<size_t>(img)][static_cast<size_t>(pos)];
                lo_v[i] = x[img * row + dim];        // original side: classified
                hi_v[i] = cur[img * row + dim];      // adversarial side: misclassified
            }
            for (int b = 0; b < kBisect; ++b) {
                Tensor batch(shape_with_rows(x, static_cast<int>(active.size())));
                for (size_t i = 0; i < active.size(); ++i) {
                    const int img = active[i];
                    const int dim = order[static_cast<size_t>(img)][static_cast<size_t>(pos)];
                    std::copy_n(cur.data() + img * row, row, batch.data() + static_cast<std::int64_t>(i) * row);
                    batch[static_cast<std::int64_t>(i) * row + dim] = 0.5f * (lo_v[i] + hi_v[i]);
                }
                const std::vector<int> now = oracle.labels(batch);
                for (size_t i = 0; i < active.size(); ++i) {
                    const float mid = 0.5f * (lo_v[i] + hi_v[i]);
                    if (now[i] != y[static_cast<size_t>(active[i])])
                        hi_v[i] = mid;
                    else
                        lo_v[i] = mid;
                }
            }
            for (size_t i = 0; i < active.size(); ++i) {
                const int img = active[i];
                const int dim = order[static_cast<size_t>(img)][static_cast<size_t>(pos)];
                if (hi_v[i] != cur[img * row + dim]) improved = true;
                cur[img * row + dim] = hi_v[i];  // misclassified end of the bracket
            }
        }
        if (!improved) break;
    }
    return res;
}

// ---------------------------------------------------------------------------
// suite

PairDataset run_attack(Classifier& clf, const ImageSet& set, const AttackSpec& spec, int max_images,
                       AttackRunStats* stats_out) {
    spec.validate();
    if (spec.name.empty()) throw std::invalid_argument("run_attack: attack name missing");

    PairDataset pairs;
    pairs.attack_name = spec.name;
    pairs.attack_params = spec.params_string();

    // attack only what the model classifies correctly
    std::vector<int> correct;
    if (set.count() > 0) {
        const std::vector<int> pred = predict_labels(clf, set.images);
        for (int i = 0; i < set.count(); ++i) {
            if (pred[static_cast<size_t>(i)] == set.labels[static_cast<size_t>(i)]) correct.push_back(i);
            if (max_images > 0 && static_cast<int>(correct.size()) >= max_images) break;
        }
    }
    if (correct.empty()) {
        // empty result; ASR undefined
        pairs.benign.images = Tensor({0, 28, 28, 1});
        pairs.adversarial = pairs.benign.images;
        if (stats_out) *stats_out = AttackRunStats{};
        return pairs;
    }
    pairs.benign = set.select(correct);
    const std::vector<int>& y = pairs.benign.labels;
    const Tensor& x = pairs.benign.images;

    PredictOracle oracle(clf);
    if (spec.name == "fgsm") {
        pairs.adversarial = fgsm(clf, x, y, spec.epsilon);
    } else if (spec.name == "bim") {
        pairs.adversarial = bim(clf, x, y, spec.epsilon, spec.step_size, spec.iterations);
    } else if (spec.name == "mifgsm") {
        pairs.adversarial = mi_fgsm(clf, x, y, spec.epsilon, spec.step_size, spec.iterations,
                                    spec.decay_factor);
    } else if (spec.name == "pgd") {
        pairs.adversarial = pgd(clf, x, y, spec.epsilon, spec.step_size, spec.iterations, spec.seed);
    } else if (spec.name == "deepfool") {
        pairs.adversarial = deepfool(clf, x, y, spec.overshoot, spec.max_iter);
    } else if (spec.name == "auna") {
        pairs.adversarial = auna(oracle, x, y, spec.seed).images;
    } else if (spec.name == "cra") {
        pairs.adversarial = cra(oracle, x, y, spec.schedule_steps).images;
    } else if (spec.name == "pwa") {
        pairs.adversarial = pwa(oracle, x, y, spec.seed).images;
    } else {
        throw std::invalid_argument("run_attack: unknown attack '" + spec.name + "'");
    }

    const std::vector<int> adv_pred = predict_labels(clf, pairs.adversarial);
    pairs.success.resize(static_cast<size_t>(pairs.count()));
    for (int i = 0; i < pairs.count(); ++i)
        pairs.success[static_cast<size_t>(i)] = adv_pred[static_cast<size_t>(i)] != y[static_cast<size_t>(i)];

    AttackRunStats stats;
    stats.attacked = pairs.count();
    stats.succeeded = pairs.success_count();
    stats.asr_defined = stats.attacked > 0;
    stats.asr = stats.attacked ? static_cast<double>(stats.succeeded) / stats.attacked : 0.0;
    const std::int64_t row = x.size() / std::max(1, pairs.count());
    double l2_sum = 0.0, px_sum = 0.0;
    for (int i = 0; i < pairs.count(); ++i) {
        if (!pairs.success[static_cast<size_t>(i)]) continue;
        double l2 = 0.0, l1 = 0.0;
        for (std::int64_t j = 0; j < row; ++j) {
            const double d = static_cast<double>(pairs.adversarial[i * row + j]) - x[i * row + j];
            l2 += d * d;
            l1 += std::fabs(d);
        }
        l2_sum += std::sqrt(l2);
        px_sum += l1 / static_cast<double>(row);
    }
    if (stats.succeeded > 0) {
        stats.mean_rho_l2 = l2_sum / stats.succeeded;
        stats.mean_rho_pixel = px_sum / stats.succeeded;
    }
    if (stats_out) *stats_out = stats;
    return pairs;
}

}  // namespace sfelab
