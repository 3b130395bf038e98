#include <doctest.h>

#include <cmath>
#include <vector>

#include "sfelab/losses.hpp"
#include "sfelab/rng.hpp"

using namespace sfelab;

TEST_CASE("mse matches hand values") {
    CHECK(mse(Tensor({2}, {1, 2}), Tensor({2}, {1, 2})) == doctest::Approx(0.0));
    CHECK(mse(Tensor({2}, {0, 0}), Tensor({2}, {2, 2})) == doctest::Approx(4.0));
    CHECK_THROWS(mse(Tensor({2}), Tensor({3})));
}

TEST_CASE("mse matches an independent scalar loop on random 128-d pairs") {
    Rng rng(101);
    Tensor a({128}), b({128});
    for (int i = 0; i < 128; ++i) {
        a[i] = rng.uniform(-3.0f, 3.0f);
        b[i] = rng.uniform(-3.0f, 3.0f);
    }
    double want = 0.0;
    for (int i = 0; i < 128; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        want += d * d;
    }
    want /= 128.0;
    CHECK(mse(a, b) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("mse gradient is zero at the minimum") {
    Tensor x({3}, {0.5f, -1.0f, 2.0f});
    Tensor g = mse_grad(x, x);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == 0.0f);
}

TEST_CASE("binary cross-entropy analytic points") {
    CHECK(bce(1.0f - 1e-7f, 1) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(bce(0.5f, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(bce(0.5f, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    // clamping keeps the extremes finite
    CHECK(std::isfinite(bce(0.0f, 1)));
    CHECK(std::isfinite(bce(1.0f, 0)));
}

TEST_CASE("categorical cross-entropy analytic points") {
    Tensor uniform({10});
    uniform.fill(0.1f);
    CHECK(categorical_ce(uniform, 3, ScoreKind::probs) == doctest::Approx(std::log(10.0)).epsilon(1e-6));

    Tensor onehot({10});
    onehot[4] = 1.0f;
    CHECK(categorical_ce(onehot, 4, ScoreKind::probs) == doctest::Approx(0.0).epsilon(1e-5));

    Tensor zeros({10});
    CHECK(categorical_ce(zeros, 0, ScoreKind::logits) == doctest::Approx(std::log(10.0)).epsilon(1e-6));

    CHECK_THROWS(categorical_ce(uniform, 10, ScoreKind::probs));
    CHECK_THROWS(categorical_ce(uniform, -1, ScoreKind::probs));
}

TEST_CASE("categorical cross-entropy on logits matches a softmax-then-log loop") {
    Rng rng(77);
    const int n = 5, k = 10;
    Tensor logits({n, k});
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) logits.at(i, c) = rng.uniform(-4.0f, 4.0f);
        labels[static_cast<size_t>(i)] = rng.uniform_int(k);
    }
    double want = 0.0;
    for (int i = 0; i < n; ++i) {
        double denom = 0.0;
        for (int c = 0; c < k; ++c) denom += std::exp(static_cast<double>(logits.at(i, c)));
        const double p = std::exp(static_cast<double>(logits.at(i, labels[static_cast<size_t>(i)]))) / denom;
        want += -std::log(p);
    }
    want /= n;
    CHECK(categorical_ce(logits, std::span<const int>(labels), ScoreKind::logits) ==
          doctest::Approx(want).epsilon(1e-6));
}
