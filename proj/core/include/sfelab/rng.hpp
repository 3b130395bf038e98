// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace sfelab {

/// Deterministic random source. All draws are derived from raw mt19937
/// words rather than std distributions, so streams are bit-identical
/// across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

    std::uint32_t next_u32() { return engine_(); }

    /// Uniform in [0, 1) with 24 bits of mantissa.
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n > 0.
    int uniform_int(int n) {
        return static_cast<int>((static_cast<std::uint64_t>(next_u32()) * static_cast<std::uint64_t>(n)) >> 32);
    }

    /// Standard normal via Box-Muller.
    float normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(i + 1))]);
        }
    }

    /// Mixes a stream id into a seed so pipeline stages draw from
    /// independent, individually reproducible streams (splitmix64 step).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937 engine_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace sfelab
