#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace advdet {

// Seeded RNG helpers built directly on mt19937 output words so that every
// draw is reproducible across standard libraries. std:: distributions are
// implementation-defined and would silently break checkpoint determinism.
class Rng {
public:
    explicit Rng(std::uint32_t seed) : engine_(seed) {}

    std::uint32_t next_u32() { return engine_(); }

    // Uniform in [0,1) with 24 bits of mantissa.
    float uniform() { return static_cast<float>(engine_() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Lemire-style multiply-shift (slightly biased
    // for huge n, irrelevant at our scales).
    std::uint32_t below(std::uint32_t n) {
        return static_cast<std::uint32_t>((static_cast<std::uint64_t>(engine_()) * n) >> 32);
    }

    // Box-Muller; one draw per call, no cached spare (keeps the stream simple).
    float normal(float mean, float stddev) {
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        float z = std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530717958647692f * u2);
        return mean + stddev * z;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(static_cast<std::uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 engine_;
};

}  // namespace advdet
