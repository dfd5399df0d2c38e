#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace srkit {

// Deterministic RNG with explicit float mapping. std::mt19937_64 output is
// pinned by the standard; the distributions below avoid the
// implementation-defined std::*_distribution classes so that seeded weights
// and test inputs are identical across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) { // inclusive bounds
        return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo + 1));
    }

    // He-style uniform init: limit = sqrt(6 / fan_in)
    float he_uniform(int fan_in) {
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        return static_cast<float>(uniform(-limit, limit));
    }

private:
    std::mt19937_64 gen_;
};

} // namespace srkit
