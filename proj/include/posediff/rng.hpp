#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "posediff/tensor_blob.hpp"

namespace posediff {

// splitmix64; used both for seed derivation and per-frame seed hashing.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic generator. Gaussian sampling is a hand-rolled Box-Muller so
// streams are reproducible across standard libraries (std::normal_distribution
// is implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    double uniform() {
        // 53-bit mantissa uniform in [0,1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n)
    uint64_t integer(uint64_t n) {
        // Rejection-free modulo is fine here; n is tiny relative to 2^64.
        return engine_() % n;
    }

    Rng fork(uint64_t stream) { return Rng(mix_seed(engine_(), stream)); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline void fill_normal(TensorBlob& blob, Rng& rng) {
    for (float& v : blob.f32) v = static_cast<float>(rng.normal());
}

inline TensorBlob normal_blob(std::vector<int64_t> shape, Rng& rng) {
    TensorBlob b = TensorBlob::zeros(std::move(shape));
    fill_normal(b, rng);
    return b;
}

}  // namespace posediff
