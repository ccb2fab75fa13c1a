#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace negtome {

// SplitMix64. Every stream in this project derives from these exact update
// equations, so any implementation in any language reproduces the streams:
//
//   state <- state + 0x9E3779B97F4A7C15
//   z <- state
//   z <- (z xor (z >> 30)) * 0xBF58476D1CE4E5B9
//   z <- (z xor (z >> 27)) * 0x94D049BB133111EB
//   output <- z xor (z >> 31)
//
// uniform01() = (output >> 11) * 2^-53, in [0, 1).
// gaussian() uses Box-Muller on uniform pairs (u1, u2):
//   r = sqrt(-2 ln(1 - u1)), z0 = r cos(2 pi u2), z1 = r sin(2 pi u2)
// with z1 cached for the next call. All intermediate math is f64.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Derives an independent sub-seed: fold each tag into the state and step the
// generator once per tag. derive_seed(s, {a, b}) != derive_seed(s, {b, a})
// in general, which keeps streams for distinct (purpose, index) tuples apart.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags) {
    uint64_t s = base;
    for (uint64_t tag : tags) {
        SplitMix64 g(s ^ tag);
        s = g.next();
    }
    return s;
}

} // namespace negtome
