#ifndef TABGPT_RNG_HPP
#define TABGPT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tabgpt {

// mt19937_64 output is fully specified by the standard; the helpers below
// avoid std::uniform_*_distribution, whose results vary across library
// implementations. Keeps runs byte-reproducible for a fixed seed.
using Rng = std::mt19937_64;

inline double uniform01(Rng& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform in [0, n). Modulo bias is irrelevant for n << 2^64.
inline std::size_t uniform_index(Rng& g, std::size_t n) {
    return static_cast<std::size_t>(g() % n);
}

// Box-Muller, one sample per call.
inline double normal01(Rng& g) {
    double u1 = uniform01(g);
    double u2 = uniform01(g);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(g, i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace tabgpt

#endif
