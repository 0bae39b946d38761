#include "vogcl/rng.hpp"

#include <cmath>
#include <numbers>

namespace vogcl {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
    return mix64(mix64(master) ^ fnv1a64(name));
}

double uniform_open01(Rng& rng) {
    std::uint64_t bits = 0;
    do {
        bits = rng() >> 11;
    } while (bits == 0);
    return static_cast<double>(bits) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    const double u1 = uniform_open01(rng);
    const double u2 = uniform_open01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    std::uint64_t v = 0;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

}  // namespace vogcl
