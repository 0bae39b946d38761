#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vogcl {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Seed of the named stream `name` under `master`. Streams with different
// names are independent, so e.g. toggling augmentation leaves the
// curriculum draws untouched.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);

inline Rng make_stream(std::uint64_t master, std::string_view name) { return Rng(derive_seed(master, name)); }

// Uniform double in the open interval (0, 1) built from the top 53 bits.
double uniform_open01(Rng& rng);

// Standard normal via Box-Muller, so the sequence does not depend on the
// standard library's distribution implementation.
double standard_normal(Rng& rng);

// Uniform integer in [0, n) by rejection.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace vogcl
