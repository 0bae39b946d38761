#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vogcl/tensor.hpp"

namespace testutil {

// Small hand-rolled generators; everything seeded so failures replay.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    std::size_t between(std::size_t lo, std::size_t hi) { return lo + index(hi - lo + 1); }
    bool coin() { return index(2) == 1; }

    vogcl::Tensor tensor(vogcl::Shape shape, double lo = -1.0, double hi = 1.0) {
        vogcl::Tensor t(std::move(shape));
        for (double& v : t.data()) v = uniform(lo, hi);
        return t;
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        std::shuffle(p.begin(), p.end(), rng_);
        return p;
    }

    // Ranks 1..n in random order.
    std::vector<std::size_t> ranks(std::size_t n) {
        auto p = permutation(n);
        for (auto& r : p) ++r;
        return p;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("vogcl_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
