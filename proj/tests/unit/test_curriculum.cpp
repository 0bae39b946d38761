#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "helpers.hpp"
#include "vogcl/curriculum.hpp"
#include "vogcl/errors.hpp"

using namespace vogcl;

namespace {

std::vector<std::size_t> argsort(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return idx;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(InitProbabilities, FourRanks) {
    const std::vector<std::size_t> ranks{1, 2, 3, 4};
    const auto p = init_probabilities(ranks, CurriculumMode::curriculum);
    const std::vector<double> expect{0.1, 0.2, 0.3, 0.4};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], expect[i], 1e-15);
    const auto anti = init_probabilities(ranks, CurriculumMode::anti_curriculum);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(anti[i], expect[3 - i], 1e-15);
}

TEST(InitProbabilities, SingleSample) {
    const std::vector<std::size_t> ranks{1};
    EXPECT_EQ(init_probabilities(ranks, CurriculumMode::curriculum), std::vector<double>{1.0});
}

TEST(InitProbabilities, NonPermutationIsContractError) {
    EXPECT_THROW(init_probabilities(std::vector<std::size_t>{1, 1, 3}, CurriculumMode::curriculum), ContractError);
    EXPECT_THROW(init_probabilities(std::vector<std::size_t>{0, 1, 2}, CurriculumMode::curriculum), ContractError);
    EXPECT_THROW(init_probabilities(std::vector<std::size_t>{1, 2, 4}, CurriculumMode::curriculum), ContractError);
    EXPECT_THROW(init_probabilities(std::vector<std::size_t>{}, CurriculumMode::curriculum), ContractError);
}

TEST(InitProbabilities, EasierMeansMoreLikelyAndAntiIsReversal) {
    testutil::Gen gen(41);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = gen.between(2, 300);
        const auto ranks = gen.ranks(n);
        const auto p = init_probabilities(ranks, CurriculumMode::curriculum);
        const auto a = init_probabilities(ranks, CurriculumMode::anti_curriculum);
        EXPECT_NEAR(sum(p), 1.0, 1e-12);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; j += 7) {
                if (ranks[i] < ranks[j]) {
                    EXPECT_LT(p[i], p[j]);
                }
            }
            // sample with rank r gets the curriculum weight of rank N+1-r
            const auto mirror = std::find(ranks.begin(), ranks.end(), n + 1 - ranks[i]) - ranks.begin();
            EXPECT_EQ(a[i], p[static_cast<std::size_t>(mirror)]);
        }
    }
}

TEST(Lambda, HandValues) {
    EXPECT_NEAR(compute_lambda(0.1, 4, 2), std::sqrt(2.5), 1e-15);
    EXPECT_NEAR(compute_lambda(0.1, 4, 2), 1.5811388, 1e-7);
    EXPECT_EQ(compute_lambda(0.25, 4, 7), 1.0);
    EXPECT_THROW(compute_lambda(0.1, 4, 0), ContractError);
}

TEST(Lambda, ReachesUniformAfterHorizon) {
    testutil::Gen gen(42);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = gen.between(2, 1000), L = gen.between(1, 30);
        const double p1 = gen.uniform(1e-6, 1.0);
        EXPECT_NEAR(p1 * std::pow(compute_lambda(p1, n, L), static_cast<double>(L)), 1.0 / static_cast<double>(n),
                    1e-12);
    }
}

TEST(Schedule, WorkedExample) {
    const std::vector<std::size_t> ranks{1, 2, 3, 4};
    CurriculumSchedule s(ranks, 2, CurriculumMode::curriculum);
    EXPECT_EQ(s.epoch(), 1u);
    // Long-hand: p * sqrt(0.25 / p), then divide by the sum.
    std::vector<double> raw;
    for (double p : {0.1, 0.2, 0.3, 0.4}) raw.push_back(p * std::sqrt(0.25 / p));
    const std::vector<double> printed_raw{0.158114, 0.223607, 0.273861, 0.316228};
    const auto got_raw = s.next_unnormalized();
    const double total = sum(raw);
    s.advance_epoch();
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(got_raw[i], raw[i], 1e-15);
        EXPECT_NEAR(got_raw[i], printed_raw[i], 1e-6);
        EXPECT_NEAR(s.probabilities()[i], raw[i] / total, 1e-15);
        // closed form: with L=2 the epoch-2 weights are proportional to sqrt(rank)
        EXPECT_NEAR(s.probabilities()[i], std::sqrt(static_cast<double>(i + 1)) / (3 + std::sqrt(2.0) + std::sqrt(3.0)), 1e-15);
    }
    s.advance_epoch();
    EXPECT_EQ(s.epoch(), 3u);
    for (double p : s.probabilities()) EXPECT_EQ(p, 0.25);
}

TEST(Schedule, UniformIsAFixedPoint) {
    std::vector<std::size_t> ranks(1, 1);
    CurriculumSchedule s(ranks, 3, CurriculumMode::curriculum);
    s.advance_epoch();
    EXPECT_EQ(s.probabilities(), std::vector<double>{1.0});
    for (double l : s.lambdas()) EXPECT_EQ(l, 1.0);
}

TEST(Schedule, OrderPreservedAndContracting) {
    testutil::Gen gen(44);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = gen.between(2, 500), L = gen.between(1, 30);
        const auto mode = gen.coin() ? CurriculumMode::curriculum : CurriculumMode::anti_curriculum;
        CurriculumSchedule s(gen.ranks(n), L, mode);
        const auto order = argsort(s.probabilities());
        double ratio = *std::max_element(s.probabilities().begin(), s.probabilities().end()) /
                       *std::min_element(s.probabilities().begin(), s.probabilities().end());
        for (std::size_t e = 2; e <= L + 2; ++e) {
            s.advance_epoch();
            const auto& p = s.probabilities();
            EXPECT_NEAR(sum(p), 1.0, 1e-12);
            for (double v : p) EXPECT_GT(v, 0.0);
            if (e <= L) {
                EXPECT_EQ(argsort(p), order);
            } else {
                for (double v : p) EXPECT_EQ(v, 1.0 / static_cast<double>(n));
            }
            const double r = *std::max_element(p.begin(), p.end()) / *std::min_element(p.begin(), p.end());
            EXPECT_LE(r, ratio * (1 + 1e-12));
            ratio = r;
        }
    }
}

TEST(Sampler, AlwaysABijection) {
    testutil::Gen gen(45);
    Rng rng(45);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = gen.between(1, 200);
        std::vector<double> w(n);
        for (auto& v : w) v = gen.uniform(1e-9, 1.0);
        auto perm = sample_permutation(w, rng);
        std::sort(perm.begin(), perm.end());
        for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(perm[i], i);
    }
}

TEST(Sampler, DeterministicGivenStreamState) {
    const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
    Rng a(9), b(9);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_permutation(w, a), sample_permutation(w, b));
}

TEST(Sampler, NearDegenerateWeightsAlmostAlwaysLeadWithHeavyItem) {
    const double eps = 1e-9;
    const std::vector<double> w{1 - 2 * eps, eps, eps};
    Rng rng(46);
    int first0 = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) first0 += sample_permutation(w, rng)[0] == 0;
    EXPECT_GE(first0, static_cast<int>(0.9999 * draws));
}

TEST(Sampler, WholePermutationLawMatchesSequentialDraws) {
    // P(a, b, c) = p_a * p_b / (1 - p_a) for sequential draws without replacement.
    const std::vector<double> p{1.0 / 6, 2.0 / 6, 3.0 / 6};
    Rng rng(47);
    const int draws = 100000;
    std::map<std::vector<std::size_t>, int> counts;
    for (int i = 0; i < draws; ++i) ++counts[sample_permutation(p, rng)];
    ASSERT_EQ(counts.size(), 6u);
    for (const auto& [perm, c] : counts) {
        const double q = p[perm[0]] * p[perm[1]] / (1 - p[perm[0]]);
        const double sigma = std::sqrt(draws * q * (1 - q));
        EXPECT_LE(std::abs(c - draws * q), 3 * sigma) << perm[0] << perm[1] << perm[2];
    }
}

TEST(Sampler, NonPositiveWeightIsContractError) {
    Rng rng(1);
    EXPECT_THROW(sample_permutation(std::vector<double>{0.5, 0.0}, rng), ContractError);
}
