#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "vogcl/errors.hpp"
#include "vogcl/io.hpp"
#include "vogcl/vog.hpp"

using namespace vogcl;

namespace {

std::vector<Tensor> random_maps(testutil::Gen& gen, std::size_t k, std::size_t h, std::size_t w) {
    std::vector<Tensor> maps;
    for (std::size_t i = 0; i < k; ++i) maps.push_back(gen.tensor({h, w}, -1, 1));
    return maps;
}

// Per-pixel standard deviation (population) averaged over pixels.
double vog_oracle(const std::vector<Tensor>& maps, bool literal) {
    const std::size_t k = maps.size(), n = maps[0].numel();
    double total = 0.0;
    for (std::size_t px = 0; px < n; ++px) {
        double mu = 0.0;
        for (const auto& m : maps) mu += m[px];
        mu /= static_cast<double>(k);
        double ss = 0.0;
        for (const auto& m : maps) ss += (m[px] - mu) * (m[px] - mu);
        total += literal ? std::sqrt(1.0 / static_cast<double>(k)) * ss : std::sqrt(ss / static_cast<double>(k));
    }
    return total / static_cast<double>(n);
}

std::vector<std::size_t> ranks_of(const std::vector<double>& scores) {
    std::vector<std::pair<std::string, double>> named;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "s%05zu", i);
        named.emplace_back(id, scores[i]);
    }
    std::vector<std::size_t> r;
    for (const auto& v : rank_samples(named)) r.push_back(v.rank);
    return r;
}

Dataset small_dataset(std::uint64_t seed) {
    SyntheticOptions o;
    o.profile = {{"normal", 6}, {"bar", 5}, {"ring", 5}};
    o.height = 8;
    o.width = 8;
    o.seed = seed;
    return generate_synthetic(o);
}

std::vector<ModelCheckpoint> checkpoints_for(const Dataset& d, std::initializer_list<std::uint64_t> seeds) {
    std::vector<ModelCheckpoint> out;
    std::size_t epoch = 1;
    for (auto s : seeds) {
        ModelArch a = default_arch(1, d.samples[0].image.dim(1), d.samples[0].image.dim(2), d.num_classes());
        a.conv_blocks = {{3, 3, 2}};
        a.dense_widths = {6, d.num_classes()};
        out.push_back(make_checkpoint(build_model(a, s), epoch++, 0));
    }
    return out;
}

}  // namespace

TEST(ComputeVog, HandExamples) {
    const std::vector<Tensor> same{Tensor({2, 2}, 0.3), Tensor({2, 2}, 0.3), Tensor({2, 2}, 0.3)};
    EXPECT_EQ(compute_vog(same), 0.0);
    const std::vector<Tensor> one_px{Tensor({1, 1}, {0.0}), Tensor({1, 1}, {2.0})};
    EXPECT_DOUBLE_EQ(compute_vog(one_px), 1.0);
    const std::vector<Tensor> two_px{Tensor({1, 2}, {0.0, 0.0}), Tensor({1, 2}, {2.0, 0.0})};
    EXPECT_DOUBLE_EQ(compute_vog(two_px), 0.5);
}

TEST(ComputeVog, MatchesOracleForBothFormulas) {
    testutil::Gen gen(51);
    for (int trial = 0; trial < 100; ++trial) {
        const auto maps = random_maps(gen, gen.between(2, 6), gen.between(1, 8), gen.between(1, 8));
        EXPECT_NEAR(compute_vog(maps, VogFormula::standard), vog_oracle(maps, false), 1e-13);
        EXPECT_NEAR(compute_vog(maps, VogFormula::literal), vog_oracle(maps, true), 1e-13);
        EXPECT_GE(compute_vog(maps), 0.0);
    }
}

TEST(ComputeVog, ErrorsOnFewMapsOrShapeMismatch) {
    const std::vector<Tensor> one{Tensor({2, 2}, 0.0)};
    EXPECT_THROW(compute_vog(one), ContractError);
    const std::vector<Tensor> mixed{Tensor({2, 2}, 0.0), Tensor({2, 3}, 0.0)};
    EXPECT_THROW(compute_vog(mixed), DimensionError);
}

TEST(ComputeVog, PositiveScalingScalesScore) {
    testutil::Gen gen(52);
    for (int trial = 0; trial < 50; ++trial) {
        auto maps = random_maps(gen, 3, 4, 4);
        const double c = gen.uniform(0.01, 100);
        const double before = compute_vog(maps);
        for (auto& m : maps)
            for (double& v : m.data()) v *= c;
        EXPECT_NEAR(compute_vog(maps), c * before, 1e-12 * std::max(1.0, c * before));
    }
}

TEST(ComputeVog, ScalingLeavesRanksAlone) {
    testutil::Gen gen(53);
    std::vector<std::vector<Tensor>> sets;
    for (int s = 0; s < 40; ++s) sets.push_back(random_maps(gen, 3, 3, 3));
    std::vector<double> a, b;
    for (auto& set : sets) {
        a.push_back(compute_vog(set));
        for (auto& m : set)
            for (double& v : m.data()) v *= 3.5;
        b.push_back(compute_vog(set));
    }
    EXPECT_EQ(ranks_of(a), ranks_of(b));
}

TEST(ComputeVog, CheckpointOrderDoesNotMatter) {
    testutil::Gen gen(54);
    for (int trial = 0; trial < 50; ++trial) {
        auto maps = random_maps(gen, gen.between(2, 5), 5, 5);
        const double base = compute_vog(maps);
        std::shuffle(maps.begin(), maps.end(), gen.engine());
        EXPECT_NEAR(compute_vog(maps), base, 1e-14);
    }
}

TEST(ComputeVog, LiteralAndStandardRankIdentically) {
    testutil::Gen gen(55);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> std_scores, lit_scores;
        for (int s = 0; s < 30; ++s) {
            // one-pixel maps keep the per-pixel monotonicity argument exact
            const auto maps = random_maps(gen, 3, 1, 1);
            std_scores.push_back(compute_vog(maps, VogFormula::standard));
            lit_scores.push_back(compute_vog(maps, VogFormula::literal));
        }
        EXPECT_EQ(ranks_of(std_scores), ranks_of(lit_scores));
        EXPECT_EQ(spearman(std_scores, lit_scores), 1.0);
    }
}

TEST(RankSamples, HandExample) {
    const std::vector<std::pair<std::string, double>> s{{"a", 0.5}, {"b", 0.9}, {"c", 0.1}};
    const auto r = rank_samples(s);
    EXPECT_EQ(r[0].rank, 2u);
    EXPECT_EQ(r[1].rank, 1u);
    EXPECT_EQ(r[2].rank, 3u);
    EXPECT_NEAR(r[1].difficulty, 200.0 / 3.0, 1e-12);
    EXPECT_NEAR(r[1].difficulty, 66.667, 1e-3);
    EXPECT_EQ(r[2].difficulty, 0.0);
}

TEST(RankSamples, TiesGoByAscendingId) {
    const std::vector<std::pair<std::string, double>> s{{"z", 1.0}, {"b", 1.0}, {"m", 1.0}, {"a", 1.0}};
    const auto r = rank_samples(s);
    EXPECT_EQ(r[3].rank, 1u);  // a
    EXPECT_EQ(r[1].rank, 2u);  // b
    EXPECT_EQ(r[2].rank, 3u);  // m
    EXPECT_EQ(r[0].rank, 4u);  // z
}

TEST(RankSamples, RanksArePermutationAndMonotone) {
    testutil::Gen gen(56);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = gen.between(1, 200);
        std::vector<std::pair<std::string, double>> s;
        for (std::size_t i = 0; i < n; ++i)
            s.emplace_back("id" + std::to_string(gen.index(100000)) + "_" + std::to_string(i),
                           gen.coin() ? gen.uniform(0, 1) : 0.5);
        const auto r = rank_samples(s);
        std::vector<const VogResult*> by_rank(n, nullptr);
        for (const auto& v : r) {
            ASSERT_GE(v.rank, 1u);
            ASSERT_LE(v.rank, n);
            ASSERT_EQ(by_rank[v.rank - 1], nullptr);
            by_rank[v.rank - 1] = &v;
            EXPECT_NEAR(v.difficulty, static_cast<double>(n - v.rank) / static_cast<double>(n) * 100.0, 1e-12);
        }
        for (std::size_t k = 0; k + 1 < n; ++k) EXPECT_GE(by_rank[k]->vog_score, by_rank[k + 1]->vog_score);
    }
}

TEST(RankSamples, NonFiniteScoreNamesSample) {
    const std::vector<std::pair<std::string, double>> s{{"ok", 1.0}, {"broken_7", std::nan("")}};
    try {
        rank_samples(s);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("broken_7"), std::string::npos);
    }
}

TEST(ClassLevel, MeansOfDifficulty) {
    const std::vector<std::pair<std::string, double>> s{{"x", 2.0}, {"y", 1.0}};
    const auto r = rank_samples(s);
    const auto c = class_level_scores(r, {{"x", 0}, {"y", 0}}, 2);
    ASSERT_TRUE(c[0].has_value());
    EXPECT_DOUBLE_EQ(*c[0], 25.0);
    EXPECT_FALSE(c[1].has_value());

    const std::vector<std::pair<std::string, double>> four{{"a", 4}, {"b", 3}, {"c", 2}, {"d", 1}};
    const auto r4 = rank_samples(four);
    const auto c4 = class_level_scores(r4, {{"a", 0}, {"b", 1}, {"c", 2}, {"d", 3}}, 4);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(*c4[k], r4[k].difficulty);
    // {a, d} and {b, c} hold the same rank multiset up to symmetry 1+4 = 2+3
    const auto c2 = class_level_scores(r4, {{"a", 0}, {"d", 0}, {"b", 1}, {"c", 1}}, 2);
    EXPECT_DOUBLE_EQ(*c2[0], *c2[1]);
}

TEST(ScoresFile, RoundTripsThroughCsv) {
    testutil::TempDir dir("scores");
    testutil::Gen gen(57);
    std::vector<std::pair<std::string, double>> s;
    for (int i = 0; i < 30; ++i) s.emplace_back("s" + std::to_string(i), gen.uniform(0, 1e-3));
    const auto r = rank_samples(s);
    write_file(dir.path() / "v.csv", scores_csv(r));
    const auto back = read_scores_csv(dir.path() / "v.csv");
    EXPECT_EQ(back, s);
    const std::string text = read_file(dir.path() / "v.csv");
    EXPECT_EQ(text.substr(0, text.find('\n')), "sample_id,vog_score,rank,difficulty");
}

TEST(ScoresFile, ExternalFileMayOmitRankColumns) {
    testutil::TempDir dir("ext");
    write_file(dir.path() / "e.csv", "sample_id,vog_score,rank,difficulty\na,3,,\nb,1,,\n");
    const auto s = read_scores_csv(dir.path() / "e.csv");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].second, 3.0);
    write_file(dir.path() / "bad.csv", "id,score\na,3\n");
    EXPECT_THROW(read_scores_csv(dir.path() / "bad.csv"), DataError);
}

TEST(GradientMaps, OneCheckpointIsContractError) {
    const Dataset d = small_dataset(1);
    const auto ck = checkpoints_for(d, {1});
    EXPECT_THROW(compute_gradient_maps(ck, d, ClassChoice::true_label), ContractError);
}

TEST(GradientMaps, MixedArchsAreCheckpointErrors) {
    const Dataset d = small_dataset(1);
    auto ck = checkpoints_for(d, {1, 2});
    ModelArch other = ck[1].arch;
    other.dense_widths = {4, d.num_classes()};
    ck[1] = make_checkpoint(build_model(other, 2), 2, 0);
    EXPECT_THROW(compute_gradient_maps(ck, d, ClassChoice::true_label), CheckpointError);
}

TEST(GradientMaps, IdenticalCheckpointsGiveZeroScores) {
    const Dataset d = small_dataset(2);
    const auto ck = checkpoints_for(d, {4, 4, 4});
    const auto maps = compute_gradient_maps(ck, d, ClassChoice::true_label);
    ASSERT_EQ(maps.size(), d.size());
    for (const auto& per : maps) {
        ASSERT_EQ(per.size(), 3u);
        EXPECT_EQ(per[0].values, per[1].values);
        EXPECT_EQ(compute_vog(per), 0.0);
    }
    VogOptions o;
    for (double s : compute_vog_scores(ck, d, o)) EXPECT_EQ(s, 0.0);
}

TEST(GradientMaps, TrueAndPredictedClassUseTheRightLogit) {
    const Dataset d = small_dataset(3);
    const auto ck = checkpoints_for(d, {5, 6, 7});
    const auto t = compute_gradient_maps(ck, d, ClassChoice::true_label);
    const auto p = compute_gradient_maps(ck, d, ClassChoice::predicted);
    const Model latest = ck.back().to_model();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& img = d.samples[i].image;
        const Tensor logits = forward(latest, img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
        std::size_t arg = 0;
        for (std::size_t j = 1; j < logits.numel(); ++j)
            if (logits[j] > logits[arg]) arg = j;
        for (std::size_t k = 0; k < ck.size(); ++k) {
            const Model m = ck[k].to_model();
            EXPECT_EQ(t[i][k].values, input_gradient(m, img, d.samples[i].label));
            EXPECT_EQ(p[i][k].values, input_gradient(m, img, arg));
            EXPECT_EQ(t[i][k].checkpoint_epoch, ck[k].epoch);
            EXPECT_EQ(t[i][k].sample_id, d.samples[i].id);
        }
    }
}

TEST(VogScores, StreamingAndThreadedMatchMaps) {
    const Dataset d = small_dataset(4);
    const auto ck = checkpoints_for(d, {8, 9, 10});
    const auto maps = compute_gradient_maps(ck, d, ClassChoice::true_label);
    VogOptions one;
    one.batch_size = 5;
    VogOptions many = one;
    many.threads = 4;
    many.batch_size = 3;
    const auto a = compute_vog_scores(ck, d, one);
    const auto b = compute_vog_scores(ck, d, many);
    ASSERT_EQ(a.size(), d.size());
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(a[i], compute_vog(maps[i]));
}

TEST(VogScores, PerClassNormalization) {
    const std::vector<double> s{1, 2, 3, 10, 10};
    const std::vector<std::size_t> l{0, 0, 0, 1, 1};
    const auto z = normalize_per_class(s, l);
    EXPECT_NEAR(z[0] + z[1] + z[2], 0.0, 1e-12);
    EXPECT_LT(z[0], z[2]);
    EXPECT_EQ(z[3], 0.0);
    EXPECT_EQ(z[4], 0.0);
}

TEST(Spearman, KnownValues) {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{5, 6, 7, 8, 7};
    const std::vector<double> rev{5, 4, 3, 2, 1};
    EXPECT_DOUBLE_EQ(spearman(a, a), 1.0);
    EXPECT_DOUBLE_EQ(spearman(a, rev), -1.0);
    // average ranks b -> {1, 2, 3.5, 5, 3.5}; Pearson of ranks by hand
    EXPECT_NEAR(spearman(a, b), 0.82078268166812329, 1e-12);
}
