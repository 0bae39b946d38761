#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "vogcl/errors.hpp"
#include "vogcl/grad_check.hpp"
#include "vogcl/model.hpp"

using namespace vogcl;

namespace {

// Parameter count from the layer arithmetic alone.
std::size_t count_by_hand(std::size_t c, std::size_t h, std::size_t w, const std::vector<std::size_t>& filters,
                          const std::vector<std::size_t>& dense) {
    std::size_t total = 0;
    for (std::size_t f : filters) {
        total += f * c * 3 * 3 + f;
        c = f;
        h /= 2;
        w /= 2;
    }
    std::size_t in = c * h * w;
    for (std::size_t d : dense) {
        total += in * d + d;
        in = d;
    }
    return total;
}

ModelArch small_arch(testutil::Gen& gen) {
    ModelArch a;
    a.channels = gen.between(1, 3);
    a.height = 4 * gen.between(1, 2);
    a.width = 4 * gen.between(1, 2);
    a.conv_blocks = {{gen.between(1, 4), 3, 2}, {gen.between(1, 4), 3, 2}};
    a.num_classes = gen.between(2, 4);
    a.dense_widths = {gen.between(2, 6), a.num_classes};
    return a;
}

}  // namespace

TEST(Model, DefaultArchParameterCountMatchesLayerArithmetic) {
    const ModelArch arch = default_arch(1, 32, 32, 2);
    EXPECT_EQ(arch.conv_blocks, (std::vector<ConvBlock>{{8, 3, 2}, {16, 3, 2}}));
    EXPECT_EQ(arch.dense_widths, (std::vector<std::size_t>{64, 2}));
    const std::size_t oracle = count_by_hand(1, 32, 32, {8, 16}, {64, 2});
    EXPECT_EQ(oracle, 66978u);
    EXPECT_EQ(parameter_count(arch), oracle);
    EXPECT_EQ(build_model(arch, 1).num_parameters(), oracle);
}

TEST(Model, ParameterCountOnRandomArchs) {
    testutil::Gen gen(21);
    for (int trial = 0; trial < 30; ++trial) {
        const ModelArch a = small_arch(gen);
        std::vector<std::size_t> filters;
        for (const auto& b : a.conv_blocks) filters.push_back(b.filters);
        EXPECT_EQ(parameter_count(a), count_by_hand(a.channels, a.height, a.width, filters, a.dense_widths));
    }
}

TEST(Model, SameSeedSameParameters) {
    const ModelArch arch = default_arch(1, 16, 16, 3);
    const Model a = build_model(arch, 99);
    const Model b = build_model(arch, 99);
    EXPECT_EQ(a.parameters, b.parameters);
    const Model c = build_model(arch, 100);
    EXPECT_NE(a.parameters, c.parameters);
}

TEST(Model, BiasesStartAtZero) {
    const Model m = build_model(default_arch(1, 16, 16, 2), 3);
    for (const auto& p : m.parameters) {
        if (p.name.ends_with(".bias")) {
            for (double v : p.tensor.data()) EXPECT_EQ(v, 0.0) << p.name;
        }
    }
}

TEST(Model, InvalidArchsAreRejected) {
    ModelArch a = default_arch(1, 32, 32, 3);
    a.dense_widths = {64, 2};
    EXPECT_THROW(build_model(a, 0), ArchError);
    a = default_arch(1, 30, 30, 2);
    a.conv_blocks.push_back({4, 3, 2});  // 30 -> 15 -> odd
    EXPECT_THROW(validate_arch(a), ArchError);
    a = default_arch(1, 32, 32, 2);
    a.dense_widths.clear();
    EXPECT_THROW(validate_arch(a), ArchError);
    a = default_arch(1, 32, 32, 2);
    a.num_classes = 0;
    EXPECT_THROW(validate_arch(a), ArchError);
}

TEST(Model, ZeroInputGivesFiniteLogits) {
    const Model m = build_model(default_arch(1, 32, 32, 2), 4);
    const Tensor logits = forward(m, Tensor({2, 1, 32, 32}, 0.0));
    EXPECT_EQ(logits.shape(), (Shape{2, 2}));
    EXPECT_TRUE(logits.all_finite());
}

TEST(Model, WrongBatchShapeIsDimensionError) {
    const Model m = build_model(default_arch(1, 16, 16, 2), 4);
    EXPECT_THROW(forward(m, Tensor({1, 1, 8, 8})), DimensionError);
}

TEST(Model, IdenticalImagesGiveIdenticalRows) {
    testutil::Gen gen(22);
    const Model m = build_model(default_arch(1, 16, 16, 3), 5);
    const Tensor img = gen.tensor({1, 16, 16}, 0, 1);
    Tensor batch({4, 1, 16, 16});
    for (std::size_t b = 0; b < 4; ++b)
        std::copy(img.data().begin(), img.data().end(), batch.data().begin() + static_cast<long>(b * 256));
    const Tensor logits = forward(m, batch);
    for (std::size_t b = 1; b < 4; ++b)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(logits[b * 3 + j], logits[j]);
}

TEST(Model, OnePixelPerturbationMovesLogits) {
    testutil::Gen gen(23);
    const Model m = build_model(default_arch(1, 16, 16, 2), 6);
    Tensor img = gen.tensor({1, 1, 16, 16}, 0.2, 0.8);
    const Tensor a = forward(m, img);
    img[8 * 16 + 8] += 0.3;
    const Tensor b = forward(m, img);
    EXPECT_TRUE(a[0] != b[0] || a[1] != b[1]);
}

TEST(InputGradient, LinearModelGradientIsChannelAveragedWeight) {
    testutil::Gen gen(24);
    for (std::size_t channels : {1u, 3u}) {
        ModelArch a;
        a.channels = channels;
        a.height = 4;
        a.width = 5;
        a.conv_blocks = {};
        a.num_classes = 3;
        a.dense_widths = {3};
        const Model m = build_model(a, 7);
        const Tensor& w = m.parameter("fc1.weight");  // [C*H*W x 3]
        for (std::size_t cls = 0; cls < 3; ++cls) {
            const Tensor g1 = input_gradient(m, gen.tensor({channels, 4, 5}, 0, 1), cls);
            const Tensor g2 = input_gradient(m, gen.tensor({channels, 4, 5}, 0, 1), cls);
            ASSERT_EQ(g1.shape(), (Shape{4, 5}));
            EXPECT_EQ(g1, g2);  // constant in the image
            for (std::size_t px = 0; px < 20; ++px) {
                double mean = 0.0;
                for (std::size_t c = 0; c < channels; ++c) mean += w[(c * 20 + px) * 3 + cls];
                mean /= static_cast<double>(channels);
                EXPECT_NEAR(g1[px], mean, 1e-15);
            }
        }
    }
}

TEST(InputGradient, ClassOutOfRangeIsLabelError) {
    const Model m = build_model(default_arch(1, 8, 8, 2), 1);
    EXPECT_THROW(input_gradient(m, Tensor({1, 8, 8}, 0.5), 2), LabelError);
}

TEST(InputGradient, MatchesFiniteDifferencesOfTheLogit) {
    testutil::Gen gen(25);
    GradCheckOptions opts;
    opts.kink_aware = true;
    for (int trial = 0; trial < 5; ++trial) {
        const ModelArch arch = small_arch(gen);
        const Model m = build_model(arch, gen.index(1000));
        const std::size_t cls = gen.index(arch.num_classes);
        const Tensor img = gen.tensor({arch.channels, arch.height, arch.width}, 0, 1);
        auto logit = [&](const Tensor& x) {
            return forward(m, x.reshaped({1, arch.channels, arch.height, arch.width}))[cls];
        };
        // Summing channel gradients before averaging lets FD on each
        // channel be compared against the map directly.
        auto grad = [&](const Tensor& x) {
            const Tensor map = input_gradient(m, x, cls);
            std::vector<double> g(x.numel());
            const std::size_t hw = arch.height * arch.width;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = map[i % hw] * static_cast<double>(arch.channels);
            return g;
        };
        if (arch.channels == 1) {
            const GradCheckReport r = grad_check(logit, grad, img, 1e-4, opts);
            EXPECT_TRUE(r.passed) << "trial " << trial << " err " << r.max_rel_error;
        } else {
            // Channel-summed FD: perturb every channel of a pixel together.
            const std::size_t hw = arch.height * arch.width;
            const Tensor map = input_gradient(m, img, cls);
            auto f_px = [&](const Tensor& p) {
                Tensor x = img;
                for (std::size_t c = 0; c < arch.channels; ++c)
                    for (std::size_t i = 0; i < hw; ++i) x[c * hw + i] += p[i];
                return logit(x);
            };
            auto g_px = [&](const Tensor&) {
                std::vector<double> g(hw);
                for (std::size_t i = 0; i < hw; ++i) g[i] = map[i] * static_cast<double>(arch.channels);
                return g;
            };
            const GradCheckReport r = grad_check(f_px, g_px, Tensor({hw}, 0.0), 1e-4, opts);
            EXPECT_TRUE(r.passed) << "trial " << trial << " err " << r.max_rel_error;
        }
    }
}

TEST(InputGradient, PureAndNonMutating) {
    testutil::Gen gen(26);
    const Model m = build_model(default_arch(1, 16, 16, 2), 8);
    const auto before = m.parameters;
    const Tensor img = gen.tensor({1, 16, 16}, 0, 1);
    const Tensor a = input_gradient(m, img, 1);
    const Tensor b = input_gradient(m, img, 1);
    EXPECT_EQ(a, b);
    (void)forward(m, img.reshaped({1, 1, 16, 16}));
    EXPECT_EQ(m.parameters, before);
}

TEST(InputGradient, BatchedRowsEqualSingleCalls) {
    testutil::Gen gen(27);
    const Model m = build_model(default_arch(1, 16, 16, 3), 9);
    const Tensor batch = gen.tensor({5, 1, 16, 16}, 0, 1);
    const std::vector<std::size_t> classes{0, 2, 1, 1, 0};
    const auto maps = input_gradients(m, batch, classes);
    ASSERT_EQ(maps.size(), 5u);
    for (std::size_t b = 0; b < 5; ++b) {
        Tensor img({1, 16, 16});
        std::copy(batch.data().begin() + static_cast<long>(b * 256), batch.data().begin() + static_cast<long>((b + 1) * 256),
                  img.data().begin());
        EXPECT_EQ(maps[b], input_gradient(m, img, classes[b]));
    }
}

TEST(Softmax, RowsSumToOne) {
    testutil::Gen gen(28);
    const Tensor logits = gen.tensor({6, 4}, -20, 20);
    for (const auto& row : softmax_rows(logits)) {
        double s = 0.0;
        for (double v : row) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}
