#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ammpl/errors.hpp"
#include "ammpl/image_prompt.hpp"
#include "ammpl/interactive.hpp"
#include "ammpl/selftest.hpp"
#include "ammpl/text_prompt.hpp"

using namespace ammpl;

TEST(TextPrompt, ClassNameEmbeddingIsUnitAndDeterministic) {
    const Array a = embed_class_name("zebra", 7, 16);
    EXPECT_TRUE(a.bitwise_equal(embed_class_name("zebra", 7, 16)));
    EXPECT_FALSE(a.bitwise_equal(embed_class_name("zebra", 8, 16)));
    EXPECT_FALSE(a.bitwise_equal(embed_class_name("zebrb", 7, 16)));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_THROW(embed_class_name("", 7, 16), ArgumentError);
}

TEST(TextPrompt, StackRejectsDuplicates) {
    ClassNameEmbeds names(1, 4);
    const std::vector<std::string> dup{"a", "a"};
    EXPECT_THROW(names.stack(dup), ArgumentError);
}

TEST(TextPrompt, LayoutIsContextThenName) {
    const std::size_t k = 2, M = 3, l = 4;
    Array ctx({k, M, l});
    for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i] = static_cast<double>(i);
    Array names({k, l});
    for (std::size_t i = 0; i < names.size(); ++i) names[i] = 100.0 + static_cast<double>(i);
    ad::Tape t;
    ad::Var shift = t.constant(Array::from({2}, {0.5, -1.0}));
    const Array p = build_text_prompt(t.constant(ctx), PromptMode::class_specific, names, shift).value();
    ASSERT_EQ(p.shape(), (Shape{k, M + 1, l}));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t j = 0; j < l; ++j)
                EXPECT_EQ(p[(i * (M + 1) + m) * l + j], ctx[(i * M + m) * l + j] + (i == 0 ? 0.5 : -1.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < l; ++j) EXPECT_EQ(p[(i * (M + 1) + M) * l + j], names[i * l + j]);
}

TEST(TextPrompt, SharedContextIsBroadcast) {
    ad::Tape t;
    Array ctx({2, 3}, 0.25);
    const Array p = build_text_prompt(t.constant(ctx), PromptMode::shared, Array({4, 3}, 1.0)).value();
    EXPECT_EQ(p.shape(), (Shape{4, 3, 3}));
    EXPECT_EQ(p[0], 0.25);
    EXPECT_EQ(p[3 * 3 * 3 + 2 * 3], 1.0);
}

TEST(TextPrompt, MismatchThrows) {
    ad::Tape t;
    EXPECT_THROW(build_text_prompt(t.constant(Array({3, 2, 4})), PromptMode::class_specific, Array({2, 4})),
                 ShapeError);
    EXPECT_THROW(build_text_prompt(t.constant(Array({2, 5})), PromptMode::shared, Array({2, 4})), ShapeError);
}

TEST(TextPrompt, ContextInitScale) {
    DimConfig d;
    const ContextBank bank = ContextBank::init(PromptMode::class_specific, d, 3);
    EXPECT_EQ(bank.V.shape(), (Shape{d.k, d.M, d.l}));
    double s2 = 0.0;
    for (std::size_t i = 0; i < bank.V.size(); ++i) s2 += bank.V[i] * bank.V[i];
    EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(bank.V.size())), 0.02, 0.003);
    EXPECT_EQ(ContextBank::init(PromptMode::shared, d, 3).V.shape(), (Shape{d.M, d.l}));
}

TEST(ImagePrompt, ProbabilityInitMoments) {
    DimConfig d;
    const ProbabilityTensor p = ProbabilityTensor::init(PromptMode::class_specific, d, 0.95, 0.01, 4);
    EXPECT_EQ(p.P.shape(), (Shape{d.k, d.b, d.b}));
    double s = 0.0;
    for (std::size_t i = 0; i < p.P.size(); ++i) s += p.P[i];
    EXPECT_NEAR(s / static_cast<double>(p.P.size()), 0.95, 0.003);
    EXPECT_EQ(ProbabilityTensor::init(PromptMode::shared, d, 0.9, 0.0, 4).P.shape(), (Shape{d.b, d.b}));
}

TEST(ImagePrompt, PadInitFill) {
    const DimConfig d = toy_dims();
    const PadParams p = PadParams::init(PromptMode::class_specific, d, 0.5);
    EXPECT_EQ(p.N.shape(), (Shape{d.k, d.q, d.q, d.u}));
    for (std::size_t i = 0; i < p.N.size(); ++i) EXPECT_EQ(p.N[i], 0.5);
}

TEST(ImagePrompt, ThresholdMask) {
    const Array p = Array::from({2, 2}, {0.5, 0.49, 1.7, -0.2});
    const Array m = threshold_mask(p, PromptMode::shared, 3);
    ASSERT_EQ(m.shape(), (Shape{3, 2, 2}));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(m[i * 4 + 0], 1.0);
        EXPECT_EQ(m[i * 4 + 1], 0.0);
        EXPECT_EQ(m[i * 4 + 2], 1.0);
        EXPECT_EQ(m[i * 4 + 3], 0.0);
    }
}

TEST(ImagePrompt, SharedSampleIsBroadcast) {
    ad::Tape t;
    RandomStream rng(2, "m");
    const Array m = sample_mask(t.leaf(Array({4, 4}, 0.5)), PromptMode::shared, 3, rng).value();
    ASSERT_EQ(m.shape(), (Shape{3, 4, 4}));
    for (std::size_t c = 0; c < 16; ++c) {
        EXPECT_EQ(m[c], m[16 + c]);
        EXPECT_EQ(m[c], m[32 + c]);
    }
    EXPECT_EQ(rng.draws(), 16u);
}

TEST(ImagePrompt, SampleShapeMismatch) {
    ad::Tape t;
    RandomStream rng(2, "m");
    EXPECT_THROW(sample_mask(t.leaf(Array({2, 4, 4}, 0.5)), PromptMode::class_specific, 3, rng), ShapeError);
}

TEST(ImagePrompt, MaskedPatchesTakePadding) {
    const DimConfig d = toy_dims();
    Array patches({d.b, d.b, d.q, d.q, d.u}, 0.8);
    Array mask({1, d.b, d.b}, 1.0);
    mask[4] = 0.0;
    ad::Tape t;
    ad::Var m = t.constant(mask);
    const Array out = pad_masked(apply_mask(m, patches), m, t.constant(Array({1, d.q, d.q, d.u}, 0.3))).value();
    const std::size_t ps = d.patch_size();
    for (std::size_t c = 0; c < d.grid_cells(); ++c)
        for (std::size_t e = 0; e < ps; ++e) EXPECT_EQ(out[c * ps + e], c == 4 ? 0.3 : 0.8);
}

TEST(ImagePrompt, PgmRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "ammpl_test_map.pgm";
    const Array map = Array::from({2, 3}, {0.0, 0.25, 0.5, 0.75, 1.0, 1.0});
    write_pgm(path, map);
    const Array back = read_pgm(path);
    ASSERT_EQ(back.shape(), (Shape{2, 3}));
    for (std::size_t i = 0; i < map.size(); ++i) EXPECT_NEAR(back[i], std::round(map[i] * 255.0), 0.0);
    std::filesystem::remove(path);
}

TEST(ImagePrompt, PatchImageValidation) {
    const DimConfig d = toy_dims();
    PatchImage img;
    img.patches = Array({d.b, d.b, d.q, d.q, d.u}, 0.5);
    EXPECT_NO_THROW(img.validate(d));
    img.patches[0] = 1.5;
    EXPECT_THROW(img.validate(d), ArgumentError);
    img.patches = Array({d.b, d.b, d.q, d.q}, 0.5);
    EXPECT_THROW(img.validate(d), ShapeError);
}

TEST(Interactive, OutputLayersStartAtZero) {
    const DimConfig d = toy_dims();
    for (PromptMode mode : {PromptMode::class_specific, PromptMode::shared}) {
        const LightweightNets nets = LightweightNets::init(mode, d, 1);
        for (const NetParams* p : {&nets.text_to_image, &nets.image_to_text}) {
            for (std::size_t i = 0; i < p->w2.size(); ++i) EXPECT_EQ(p->w2[i], 0.0);
            for (std::size_t i = 0; i < p->b2.size(); ++i) EXPECT_EQ(p->b2[i], 0.0);
        }
        ad::Tape t;
        RandomStream rng(1, "rows");
        Array rows({d.k, d.d});
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = rng.normal();
        const Array e = text_to_image_info(trace(t, nets.text_to_image, false), mode, t.constant(rows), d).value();
        EXPECT_EQ(e.shape(), (Shape{d.k, d.q, d.q, d.u}));
        for (std::size_t i = 0; i < e.size(); ++i) EXPECT_EQ(e[i], 0.0);
        const Array h = image_to_text_info(trace(t, nets.image_to_text, false), mode, t.constant(rows)).value();
        EXPECT_EQ(h.shape(), (Shape{d.k}));
    }
}

TEST(Interactive, HiddenWidthIsQuarter) {
    DimConfig d;
    d.d = 32;
    EXPECT_EQ(LightweightNets::hidden_width(d), 8u);
}

TEST(Interactive, ClassSpecificRowsUseOwnWeights) {
    const DimConfig d = toy_dims();
    LightweightNets nets = LightweightNets::init(PromptMode::class_specific, d, 2);
    NetParams& p = nets.image_to_text;
    // Only class 1's output bias is non-zero.
    p.b2[1] = 2.5;
    ad::Tape t;
    const Array h = image_to_text_info(trace(t, p, false), PromptMode::class_specific, t.constant(Array({d.k, d.d}, 0.1)))
                        .value();
    EXPECT_EQ(h[0], 0.0);
    EXPECT_EQ(h[1], 2.5);
    EXPECT_EQ(h[2], 0.0);
}
