#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "ammpl/errors.hpp"
#include "ammpl/selftest.hpp"
#include "ammpl/synth_data.hpp"

using namespace ammpl;

namespace {

DimConfig small_dims() {
    DimConfig d = toy_dims();
    d.b = 4;
    d.q = 2;
    d.u = 2;
    return d;
}

WorldOptions small_world() {
    WorldOptions o;
    o.classes = 3;
    o.signal_per_class = 3;
    o.pool_size = 6;
    o.align_steps = 0;
    return o;
}

}  // namespace

TEST(Synth, SpecIsValidAndDeterministic) {
    const SyntheticSpec a = make_spec(small_world(), small_dims());
    const SyntheticSpec b = make_spec(small_world(), small_dims());
    EXPECT_NO_THROW(a.validate());
    ASSERT_EQ(a.num_classes(), 3u);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_TRUE(a.templates[c].bitwise_equal(b.templates[c]));
    EXPECT_EQ(a.signal_coords, b.signal_coords);
}

TEST(Synth, SharedSignalCellsAreCommon) {
    const SyntheticSpec s = make_spec(small_world(), small_dims());
    for (std::size_t c = 1; c < s.num_classes(); ++c) EXPECT_EQ(s.signal_coords[c], s.signal_coords[0]);
    WorldOptions o = small_world();
    o.shared_signal_cells = false;
    const SyntheticSpec d = make_spec(o, small_dims());
    std::set<std::size_t> cells;
    for (const auto& coords : d.signal_coords) cells.insert(coords.begin(), coords.end());
    EXPECT_EQ(cells.size(), 9u);
}

TEST(Synth, AlignmentKeepsSpecValid) {
    WorldOptions o = small_world();
    o.align_steps = 20;
    const DimConfig d = small_dims();
    const EncoderWeights w = init_frozen(3, [&] {
        DimConfig k = d;
        k.k = 3;
        return k;
    }());
    EXPECT_NO_THROW(make_spec(o, w.dims, &w).validate());
}

TEST(Synth, ValidateRejectsDegenerateSpecs) {
    SyntheticSpec s = make_spec(small_world(), small_dims());
    SyntheticSpec bad = s;
    bad.distractors.clear();
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = s;
    bad.signal_coords[0] = {99};
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = s;
    bad.templates[1] = bad.templates[0];
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = s;
    bad.labels[1] = bad.labels[0];
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = s;
    bad.confuser_rate = 1.5;
    EXPECT_THROW(bad.validate(), ArgumentError);
    WorldOptions o = small_world();
    o.signal_per_class = 16;
    EXPECT_THROW(make_spec(o, small_dims()), ArgumentError);
}

TEST(Synth, GenerateCountsRangesAndRelevance) {
    const SyntheticSpec s = make_spec(small_world(), small_dims());
    const Dataset d = generate(s, 5, 11);
    ASSERT_EQ(d.items.size(), 15u);
    for (std::size_t i = 0; i < d.items.size(); ++i) {
        EXPECT_EQ(d.items[i].label, i / 5);
        EXPECT_NO_THROW(d.items[i].validate(d.dims));
        ASSERT_TRUE(d.items[i].relevance.has_value());
        EXPECT_TRUE(d.items[i].relevance->bitwise_equal(d.class_relevance[d.items[i].label]));
    }
    const Dataset again = generate(s, 5, 11);
    for (std::size_t i = 0; i < d.items.size(); ++i) EXPECT_TRUE(d.items[i].patches.bitwise_equal(again.items[i].patches));
    const Dataset other = generate(s, 5, 12);
    EXPECT_FALSE(d.items[0].patches.bitwise_equal(other.items[0].patches));
}

TEST(Synth, SignalCellsCarryTheTemplate) {
    SyntheticSpec s = make_spec(small_world(), small_dims());
    s.noise_std = 0.0;
    const Dataset d = generate(s, 2, 1);
    const std::size_t ps = s.dims.patch_size();
    for (const PatchImage& img : d.items)
        for (std::size_t cell : s.signal_coords[img.label])
            for (std::size_t e = 0; e < ps; ++e) EXPECT_EQ(img.patches[cell * ps + e], s.templates[img.label][e]);
}

TEST(Synth, TemplateOracleSolvesCleanData) {
    const SyntheticSpec s = make_spec(small_world(), small_dims());
    EXPECT_GE(template_oracle_accuracy(s, generate(s, 10, 2).items), 95.0);
}

TEST(Synth, SampleShotsExactCounts) {
    const SyntheticSpec s = make_spec(small_world(), small_dims());
    const Dataset d = generate(s, 6, 1);
    const ShotSplit split = sample_shots(d, 2, 5);
    EXPECT_EQ(split.train.size(), 6u);
    EXPECT_EQ(split.test.size(), 12u);
    std::vector<std::size_t> per(3, 0);
    for (const auto& img : split.train) ++per[img.label];
    for (auto n : per) EXPECT_EQ(n, 2u);
    EXPECT_THROW(sample_shots(d, 6, 5), ArgumentError);
    EXPECT_THROW(sample_shots(d, 7, 5), ArgumentError);
}

TEST(Synth, BaseNovelPartition) {
    WorldOptions o = small_world();
    o.classes = 5;
    o.signal_per_class = 2;
    const Dataset d = generate(make_spec(o, small_dims()), 2, 1);
    const ClassSplit cs = split_base_novel(d, 0.5, 3);
    EXPECT_EQ(cs.base.size(), 3u);
    EXPECT_EQ(cs.novel.size(), 2u);
    std::set<std::size_t> all(cs.base.begin(), cs.base.end());
    all.insert(cs.novel.begin(), cs.novel.end());
    EXPECT_EQ(all.size(), 5u);
    EXPECT_TRUE(std::is_sorted(cs.base.begin(), cs.base.end()));
    const Dataset novel = subset_classes(d, cs.novel);
    EXPECT_EQ(novel.num_classes(), 2u);
    for (const auto& img : novel.items) EXPECT_LT(img.label, 2u);
    EXPECT_EQ(novel.labels[0], d.labels[cs.novel[0]]);
    EXPECT_THROW(split_base_novel(d, 1.0, 3), ArgumentError);
}

TEST(Synth, GroundTruthComplementsRelevance) {
    const Dataset d = generate(make_spec(small_world(), small_dims()), 1, 1);
    const Array gt = ground_truth_meaningless(d, 1);
    for (std::size_t j = 0; j < gt.size(); ++j) EXPECT_EQ(gt[j], 1.0 - d.class_relevance[1][j]);
}

TEST(Synth, ExportImportRoundTrip) {
    const Dataset d = generate(make_spec(small_world(), small_dims()), 2, 4);
    const auto dir = std::filesystem::temp_directory_path() / "ammpl_test_dataset";
    std::filesystem::remove_all(dir);
    export_dataset(d, dir);
    const Dataset back = import_dataset(dir);
    ASSERT_EQ(back.items.size(), d.items.size());
    EXPECT_EQ(back.labels, d.labels);
    for (std::size_t i = 0; i < d.items.size(); ++i) {
        EXPECT_TRUE(back.items[i].patches.bitwise_equal(d.items[i].patches));
        EXPECT_EQ(back.items[i].label, d.items[i].label);
    }
    std::filesystem::remove_all(dir);
    EXPECT_THROW(import_dataset(dir), IoError);
}
