#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ammpl/errors.hpp"
#include "ammpl/harness.hpp"
#include "ammpl/selftest.hpp"
#include "oracles.hpp"

using namespace ammpl;

namespace {

HarnessConfig small_config() {
    HarnessConfig c;
    c.dims = toy_dims();
    c.dims.b = 4;
    c.dims.u = 2;
    c.world.classes = 4;
    c.world.signal_per_class = 4;
    c.world.pool_size = 6;
    c.world.align_steps = 20;
    c.items_per_class = 8;
    c.seeds = 2;
    c.shots = {2};
    c.b2n_shots = 2;
    c.train.epochs = 3;
    return c;
}

}  // namespace

TEST(Harness, HarmonicMeanOracle) {
    EXPECT_NEAR(harmonic_mean(97.80, 93.00), oracles::kHmCaltech, oracles::kHmTolerance);
    EXPECT_EQ(harmonic_mean(0.0, 50.0), 0.0);
    EXPECT_EQ(harmonic_mean(40.0, 40.0), 40.0);
    EXPECT_THROW(harmonic_mean(-1.0, 2.0), ArgumentError);
}

TEST(Harness, HarmonicMeanNeverExceedsMinimumTimesTwo) {
    for (double a : {1.0, 10.0, 50.0, 99.0})
        for (double b : {2.0, 30.0, 70.0}) {
            const double hm = harmonic_mean(a, b);
            EXPECT_LE(hm, (a + b) / 2.0 + 1e-12);
            EXPECT_GE(hm, std::min(a, b) - 1e-12);
        }
}

TEST(Harness, ApplySettingCoversFlags) {
    HarnessConfig c;
    apply_setting(c, "seed", "9");
    apply_setting(c, "shots", "1,4");
    apply_setting(c, "mode", "shared");
    apply_setting(c, " tau ", " 0.05 ");
    apply_setting(c, "eval-mask", "stochastic:3");
    apply_setting(c, "components", "C1+C3");
    apply_setting(c, "classes", "6");
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.shots, (std::vector<std::size_t>{1, 4}));
    EXPECT_EQ(c.train.mode, PromptMode::shared);
    EXPECT_EQ(c.train.tau, 0.05);
    EXPECT_EQ(c.train.eval_mask.stochastic_samples, 3u);
    EXPECT_EQ(c.train.components, (Components{true, false, true}));
    EXPECT_EQ(c.world.classes, 6u);
    EXPECT_THROW(apply_setting(c, "no-such-key", "1"), ArgumentError);
    EXPECT_THROW(apply_setting(c, "seed", "abc"), ArgumentError);
    EXPECT_THROW(apply_setting(c, "tau", "0.1x"), ArgumentError);
}

TEST(Harness, ConfigValidation) {
    HarnessConfig c;
    EXPECT_NO_THROW(c.validate());
    c.train.tau = 0.0;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = HarnessConfig{};
    c.shots = {0};
    EXPECT_THROW(c.validate(), ArgumentError);
    c = HarnessConfig{};
    c.means = {1.2};
    EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Harness, ReadConfigFile) {
    const auto path = std::filesystem::temp_directory_path() / "ammpl_test.cfg";
    {
        std::ofstream os(path);
        os << "# comment\n\nseeds = 4\n  tau=0.3  # trailing\n";
    }
    const auto kv = read_config_file(path);
    ASSERT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv[0].first, "seeds");
    EXPECT_EQ(kv[0].second, "4");
    EXPECT_EQ(kv[1].first, "tau");
    EXPECT_EQ(kv[1].second, "0.3");
    {
        std::ofstream os(path);
        os << "no equals sign\n";
    }
    EXPECT_THROW(read_config_file(path), FormatError);
    std::filesystem::remove(path);
}

TEST(Harness, AggregateMeanAndSampleStd) {
    std::vector<RunRecord> rows{{"t", "d", "1", 4, "accuracy", 80.0, 0.0},
                                {"t", "d", "2", 4, "accuracy", 90.0, 0.0},
                                {"t", "d", "3", 4, "accuracy", 100.0, 0.0},
                                {"t", "d", "1", 8, "accuracy", 50.0, 0.0}};
    const auto agg = aggregate(rows);
    ASSERT_EQ(agg.size(), 2u);
    EXPECT_EQ(agg[0].seed, "agg");
    EXPECT_DOUBLE_EQ(agg[0].value, 90.0);
    EXPECT_DOUBLE_EQ(agg[0].stddev, 10.0);
    EXPECT_EQ(agg[0].samples, 3u);
    EXPECT_EQ(agg[1].samples, 1u);
    EXPECT_EQ(agg[1].stddev, 0.0);
}

TEST(Harness, CsvFormat) {
    std::vector<RunRecord> rows{{"fewshot", "synth", "1", 16, "accuracy", 93.125, 0.0}};
    auto agg = aggregate(rows);
    rows.insert(rows.end(), agg.begin(), agg.end());
    std::ostringstream csv, summary;
    write_csv(csv, rows);
    write_summary(summary, rows);
    EXPECT_EQ(csv.str(), std::string(kCsvHeader) +
                             "\nfewshot,synth,1,16,accuracy,93.1250,0.000\nfewshot,synth,agg,16,accuracy,93.1250,0.000\n");
    EXPECT_EQ(summary.str(), "task,dataset,shot,metric,mean,std,n\nfewshot,synth,16,accuracy,93.1250,0.0000,1\n");
    rows[0].value = std::nan("");
    std::ostringstream bad;
    EXPECT_THROW(write_csv(bad, rows), ContractError);
}

TEST(Harness, ParseLists) {
    EXPECT_EQ(parse_size_list("1,2,16"), (std::vector<std::size_t>{1, 2, 16}));
    EXPECT_EQ(parse_double_list("0.6,0.95"), (std::vector<double>{0.6, 0.95}));
    EXPECT_THROW(parse_size_list(""), ArgumentError);
    EXPECT_THROW(parse_size_list("1,x"), ArgumentError);
}

TEST(Harness, AblationCombos) {
    const auto four = ablation_combos(false);
    ASSERT_EQ(four.size(), 4u);
    EXPECT_EQ(four[0].name(), "C1");
    EXPECT_EQ(four[1].name(), "C3");
    EXPECT_EQ(four[2].name(), "C1+C2");
    EXPECT_EQ(four[3].name(), "C1+C2+C3");
    EXPECT_EQ(ablation_combos(true).size(), 8u);
}

TEST(Harness, FewshotIsDeterministic) {
    const HarnessConfig c = small_config();
    const World w = build_world(c);
    std::ostringstream a, b;
    write_csv(a, run_fewshot(c, w));
    write_csv(b, run_fewshot(c, w));
    const std::string text = a.str();
    EXPECT_EQ(text, b.str());
    // Two seeds plus one aggregate row, header included.
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(Harness, BaseToNovelRecords) {
    const HarnessConfig c = small_config();
    const World w = build_world(c);
    std::vector<BaseNovelResult> per_seed;
    const auto rows = run_base_to_novel(c, w, {}, &per_seed);
    ASSERT_EQ(per_seed.size(), 2u);
    for (const auto& r : per_seed) {
        EXPECT_TRUE(std::isfinite(r.hm));
        EXPECT_LE(r.hm, std::max(r.base, r.novel) + 1e-9);
        EXPECT_GE(r.hm, std::min(r.base, r.novel) - 1e-9);
    }
    EXPECT_EQ(rows.size(), 9u);
}

TEST(Harness, CrossdataRejectsMismatchedWorlds) {
    HarnessConfig c = small_config();
    const World w = build_world(c);
    HarnessConfig other = c;
    other.dims.b = 5;
    const World bad = build_world(other);
    EXPECT_THROW(run_crossdata(c, w, {&bad}), ArgumentError);
    const World v = build_world(c, w.encoders, 1);
    EXPECT_NE(v.spec.name, w.spec.name);
    EXPECT_NE(v.data.labels[0], w.data.labels[0]);
    EXPECT_EQ(run_crossdata(c, w, {&w, &v}).size(), 2u * 2u + 2u);
}

TEST(Harness, TrainingReducesLoss) {
    HarnessConfig c = small_config();
    c.train.epochs = 8;
    const World w = build_world(c);
    const ShotSplit split = sample_shots(w.data, 4, 1);
    const TrainOutcome t = train_model(w.encoders, w.data.labels, split.train, c.train, SeedBundle::from_run_seed(1));
    ASSERT_EQ(t.epoch_losses.size(), 8u);
    EXPECT_LT(t.epoch_losses.back(), t.epoch_losses.front());
    EXPECT_EQ(t.iterations, 8u * 4u);
}

TEST(Harness, PixelGapShrinksWithLearnedPadding) {
    // Masked patches become N'; compare them with the dataset's mean patch.
    HarnessConfig c = small_config();
    c.train.epochs = 8;
    const World w = build_world(c);
    const ShotSplit split = sample_shots(w.data, 4, 1);
    const TrainOutcome t = train_model(w.encoders, w.data.labels, split.train, c.train, SeedBundle::from_run_seed(1));
    const ModelState& s = t.state;
    const DimConfig& d = s.dims();
    const std::size_t ps = d.patch_size(), cells = d.grid_cells(), k = s.num_classes();
    Array mean_patch({ps});
    for (const PatchImage& img : w.data.items)
        for (std::size_t c2 = 0; c2 < cells; ++c2)
            for (std::size_t e = 0; e < ps; ++e) mean_patch[e] += img.patches[c2 * ps + e];
    for (std::size_t e = 0; e < ps; ++e) mean_patch[e] /= static_cast<double>(w.data.items.size() * cells);

    // Mask every patch so each padded value is measured.
    auto gap = [&](const Array& pad) {
        ad::Tape tape;
        ad::Var m = tape.constant(Array({k, d.b, d.b}, 0.0));
        const Array out = pad_masked(apply_mask(m, w.data.items[0].patches), m, tape.constant(pad)).value();
        double g = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) g += std::abs(out[i] - mean_patch[i % ps]);
        return g / static_cast<double>(out.size());
    };
    const double trained = gap(s.padding.N);
    const double zero = gap(Array(s.padding.N.shape(), 0.0));
    EXPECT_LT(trained, zero);
}

TEST(Harness, MaskQualityAndDump) {
    HarnessConfig c = small_config();
    c.mask_every = 4;
    const World w = build_world(c);
    const auto dir = std::filesystem::temp_directory_path() / "ammpl_test_masks";
    std::filesystem::remove_all(dir);
    const MaskDump dump = dump_masks(c, w, dir);
    ASSERT_EQ(dump.final.classes.size(), 4u);
    for (const auto& q : dump.final.classes) {
        EXPECT_NEAR(q.separation, q.meaningful_mean - q.meaningless_mean, 1e-15);
    }
    // 4 classes x (iterations 0, 4 and the final 6).
    EXPECT_EQ(dump.snapshot_iterations, (std::vector<std::size_t>{0, 4, 6}));
    EXPECT_EQ(dump.files.size(), 12u);
    for (const auto& f : dump.files) EXPECT_TRUE(std::filesystem::exists(f));
    EXPECT_EQ(mask_records(dump, w, 1, 2).size(), 16u);
    std::filesystem::remove_all(dir);
}
