#include <gtest/gtest.h>

#include <filesystem>
#include <memory>

#include "ammpl/errors.hpp"
#include "ammpl/pipeline.hpp"
#include "ammpl/selftest.hpp"

using namespace ammpl;

namespace {

struct Fixture {
    DimConfig dims = toy_dims();
    std::shared_ptr<const EncoderWeights> encoders = std::make_shared<const EncoderWeights>(init_frozen(5, dims));
    std::vector<std::string> labels{"red", "green", "blue"};

    ModelState model(PromptMode mode = PromptMode::class_specific, Components comp = {}) const {
        ModelConfig mc;
        mc.dims = dims;
        mc.mode = mode;
        mc.components = comp;
        return make_model(encoders, labels, mc, SeedBundle::from_run_seed(3));
    }

    std::vector<PatchImage> batch(std::size_t n, std::uint64_t seed = 1) const {
        RandomStream rng(seed, "batch");
        std::vector<PatchImage> out;
        for (std::size_t i = 0; i < n; ++i) {
            PatchImage img;
            img.patches = Array({dims.b, dims.b, dims.q, dims.q, dims.u});
            for (std::size_t j = 0; j < img.patches.size(); ++j) img.patches[j] = rng.uniform();
            img.label = i % labels.size();
            out.push_back(std::move(img));
        }
        return out;
    }
};

Array param(ModelState& s, const std::string& name) {
    for (const ParamRef& p : all_parameters(s))
        if (p.name == name) return *p.value;
    throw std::runtime_error("no parameter " + name);
}

}  // namespace

TEST(Pipeline, ComponentNames) {
    EXPECT_EQ((Components{true, true, true}).name(), "C1+C2+C3");
    EXPECT_EQ((Components{false, false, false}).name(), "none");
    EXPECT_EQ(Components::parse("C1+C2"), (Components{true, true, false}));
    EXPECT_EQ(Components::parse("all"), (Components{true, true, true}));
    EXPECT_THROW(Components::parse("C4"), ArgumentError);
}

TEST(Pipeline, EvalPolicyParse) {
    EXPECT_EQ(EvalMaskPolicy::parse("threshold").stochastic_samples, 0u);
    EXPECT_EQ(EvalMaskPolicy::parse("stochastic:8").stochastic_samples, 8u);
    EXPECT_EQ(EvalMaskPolicy::parse("stochastic:8").name(), "stochastic:8");
    EXPECT_THROW(EvalMaskPolicy::parse("stochastic:0"), ArgumentError);
    EXPECT_THROW(EvalMaskPolicy::parse("random"), ArgumentError);
}

TEST(Pipeline, SeedBundleIsDeterministic) {
    EXPECT_EQ(SeedBundle::from_run_seed(4), SeedBundle::from_run_seed(4));
    const SeedBundle s = SeedBundle::from_run_seed(4);
    EXPECT_NE(s.init, s.sampling);
    EXPECT_NE(s.sampling, s.data);
}

TEST(Pipeline, LogitsHaveOneEntryPerClass) {
    Fixture f;
    const ModelState s = f.model();
    RandomStream rng(1, "m");
    const Array logits = class_logits(s, f.batch(1)[0], rng);
    EXPECT_EQ(logits.shape(), (Shape{3}));
    // Unit-norm features bound every logit by 1 / tau.
    for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_LE(std::abs(logits[i]), 1.0 / s.config.tau + 1e-12);
}

TEST(Pipeline, TrainStepNeverTouchesEncoders) {
    Fixture f;
    ModelState s = f.model();
    const EncoderWeights before = *s.encoders;
    SgdMomentum opt;
    RandomStream rng(2, "m");
    const auto b = f.batch(3);
    for (int i = 0; i < 3; ++i) train_step(s, b, 0.1, 0.9, opt, rng);
    EXPECT_TRUE(s.encoders->bitwise_equal(before));
}

TEST(Pipeline, DisabledComponentsStayFrozen) {
    Fixture f;
    ModelState s = f.model(PromptMode::class_specific, Components{false, false, false});
    const Array p0 = param(s, "probability.P"), n0 = param(s, "padding.N"), w0 = param(s, "f_text.w1");
    const Array v0 = param(s, "context.V");
    SgdMomentum opt;
    RandomStream rng(2, "m");
    train_step(s, f.batch(3), 0.1, 0.9, opt, rng);
    EXPECT_TRUE(param(s, "probability.P").bitwise_equal(p0));
    EXPECT_TRUE(param(s, "padding.N").bitwise_equal(n0));
    EXPECT_TRUE(param(s, "f_text.w1").bitwise_equal(w0));
    EXPECT_FALSE(param(s, "context.V").bitwise_equal(v0));
    for (const ParamRef& p : learnable_parameters(s)) EXPECT_EQ(p.name, "context.V");
}

TEST(Pipeline, AllComponentsLearn) {
    Fixture f;
    ModelState s = f.model();
    const Array p0 = param(s, "probability.P"), n0 = param(s, "padding.N"), w0 = param(s, "f_text.w2");
    SgdMomentum opt;
    RandomStream rng(2, "m");
    const auto b = f.batch(3);
    for (int i = 0; i < 3; ++i) train_step(s, b, 0.1, 0.9, opt, rng);
    EXPECT_FALSE(param(s, "probability.P").bitwise_equal(p0));
    EXPECT_FALSE(param(s, "padding.N").bitwise_equal(n0));
    EXPECT_FALSE(param(s, "f_text.w2").bitwise_equal(w0));
}

TEST(Pipeline, MomentumUpdateRule) {
    Fixture f;
    ModelState s = f.model(PromptMode::class_specific, Components{false, false, false});
    auto params = learnable_parameters(s);
    ASSERT_EQ(params.size(), 1u);
    const Array v0 = *params[0].value;
    std::vector<Array> grads{Array(v0.shape(), 1.0)};
    SgdMomentum opt;
    opt.apply(params, grads, 0.1, 0.5);  // v = 1, p -= 0.1
    opt.apply(params, grads, 0.1, 0.5);  // v = 1.5, p -= 0.15
    for (std::size_t i = 0; i < v0.size(); ++i) EXPECT_NEAR((*params[0].value)[i], v0[i] - 0.25, 1e-15);
}

TEST(Pipeline, SameSeedsSameLoss) {
    Fixture f;
    ModelState a = f.model(), b = f.model();
    RandomStream ra(9, "m"), rb(9, "m");
    const auto batch = f.batch(4);
    EXPECT_EQ(loss_and_gradients(a, batch, ra).loss, loss_and_gradients(b, batch, rb).loss);
}

TEST(Pipeline, StochasticEvalNeedsRng) {
    Fixture f;
    const ModelState s = f.model();
    const auto img = f.batch(1)[0];
    EXPECT_THROW(predict_proba(s, img, EvalMaskPolicy::parse("stochastic:4")), ContractError);
    RandomStream rng(1, "e");
    const Array p = predict_proba(s, img, EvalMaskPolicy::parse("stochastic:4"), &rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += p[i];
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Pipeline, ArgmaxTiesGoLow) {
    const double v[] = {0.2, 0.7, 0.7, 0.1};
    EXPECT_EQ(argmax(v), 1u);
}

TEST(Pipeline, SharedModelRelabels) {
    Fixture f;
    const ModelState s = f.model(PromptMode::shared);
    const ModelState r = with_labels(s, {"cyan", "magenta", "yellow", "black"});
    EXPECT_EQ(r.num_classes(), 4u);
    RandomStream rng(1, "m");
    EXPECT_EQ(class_logits(r, f.batch(1)[0], rng).size(), 4u);
    EXPECT_THROW(with_labels(f.model(), {"a", "b"}), ArgumentError);
}

TEST(Pipeline, CheckpointRoundTrip) {
    Fixture f;
    ModelState s = f.model();
    SgdMomentum opt;
    RandomStream rng(2, "m");
    train_step(s, f.batch(3), 0.1, 0.9, opt, rng);
    const auto path = std::filesystem::temp_directory_path() / "ammpl_test_ckpt.bin";
    save_checkpoint(s, path);
    ModelState back = load_checkpoint(path, f.dims, f.encoders);
    EXPECT_EQ(back.labels, s.labels);
    EXPECT_EQ(back.config.tau, s.config.tau);
    EXPECT_EQ(back.config.pad_init, s.config.pad_init);
    auto a = all_parameters(s), b = all_parameters(back);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].value->bitwise_equal(*b[i].value)) << a[i].name;
    RandomStream r1(4, "x"), r2(4, "x");
    const auto img = f.batch(1)[0];
    EXPECT_TRUE(class_logits(s, img, r1).bitwise_equal(class_logits(back, img, r2)));

    // Regenerating the frozen towers from the stored seed gives the same model.
    ModelState regen = load_checkpoint(path);
    EXPECT_TRUE(regen.encoders->bitwise_equal(*s.encoders));

    DimConfig other = f.dims;
    other.b = 4;
    try {
        load_checkpoint(path, other);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find('3'), std::string::npos);
        EXPECT_NE(msg.find('4'), std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST(Pipeline, ForwardRejectsWrongResidualShape) {
    Fixture f;
    const ModelState s = f.model();
    ad::Tape t;
    const TracedModel traced = trace_model(t, s, true);
    const Array wrong({2, 2});
    MaskSource src;
    src.residual = &wrong;
    EXPECT_THROW(forward(s, traced, s.class_names(), f.batch(1)[0].patches, src), ShapeError);
}
