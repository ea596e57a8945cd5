#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ammpl/array.hpp"
#include "ammpl/autodiff.hpp"
#include "ammpl/encoders.hpp"
#include "ammpl/image_prompt.hpp"
#include "ammpl/interactive.hpp"
#include "ammpl/random.hpp"
#include "ammpl/text_prompt.hpp"

namespace ammpl {

/// Ablation switches: C1 patch mask, C2 patch padding, C3 interaction.
struct Components {
    bool mask = true;
    bool padding = true;
    bool interaction = true;

    std::string name() const;  ///< e.g. "C1+C2+C3", "none"
    /// Parses "C1+C2", "C3", "none", "all".
    static Components parse(std::string_view text);

    friend bool operator==(const Components&, const Components&) = default;
};

/// How the mutual dependency between interaction information and the
/// representations is resolved within a step.
enum class InteractionSchedule {
    two_pass,  ///< plain pass, compute E and h, second pass with injection
    stale,     ///< E and h from the previous call's representations (detached)
};

struct EvalMaskPolicy {
    /// 0 selects the deterministic threshold mask; S > 0 averages softmax
    /// probabilities over S sampled masks.
    unsigned stochastic_samples = 0;

    /// "threshold" or "stochastic:S".
    static EvalMaskPolicy parse(std::string_view text);
    std::string name() const;
};

struct SeedBundle {
    std::uint64_t init = 0;      ///< context, probability and net initialization
    std::uint64_t sampling = 0;  ///< mask sampling during training
    std::uint64_t data = 0;      ///< shot selection and shuffling

    static SeedBundle from_run_seed(std::uint64_t seed);
    friend bool operator==(const SeedBundle&, const SeedBundle&) = default;
};

struct ModelConfig {
    DimConfig dims;
    PromptMode mode = PromptMode::class_specific;
    double tau = 0.2;
    Components components;
    InteractionSchedule schedule = InteractionSchedule::two_pass;
    double p_init_mean = 0.95;
    double p_init_std = 0.01;
    double pad_init = 0.5;  ///< initial value of every padding entry (mid-grey)
    std::uint64_t name_seed = 7;  ///< class-name embedding seed
};

/// Everything a trained model consists of. Only V, P, N and the net weights
/// are ever updated; the encoders are shared, immutable, and frozen.
struct ModelState {
    std::shared_ptr<const EncoderWeights> encoders;
    ModelConfig config;
    SeedBundle seeds;
    std::vector<std::string> labels;

    ContextBank context;
    ProbabilityTensor probability;
    PadParams padding;
    LightweightNets nets;

    /// Previous representations for InteractionSchedule::stale; not persisted.
    std::optional<Array> stale_text_rep, stale_image_rep;

    const DimConfig& dims() const { return config.dims; }
    std::size_t num_classes() const { return labels.size(); }
    /// Class-name rows [k x l] for the current labels.
    Array class_names() const;
};

ModelState make_model(std::shared_ptr<const EncoderWeights> encoders,
                      std::vector<std::string> labels, const ModelConfig& config,
                      const SeedBundle& seeds);

/// Copy of a shared-mode model that scores a different label set. Class-specific
/// models cannot be relabeled (their parameters are tied to k).
ModelState with_labels(const ModelState& state, std::vector<std::string> labels);

/// Named view of one parameter tensor.
struct ParamRef {
    std::string name;
    Array* value;
};

/// Every parameter tensor, in checkpoint order.
std::vector<ParamRef> all_parameters(ModelState& state);
/// The subset the optimizer updates under the current component flags.
std::vector<ParamRef> learnable_parameters(ModelState& state);

/// Parameters as tape leaves; learnable ones require gradients.
struct TracedModel {
    ad::Var context;
    ad::Var probability;
    ad::Var padding;
    TracedNet f_text;
    TracedNet f_image;
};

TracedModel trace_model(ad::Tape& tape, const ModelState& state, bool training);

/// Where the forward pass gets its mask from.
struct MaskSource {
    RandomStream* rng = nullptr;  ///< sample (straight-through) when set
    const Array* fixed = nullptr; ///< otherwise use this [k x b x b] mask
    /// Otherwise the mask is residual + clamp01(P), with `residual` (shaped
    /// like P) holding a frozen m - clamp01(P). Its value is the frozen sample
    /// m while P stays differentiable, as in the straight-through graph.
    const Array* residual = nullptr;
};

struct ForwardResult {
    ad::Var logits;     ///< [k]
    ad::Var mask;       ///< [k x b x b] (all ones when C1 is off)
    ad::Var text_rep;   ///< Z
    ad::Var image_rep;  ///< X
};

/// Full pipeline for one image: mask, pad, encode, optional interaction,
/// then logit_i = <x_i, z_i> / tau.
ForwardResult forward(const ModelState& state, const TracedModel& traced, const Array& names,
                      const Array& patches, const MaskSource& source);

/// Logits with a freshly sampled training mask.
Array class_logits(const ModelState& state, const PatchImage& image, RandomStream& rng);

/// -log softmax(logits)[label].
ad::Var cross_entropy(const ad::Var& logits, std::size_t label);
double cross_entropy(const Array& logits, std::size_t label);

/// Momentum buffers, one per learnable parameter (by name).
class SgdMomentum {
public:
    /// v = momentum * v + g;  p -= lr * v
    void apply(std::span<const ParamRef> params, std::span<const Array> grads, double lr,
               double momentum);

private:
    std::vector<std::pair<std::string, Array>> velocity_;
};

struct StepResult {
    double loss = 0.0;
    std::vector<std::string> names;
    std::vector<Array> gradients;
};

/// One optimization step over a batch: a fresh mask per image, mean loss,
/// one backward pass, SGD with momentum on the learnable parameters only.
StepResult train_step(ModelState& state, std::span<const PatchImage> batch, double lr,
                      double momentum, SgdMomentum& optimizer, RandomStream& rng);

/// Mean loss and gradients without updating anything.
StepResult loss_and_gradients(ModelState& state, std::span<const PatchImage> batch,
                              RandomStream& rng);

/// Class probabilities under an evaluation mask policy. `rng` is required
/// only for stochastic policies.
Array predict_proba(const ModelState& state, const PatchImage& image, const EvalMaskPolicy& policy,
                    RandomStream* rng = nullptr);

/// argmax with ties resolved to the lowest index.
std::size_t argmax(std::span<const double> values);

std::size_t predict(const ModelState& state, const PatchImage& image,
                    const EvalMaskPolicy& policy = {}, RandomStream* rng = nullptr);

/// Checkpoint: "AMCK", version, dims, flags, tau, seeds, labels, then
/// name-tagged parameter blocks of little-endian f64.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);

/// Restores a checkpoint. The frozen encoders are regenerated from the stored
/// seed unless `encoders` is supplied. When `expected` is given, any dimension
/// mismatch is a FormatError naming both values.
ModelState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<DimConfig>& expected = std::nullopt,
                           std::shared_ptr<const EncoderWeights> encoders = nullptr);

}  // namespace ammpl
