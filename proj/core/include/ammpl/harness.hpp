#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ammpl/pipeline.hpp"
#include "ammpl/synth_data.hpp"

namespace ammpl {

/// Optimisation settings for one training run.
struct TrainConfig {
    double lr = 0.04;
    double momentum = 0.9;
    std::size_t epochs = 20;
    std::size_t batch_size = 4;
    PromptMode mode = PromptMode::class_specific;
    double tau = 0.2;
    double p_init_mean = 0.95;
    double p_init_std = 0.01;
    double pad_init = 0.5;  ///< initial value of every padding entry (mid-grey)
    Components components;
    InteractionSchedule schedule = InteractionSchedule::two_pass;
    EvalMaskPolicy eval_mask;
    std::uint64_t name_seed = 7;  ///< class-name embedding seed

    /// Throws ArgumentError unless rates and counts are positive.
    void validate() const;
};

/// Everything a harness command needs.
struct HarnessConfig {
    TrainConfig train;
    DimConfig dims;          ///< k is taken from the world's class count
    std::uint64_t seed = 1;  ///< first run seed; run i uses seed + i
    std::size_t seeds = 3;
    std::vector<std::size_t> shots{1, 2, 4, 8, 16};
    std::uint64_t encoder_seed = 2024;
    WorldOptions world;
    std::size_t items_per_class = 40;
    double base_fraction = 0.5;
    std::size_t b2n_shots = 16;
    std::vector<double> means{0.60, 0.80, 0.90, 0.93, 0.95};
    bool all_combos = false;
    std::size_t mask_every = 20;  ///< snapshot cadence in optimisation steps
    bool timing = false;          ///< fill the seconds column with wall time

    void validate() const;
};

/// Applies one `key=value` setting (the same names as the long CLI flags).
/// Throws ArgumentError on an unknown key or a malformed value.
void apply_setting(HarnessConfig& config, std::string_view key, std::string_view value);

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

std::vector<std::size_t> parse_size_list(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);

struct RunRecord {
    std::string task;
    std::string dataset;
    std::string seed;  ///< run seed, or "agg" for aggregates
    std::size_t shot = 0;
    std::string metric;
    double value = 0.0;
    double seconds = 0.0;
    double stddev = 0.0;      ///< aggregates only
    std::size_t samples = 0;  ///< aggregates only
};

inline constexpr std::string_view kCsvHeader = "task,dataset,seed,shot,metric,value,seconds";

/// One aggregate row (mean, with stddev and samples filled) per
/// (task, dataset, shot, metric) group of per-seed records, in first-seen order.
std::vector<RunRecord> aggregate(const std::vector<RunRecord>& records);

void write_csv(std::ostream& os, const std::vector<RunRecord>& records);
/// `task,dataset,shot,metric,mean,std,n` for aggregate records.
void write_summary(std::ostream& os, const std::vector<RunRecord>& records);

/// 2ab/(a+b); 0 when either input is 0. Inputs must be non-negative.
double harmonic_mean(double a, double b);

struct ClassMaskQuality {
    std::string label;
    double meaningful_mean = 0.0;
    double meaningless_mean = 0.0;
    double separation = 0.0;
};

struct MaskQualityReport {
    std::vector<ClassMaskQuality> classes;
    double min_separation() const;
};

/// Compares clamp01(P) with the ground-truth relevance of every class.
MaskQualityReport mask_quality(const ModelState& state, const Dataset& data);

/// Called after every optimisation step (iteration counts from 1) and once
/// before training with iteration 0.
using StepHook = std::function<void(std::size_t iteration, const ModelState& state)>;

struct TrainOutcome {
    ModelState state;
    std::vector<double> epoch_losses;  ///< mean training loss per epoch
    std::size_t iterations = 0;
    double final_loss() const { return epoch_losses.empty() ? 0.0 : epoch_losses.back(); }
};

/// Cosine-decayed SGD with momentum over shuffled mini-batches.
TrainOutcome train_model(std::shared_ptr<const EncoderWeights> encoders, std::vector<std::string> labels,
                         const std::vector<PatchImage>& train, const TrainConfig& config,
                         const SeedBundle& seeds, const StepHook& hook = {});

/// Test accuracy in percent.
double evaluate(const ModelState& state, const std::vector<PatchImage>& items, const EvalMaskPolicy& policy,
                std::uint64_t eval_seed = 0);

/// The frozen towers, the synthetic spec and its generated dataset.
struct World {
    std::shared_ptr<const EncoderWeights> encoders;
    SyntheticSpec spec;
    Dataset data;
};

/// Default world for a configuration; `variant` > 0 builds a different world
/// with the same dims (other templates, coords and labels) for transfer.
World build_world(const HarnessConfig& config, std::size_t variant = 0);
World build_world(const HarnessConfig& config, std::shared_ptr<const EncoderWeights> encoders,
                  std::size_t variant);

/// Receives progress lines; may be empty.
using LogSink = std::function<void(const std::string&)>;

std::vector<RunRecord> run_fewshot(const HarnessConfig& config, const World& world, const LogSink& log = {});

struct BaseNovelResult {
    double base = 0.0, novel = 0.0, hm = 0.0;
};
std::vector<RunRecord> run_base_to_novel(const HarnessConfig& config, const World& world,
                                         const LogSink& log = {}, std::vector<BaseNovelResult>* per_seed = nullptr);

/// Trains shared-mode models on `source`; evaluates each target without
/// adaptation. A target with the source's name is scored on the held-out split.
std::vector<RunRecord> run_crossdata(const HarnessConfig& config, const World& source,
                                     const std::vector<const World*>& targets, const LogSink& log = {});

/// The combos C1, C3, C1+C2, C1+C2+C3 (or all eight with `all_combos`).
std::vector<Components> ablation_combos(bool all);
std::vector<RunRecord> run_ablation(const HarnessConfig& config, const World& world, const LogSink& log = {});

std::vector<RunRecord> run_sensitivity(const HarnessConfig& config, const World& world, const LogSink& log = {});

struct MaskDump {
    MaskQualityReport initial;
    MaskQualityReport final;
    std::vector<std::size_t> snapshot_iterations;
    std::vector<std::filesystem::path> files;
    TrainOutcome outcome;
};

/// Trains one class-specific run (first seed, largest shot count) and writes
/// clamp01(P) per class every `config.mask_every` steps to `out_dir`.
MaskDump dump_masks(const HarnessConfig& config, const World& world, const std::filesystem::path& out_dir,
                    const LogSink& log = {});
std::vector<RunRecord> mask_records(const MaskDump& dump, const World& world, std::uint64_t seed,
                                    std::size_t shot);

}  // namespace ammpl
