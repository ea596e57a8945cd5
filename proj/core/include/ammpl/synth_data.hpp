#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ammpl/array.hpp"
#include "ammpl/encoders.hpp"
#include "ammpl/image_prompt.hpp"

namespace ammpl {

/// Recipe for a synthetic patch-image classification world.
///
/// Every image of class c carries `templates[c]` (plus noise) at the cells in
/// `signal_coords[c]`; all other cells hold patterns drawn from the shared
/// distractor pool, so they carry no class evidence.
struct SyntheticSpec {
    std::string name = "synth";
    DimConfig dims;                                   ///< b, q, u and k are used
    std::vector<std::string> labels;                  ///< one per class
    std::vector<std::vector<std::size_t>> signal_coords;  ///< flat cell indices (row * b + col)
    std::vector<Array> templates;                     ///< [q x q x u] per class, values in [0, 1]
    std::vector<Array> distractors;                   ///< shared pool of [q x q x u] patterns
    /// Probability that a non-signal cell shows a faded copy of a randomly
    /// chosen class template instead of a pool pattern. Such confusers are
    /// independent of the image's label, so they remain meaningless patches.
    double confuser_rate = 0.0;
    double confuser_contrast = 0.6;  ///< fraction of template contrast kept
    double noise_std = 0.05;
    std::uint64_t seed = 0;

    std::size_t num_classes() const { return labels.size(); }
    /// [b x b] map, 1 at the class's signal cells.
    Array relevance(std::size_t cls) const;
    /// Throws ArgumentError on a degenerate spec (bad coords, too-similar
    /// templates, empty pool, ...).
    void validate() const;
};

/// Knobs for building a SyntheticSpec.
struct WorldOptions {
    std::string name = "synth";
    std::string label_prefix = "class";
    std::size_t classes = 8;
    std::size_t signal_per_class = 8;
    std::size_t pool_size = 16;
    /// Distractor pixels lie in [0.5 - level, 0.5 + level] (low-contrast clutter).
    double distractor_level = 0.3;
    /// Every class of the world uses the same signal cells (an object region);
    /// otherwise each class gets its own disjoint cells.
    bool shared_signal_cells = true;
    double confuser_rate = 0.1;
    double confuser_contrast = 0.6;
    double noise_std = 0.05;
    std::uint64_t seed = 1;
    /// Alignment of templates with the frozen towers (0 disables it).
    std::size_t align_steps = 150;
    double align_rate = 0.1;
    double align_tau = 0.05;
    std::uint64_t name_seed = 7;
};

/// Builds a spec. When `encoders` is given and `align_steps > 0`, the class
/// templates are tuned so that the frozen image tower maps an image of class c
/// close to the frozen text tower's embedding of label c under an empty
/// context. This stands in for the vision-language pretraining that lets a
/// prompt-learned model recognise classes it was never trained on.
SyntheticSpec make_spec(const WorldOptions& options, const DimConfig& dims,
                        const EncoderWeights* encoders = nullptr);

struct Dataset {
    std::vector<PatchImage> items;
    std::vector<std::string> labels;
    std::vector<Array> class_relevance;  ///< [b x b] per class
    std::uint64_t spec_seed = 0;
    DimConfig dims;

    std::size_t num_classes() const { return labels.size(); }
};

/// Draws `n_per_class` images per class, class by class. Pixels are clipped
/// to [0, 1]. Deterministic in (spec, seed).
Dataset generate(const SyntheticSpec& spec, std::size_t n_per_class, std::uint64_t seed);

struct ShotSplit {
    std::vector<PatchImage> train;
    std::vector<PatchImage> test;
};

/// Exactly `shots` training items per class; the rest is the test split.
ShotSplit sample_shots(const Dataset& data, std::size_t shots, std::uint64_t seed);

struct ClassSplit {
    std::vector<std::size_t> base;   ///< ascending class indices
    std::vector<std::size_t> novel;  ///< ascending class indices
};

/// Class-level partition with ceil(base_fraction * k) base classes.
ClassSplit split_base_novel(const Dataset& data, double base_fraction, std::uint64_t seed);

/// Items of the listed classes, relabelled to positions in `classes`.
Dataset subset_classes(const Dataset& data, const std::vector<std::size_t>& classes);

/// 1 at the class's meaningless cells, 0 at its signal cells.
Array ground_truth_meaningless(const Dataset& data, std::size_t cls);

/// Accuracy (%) of nearest-template matching using only the signal cells of
/// each candidate class; a reference classifier for the generated data.
double template_oracle_accuracy(const SyntheticSpec& spec, const std::vector<PatchImage>& items);

/// Writes `manifest.txt` plus one `item_NNNNN.bin` per image.
void export_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset import_dataset(const std::filesystem::path& dir);

}  // namespace ammpl
