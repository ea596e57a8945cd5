#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "ammpl/array.hpp"
#include "ammpl/autodiff.hpp"
#include "ammpl/encoders.hpp"
#include "ammpl/random.hpp"
#include "ammpl/text_prompt.hpp"

namespace ammpl {

/// An image laid out as a b x b grid of q x q x u pixel patches.
struct PatchImage {
    Array patches;                  ///< [b x b x q x q x u], values in [0, 1]
    std::size_t label = 0;          ///< class index into the owning dataset
    std::optional<Array> relevance; ///< [b x b], 1 = meaningful patch (synthetic data)

    /// Throws ShapeError / ArgumentError when shapes or value ranges are off.
    void validate(const DimConfig& dims) const;
};

/// Learnable, unconstrained keep-probabilities: [k x b x b] or [b x b] shared.
struct ProbabilityTensor {
    PromptMode mode = PromptMode::class_specific;
    Array P;

    /// Entries drawn from Gaussian(mean, stddev).
    static ProbabilityTensor init(PromptMode mode, const DimConfig& dims, double mean, double stddev,
                                  std::uint64_t seed);
};

/// Learnable padding for masked patches: [k x q x q x u] or [q x q x u] shared.
struct PadParams {
    PromptMode mode = PromptMode::class_specific;
    Array N;

    /// Every entry starts at `fill`.
    static PadParams init(PromptMode mode, const DimConfig& dims, double fill = 0.0);
};

/// Sampled binary mask [k x b x b] (1 keeps a patch, 0 masks it) built as
/// detach(m - p) + p over clamp01(P). In shared mode a single b x b draw is
/// broadcast over the k classes.
ad::Var sample_mask(const ad::Var& probabilities, PromptMode mode, std::size_t k, RandomStream& rng);

/// Evaluation mask: 1 iff clamp01(p) >= 0.5, as a [k x b x b] constant array.
Array threshold_mask(const Array& probabilities, PromptMode mode, std::size_t k);

/// Ĩ[i, j, c] = M[i, j, c] * I[j, c] -> [k x b x b x q x q x u].
ad::Var apply_mask(const ad::Var& mask, const Array& patches);

/// Î = Ĩ + (1 - M) ⊙ N', N' = N + E. Unmasked patches keep their pixels,
/// masked patches become N'_i. `pad` is [k x q x q x u] or shared
/// [q x q x u]; `info` is the optional interaction term E [k x q x q x u].
ad::Var pad_masked(const ad::Var& masked, const ad::Var& mask, const ad::Var& pad,
                   const std::optional<ad::Var>& info = std::nullopt);

/// X = image_encode(weights, Î).
inline ad::Var image_forward(const EncoderWeights& weights, const ad::Var& prompted) {
    return image_encode(weights, prompted);
}

/// Grayscale P2 PGM of a [b x b] map with values in [0, 1], scaled to 0..255.
void write_pgm(const std::filesystem::path& path, const Array& map01);
/// Reads a P2 PGM back into [rows x cols] values in [0, 255].
Array read_pgm(const std::filesystem::path& path);

}  // namespace ammpl
