#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ammpl/array.hpp"
#include "ammpl/autodiff.hpp"
#include "ammpl/encoders.hpp"

namespace ammpl {

/// Per-class parameters, or one set shared by every class.
enum class PromptMode { class_specific, shared };

std::string_view to_string(PromptMode mode);
/// Accepts "class-specific" and "shared". Throws ArgumentError otherwise.
PromptMode parse_prompt_mode(std::string_view text);

/// Learnable context tokens: [k x M x l] per class, or [M x l] shared.
struct ContextBank {
    PromptMode mode = PromptMode::class_specific;
    Array V;

    /// Entries drawn from Gaussian(0, 0.02).
    static ContextBank init(PromptMode mode, const DimConfig& dims, std::uint64_t seed);
};

/// Fixed class-name vector: a Gaussian seeded by hash(label, seed), L2-normalized.
/// Works for any label, so unseen classes get embeddings at evaluation time.
Array embed_class_name(std::string_view label, std::uint64_t seed, std::size_t width);

class ClassNameEmbeds {
public:
    ClassNameEmbeds(std::uint64_t seed, std::size_t width) : seed_(seed), width_(width) {}

    Array lookup(std::string_view label) const { return embed_class_name(label, seed_, width_); }
    /// [k x l] rows in label order. Labels must be non-empty and distinct.
    Array stack(std::span<const std::string> labels) const;

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t width() const noexcept { return width_; }

private:
    std::uint64_t seed_;
    std::size_t width_;
};

/// T[i] = {v_i^1 + h_i, ..., v_i^M + h_i, c_i}: [k x (M+1) x l].
///
/// `context` is the traced ContextBank tensor ([k x M x l] or [M x l]),
/// `names` the stacked class-name rows [k x l] (constants), `shift` the
/// optional per-class scalar h [k] added to every context element.
ad::Var build_text_prompt(const ad::Var& context, PromptMode mode, const Array& names,
                          const std::optional<ad::Var>& shift = std::nullopt);

/// Z = text_encode(weights, T).
inline ad::Var text_forward(const EncoderWeights& weights, const ad::Var& prompts) {
    return text_encode(weights, prompts);
}

}  // namespace ammpl
