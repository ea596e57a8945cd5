#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "ammpl/array.hpp"
#include "ammpl/autodiff.hpp"
#include "ammpl/encoders.hpp"
#include "ammpl/text_prompt.hpp"

namespace ammpl {

/// Parameters of one two-layer net: linear(d -> d/4), tanh, linear(d/4 -> out).
/// Shared: w1 [d x h], b1 [h], w2 [h x out], b2 [out].
/// Class-specific: the same with a leading k axis on every tensor.
struct NetParams {
    Array w1, b1, w2, b2;
};

/// f_T (text -> padding info, out = q*q*u) and f_I (image -> context shift, out = 1).
/// Final layers start at zero so the interaction is a no-op at step 0.
struct LightweightNets {
    PromptMode mode = PromptMode::class_specific;
    NetParams text_to_image;
    NetParams image_to_text;

    static LightweightNets init(PromptMode mode, const DimConfig& dims, std::uint64_t seed);
    static std::size_t hidden_width(const DimConfig& dims);
};

/// NetParams as tape variables.
struct TracedNet {
    ad::Var w1, b1, w2, b2;
};

TracedNet trace(ad::Tape& tape, const NetParams& params, bool requires_grad);

/// Applies a net row-wise to [k x d] inputs; class-specific nets use row i's own weights.
ad::Var run_net(const TracedNet& net, PromptMode mode, const ad::Var& rows);

/// E_i = f_T^i(z_i) reshaped to [k x q x q x u].
ad::Var text_to_image_info(const TracedNet& net, PromptMode mode, const ad::Var& text_rep,
                           const DimConfig& dims);

/// h_i = f_I^i(x_i): [k].
ad::Var image_to_text_info(const TracedNet& net, PromptMode mode, const ad::Var& image_rep);

struct InteractionOutcome {
    ad::Var text_rep;        ///< Z after injecting h
    ad::Var image_rep;       ///< X after injecting E
    ad::Var text_rep_plain;  ///< first-pass Z (h = 0)
    ad::Var image_rep_plain; ///< first-pass X (E = 0)
    ad::Var image_info;      ///< E
    ad::Var text_info;       ///< h
};

/// Two-pass interaction: Z0 = text(h absent), X0 = image(E absent); E = f_T(Z0),
/// h = f_I(X0); then Z = text(h), X = image(E). The caller's image pass must
/// reuse one sampled mask for both calls.
InteractionOutcome interactive_round(
    const std::function<ad::Var(const std::optional<ad::Var>& shift)>& text_pass,
    const std::function<ad::Var(const std::optional<ad::Var>& info)>& image_pass,
    const TracedNet& f_text, const TracedNet& f_image, PromptMode mode, const DimConfig& dims);

}  // namespace ammpl
