#include "ammpl/text_prompt.hpp"

#include <cmath>
#include <set>

#include "ammpl/errors.hpp"
#include "ammpl/random.hpp"

namespace ammpl {

std::string_view to_string(PromptMode mode) {
    return mode == PromptMode::shared ? "shared" : "class-specific";
}

PromptMode parse_prompt_mode(std::string_view text) {
    if (text == "class-specific") return PromptMode::class_specific;
    if (text == "shared") return PromptMode::shared;
    throw ArgumentError("unknown mode '" + std::string(text) + "' (expected class-specific or shared)");
}

ContextBank ContextBank::init(PromptMode mode, const DimConfig& dims, std::uint64_t seed) {
    ContextBank bank;
    bank.mode = mode;
    bank.V = mode == PromptMode::shared ? Array({dims.M, dims.l}) : Array({dims.k, dims.M, dims.l});
    RandomStream rng(seed, "context");
    for (std::size_t i = 0; i < bank.V.size(); ++i) bank.V[i] = 0.02 * rng.normal();
    return bank;
}

Array embed_class_name(std::string_view label, std::uint64_t seed, std::size_t width) {
    if (label.empty()) throw ArgumentError("embed_class_name: empty label");
    RandomStream rng(seed ^ fnv1a64(label), "class-name");
    Array v({width});
    double norm2 = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
        v[i] = rng.normal();
        norm2 += v[i] * v[i];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t i = 0; i < width; ++i) v[i] *= inv;
    return v;
}

Array ClassNameEmbeds::stack(std::span<const std::string> labels) const {
    if (labels.empty()) throw ArgumentError("class names: empty label list");
    std::set<std::string_view> seen;
    Array out({labels.size(), width_});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!seen.insert(labels[i]).second) {
            throw ArgumentError("class names: duplicate label '" + labels[i] + "'");
        }
        const Array row = lookup(labels[i]);
        for (std::size_t j = 0; j < width_; ++j) out[i * width_ + j] = row[j];
    }
    return out;
}

ad::Var build_text_prompt(const ad::Var& context, PromptMode mode, const Array& names,
                          const std::optional<ad::Var>& shift) {
    const Shape& vs = context.shape();
    if (names.ndim() != 2) throw ShapeError("build_text_prompt: names must be [k x l], got " + shape_str(names.shape()));
    const std::size_t k = names.dim(0);
    const std::size_t l = names.dim(1);

    std::size_t M = 0;
    if (mode == PromptMode::shared) {
        if (vs.size() != 2 || vs[1] != l) {
            throw ShapeError("build_text_prompt: shared context " + shape_str(vs) + " vs names " +
                             shape_str(names.shape()));
        }
        M = vs[0];
    } else {
        if (vs.size() != 3 || vs[2] != l) {
            throw ShapeError("build_text_prompt: class context " + shape_str(vs) + " vs names " +
                             shape_str(names.shape()));
        }
        if (vs[0] != k) {
            throw ShapeError("build_text_prompt: " + std::to_string(k) + " labels for " +
                             std::to_string(vs[0]) + " context classes");
        }
        M = vs[1];
    }

    ad::Tape& t = context.tape();
    const Shape ctx_shape{k, M, l};
    ad::Var ctx = mode == PromptMode::shared ? ad::broadcast_to(context, ctx_shape) : context;
    if (shift) {
        if (shift->shape() != Shape{k}) {
            throw ShapeError("build_text_prompt: shift " + shape_str(shift->shape()) + " vs [" +
                             std::to_string(k) + "]");
        }
        ctx = ad::add(ctx, ad::broadcast_to(ad::reshape(*shift, {k, 1, 1}), ctx_shape));
    }
    ad::Var cls = t.constant(names.reshaped({k, 1, l}));
    const ad::Var parts[] = {ctx, cls};
    return ad::concat(parts, 1);
}

}  // namespace ammpl
