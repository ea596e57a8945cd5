#include "ammpl/interactive.hpp"

#include <algorithm>
#include <cmath>

#include "ammpl/errors.hpp"
#include "ammpl/random.hpp"

namespace ammpl {

namespace {

NetParams init_net(PromptMode mode, std::size_t k, std::size_t in, std::size_t hidden,
                   std::size_t out, RandomStream& rng) {
    NetParams p;
    if (mode == PromptMode::shared) {
        p.w1 = Array({in, hidden});
        p.b1 = Array({hidden});
        p.w2 = Array({hidden, out});
        p.b2 = Array({out});
    } else {
        p.w1 = Array({k, in, hidden});
        p.b1 = Array({k, hidden});
        p.w2 = Array({k, hidden, out});
        p.b2 = Array({k, out});
    }
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < p.w1.size(); ++i) p.w1[i] = sd * rng.normal();
    return p;
}

}  // namespace

std::size_t LightweightNets::hidden_width(const DimConfig& dims) {
    return std::max<std::size_t>(1, dims.d / 4);
}

LightweightNets LightweightNets::init(PromptMode mode, const DimConfig& dims, std::uint64_t seed) {
    LightweightNets nets;
    nets.mode = mode;
    const std::size_t h = hidden_width(dims);
    RandomStream rng(seed, "interaction");
    nets.text_to_image = init_net(mode, dims.k, dims.d, h, dims.patch_size(), rng);
    nets.image_to_text = init_net(mode, dims.k, dims.d, h, 1, rng);
    return nets;
}

TracedNet trace(ad::Tape& tape, const NetParams& p, bool requires_grad) {
    return {tape.leaf(p.w1, requires_grad), tape.leaf(p.b1, requires_grad),
            tape.leaf(p.w2, requires_grad), tape.leaf(p.b2, requires_grad)};
}

ad::Var run_net(const TracedNet& net, PromptMode mode, const ad::Var& rows) {
    const Shape& rs = rows.shape();
    if (rs.size() != 2) throw ShapeError("run_net: rows must be [k x d], got " + shape_str(rs));
    const std::size_t k = rs[0], d = rs[1];
    if (mode == PromptMode::shared) {
        if (net.w1.shape().size() != 2 || net.w1.shape()[0] != d) {
            throw ShapeError("run_net: shape mismatch " + shape_str(rs) + " vs " +
                             shape_str(net.w1.shape()));
        }
        ad::Var h = ad::tanh(ad::add_bias(ad::matmul(rows, net.w1), net.b1));
        return ad::add_bias(ad::matmul(h, net.w2), net.b2);
    }
    const Shape& ws = net.w1.shape();
    if (ws.size() != 3 || ws[0] != k || ws[1] != d) {
        throw ShapeError("run_net: shape mismatch " + shape_str(rs) + " vs " + shape_str(ws));
    }
    const std::size_t hidden = ws[2];
    const std::size_t out = net.w2.shape()[2];
    ad::Var h = ad::reshape(ad::bmm(ad::reshape(rows, {k, 1, d}), net.w1), {k, hidden});
    h = ad::tanh(ad::add(h, net.b1));
    ad::Var o = ad::reshape(ad::bmm(ad::reshape(h, {k, 1, hidden}), net.w2), {k, out});
    return ad::add(o, net.b2);
}

ad::Var text_to_image_info(const TracedNet& net, PromptMode mode, const ad::Var& text_rep,
                           const DimConfig& dims) {
    const std::size_t k = text_rep.shape()[0];
    return ad::reshape(run_net(net, mode, text_rep), {k, dims.q, dims.q, dims.u});
}

ad::Var image_to_text_info(const TracedNet& net, PromptMode mode, const ad::Var& image_rep) {
    const std::size_t k = image_rep.shape()[0];
    return ad::reshape(run_net(net, mode, image_rep), {k});
}

InteractionOutcome interactive_round(
    const std::function<ad::Var(const std::optional<ad::Var>&)>& text_pass,
    const std::function<ad::Var(const std::optional<ad::Var>&)>& image_pass,
    const TracedNet& f_text, const TracedNet& f_image, PromptMode mode, const DimConfig& dims) {
    InteractionOutcome r;
    r.text_rep_plain = text_pass(std::nullopt);
    r.image_rep_plain = image_pass(std::nullopt);
    r.image_info = text_to_image_info(f_text, mode, r.text_rep_plain, dims);
    r.text_info = image_to_text_info(f_image, mode, r.image_rep_plain);
    r.text_rep = text_pass(r.text_info);
    r.image_rep = image_pass(r.image_info);
    return r;
}

}  // namespace ammpl
