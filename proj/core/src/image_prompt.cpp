#include "ammpl/image_prompt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ammpl/errors.hpp"

namespace ammpl {

void PatchImage::validate(const DimConfig& dims) const {
    const Shape want{dims.b, dims.b, dims.q, dims.q, dims.u};
    if (patches.shape() != want) {
        throw ShapeError("patch image: shape mismatch " + shape_str(patches.shape()) + " vs " +
                         shape_str(want));
    }
    for (double v : patches.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("patch image: pixel outside [0, 1]");
    }
    if (relevance) {
        if (relevance->shape() != Shape{dims.b, dims.b}) {
            throw ShapeError("patch image: relevance map " + shape_str(relevance->shape()) +
                             " vs [" + std::to_string(dims.b) + "x" + std::to_string(dims.b) + "]");
        }
        bool any = false;
        for (double v : relevance->values()) {
            if (v != 0.0 && v != 1.0) throw ArgumentError("patch image: relevance map not binary");
            any = any || v == 1.0;
        }
        if (!any) throw ArgumentError("patch image: relevance map has no meaningful patch");
    }
}

ProbabilityTensor ProbabilityTensor::init(PromptMode mode, const DimConfig& dims, double mean,
                                          double stddev, std::uint64_t seed) {
    if (stddev < 0.0) throw ArgumentError("probability init: negative stddev");
    ProbabilityTensor p;
    p.mode = mode;
    p.P = mode == PromptMode::shared ? Array({dims.b, dims.b}) : Array({dims.k, dims.b, dims.b});
    RandomStream rng(seed, "probability");
    for (std::size_t i = 0; i < p.P.size(); ++i) p.P[i] = mean + stddev * rng.normal();
    return p;
}

PadParams PadParams::init(PromptMode mode, const DimConfig& dims, double fill) {
    PadParams p;
    p.mode = mode;
    p.N = mode == PromptMode::shared ? Array({dims.q, dims.q, dims.u})
                                     : Array({dims.k, dims.q, dims.q, dims.u});
    for (std::size_t i = 0; i < p.N.size(); ++i) p.N[i] = fill;
    return p;
}

ad::Var sample_mask(const ad::Var& probabilities, PromptMode mode, std::size_t k,
                    RandomStream& rng) {
    const Shape& ps = probabilities.shape();
    if (mode == PromptMode::shared) {
        if (ps.size() != 2 || ps[0] != ps[1]) {
            throw ShapeError("sample_mask: shared probabilities must be [b x b], got " + shape_str(ps));
        }
        ad::Var m = ad::bernoulli_straight_through(ad::clamp01(probabilities), rng);
        return ad::broadcast_to(ad::reshape(m, {1, ps[0], ps[1]}), {k, ps[0], ps[1]});
    }
    if (ps.size() != 3 || ps[0] != k || ps[1] != ps[2]) {
        throw ShapeError("sample_mask: shape mismatch " + shape_str(ps) + " vs [" + std::to_string(k) +
                         " x b x b]");
    }
    return ad::bernoulli_straight_through(ad::clamp01(probabilities), rng);
}

Array threshold_mask(const Array& probabilities, PromptMode mode, std::size_t k) {
    const Shape& ps = probabilities.shape();
    const std::size_t b = ps.back();
    const std::size_t cells = b * b;
    if (mode == PromptMode::class_specific && (ps.size() != 3 || ps[0] != k)) {
        throw ShapeError("threshold_mask: shape mismatch " + shape_str(ps) + " vs k=" + std::to_string(k));
    }
    Array out({k, b, b});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < cells; ++c) {
            const double p = mode == PromptMode::shared ? probabilities[c] : probabilities[i * cells + c];
            out[i * cells + c] = std::clamp(p, 0.0, 1.0) >= 0.5 ? 1.0 : 0.0;
        }
    return out;
}

ad::Var apply_mask(const ad::Var& mask, const Array& patches) {
    const Shape& ms = mask.shape();
    const Shape& is = patches.shape();
    if (ms.size() != 3 || is.size() != 5 || ms[1] != is[0] || ms[2] != is[1]) {
        throw ShapeError("apply_mask: shape mismatch " + shape_str(ms) + " vs " + shape_str(is));
    }
    const std::size_t k = ms[0], cells = ms[1] * ms[2], ps = is[2] * is[3] * is[4];
    // One fused node instead of two broadcasts and a product: the image is
    // [k x b x b x q x q x u] and dominates memory traffic.
    Array out({k, is[0], is[1], is[2], is[3], is[4]});
    const double* M = mask.value().data();
    const double* I = patches.data();
    double* O = out.data();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < cells; ++c) {
            const double m = M[i * cells + c];
            const double* src = I + c * ps;
            double* dst = O + (i * cells + c) * ps;
            for (std::size_t e = 0; e < ps; ++e) dst[e] = m * src[e];
        }
    const ad::NodeId mi = mask.id();
    const ad::Var parents[] = {mask};
    return mask.tape().record(std::move(out), parents, [mi, patches, k, cells, ps](ad::Tape& t, const Array& g) {
        Array* gm = t.grad_slot(mi);
        if (!gm) return;
        const double* G = g.data();
        const double* I = patches.data();
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t c = 0; c < cells; ++c) {
                const double* grow = G + (i * cells + c) * ps;
                const double* src = I + c * ps;
                double acc = 0.0;
                for (std::size_t e = 0; e < ps; ++e) acc += grow[e] * src[e];
                (*gm)[i * cells + c] += acc;
            }
    });
}

ad::Var pad_masked(const ad::Var& masked, const ad::Var& mask, const ad::Var& pad,
                   const std::optional<ad::Var>& info) {
    const Shape& s = masked.shape();
    const Shape& ms = mask.shape();
    if (s.size() != 6 || ms.size() != 3 || ms[0] != s[0] || ms[1] != s[1] || ms[2] != s[2]) {
        throw ShapeError("pad_masked: shape mismatch " + shape_str(s) + " vs mask " + shape_str(ms));
    }
    const std::size_t k = s[0];
    const Shape patch{s[3], s[4], s[5]};
    const Shape per_class{k, s[3], s[4], s[5]};
    const bool shared = pad.shape() == patch;
    if (!shared && pad.shape() != per_class) {
        throw ShapeError("pad_masked: padding " + shape_str(pad.shape()) + " vs " + shape_str(per_class));
    }
    if (info && info->shape() != per_class) {
        throw ShapeError("pad_masked: interaction info " + shape_str(info->shape()) + " vs " + shape_str(per_class));
    }
    const std::size_t cells = s[1] * s[2], ps = s[3] * s[4] * s[5];

    // N' = N + E per class.
    Array fill(per_class);
    const double* N = pad.value().data();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t e = 0; e < ps; ++e) fill[i * ps + e] = N[shared ? e : i * ps + e];
    if (info) {
        const double* E = info->value().data();
        for (std::size_t j = 0; j < fill.size(); ++j) fill[j] += E[j];
    }

    // out = masked + (1 - M) * N', fused into one node.
    Array out = masked.value();
    const double* M = mask.value().data();
    double* O = out.data();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < cells; ++c) {
            const double hole = 1.0 - M[i * cells + c];
            const double* f = fill.data() + i * ps;
            double* dst = O + (i * cells + c) * ps;
            for (std::size_t e = 0; e < ps; ++e) dst[e] += hole * f[e];
        }

    std::vector<ad::Var> parents{masked, mask, pad};
    if (info) parents.push_back(*info);
    const ad::NodeId xi = masked.id(), mi = mask.id(), ni = pad.id();
    const std::optional<ad::NodeId> ei = info ? std::optional<ad::NodeId>(info->id()) : std::nullopt;
    return masked.tape().record(
        std::move(out), parents,
        [xi, mi, ni, ei, shared, k, cells, ps, fill = std::move(fill)](ad::Tape& t, const Array& g) {
            const double* G = g.data();
            if (Array* gx = t.grad_slot(xi)) {
                double* GX = gx->data();
                for (std::size_t j = 0; j < g.size(); ++j) GX[j] += G[j];
            }
            if (Array* gm = t.grad_slot(mi)) {
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t c = 0; c < cells; ++c) {
                        const double* grow = G + (i * cells + c) * ps;
                        const double* f = fill.data() + i * ps;
                        double acc = 0.0;
                        for (std::size_t e = 0; e < ps; ++e) acc += grow[e] * f[e];
                        (*gm)[i * cells + c] -= acc;
                    }
            }
            Array* gn = t.grad_slot(ni);
            Array* ge = ei ? t.grad_slot(*ei) : nullptr;
            if (!gn && !ge) return;
            const double* M = t.value(mi).data();
            std::vector<double> per(ps);
            for (std::size_t i = 0; i < k; ++i) {
                std::fill(per.begin(), per.end(), 0.0);
                for (std::size_t c = 0; c < cells; ++c) {
                    const double hole = 1.0 - M[i * cells + c];
                    const double* grow = G + (i * cells + c) * ps;
                    for (std::size_t e = 0; e < ps; ++e) per[e] += hole * grow[e];
                }
                for (std::size_t e = 0; e < ps; ++e) {
                    if (gn) (*gn)[shared ? e : i * ps + e] += per[e];
                    if (ge) (*ge)[i * ps + e] += per[e];
                }
            }
        });
}

void write_pgm(const std::filesystem::path& path, const Array& map01) {
    if (map01.ndim() != 2) throw ShapeError("write_pgm: expected a 2-D map, got " + shape_str(map01.shape()));
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const std::size_t rows = map01.dim(0), cols = map01.dim(1);
    os << "P2\n" << cols << ' ' << rows << "\n255\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = std::clamp(map01[r * cols + c], 0.0, 1.0);
            os << (c ? " " : "") << static_cast<int>(std::lround(255.0 * v));
        }
        os << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

Array read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string magic;
    std::size_t cols = 0, rows = 0;
    int maxval = 0;
    is >> magic >> cols >> rows >> maxval;
    if (!is || magic != "P2" || cols == 0 || rows == 0 || maxval != 255) {
        throw FormatError("read_pgm: " + path.string() + " is not an 8-bit P2 image");
    }
    Array out({rows, cols});
    for (std::size_t i = 0; i < out.size(); ++i) {
        int v = -1;
        is >> v;
        if (!is || v < 0 || v > 255) throw FormatError("read_pgm: bad pixel in " + path.string());
        out[i] = v;
    }
    return out;
}

}  // namespace ammpl
