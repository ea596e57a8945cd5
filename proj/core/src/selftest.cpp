#include "ammpl/selftest.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "ammpl/autodiff.hpp"
#include "ammpl/errors.hpp"
#include "ammpl/gradcheck.hpp"
#include "ammpl/harness.hpp"
#include "ammpl/image_prompt.hpp"
#include "ammpl/pipeline.hpp"
#include "ammpl/random.hpp"

namespace ammpl {

namespace {

using Clock = std::chrono::steady_clock;

std::string format(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

template <class Body>
CheckResult timed(std::string name, Body body) {
    CheckResult r;
    r.name = std::move(name);
    const auto start = Clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

Array uniform_array(Shape shape, RandomStream& rng, double lo = 0.0, double hi = 1.0) {
    Array a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = lo + (hi - lo) * rng.uniform();
    return a;
}

void randomize(Array& a, RandomStream& rng, double scale) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = scale * rng.normal();
}

PatchImage random_image(const DimConfig& dims, std::size_t label, RandomStream& rng) {
    PatchImage img;
    img.patches = uniform_array({dims.b, dims.b, dims.q, dims.q, dims.u}, rng);
    img.label = label;
    return img;
}

std::vector<std::string> toy_labels(std::size_t k) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < k; ++i) labels.push_back("toy" + std::to_string(i));
    return labels;
}

// A downstream loss with non-trivial dependence on every mask entry.
ad::Var mask_loss(const ad::Var& mask, const Array& weights) {
    ad::Tape& t = mask.tape();
    ad::Var w = t.constant(weights);
    return ad::sum(ad::tanh(ad::add(ad::mul(mask, w), ad::mul(mask, mask))));
}

Array clamped(const Array& p) {
    Array out = p;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    return out;
}

}  // namespace

DimConfig toy_dims() {
    DimConfig d;
    d.l = 4;
    d.d = 8;
    d.d_h = 6;
    d.b = 3;
    d.q = 2;
    d.u = 1;
    d.M = 2;
    d.k = 3;
    return d;
}

CheckResult check_straight_through(std::size_t configurations, std::uint64_t seed) {
    return timed("straight-through identity", [&](CheckResult& r) {
        RandomStream meta(seed, "selftest.st");
        std::size_t value_bad = 0, grad_bad = 0, entries = 0;
        for (std::size_t c = 0; c < configurations; ++c) {
            const std::size_t k = 1 + meta.below(4);
            const std::size_t b = 1 + meta.below(5);
            Array p = uniform_array({k, b, b}, meta);
            // Include the boundary probabilities exactly.
            if (p.size() > 1) {
                p[0] = 0.0;
                p[p.size() - 1] = 1.0;
            }
            Array weights(p.shape());
            randomize(weights, meta, 1.0);
            const std::uint64_t draw_seed = meta.next_u64();

            ad::Tape st;
            ad::Var leaf_p = st.leaf(p);
            RandomStream rng_a(draw_seed, "mask");
            ad::Var mask = ad::bernoulli_straight_through(leaf_p, rng_a);
            ad::GradientMap g_st = st.backward(mask_loss(mask, weights), std::span<const ad::Var>(&leaf_p, 1));

            RandomStream rng_b(draw_seed, "mask");
            const Array sampled = ad::sample_bernoulli(p, rng_b);
            ad::Tape plain;
            ad::Var leaf_m = plain.leaf(sampled);
            ad::GradientMap g_m = plain.backward(mask_loss(leaf_m, weights), std::span<const ad::Var>(&leaf_m, 1));

            entries += p.size();
            if (!mask.value().bitwise_equal(sampled)) ++value_bad;
            if (!g_st.at(leaf_p.id()).bitwise_equal(g_m.at(leaf_m.id()))) ++grad_bad;
        }
        r.passed = value_bad == 0 && grad_bad == 0;
        r.detail = std::to_string(configurations) + " configs, " + std::to_string(entries) +
                   " entries; value mismatches " + std::to_string(value_bad) + ", gradient mismatches " +
                   std::to_string(grad_bad);
    });
}

CheckResult check_pipeline_gradients(std::uint64_t seed) {
    return timed("pipeline gradients", [&](CheckResult& r) {
        const DimConfig dims = toy_dims();
        auto encoders = std::make_shared<const EncoderWeights>(init_frozen(seed, dims));
        double worst = 0.0;
        double st_gap = 0.0;
        bool all_ok = true;
        std::string notes;
        for (PromptMode mode : {PromptMode::class_specific, PromptMode::shared}) {
            ModelConfig mc;
            mc.dims = dims;
            mc.mode = mode;
            mc.tau = 0.2;
            ModelState state = make_model(encoders, toy_labels(dims.k), mc, SeedBundle::from_run_seed(seed));
            RandomStream rng(seed, "selftest.grad");
            // Interior probabilities keep clamp01 differentiable under the FD step.
            state.probability.P = uniform_array(state.probability.P.shape(), rng, 0.2, 0.8);
            randomize(state.padding.N, rng, 0.3);
            for (NetParams* net : {&state.nets.text_to_image, &state.nets.image_to_text}) {
                randomize(net->w1, rng, 0.5);
                randomize(net->b1, rng, 0.2);
                randomize(net->w2, rng, 0.5);
                randomize(net->b2, rng, 0.2);
            }
            std::vector<PatchImage> images;
            for (std::size_t i = 0; i < 2; ++i) images.push_back(random_image(dims, i % dims.k, rng));
            const Array names = state.class_names();

            // Frozen residuals m - clamp01(P), drawn exactly as the training pass would.
            const std::uint64_t mask_seed = rng.next_u64();
            std::vector<Array> residuals;
            {
                RandomStream draws(mask_seed, "mask");
                const Array p = clamped(state.probability.P);
                for (std::size_t i = 0; i < images.size(); ++i) {
                    Array m = ad::sample_bernoulli(p, draws);
                    for (std::size_t j = 0; j < m.size(); ++j) m[j] -= p[j];
                    residuals.push_back(std::move(m));
                }
            }

            std::vector<Array> params;
            for (const ParamRef& ref : all_parameters(state)) params.push_back(*ref.value);
            auto build = [&](std::span<const ad::Var> v) {
                return TracedModel{v[0], v[1], v[2], TracedNet{v[3], v[4], v[5], v[6]},
                                   TracedNet{v[7], v[8], v[9], v[10]}};
            };
            ScalarFn fn = [&](ad::Tape&, std::span<const ad::Var> v) {
                const TracedModel traced = build(v);
                ad::Var total;
                for (std::size_t i = 0; i < images.size(); ++i) {
                    MaskSource src;
                    src.residual = &residuals[i];
                    ad::Var ce = cross_entropy(forward(state, traced, names, images[i].patches, src).logits,
                                               images[i].label);
                    total = i == 0 ? ce : ad::add(total, ce);
                }
                return total;
            };
            const FdReport report = finite_difference_check(fn, params);
            const std::string tag = mode == PromptMode::shared ? "shared" : "class-specific";
            if (!report.passed()) {
                all_ok = false;
                for (std::size_t i = 0; i < report.params.size(); ++i) {
                    if (!report.params[i].passed) notes += " " + tag + ":" + all_parameters(state)[i].name;
                }
            }
            worst = std::max(worst, report.max_rel_error());

            // The straight-through graph must give the same dL/dP as the reconstruction.
            const std::vector<Array> recon = reverse_gradients(fn, params);
            ad::Tape tape;
            const TracedModel traced = trace_model(tape, state, true);
            RandomStream draws(mask_seed, "mask");
            ad::Var total;
            for (std::size_t i = 0; i < images.size(); ++i) {
                MaskSource src;
                src.rng = &draws;
                ad::Var ce = cross_entropy(forward(state, traced, names, images[i].patches, src).logits,
                                           images[i].label);
                total = i == 0 ? ce : ad::add(total, ce);
            }
            const ad::GradientMap g = tape.backward(total, std::span<const ad::Var>(&traced.probability, 1));
            const Array& st = g.at(traced.probability.id());
            st_gap = std::max(st_gap, max_abs_diff(st, recon[1]));
        }
        const bool st_ok = st_gap == 0.0;
        r.passed = all_ok && st_ok;
        r.detail = "max rel error " + format("%.3e", worst) + " (tol 1e-4, floor 1e-6); ST vs reconstruction " +
                   format("%.1e", st_gap) + (notes.empty() ? "" : "; failing:" + notes);
    });
}

CheckResult check_bernoulli_statistics(std::size_t draws, std::uint64_t seed) {
    return timed("bernoulli statistics", [&](CheckResult& r) {
        bool ok = true;
        std::string detail;
        for (double p : {0.1, 0.5, 0.95}) {
            RandomStream rng(seed, "selftest.bernoulli." + format("%.2f", p));
            const Array sample = ad::sample_bernoulli(Array({draws}, p), rng);
            double ones = 0.0;
            for (std::size_t i = 0; i < sample.size(); ++i) ones += sample[i];
            const double n = static_cast<double>(draws);
            const double band = 3.0 * std::sqrt(n * p * (1.0 - p));
            const bool inside = std::abs(ones - n * p) <= band;
            ok = ok && inside;
            detail += format("p=%.2f: ", p) + format("%.4f", ones / n) + (inside ? " ok; " : " OUT; ");
        }
        ad::Tape tape;
        Array extreme({2, 4, 4});
        for (std::size_t i = 0; i < extreme.size(); ++i) extreme[i] = i % 2 == 0 ? -1.0 : 2.0;
        RandomStream rng(seed, "selftest.clamp");
        const Array m = sample_mask(tape.leaf(extreme), PromptMode::class_specific, 2, rng).value();
        bool clamp_ok = true;
        for (std::size_t i = 0; i < m.size(); ++i) clamp_ok = clamp_ok && m[i] == (i % 2 == 0 ? 0.0 : 1.0);
        ok = ok && clamp_ok;
        detail += clamp_ok ? "clamp -1->0, 2->1 exact" : "clamp cases wrong";
        r.passed = ok;
        r.detail = detail;
    });
}

CheckResult check_mask_padding(std::uint64_t seed) {
    return timed("mask and padding semantics", [&](CheckResult& r) {
        DimConfig dims = toy_dims();
        dims.b = 3;
        dims.q = 2;
        dims.u = 2;
        const std::size_t cells = dims.grid_cells();
        const std::size_t ps = dims.patch_size();
        RandomStream rng(seed, "selftest.pad");
        const Array patches = uniform_array({dims.b, dims.b, dims.q, dims.q, dims.u}, rng);
        Array pad({2, dims.q, dims.q, dims.u});
        randomize(pad, rng, 1.0);
        Array shared_pad({dims.q, dims.q, dims.u});
        randomize(shared_pad, rng, 1.0);
        Array neg_pad = pad;
        for (std::size_t i = 0; i < neg_pad.size(); ++i) neg_pad[i] = -pad[i];

        std::size_t bad = 0;
        for (std::size_t bits = 0; bits < (std::size_t{1} << cells); ++bits) {
            // Class 0 takes the pattern, class 1 its complement.
            Array mask({2, dims.b, dims.b});
            for (std::size_t c = 0; c < cells; ++c) {
                const double keep = (bits >> c) & 1u ? 1.0 : 0.0;
                mask[c] = keep;
                mask[cells + c] = 1.0 - keep;
            }
            ad::Tape t;
            ad::Var m = t.constant(mask);
            ad::Var masked = apply_mask(m, patches);
            const Array out = pad_masked(masked, m, t.constant(pad)).value();
            const Array out_shared = pad_masked(masked, m, t.constant(shared_pad)).value();
            const Array out_zero = pad_masked(masked, m, t.constant(pad), t.constant(neg_pad)).value();
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t c = 0; c < cells; ++c) {
                    const bool keep = mask[i * cells + c] == 1.0;
                    for (std::size_t e = 0; e < ps; ++e) {
                        const std::size_t at = (i * cells + c) * ps + e;
                        const double pixel = patches[c * ps + e];
                        const double expect = keep ? pixel : pad[i * ps + e];
                        const double expect_shared = keep ? pixel : shared_pad[e];
                        const double expect_zero = keep ? pixel : 0.0;
                        if (std::bit_cast<std::uint64_t>(out[at]) != std::bit_cast<std::uint64_t>(expect)) ++bad;
                        if (std::bit_cast<std::uint64_t>(out_shared[at]) !=
                            std::bit_cast<std::uint64_t>(expect_shared))
                            ++bad;
                        if (keep ? std::bit_cast<std::uint64_t>(out_zero[at]) != std::bit_cast<std::uint64_t>(pixel)
                                 : out_zero[at] != expect_zero)
                            ++bad;
                    }
                }
        }
        r.passed = bad == 0;
        r.detail = std::to_string(std::size_t{1} << cells) + " masks x 2 classes; mismatches " + std::to_string(bad);
    });
}

const std::vector<PublishedHm>& published_hm_table() {
    static const std::vector<PublishedHm> table{
        {"Caltech101", "CoCoOp", 97.80, 93.00, 95.34},   {"Caltech101", "MaPLe", 97.89, 94.30, 96.06},
        {"Caltech101", "AMMPL", 97.99, 94.59, 96.25},    {"DTD", "CoCoOp", 77.30, 54.57, 63.97},
        {"DTD", "MaPLe", 79.37, 53.80, 64.13},           {"DTD", "AMMPL", 78.33, 58.43, 66.93},
        {"EuroSAT", "CoCoOp", 85.63, 60.33, 70.79},      {"EuroSAT", "MaPLe", 93.60, 65.47, 77.05},
        {"EuroSAT", "AMMPL", 94.10, 67.39, 78.54},       {"FGVCAircraft", "CoCoOp", 34.37, 32.70, 33.51},
        {"FGVCAircraft", "MaPLe", 35.46, 34.61, 35.03},  {"FGVCAircraft", "AMMPL", 35.69, 35.91, 35.80},
        {"Flowers102", "CoCoOp", 94.97, 71.43, 81.53},   {"Flowers102", "MaPLe", 95.47, 73.33, 82.94},
        {"Flowers102", "AMMPL", 94.90, 74.61, 83.54},    {"Food101", "CoCoOp", 90.67, 91.27, 90.96},
        {"Food101", "MaPLe", 90.72, 92.07, 91.39},       {"Food101", "AMMPL", 90.90, 92.10, 91.50},
        {"OxfordPets", "CoCoOp", 95.20, 97.89, 96.52},   {"OxfordPets", "MaPLe", 95.60, 97.63, 96.60},
        {"OxfordPets", "AMMPL", 96.11, 98.03, 97.31},    {"Sun397", "CoCoOp", 81.27, 78.90, 80.07},
        {"Sun397", "MaPLe", 80.50, 78.10, 79.28},        {"Sun397", "AMMPL", 81.02, 78.49, 79.73},
        {"UCF101", "CoCoOp", 81.27, 73.77, 77.34},       {"UCF101", "MaPLe", 83.87, 76.20, 79.85},
        {"UCF101", "AMMPL", 82.58, 76.72, 79.54},
    };
    return table;
}

CheckResult check_harmonic_table(double tolerance) {
    return timed("harmonic mean table", [&](CheckResult& r) {
        std::string misses;
        std::size_t within = 0;
        for (const PublishedHm& row : published_hm_table()) {
            const double hm = harmonic_mean(row.base, row.novel);
            const double diff = std::abs(hm - row.hm);
            if (diff <= tolerance) {
                ++within;
            } else {
                misses += " " + row.dataset + "/" + row.method + format(" %.4f", hm) + format(" vs %.2f", row.hm);
            }
        }
        const std::size_t total = published_hm_table().size();
        r.passed = within == total;
        r.detail = std::to_string(within) + "/" + std::to_string(total) + " within " + format("%.2f", tolerance) +
                   (misses.empty() ? "" : ";" + misses);
    });
}

CheckResult check_interaction_noop(std::uint64_t seed) {
    return timed("interaction no-op at init", [&](CheckResult& r) {
        const DimConfig dims = toy_dims();
        auto encoders = std::make_shared<const EncoderWeights>(init_frozen(seed, dims));
        RandomStream data(seed, "selftest.noop");
        std::vector<PatchImage> batch;
        for (std::size_t i = 0; i < 4; ++i) batch.push_back(random_image(dims, i % dims.k, data));
        std::string detail;
        bool ok = true;
        for (PromptMode mode : {PromptMode::class_specific, PromptMode::shared}) {
            double losses[2];
            for (int with_c3 = 0; with_c3 < 2; ++with_c3) {
                ModelConfig mc;
                mc.dims = dims;
                mc.mode = mode;
                mc.components = Components{true, true, with_c3 == 1};
                ModelState state = make_model(encoders, toy_labels(dims.k), mc, SeedBundle::from_run_seed(seed));
                RandomStream rng(seed, "selftest.noop.mask");
                losses[with_c3] = loss_and_gradients(state, batch, rng).loss;
            }
            const bool same = std::bit_cast<std::uint64_t>(losses[0]) == std::bit_cast<std::uint64_t>(losses[1]);
            ok = ok && same;
            detail += std::string(mode == PromptMode::shared ? "shared " : "class-specific ") +
                      format("%.17g", losses[0]) + (same ? " == " : " != ") + format("%.17g", losses[1]) + "; ";
        }
        r.passed = ok;
        r.detail = detail.substr(0, detail.size() - 2);
    });
}

std::vector<CheckResult> run_selftest(const std::function<void(const CheckResult&)>& progress) {
    std::vector<CheckResult> out;
    auto add = [&](CheckResult r) {
        if (progress) progress(r);
        out.push_back(std::move(r));
    };
    add(check_straight_through());
    add(check_pipeline_gradients());
    add(check_bernoulli_statistics());
    add(check_mask_padding());
    add(check_harmonic_table());
    add(check_interaction_noop());
    return out;
}

}  // namespace ammpl
