#include "ammpl/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "ammpl/errors.hpp"
#include "binio.hpp"

namespace ammpl {

// ---- small value types --------------------------------------------------

std::string Components::name() const {
    std::string out;
    auto add = [&](const char* tag) {
        if (!out.empty()) out += '+';
        out += tag;
    };
    if (mask) add("C1");
    if (padding) add("C2");
    if (interaction) add("C3");
    return out.empty() ? "none" : out;
}

Components Components::parse(std::string_view text) {
    if (text == "none") return {false, false, false};
    if (text == "all") return {true, true, true};
    Components c{false, false, false};
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('+', pos), text.size());
        const std::string_view tok = text.substr(pos, end - pos);
        if (tok == "C1") c.mask = true;
        else if (tok == "C2") c.padding = true;
        else if (tok == "C3") c.interaction = true;
        else throw ArgumentError("unknown component '" + std::string(tok) + "' in '" + std::string(text) + "'");
        pos = end + 1;
    }
    return c;
}

EvalMaskPolicy EvalMaskPolicy::parse(std::string_view text) {
    if (text == "threshold") return {};
    constexpr std::string_view prefix = "stochastic:";
    if (text.substr(0, prefix.size()) == prefix) {
        unsigned s = 0;
        const auto rest = text.substr(prefix.size());
        const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), s);
        if (ec == std::errc() && ptr == rest.data() + rest.size() && s > 0) return {s};
    }
    throw ArgumentError("bad eval mask policy '" + std::string(text) +
                        "' (expected threshold or stochastic:S)");
}

std::string EvalMaskPolicy::name() const {
    return stochastic_samples == 0 ? "threshold" : "stochastic:" + std::to_string(stochastic_samples);
}

SeedBundle SeedBundle::from_run_seed(std::uint64_t seed) {
    RandomStream rng(seed, "seed-bundle");
    return {rng.next_u64(), rng.next_u64(), rng.next_u64()};
}

// ---- model construction -------------------------------------------------

Array ModelState::class_names() const {
    return ClassNameEmbeds(config.name_seed, config.dims.l).stack(labels);
}

ModelState make_model(std::shared_ptr<const EncoderWeights> encoders,
                      std::vector<std::string> labels, const ModelConfig& config,
                      const SeedBundle& seeds) {
    if (!encoders) throw ArgumentError("make_model: encoders are required");
    if (labels.empty()) throw ArgumentError("make_model: no class labels");
    if (!(config.tau > 0.0)) throw ArgumentError("make_model: temperature must be positive");
    ModelState s;
    s.encoders = std::move(encoders);
    s.config = config;
    s.config.dims.k = static_cast<std::uint32_t>(labels.size());
    s.config.dims.validate();
    if (s.encoders->dims.l != s.config.dims.l || s.encoders->dims.d != s.config.dims.d ||
        s.encoders->dims.b != s.config.dims.b || s.encoders->dims.patch_size() != s.config.dims.patch_size() ||
        s.encoders->dims.M != s.config.dims.M) {
        throw ArgumentError("make_model: encoder dimensions do not match the model configuration");
    }
    s.seeds = seeds;
    s.labels = std::move(labels);
    const DimConfig& d = s.config.dims;
    s.context = ContextBank::init(config.mode, d, seeds.init);
    s.probability = ProbabilityTensor::init(config.mode, d, config.p_init_mean, config.p_init_std, seeds.init);
    s.padding = PadParams::init(config.mode, d, config.pad_init);
    s.nets = LightweightNets::init(config.mode, d, seeds.init);
    // validates labels (non-empty, distinct)
    (void)s.class_names();
    return s;
}

ModelState with_labels(const ModelState& state, std::vector<std::string> labels) {
    if (state.config.mode != PromptMode::shared) {
        throw ArgumentError("with_labels: only shared-mode models can score a new label set");
    }
    ModelState s = state;
    s.labels = std::move(labels);
    s.config.dims.k = static_cast<std::uint32_t>(s.labels.size());
    s.stale_text_rep.reset();
    s.stale_image_rep.reset();
    (void)s.class_names();
    return s;
}

std::vector<ParamRef> all_parameters(ModelState& s) {
    return {
        {"context.V", &s.context.V},
        {"probability.P", &s.probability.P},
        {"padding.N", &s.padding.N},
        {"f_text.w1", &s.nets.text_to_image.w1},
        {"f_text.b1", &s.nets.text_to_image.b1},
        {"f_text.w2", &s.nets.text_to_image.w2},
        {"f_text.b2", &s.nets.text_to_image.b2},
        {"f_image.w1", &s.nets.image_to_text.w1},
        {"f_image.b1", &s.nets.image_to_text.b1},
        {"f_image.w2", &s.nets.image_to_text.w2},
        {"f_image.b2", &s.nets.image_to_text.b2},
    };
}

namespace {

bool is_learnable(const std::string& name, const Components& c) {
    if (name == "context.V") return true;
    if (name == "probability.P") return c.mask;
    if (name == "padding.N") return c.padding;
    return c.interaction;
}

std::vector<std::pair<std::string, ad::Var>> traced_parameters(const TracedModel& t) {
    return {
        {"context.V", t.context},       {"probability.P", t.probability},
        {"padding.N", t.padding},       {"f_text.w1", t.f_text.w1},
        {"f_text.b1", t.f_text.b1},     {"f_text.w2", t.f_text.w2},
        {"f_text.b2", t.f_text.b2},     {"f_image.w1", t.f_image.w1},
        {"f_image.b1", t.f_image.b1},   {"f_image.w2", t.f_image.w2},
        {"f_image.b2", t.f_image.b2},
    };
}

}  // namespace

std::vector<ParamRef> learnable_parameters(ModelState& s) {
    std::vector<ParamRef> out;
    for (auto& p : all_parameters(s))
        if (is_learnable(p.name, s.config.components)) out.push_back(p);
    return out;
}

TracedModel trace_model(ad::Tape& tape, const ModelState& s, bool training) {
    const Components& c = s.config.components;
    TracedModel t;
    t.context = tape.leaf(s.context.V, training);
    t.probability = tape.leaf(s.probability.P, training && c.mask);
    t.padding = tape.leaf(s.padding.N, training && c.padding);
    t.f_text = trace(tape, s.nets.text_to_image, training && c.interaction);
    t.f_image = trace(tape, s.nets.image_to_text, training && c.interaction);
    return t;
}

// ---- forward ------------------------------------------------------------

ForwardResult forward(const ModelState& s, const TracedModel& traced, const Array& names,
                      const Array& patches, const MaskSource& source) {
    const DimConfig& dims = s.config.dims;
    const PromptMode mode = s.config.mode;
    const Components& comp = s.config.components;
    const EncoderWeights& enc = *s.encoders;
    ad::Tape& tape = traced.context.tape();
    const std::size_t k = names.dim(0);
    const Shape mask_shape{k, dims.b, dims.b};

    ad::Var mask;
    if (comp.mask) {
        if (source.rng) {
            mask = sample_mask(traced.probability, mode, k, *source.rng);
        } else if (source.fixed) {
            if (source.fixed->shape() != mask_shape) {
                throw ShapeError("forward: fixed mask " + shape_str(source.fixed->shape()) + " vs " +
                                 shape_str(mask_shape));
            }
            mask = tape.constant(*source.fixed);
        } else if (source.residual) {
            const Shape& ps = traced.probability.shape();
            if (source.residual->shape() != ps) {
                throw ShapeError("forward: mask residual " + shape_str(source.residual->shape()) + " vs " +
                                 shape_str(ps));
            }
            mask = ad::add(tape.constant(*source.residual), ad::clamp01(traced.probability));
            if (mode == PromptMode::shared) mask = ad::broadcast_to(ad::reshape(mask, {1, dims.b, dims.b}), mask_shape);
        } else {
            throw ContractError("forward: component C1 needs a sampled, fixed or reconstructed mask");
        }
    } else {
        mask = tape.constant(Array::ones(mask_shape));
    }

    const bool pads = comp.mask && (comp.padding || comp.interaction);
    ad::Var pad = comp.padding ? traced.padding : tape.constant(Array::zeros(s.padding.N.shape()));

    auto image_pass = [&](const std::optional<ad::Var>& info) {
        ad::Var masked = apply_mask(mask, patches);
        if (!pads) return image_forward(enc, masked);
        return image_forward(enc, pad_masked(masked, mask, pad, info));
    };
    auto text_pass = [&](const std::optional<ad::Var>& shift) {
        return text_forward(enc, build_text_prompt(traced.context, mode, names, shift));
    };

    ForwardResult r;
    r.mask = mask;
    if (!comp.interaction) {
        r.text_rep = text_pass(std::nullopt);
        r.image_rep = image_pass(std::nullopt);
    } else if (s.config.schedule == InteractionSchedule::stale && s.stale_text_rep &&
               s.stale_image_rep && s.stale_text_rep->shape() == Shape{k, dims.d}) {
        ad::Var info = text_to_image_info(traced.f_text, mode, tape.constant(*s.stale_text_rep), dims);
        ad::Var shift = image_to_text_info(traced.f_image, mode, tape.constant(*s.stale_image_rep));
        r.text_rep = text_pass(shift);
        r.image_rep = image_pass(info);
    } else {
        auto round = interactive_round(text_pass, image_pass, traced.f_text, traced.f_image, mode, dims);
        r.text_rep = round.text_rep;
        r.image_rep = round.image_rep;
    }
    r.logits = ad::scale(ad::sum_axis(ad::mul(r.image_rep, r.text_rep), 1), 1.0 / s.config.tau);
    return r;
}

Array class_logits(const ModelState& s, const PatchImage& image, RandomStream& rng) {
    ad::Tape tape;
    const TracedModel traced = trace_model(tape, s, false);
    return forward(s, traced, s.class_names(), image.patches, {&rng, nullptr}).logits.value();
}

ad::Var cross_entropy(const ad::Var& logits, std::size_t label) {
    const std::size_t k = logits.shape()[0];
    if (logits.shape().size() != 1 || label >= k) {
        throw ArgumentError("cross_entropy: label " + std::to_string(label) + " invalid for " +
                            shape_str(logits.shape()) + " logits");
    }
    return ad::scale(ad::pick(ad::log_softmax(logits, 0), label), -1.0);
}

double cross_entropy(const Array& logits, std::size_t label) {
    ad::Tape tape;
    return cross_entropy(tape.constant(logits), label).value().item();
}

// ---- training -----------------------------------------------------------

void SgdMomentum::apply(std::span<const ParamRef> params, std::span<const Array> grads, double lr,
                        double momentum) {
    if (params.size() != grads.size()) throw ContractError("sgd: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto it = std::find_if(velocity_.begin(), velocity_.end(),
                               [&](const auto& v) { return v.first == params[i].name; });
        if (it == velocity_.end()) {
            velocity_.emplace_back(params[i].name, Array::zeros(params[i].value->shape()));
            it = velocity_.end() - 1;
        }
        Array& v = it->second;
        Array& p = *params[i].value;
        const Array& g = grads[i];
        if (v.shape() != p.shape() || g.shape() != p.shape()) {
            throw ShapeError("sgd: shape mismatch for " + params[i].name);
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = momentum * v[j] + g[j];
            p[j] -= lr * v[j];
        }
    }
}

StepResult loss_and_gradients(ModelState& s, std::span<const PatchImage> batch, RandomStream& rng) {
    if (batch.empty()) throw ArgumentError("train_step: empty batch");
    ad::Tape tape;
    const TracedModel traced = trace_model(tape, s, true);
    const Array names = s.class_names();

    std::optional<ad::Var> total;
    ForwardResult last;
    for (const auto& img : batch) {
        last = forward(s, traced, names, img.patches, {&rng, nullptr});
        ad::Var li = cross_entropy(last.logits, img.label);
        total = total ? ad::add(*total, li) : li;
    }
    ad::Var loss = ad::div_scalar(*total, static_cast<double>(batch.size()));

    std::vector<ad::Var> wanted;
    StepResult out;
    out.loss = loss.value().item();
    for (const auto& [name, var] : traced_parameters(traced)) {
        if (!is_learnable(name, s.config.components)) continue;
        out.names.push_back(name);
        wanted.push_back(var);
    }
    auto grads = tape.backward(loss, wanted);
    for (const auto& v : wanted) out.gradients.push_back(std::move(grads.at(v.id())));

    if (s.config.components.interaction && s.config.schedule == InteractionSchedule::stale) {
        s.stale_text_rep = last.text_rep.value();
        s.stale_image_rep = last.image_rep.value();
    }
    return out;
}

StepResult train_step(ModelState& s, std::span<const PatchImage> batch, double lr, double momentum,
                      SgdMomentum& optimizer, RandomStream& rng) {
    StepResult r = loss_and_gradients(s, batch, rng);
    const auto params = learnable_parameters(s);
    optimizer.apply(params, r.gradients, lr, momentum);
    return r;
}

// ---- prediction ---------------------------------------------------------

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

Array predict_proba(const ModelState& s, const PatchImage& image, const EvalMaskPolicy& policy,
                    RandomStream* rng) {
    ad::Tape tape;
    const TracedModel traced = trace_model(tape, s, false);
    const Array names = s.class_names();
    const std::size_t k = names.dim(0);
    if (policy.stochastic_samples == 0 || !s.config.components.mask) {
        const Array fixed = threshold_mask(s.probability.P, s.config.mode, k);
        ad::Var logits = forward(s, traced, names, image.patches, {nullptr, &fixed}).logits;
        return ad::softmax(logits, 0).value();
    }
    if (!rng) throw ContractError("predict_proba: stochastic evaluation needs a random stream");
    Array acc({k});
    for (unsigned i = 0; i < policy.stochastic_samples; ++i) {
        ad::Var logits = forward(s, traced, names, image.patches, {rng, nullptr}).logits;
        const Array p = ad::softmax(logits, 0).value();
        for (std::size_t j = 0; j < k; ++j) acc[j] += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) acc[j] /= policy.stochastic_samples;
    return acc;
}

std::size_t predict(const ModelState& s, const PatchImage& image, const EvalMaskPolicy& policy,
                    RandomStream* rng) {
    const Array p = predict_proba(s, image, policy, rng);
    return argmax(p.values());
}

// ---- checkpoints --------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::uint32_t flag_bits(const ModelConfig& c) {
    return (c.components.mask ? 1u : 0u) | (c.components.padding ? 2u : 0u) |
           (c.components.interaction ? 4u : 0u) |
           (c.schedule == InteractionSchedule::stale ? 8u : 0u);
}

void check_dim(const char* name, std::uint32_t file, std::uint32_t expected) {
    if (file != expected) {
        throw FormatError(std::string("checkpoint: ") + name + " mismatch (file has " +
                          std::to_string(file) + ", expected " + std::to_string(expected) + ")");
    }
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const ModelConfig& c = state.config;
    const DimConfig& d = c.dims;
    binio::put_magic(os, "AMCK");
    binio::put_u32(os, kCheckpointVersion);
    for (auto v : {d.l, d.d, d.d_h, d.b, d.q, d.u, d.M, d.k}) binio::put_u32(os, v);
    binio::put_u32(os, flag_bits(c));
    binio::put_f64(os, c.tau);
    binio::put_u32(os, c.mode == PromptMode::shared ? 1u : 0u);
    binio::put_f64(os, c.p_init_mean);
    binio::put_f64(os, c.p_init_std);
    binio::put_f64(os, c.pad_init);
    binio::put_u64(os, c.name_seed);
    binio::put_u64(os, state.encoders->seed);
    binio::put_u64(os, state.seeds.init);
    binio::put_u64(os, state.seeds.sampling);
    binio::put_u64(os, state.seeds.data);
    binio::put_u32(os, static_cast<std::uint32_t>(state.labels.size()));
    for (const auto& l : state.labels) binio::put_string(os, l);

    auto params = all_parameters(const_cast<ModelState&>(state));
    binio::put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        binio::put_string(os, p.name);
        binio::put_u32(os, static_cast<std::uint32_t>(p.value->ndim()));
        for (auto dim : p.value->shape()) binio::put_u32(os, static_cast<std::uint32_t>(dim));
        binio::put_values(os, *p.value);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path, const std::optional<DimConfig>& expected,
                           std::shared_ptr<const EncoderWeights> encoders) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    binio::expect_magic(is, "AMCK");
    const std::uint32_t version = binio::get_u32(is, "version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    ModelConfig c;
    DimConfig& d = c.dims;
    d.l = binio::get_u32(is);
    d.d = binio::get_u32(is);
    d.d_h = binio::get_u32(is);
    d.b = binio::get_u32(is);
    d.q = binio::get_u32(is);
    d.u = binio::get_u32(is);
    d.M = binio::get_u32(is);
    d.k = binio::get_u32(is);
    if (expected) {
        check_dim("l", d.l, expected->l);
        check_dim("d", d.d, expected->d);
        check_dim("d_h", d.d_h, expected->d_h);
        check_dim("b", d.b, expected->b);
        check_dim("q", d.q, expected->q);
        check_dim("u", d.u, expected->u);
        check_dim("M", d.M, expected->M);
        check_dim("k", d.k, expected->k);
    }
    try {
        d.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    const std::uint32_t flags = binio::get_u32(is, "flags");
    if (flags > 15u) throw FormatError("checkpoint: unknown flag bits");
    c.components = {(flags & 1u) != 0, (flags & 2u) != 0, (flags & 4u) != 0};
    c.schedule = (flags & 8u) ? InteractionSchedule::stale : InteractionSchedule::two_pass;
    c.tau = binio::get_f64(is, "tau");
    const std::uint32_t mode = binio::get_u32(is, "mode");
    if (mode > 1) throw FormatError("checkpoint: unknown mode " + std::to_string(mode));
    c.mode = mode ? PromptMode::shared : PromptMode::class_specific;
    c.p_init_mean = binio::get_f64(is);
    c.p_init_std = binio::get_f64(is);
    c.pad_init = binio::get_f64(is);
    c.name_seed = binio::get_u64(is);
    const std::uint64_t encoder_seed = binio::get_u64(is);
    SeedBundle seeds;
    seeds.init = binio::get_u64(is);
    seeds.sampling = binio::get_u64(is);
    seeds.data = binio::get_u64(is);
    const std::uint32_t nlabels = binio::get_u32(is, "label count");
    check_dim("label count", nlabels, d.k);
    std::vector<std::string> labels;
    for (std::uint32_t i = 0; i < nlabels; ++i) labels.push_back(binio::get_string(is));

    if (!encoders) {
        encoders = std::make_shared<const EncoderWeights>(init_frozen(encoder_seed, d));
    } else if (encoders->seed != encoder_seed) {
        throw FormatError("checkpoint: encoder seed mismatch (file has " + std::to_string(encoder_seed) +
                          ", supplied " + std::to_string(encoders->seed) + ")");
    }
    ModelState s;
    try {
        s = make_model(std::move(encoders), std::move(labels), c, seeds);
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }

    const std::uint32_t nparams = binio::get_u32(is, "parameter count");
    auto params = all_parameters(s);
    if (nparams != params.size()) {
        check_dim("parameter count", nparams, static_cast<std::uint32_t>(params.size()));
    }
    for (auto& p : params) {
        const std::string name = binio::get_string(is);
        if (name != p.name) throw FormatError("checkpoint: expected block '" + p.name + "', found '" + name + "'");
        const std::uint32_t nd = binio::get_u32(is, "ndim");
        Shape shape;
        for (std::uint32_t i = 0; i < nd; ++i) shape.push_back(binio::get_u32(is, "dim"));
        if (shape != p.value->shape()) {
            throw FormatError("checkpoint: block '" + name + "' has shape " + shape_str(shape) +
                              ", expected " + shape_str(p.value->shape()));
        }
        binio::get_values(is, *p.value);
    }
    return s;
}

}  // namespace ammpl
