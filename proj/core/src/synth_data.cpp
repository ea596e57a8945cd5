#include "ammpl/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ammpl/autodiff.hpp"
#include "ammpl/errors.hpp"
#include "ammpl/random.hpp"
#include "ammpl/text_prompt.hpp"
#include "binio.hpp"

namespace ammpl {

namespace {

constexpr std::uint32_t kItemVersion = 1;

void shuffle(std::vector<std::size_t>& v, RandomStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

double squared_distance(const Array& a, const Array& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Smallest Euclidean distance allowed between two class templates.
double required_separation(std::size_t patch_size) { return 0.5 * std::sqrt(static_cast<double>(patch_size)); }

double min_template_distance(const SyntheticSpec& spec) {
    double best = INFINITY;
    for (std::size_t i = 0; i < spec.templates.size(); ++i)
        for (std::size_t j = i + 1; j < spec.templates.size(); ++j)
            best = std::min(best, std::sqrt(squared_distance(spec.templates[i], spec.templates[j])));
    return best;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Greedy binary code book: each new code maximises its minimum Hamming
// distance to the codes already chosen.
std::vector<std::vector<int>> code_book(std::size_t count, std::size_t bits, RandomStream& rng) {
    std::vector<std::vector<int>> codes;
    for (std::size_t c = 0; c < count; ++c) {
        std::vector<int> best;
        std::size_t best_score = 0;
        for (int attempt = 0; attempt < 256; ++attempt) {
            std::vector<int> cand(bits);
            for (auto& bit : cand) bit = rng.bernoulli(0.5) ? 1 : 0;
            std::size_t score = bits;
            for (const auto& other : codes) {
                std::size_t h = 0;
                for (std::size_t i = 0; i < bits; ++i) h += cand[i] != other[i];
                score = std::min(score, h);
            }
            if (best.empty() || score > best_score) {
                best = std::move(cand);
                best_score = score;
            }
        }
        codes.push_back(std::move(best));
    }
    return codes;
}

// One image with the pool patterns at every non-signal cell and zeros at the
// signal cells of `cls`.
Array background(const SyntheticSpec& spec, std::size_t cls, RandomStream& rng, bool noisy) {
    const DimConfig& d = spec.dims;
    const std::size_t ps = d.patch_size();
    Array img({d.b, d.b, d.q, d.q, d.u});
    const auto& sig = spec.signal_coords[cls];
    for (std::size_t cell = 0; cell < d.grid_cells(); ++cell) {
        if (std::find(sig.begin(), sig.end(), cell) != sig.end()) continue;
        const bool confuser = spec.confuser_rate > 0.0 && rng.bernoulli(spec.confuser_rate);
        const Array& pat = confuser ? spec.templates[static_cast<std::size_t>(rng.below(spec.templates.size()))]
                                    : spec.distractors[static_cast<std::size_t>(rng.below(spec.distractors.size()))];
        // Either polarity, so the surroundings average to mid-grey.
        const double polarity = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double contrast = polarity * (confuser ? spec.confuser_contrast : 1.0);
        for (std::size_t i = 0; i < ps; ++i) {
            double v = kPixelMean + contrast * (pat[i] - kPixelMean);
            if (noisy && spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
            img[cell * ps + i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

// Tunes template logits so that uncluttered images of class c score highest
// against the text embedding of label c (neutral context), keeping templates
// apart.
void align_templates(SyntheticSpec& spec, const WorldOptions& opt, const EncoderWeights& enc) {
    const DimConfig& d = spec.dims;
    const std::size_t k = spec.num_classes();
    const std::size_t ps = d.patch_size();
    const std::size_t cells = d.grid_cells();
    constexpr std::size_t per_class = 4;
    const std::size_t n = k * per_class;

    // Text anchors: zero context plus the class name.
    Array zt;
    {
        ad::Tape tape;
        DimConfig td = enc.dims;
        td.k = static_cast<std::uint32_t>(k);
        ad::Var ctx = tape.constant(Array({td.M, td.l}));
        const Array names = ClassNameEmbeds(opt.name_seed, td.l).stack(spec.labels);
        const Array z = text_encode(enc, build_text_prompt(ctx, PromptMode::shared, names)).value();
        zt = Array({d.d, k});
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < d.d; ++j) zt[j * k + i] = z[i * d.d + j];
    }

    Array theta({k, ps});
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < ps; ++i) {
            const double t = std::clamp(spec.templates[c][i], 0.02, 0.98);
            theta[c * ps + i] = std::log(t / (1.0 - t));
        }

    Array onehot({n, k});
    Array place({n, d.b, d.b, 1, 1, 1});
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t a = 0; a < per_class; ++a) {
            const std::size_t row = c * per_class + a;
            onehot[row * k + c] = 1.0;
            for (std::size_t cell : spec.signal_coords[c]) place[row * cells + cell] = 1.0;
        }

    Array blank_sims({n, k});
    {
        ad::Tape tape;
        Array blank({1, d.b, d.b, d.q, d.q, d.u});
        RandomStream noise(spec.seed, "synth.blank");
        for (std::size_t i = 0; i < blank.size(); ++i) {
            blank[i] = std::clamp(kPixelMean + spec.noise_std * noise.normal(), 0.0, 1.0);
        }
        const Array s = ad::matmul(image_encode(enc, tape.constant(blank)), tape.constant(zt)).value();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < k; ++i) blank_sims[r * k + i] = s[i];
    }
    Array sign({n, k});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < k; ++i) sign[r * k + i] = i == r / per_class ? 1.0 : -1.0;

    // Keep templates at least 15% beyond the required separation.
    const double min_sq = std::pow(1.15 * required_separation(ps), 2.0);
    constexpr double penalty = 0.05;
    Array m1({k, ps}), m2({k, ps});
    RandomStream rng(spec.seed, "synth.align");
    for (std::size_t step = 0; step < opt.align_steps; ++step) {
        Array bg({n, d.b, d.b, d.q, d.q, d.u});
        // Uncluttered scenes: mid-grey surroundings plus pixel noise.
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t cell = 0; cell < cells; ++cell) {
                if (place[r * cells + cell] != 0.0) continue;
                for (std::size_t i = 0; i < ps; ++i) {
                    bg[(r * cells + cell) * ps + i] = std::clamp(kPixelMean + spec.noise_std * rng.normal(), 0.0, 1.0);
                }
            }
        ad::Tape tape;
        ad::Var th = tape.leaf(theta);
        ad::Var t = ad::div(tape.constant(Array::ones({k, ps})),
                            ad::add_scalar(ad::exp(ad::scale(th, -1.0)), 1.0));
        ad::Var rows = ad::matmul(tape.constant(onehot), t);
        ad::Var tiles = ad::broadcast_to(ad::reshape(rows, {n, 1, 1, d.q, d.q, d.u}),
                                         {n, d.b, d.b, d.q, d.q, d.u});
        ad::Var mask = ad::broadcast_to(tape.constant(place), {n, d.b, d.b, d.q, d.q, d.u});
        ad::Var img = ad::add(tape.constant(bg), ad::mul(mask, tiles));
        ad::Var x = image_encode(enc, img);
        ad::Var logits = ad::scale(ad::matmul(x, tape.constant(zt)), 1.0 / opt.align_tau);
        ad::Var ls = ad::log_softmax(logits, 1);
        std::vector<ad::Var> picks;
        for (std::size_t r = 0; r < n; ++r) picks.push_back(ad::pick(ls, r * k + r / per_class));
        ad::Var loss = ad::scale(ad::sum(ad::concat(picks, 0)), -1.0 / static_cast<double>(n));
        // Against an empty scene: the own object raises a class's similarity,
        // any other object lowers it.
        ad::Var gap = ad::scale(ad::mul(ad::sub(tape.constant(blank_sims), ad::matmul(x, tape.constant(zt))),
                                        tape.constant(sign)),
                                1.0 / opt.align_tau);
        ad::Var softplus = ad::log(ad::add_scalar(ad::exp(gap), 1.0));
        loss = ad::add(loss, ad::mean(softplus));
        const ad::Var params[] = {th};
        Array g = tape.backward(loss, params).at(th.id());

        // Hinge on squared template distance, differentiated by hand.
        std::vector<double> tv(k * ps);
        for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = sigmoid(theta[i]);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                double sq = 0.0;
                for (std::size_t p = 0; p < ps; ++p) sq += std::pow(tv[i * ps + p] - tv[j * ps + p], 2.0);
                if (sq >= min_sq) continue;
                for (std::size_t p = 0; p < ps; ++p) {
                    const double ti = tv[i * ps + p];
                    g[i * ps + p] += -2.0 * penalty * (ti - tv[j * ps + p]) * ti * (1.0 - ti);
                }
            }

        // Adam.
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
            theta[i] -= opt.align_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
        }
    }
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < ps; ++i) spec.templates[c][i] = sigmoid(theta[c * ps + i]);

    // Push the closest pair apart until every pair clears the separation floor.
    const double floor = 1.05 * required_separation(ps);
    for (int iter = 0; iter < 1000 && k > 1; ++iter) {
        std::size_t bi = 0, bj = 1;
        double best = INFINITY;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) {
                const double dist = std::sqrt(squared_distance(spec.templates[i], spec.templates[j]));
                if (dist < best) {
                    best = dist;
                    bi = i;
                    bj = j;
                }
            }
        if (best > floor) break;
        Array& a = spec.templates[bi];
        Array& b = spec.templates[bj];
        for (std::size_t p = 0; p < ps; ++p) {
            const double diff = a[p] - b[p];
            a[p] = std::clamp(a[p] + 0.05 * diff, 0.0, 1.0);
            b[p] = std::clamp(b[p] - 0.05 * diff, 0.0, 1.0);
        }
    }
}

}  // namespace

Array SyntheticSpec::relevance(std::size_t cls) const {
    if (cls >= signal_coords.size()) {
        throw ArgumentError("synthetic spec: unknown class " + std::to_string(cls));
    }
    Array m({dims.b, dims.b});
    for (std::size_t cell : signal_coords[cls]) m[cell] = 1.0;
    return m;
}

void SyntheticSpec::validate() const {
    dims.validate();
    const std::size_t k = labels.size();
    if (k == 0) throw ArgumentError("synthetic spec: no classes");
    if (signal_coords.size() != k || templates.size() != k) {
        throw ArgumentError("synthetic spec: per-class tables disagree with " + std::to_string(k) + " labels");
    }
    if (distractors.empty()) throw ArgumentError("synthetic spec: empty distractor pool");
    if (!(noise_std >= 0.0)) throw ArgumentError("synthetic spec: negative noise level");
    if (!(confuser_rate >= 0.0 && confuser_rate <= 1.0) || !(confuser_contrast >= 0.0 && confuser_contrast <= 1.0)) {
        throw ArgumentError("synthetic spec: confuser rate and contrast must lie in [0, 1]");
    }
    const Shape patch{dims.q, dims.q, dims.u};
    for (std::size_t c = 0; c < k; ++c) {
        if (labels[c].empty()) throw ArgumentError("synthetic spec: empty class label");
        if (signal_coords[c].empty()) {
            throw ArgumentError("synthetic spec: class " + labels[c] + " has no signal patch");
        }
        if (signal_coords[c].size() >= dims.grid_cells()) {
            throw ArgumentError("synthetic spec: class " + labels[c] + " has no meaningless patch");
        }
        for (std::size_t cell : signal_coords[c]) {
            if (cell >= dims.grid_cells()) {
                throw ArgumentError("synthetic spec: signal cell " + std::to_string(cell) + " outside the " +
                                    std::to_string(dims.b) + "x" + std::to_string(dims.b) + " grid");
            }
        }
        if (templates[c].shape() != patch) {
            throw ArgumentError("synthetic spec: template shape " + shape_str(templates[c].shape()) + " vs " +
                                shape_str(patch));
        }
        for (double v : templates[c].values())
            if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("synthetic spec: template pixel outside [0, 1]");
    }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            if (labels[i] == labels[j]) throw ArgumentError("synthetic spec: duplicate label " + labels[i]);
    for (const Array& p : distractors) {
        if (p.shape() != patch) throw ArgumentError("synthetic spec: distractor shape mismatch");
        for (double v : p.values())
            if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("synthetic spec: distractor pixel outside [0, 1]");
    }
    const double need = required_separation(dims.patch_size());
    if (k > 1 && !(min_template_distance(*this) > need)) {
        throw ArgumentError("synthetic spec: templates too similar (min distance " +
                            std::to_string(min_template_distance(*this)) + ", need > " + std::to_string(need) + ")");
    }
}

SyntheticSpec make_spec(const WorldOptions& opt, const DimConfig& dims, const EncoderWeights* encoders) {
    dims.validate();
    if (opt.classes == 0) throw ArgumentError("make_spec: need at least one class");
    if (opt.signal_per_class == 0) throw ArgumentError("make_spec: need at least one signal patch per class");
    const std::size_t signal_cells = opt.shared_signal_cells ? opt.signal_per_class : opt.classes * opt.signal_per_class;
    if (signal_cells >= dims.grid_cells()) {
        throw ArgumentError("make_spec: " + std::to_string(signal_cells) +
                            " signal cells do not fit a " + std::to_string(dims.b) + "x" +
                            std::to_string(dims.b) + " grid");
    }
    if (opt.pool_size == 0) throw ArgumentError("make_spec: empty distractor pool");
    if (!(opt.distractor_level >= 0.0 && opt.distractor_level <= 0.5)) {
        throw ArgumentError("make_spec: distractor level outside [0, 0.5]");
    }

    SyntheticSpec spec;
    spec.name = opt.name;
    spec.dims = dims;
    spec.dims.k = static_cast<std::uint32_t>(opt.classes);
    spec.noise_std = opt.noise_std;
    spec.confuser_rate = opt.confuser_rate;
    spec.confuser_contrast = opt.confuser_contrast;
    spec.seed = opt.seed;
    RandomStream rng(opt.seed, "synth.world");

    for (std::size_t c = 0; c < opt.classes; ++c) spec.labels.push_back(opt.label_prefix + "-" + std::to_string(c));

    std::vector<std::size_t> cells(dims.grid_cells());
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    shuffle(cells, rng);
    for (std::size_t c = 0; c < opt.classes; ++c) {
        const std::size_t first = opt.shared_signal_cells ? 0 : c * opt.signal_per_class;
        std::vector<std::size_t> mine(cells.begin() + static_cast<std::ptrdiff_t>(first),
                                      cells.begin() + static_cast<std::ptrdiff_t>(first + opt.signal_per_class));
        std::sort(mine.begin(), mine.end());
        spec.signal_coords.push_back(std::move(mine));
    }

    const std::size_t ps = dims.patch_size();
    for (const auto& code : code_book(opt.classes, ps, rng)) {
        Array t({dims.q, dims.q, dims.u});
        for (std::size_t i = 0; i < ps; ++i) t[i] = code[i] ? 0.95 : 0.05;
        spec.templates.push_back(std::move(t));
    }
    for (std::size_t p = 0; p < opt.pool_size; ++p) {
        Array pat({dims.q, dims.q, dims.u});
        for (std::size_t i = 0; i < ps; ++i) pat[i] = 0.5 + opt.distractor_level * (2.0 * rng.uniform() - 1.0);
        spec.distractors.push_back(std::move(pat));
    }

    if (encoders && opt.align_steps > 0) align_templates(spec, opt, *encoders);
    spec.validate();
    return spec;
}

Dataset generate(const SyntheticSpec& spec, std::size_t n_per_class, std::uint64_t seed) {
    spec.validate();
    if (n_per_class == 0) throw ArgumentError("generate: n_per_class must be at least 1");
    const DimConfig& d = spec.dims;
    const std::size_t ps = d.patch_size();
    Dataset out;
    out.labels = spec.labels;
    out.spec_seed = spec.seed;
    out.dims = spec.dims;
    for (std::size_t c = 0; c < spec.num_classes(); ++c) out.class_relevance.push_back(spec.relevance(c));

    RandomStream rng(seed, "synth.items/" + spec.name + "/" + std::to_string(spec.seed));
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        for (std::size_t n = 0; n < n_per_class; ++n) {
            Array img = background(spec, c, rng, true);
            for (std::size_t cell : spec.signal_coords[c])
                for (std::size_t i = 0; i < ps; ++i) {
                    double v = spec.templates[c][i];
                    if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
                    img[cell * ps + i] = std::clamp(v, 0.0, 1.0);
                }
            out.items.push_back({std::move(img), c, out.class_relevance[c]});
        }
    }
    return out;
}

ShotSplit sample_shots(const Dataset& data, std::size_t shots, std::uint64_t seed) {
    if (shots == 0) throw ArgumentError("sample_shots: shots must be at least 1");
    RandomStream rng(seed, "synth.shots");
    ShotSplit out;
    std::vector<std::vector<std::size_t>> by_class(data.num_classes());
    for (std::size_t i = 0; i < data.items.size(); ++i) by_class.at(data.items[i].label).push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < shots) {
            throw ArgumentError("sample_shots: class " + data.labels[c] + " has " + std::to_string(idx.size()) +
                                " items, fewer than " + std::to_string(shots) + " shots");
        }
        shuffle(idx, rng);
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(shots));
        std::sort(idx.begin() + static_cast<std::ptrdiff_t>(shots), idx.end());
        for (std::size_t i = 0; i < idx.size(); ++i) (i < shots ? out.train : out.test).push_back(data.items[idx[i]]);
    }
    if (out.test.empty()) throw ArgumentError("sample_shots: no items left for the test split");
    return out;
}

ClassSplit split_base_novel(const Dataset& data, double base_fraction, std::uint64_t seed) {
    const std::size_t k = data.num_classes();
    if (k < 2) throw ArgumentError("split_base_novel: need at least two classes");
    if (!(base_fraction > 0.0 && base_fraction < 1.0)) {
        throw ArgumentError("split_base_novel: base fraction " + std::to_string(base_fraction) + " outside (0, 1)");
    }
    const auto nbase = static_cast<std::size_t>(std::ceil(base_fraction * static_cast<double>(k)));
    if (nbase >= k) throw ArgumentError("split_base_novel: base fraction leaves no novel class");
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    RandomStream rng(seed, "synth.base-novel");
    shuffle(order, rng);
    ClassSplit out;
    out.base.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nbase));
    out.novel.assign(order.begin() + static_cast<std::ptrdiff_t>(nbase), order.end());
    std::sort(out.base.begin(), out.base.end());
    std::sort(out.novel.begin(), out.novel.end());
    return out;
}

Dataset subset_classes(const Dataset& data, const std::vector<std::size_t>& classes) {
    Dataset out;
    out.spec_seed = data.spec_seed;
    out.dims = data.dims;
    out.dims.k = static_cast<std::uint32_t>(classes.size());
    std::vector<std::size_t> remap(data.num_classes(), SIZE_MAX);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] >= data.num_classes()) {
            throw ArgumentError("subset_classes: unknown class " + std::to_string(classes[i]));
        }
        remap[classes[i]] = i;
        out.labels.push_back(data.labels[classes[i]]);
        out.class_relevance.push_back(data.class_relevance[classes[i]]);
    }
    for (const auto& item : data.items) {
        if (remap[item.label] == SIZE_MAX) continue;
        PatchImage copy = item;
        copy.label = remap[item.label];
        out.items.push_back(std::move(copy));
    }
    return out;
}

Array ground_truth_meaningless(const Dataset& data, std::size_t cls) {
    if (cls >= data.num_classes() || cls >= data.class_relevance.size()) {
        throw ArgumentError("ground_truth_meaningless: unknown class " + std::to_string(cls));
    }
    Array out = data.class_relevance[cls];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - out[i];
    return out;
}

double template_oracle_accuracy(const SyntheticSpec& spec, const std::vector<PatchImage>& items) {
    if (items.empty()) return 0.0;
    const std::size_t ps = spec.dims.patch_size();
    std::size_t correct = 0;
    for (const auto& item : items) {
        std::size_t best = 0;
        double best_dist = INFINITY;
        for (std::size_t c = 0; c < spec.num_classes(); ++c) {
            double dist = 0.0;
            for (std::size_t cell : spec.signal_coords[c])
                for (std::size_t i = 0; i < ps; ++i) {
                    const double diff = item.patches[cell * ps + i] - spec.templates[c][i];
                    dist += diff * diff;
                }
            dist /= static_cast<double>(spec.signal_coords[c].size());
            if (dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        correct += best == item.label;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(items.size());
}

void export_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    {
        std::ofstream m(dir / "manifest.txt");
        if (!m) throw IoError("cannot write " + (dir / "manifest.txt").string());
        const DimConfig& d = data.dims;
        m << "ammpl-dataset 1\n"
          << "seed " << data.spec_seed << '\n'
          << "dims " << d.b << ' ' << d.q << ' ' << d.u << '\n'
          << "items " << data.items.size() << '\n'
          << "classes " << data.labels.size() << '\n';
        for (const auto& l : data.labels) m << l << '\n';
        if (!m) throw IoError("write failed for manifest in " + dir.string());
    }
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        std::ostringstream name;
        name << "item_" << std::setw(5) << std::setfill('0') << i << ".bin";
        std::ofstream os(dir / name.str(), std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / name.str()).string());
        const PatchImage& item = data.items[i];
        const DimConfig& d = data.dims;
        binio::put_magic(os, "AMDI");
        binio::put_u32(os, kItemVersion);
        for (auto v : {d.b, d.q, d.u}) binio::put_u32(os, v);
        binio::put_values(os, item.patches);
        binio::put_string(os, data.labels.at(item.label));
        const Array& rel = item.relevance ? *item.relevance : data.class_relevance.at(item.label);
        for (double v : rel.values()) os.put(v != 0.0 ? '\1' : '\0');
        if (!os) throw IoError("write failed for " + (dir / name.str()).string());
    }
}

Dataset import_dataset(const std::filesystem::path& dir) {
    std::ifstream m(dir / "manifest.txt");
    if (!m) throw IoError("cannot open " + (dir / "manifest.txt").string());
    std::string tag;
    int version = 0;
    Dataset out;
    std::size_t nitems = 0, nclasses = 0;
    m >> tag >> version;
    if (tag != "ammpl-dataset" || version != 1) throw FormatError("dataset manifest: bad header in " + dir.string());
    m >> tag >> out.spec_seed;
    if (tag != "seed") throw FormatError("dataset manifest: expected seed");
    m >> tag >> out.dims.b >> out.dims.q >> out.dims.u;
    if (tag != "dims") throw FormatError("dataset manifest: expected dims");
    m >> tag >> nitems;
    if (tag != "items") throw FormatError("dataset manifest: expected items");
    m >> tag >> nclasses;
    if (tag != "classes" || !m) throw FormatError("dataset manifest: expected classes");
    std::string line;
    std::getline(m, line);
    for (std::size_t c = 0; c < nclasses; ++c) {
        if (!std::getline(m, line) || line.empty()) throw FormatError("dataset manifest: missing class label");
        out.labels.push_back(line);
    }
    out.dims.k = static_cast<std::uint32_t>(nclasses);
    out.class_relevance.assign(nclasses, Array());
    std::vector<bool> seen(nclasses, false);

    const DimConfig& d = out.dims;
    for (std::size_t i = 0; i < nitems; ++i) {
        std::ostringstream name;
        name << "item_" << std::setw(5) << std::setfill('0') << i << ".bin";
        std::ifstream is(dir / name.str(), std::ios::binary);
        if (!is) throw IoError("cannot open " + (dir / name.str()).string());
        binio::expect_magic(is, "AMDI");
        if (binio::get_u32(is, "version") != kItemVersion) throw FormatError("dataset item: unsupported version");
        const std::uint32_t b = binio::get_u32(is), q = binio::get_u32(is), u = binio::get_u32(is);
        if (b != d.b || q != d.q || u != d.u) {
            throw FormatError("dataset item " + name.str() + ": dims " + std::to_string(b) + "x" + std::to_string(q) +
                              "x" + std::to_string(u) + " vs manifest " + std::to_string(d.b) + "x" +
                              std::to_string(d.q) + "x" + std::to_string(d.u));
        }
        PatchImage item;
        item.patches = Array({d.b, d.b, d.q, d.q, d.u});
        binio::get_values(is, item.patches);
        const std::string label = binio::get_string(is);
        auto it = std::find(out.labels.begin(), out.labels.end(), label);
        if (it == out.labels.end()) throw FormatError("dataset item " + name.str() + ": unknown label " + label);
        item.label = static_cast<std::size_t>(it - out.labels.begin());
        Array rel({d.b, d.b});
        for (std::size_t j = 0; j < rel.size(); ++j) {
            const int ch = is.get();
            if (ch == EOF) throw FormatError("truncated file while reading relevance bitmap");
            rel[j] = ch ? 1.0 : 0.0;
        }
        if (!seen[item.label]) {
            out.class_relevance[item.label] = rel;
            seen[item.label] = true;
        }
        item.relevance = std::move(rel);
        out.items.push_back(std::move(item));
    }
    for (std::size_t c = 0; c < nclasses; ++c) {
        if (!seen[c]) throw FormatError("dataset: class " + out.labels[c] + " has no items");
    }
    return out;
}

}  // namespace ammpl
