#include "ammpl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "ammpl/errors.hpp"

namespace ammpl {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

double to_double(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used == t.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ArgumentError("setting " + std::string(key) + ": '" + t + "' is not a number");
}

std::uint64_t to_u64(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ArgumentError("setting " + std::string(key) + ": '" + t + "' is not a non-negative integer");
    }
    return v;
}

bool to_bool(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
    if (t == "0" || t == "false" || t == "no" || t == "off") return false;
    throw ArgumentError("setting " + std::string(key) + ": '" + t + "' is not a boolean");
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void emit(const LogSink& log, const std::string& line) {
    if (log) log(line);
}

std::uint64_t run_seed(const HarnessConfig& c, std::size_t i) { return c.seed + i; }

RunRecord record(std::string task, const std::string& dataset, std::uint64_t seed, std::size_t shot,
                 std::string metric, double value, double seconds, bool timing) {
    return {std::move(task), dataset, std::to_string(seed), shot, std::move(metric), value, timing ? seconds : 0.0};
}

void append_with_aggregates(std::vector<RunRecord>& out, const std::vector<RunRecord>& rows) {
    out.insert(out.end(), rows.begin(), rows.end());
    const auto agg = aggregate(rows);
    out.insert(out.end(), agg.begin(), agg.end());
}

}  // namespace

// ---- configuration ------------------------------------------------------

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw ArgumentError("train config: learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("train config: momentum must be in [0, 1)");
    if (epochs == 0) throw ArgumentError("train config: epochs must be positive");
    if (batch_size == 0) throw ArgumentError("train config: batch size must be positive");
    if (!(tau > 0.0)) throw ArgumentError("train config: temperature must be positive");
    if (!(p_init_std >= 0.0)) throw ArgumentError("train config: probability init std must be non-negative");
}

void HarnessConfig::validate() const {
    train.validate();
    dims.validate();
    if (seeds == 0) throw ArgumentError("config: need at least one seed");
    if (shots.empty()) throw ArgumentError("config: empty shot list");
    for (auto s : shots)
        if (s == 0) throw ArgumentError("config: shot counts must be positive");
    if (items_per_class == 0) throw ArgumentError("config: items per class must be positive");
    if (!(base_fraction > 0.0 && base_fraction < 1.0)) throw ArgumentError("config: base fraction outside (0, 1)");
    for (double m : means)
        if (!(m >= 0.0 && m <= 1.0)) throw ArgumentError("config: init means must lie in [0, 1]");
    if (mask_every == 0) throw ArgumentError("config: mask snapshot cadence must be positive");
}

std::vector<std::size_t> parse_size_list(std::string_view text) {
    std::vector<std::size_t> out;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(to_u64("list", item)));
    if (out.empty()) throw ArgumentError("empty list '" + std::string(text) + "'");
    return out;
}

std::vector<double> parse_double_list(std::string_view text) {
    std::vector<double> out;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double("list", item));
    if (out.empty()) throw ArgumentError("empty list '" + std::string(text) + "'");
    return out;
}

void apply_setting(HarnessConfig& c, std::string_view key_in, std::string_view value) {
    const std::string key = trim(key_in);
    const std::string v = trim(value);
    TrainConfig& t = c.train;
    if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "seeds") c.seeds = to_u64(key, v);
    else if (key == "shots") c.shots = parse_size_list(v);
    else if (key == "mode") t.mode = parse_prompt_mode(v);
    else if (key == "mean-init") t.p_init_mean = to_double(key, v);
    else if (key == "std-init") t.p_init_std = to_double(key, v);
    else if (key == "pad-init") t.pad_init = to_double(key, v);
    else if (key == "tau") t.tau = to_double(key, v);
    else if (key == "eval-mask") t.eval_mask = EvalMaskPolicy::parse(v);
    else if (key == "lr") t.lr = to_double(key, v);
    else if (key == "momentum") t.momentum = to_double(key, v);
    else if (key == "epochs") t.epochs = to_u64(key, v);
    else if (key == "batch-size") t.batch_size = to_u64(key, v);
    else if (key == "components") t.components = Components::parse(v);
    else if (key == "schedule") {
        if (v == "two-pass") t.schedule = InteractionSchedule::two_pass;
        else if (v == "stale") t.schedule = InteractionSchedule::stale;
        else throw ArgumentError("setting schedule: expected two-pass or stale, got '" + v + "'");
    } else if (key == "name-seed") t.name_seed = to_u64(key, v);
    else if (key == "encoder-seed") c.encoder_seed = to_u64(key, v);
    else if (key == "world-seed") c.world.seed = to_u64(key, v);
    else if (key == "classes") c.world.classes = to_u64(key, v);
    else if (key == "signal-per-class") c.world.signal_per_class = to_u64(key, v);
    else if (key == "pool-size") c.world.pool_size = to_u64(key, v);
    else if (key == "distractor-level") c.world.distractor_level = to_double(key, v);
    else if (key == "noise") c.world.noise_std = to_double(key, v);
    else if (key == "confuser-rate") c.world.confuser_rate = to_double(key, v);
    else if (key == "confuser-contrast") c.world.confuser_contrast = to_double(key, v);
    else if (key == "align-steps") c.world.align_steps = to_u64(key, v);
    else if (key == "shared-signal-cells") c.world.shared_signal_cells = to_bool(key, v);
    else if (key == "items-per-class") c.items_per_class = to_u64(key, v);
    else if (key == "base-fraction") c.base_fraction = to_double(key, v);
    else if (key == "b2n-shots") c.b2n_shots = to_u64(key, v);
    else if (key == "means") c.means = parse_double_list(v);
    else if (key == "all-combos") c.all_combos = to_bool(key, v);
    else if (key == "mask-every") c.mask_every = to_u64(key, v);
    else if (key == "timing") c.timing = to_bool(key, v);
    else if (key == "b") c.dims.b = static_cast<std::uint32_t>(to_u64(key, v));
    else if (key == "q") c.dims.q = static_cast<std::uint32_t>(to_u64(key, v));
    else if (key == "u") c.dims.u = static_cast<std::uint32_t>(to_u64(key, v));
    else if (key == "l") c.dims.l = static_cast<std::uint32_t>(to_u64(key, v));
    else if (key == "d") c.dims.d = static_cast<std::uint32_t>(to_u64(key, v));
    else if (key == "d-h") c.dims.d_h = static_cast<std::uint32_t>(to_u64(key, v));
    else if (key == "context-length") c.dims.M = static_cast<std::uint32_t>(to_u64(key, v));
    else throw ArgumentError("unknown setting '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return out;
}

// ---- records ------------------------------------------------------------

std::vector<RunRecord> aggregate(const std::vector<RunRecord>& records) {
    std::vector<RunRecord> groups;
    std::vector<std::vector<double>> values;
    for (const auto& r : records) {
        if (r.seed == "agg") continue;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const RunRecord& g) {
            return g.task == r.task && g.dataset == r.dataset && g.shot == r.shot && g.metric == r.metric;
        });
        if (it == groups.end()) {
            RunRecord g{r.task, r.dataset, "agg", r.shot, r.metric, 0.0, 0.0};
            groups.push_back(g);
            values.emplace_back();
            it = groups.end() - 1;
        }
        const auto idx = static_cast<std::size_t>(it - groups.begin());
        values[idx].push_back(r.value);
        it->seconds += r.seconds;
    }
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& v = values[i];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        groups[i].value = mean;
        groups[i].stddev = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        groups[i].samples = v.size();
    }
    return groups;
}

void write_csv(std::ostream& os, const std::vector<RunRecord>& records) {
    os << kCsvHeader << '\n';
    for (const auto& r : records) {
        if (!std::isfinite(r.value)) throw ContractError("record " + r.task + "/" + r.metric + " is not finite");
        os << r.task << ',' << r.dataset << ',' << r.seed << ',' << r.shot << ',' << r.metric << ','
           << fmt("%.4f", r.value) << ',' << fmt("%.3f", r.seconds) << '\n';
    }
}

void write_summary(std::ostream& os, const std::vector<RunRecord>& records) {
    os << "task,dataset,shot,metric,mean,std,n\n";
    for (const auto& r : records) {
        if (r.seed != "agg") continue;
        os << r.task << ',' << r.dataset << ',' << r.shot << ',' << r.metric << ',' << fmt("%.4f", r.value) << ','
           << fmt("%.4f", r.stddev) << ',' << r.samples << '\n';
    }
}

double harmonic_mean(double a, double b) {
    if (!(a >= 0.0 && b >= 0.0)) throw ArgumentError("harmonic_mean: inputs must be non-negative");
    if (a == 0.0 || b == 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

// ---- mask quality -------------------------------------------------------

double MaskQualityReport::min_separation() const {
    double m = INFINITY;
    for (const auto& c : classes) m = std::min(m, c.separation);
    return m;
}

MaskQualityReport mask_quality(const ModelState& s, const Dataset& data) {
    const Array& P = s.probability.P;
    const std::size_t cells = s.dims().grid_cells();
    if (data.num_classes() != s.num_classes()) {
        throw ArgumentError("mask_quality: model has " + std::to_string(s.num_classes()) + " classes, data has " +
                            std::to_string(data.num_classes()));
    }
    MaskQualityReport out;
    for (std::size_t c = 0; c < data.num_classes(); ++c) {
        const Array& rel = data.class_relevance.at(c);
        const std::size_t offset = s.config.mode == PromptMode::shared ? 0 : c * cells;
        double on = 0.0, off = 0.0;
        std::size_t n_on = 0, n_off = 0;
        for (std::size_t j = 0; j < cells; ++j) {
            const double p = std::clamp(P[offset + j], 0.0, 1.0);
            if (rel[j] != 0.0) {
                on += p;
                ++n_on;
            } else {
                off += p;
                ++n_off;
            }
        }
        ClassMaskQuality q;
        q.label = data.labels[c];
        q.meaningful_mean = n_on ? on / static_cast<double>(n_on) : 0.0;
        q.meaningless_mean = n_off ? off / static_cast<double>(n_off) : 0.0;
        q.separation = q.meaningful_mean - q.meaningless_mean;
        out.classes.push_back(q);
    }
    return out;
}

// ---- training -----------------------------------------------------------

TrainOutcome train_model(std::shared_ptr<const EncoderWeights> encoders, std::vector<std::string> labels,
                         const std::vector<PatchImage>& train, const TrainConfig& config, const SeedBundle& seeds,
                         const StepHook& hook) {
    config.validate();
    if (train.empty()) throw ArgumentError("train_model: empty training split");
    for (const auto& item : train) {
        if (item.label >= labels.size()) {
            throw ArgumentError("train_model: label " + std::to_string(item.label) + " outside " +
                                std::to_string(labels.size()) + " classes");
        }
    }
    ModelConfig mc;
    mc.dims = encoders->dims;
    mc.mode = config.mode;
    mc.tau = config.tau;
    mc.components = config.components;
    mc.schedule = config.schedule;
    mc.p_init_mean = config.p_init_mean;
    mc.p_init_std = config.p_init_std;
    mc.pad_init = config.pad_init;
    mc.name_seed = config.name_seed;

    TrainOutcome out{make_model(std::move(encoders), std::move(labels), mc, seeds), {}, 0};
    RandomStream shuffle_rng(seeds.data, "train.shuffle");
    RandomStream mask_rng(seeds.sampling, "train.masks");
    SgdMomentum optimizer;
    if (hook) hook(0, out.state);

    std::vector<std::size_t> order(train.size());
    std::vector<PatchImage> batch;
    const double pi = std::acos(-1.0);
    for (std::size_t e = 0; e < config.epochs; ++e) {
        const double lr =
            0.5 * config.lr * (1.0 + std::cos(pi * static_cast<double>(e) / static_cast<double>(config.epochs)));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
        }
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
                batch.push_back(train[order[i]]);
            }
            const StepResult r = train_step(out.state, batch, lr, config.momentum, optimizer, mask_rng);
            total += r.loss * static_cast<double>(batch.size());
            ++out.iterations;
            if (hook) hook(out.iterations, out.state);
        }
        out.epoch_losses.push_back(total / static_cast<double>(train.size()));
    }
    return out;
}

double evaluate(const ModelState& state, const std::vector<PatchImage>& items, const EvalMaskPolicy& policy,
                std::uint64_t eval_seed) {
    if (items.empty()) throw ArgumentError("evaluate: empty split");
    RandomStream rng(eval_seed, "eval.masks");
    std::size_t correct = 0;
    for (const auto& item : items) correct += predict(state, item, policy, &rng) == item.label;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(items.size());
}

// ---- worlds -------------------------------------------------------------

World build_world(const HarnessConfig& config, std::size_t variant) {
    DimConfig dims = config.dims;
    dims.k = static_cast<std::uint32_t>(config.world.classes);
    auto enc = std::make_shared<const EncoderWeights>(init_frozen(config.encoder_seed, dims));
    return build_world(config, std::move(enc), variant);
}

World build_world(const HarnessConfig& config, std::shared_ptr<const EncoderWeights> encoders, std::size_t variant) {
    static const char* const kPrefixes[] = {"class", "object", "thing", "item"};
    WorldOptions opt = config.world;
    opt.name_seed = config.train.name_seed;
    if (variant > 0) {
        opt.seed = config.world.seed + 7919 * variant;
        opt.name = config.world.name + "-" + std::string(1, static_cast<char>('a' + variant % 26));
        opt.label_prefix = std::string(kPrefixes[variant % 4]) + (variant >= 4 ? std::to_string(variant) : "");
    }
    World w;
    w.encoders = std::move(encoders);
    DimConfig dims = w.encoders->dims;
    w.spec = make_spec(opt, dims, w.encoders.get());
    w.data = generate(w.spec, config.items_per_class, w.spec.seed);
    return w;
}

// ---- protocols ----------------------------------------------------------

std::vector<RunRecord> run_fewshot(const HarnessConfig& config, const World& world, const LogSink& log) {
    config.validate();
    TrainConfig tc = config.train;
    tc.mode = PromptMode::class_specific;
    std::vector<RunRecord> out;
    for (std::size_t shot : config.shots) {
        std::vector<RunRecord> rows;
        for (std::size_t i = 0; i < config.seeds; ++i) {
            const std::uint64_t seed = run_seed(config, i);
            const SeedBundle seeds = SeedBundle::from_run_seed(seed);
            Stopwatch sw;
            const ShotSplit split = sample_shots(world.data, shot, seeds.data);
            const TrainOutcome t = train_model(world.encoders, world.data.labels, split.train, tc, seeds);
            const double acc = evaluate(t.state, split.test, tc.eval_mask, seeds.sampling);
            rows.push_back(record("fewshot", world.spec.name, seed, shot, "accuracy", acc, sw.seconds(), config.timing));
            emit(log, "fewshot shot=" + std::to_string(shot) + " seed=" + std::to_string(seed) + " accuracy=" +
                          fmt("%.2f", acc) + " final_loss=" + fmt("%.4f", t.final_loss()) +
                          " seconds=" + fmt("%.2f", sw.seconds()));
        }
        append_with_aggregates(out, rows);
    }
    return out;
}

std::vector<RunRecord> run_base_to_novel(const HarnessConfig& config, const World& world, const LogSink& log,
                                         std::vector<BaseNovelResult>* per_seed) {
    config.validate();
    TrainConfig tc = config.train;
    tc.mode = PromptMode::shared;
    std::vector<RunRecord> rows;
    for (std::size_t i = 0; i < config.seeds; ++i) {
        const std::uint64_t seed = run_seed(config, i);
        const SeedBundle seeds = SeedBundle::from_run_seed(seed);
        Stopwatch sw;
        const ClassSplit cs = split_base_novel(world.data, config.base_fraction, seeds.data);
        const Dataset base = subset_classes(world.data, cs.base);
        const Dataset novel = subset_classes(world.data, cs.novel);
        const ShotSplit split = sample_shots(base, config.b2n_shots, seeds.data);
        const TrainOutcome t = train_model(world.encoders, base.labels, split.train, tc, seeds);
        BaseNovelResult r;
        r.base = evaluate(t.state, split.test, tc.eval_mask, seeds.sampling);
        const ModelState relabeled = with_labels(t.state, novel.labels);
        r.novel = evaluate(relabeled, novel.items, tc.eval_mask, seeds.sampling);
        r.hm = harmonic_mean(r.base, r.novel);
        if (per_seed) per_seed->push_back(r);
        const double secs = sw.seconds();
        const std::size_t shot = config.b2n_shots;
        rows.push_back(record("base2novel", world.spec.name, seed, shot, "base_accuracy", r.base, secs, config.timing));
        rows.push_back(record("base2novel", world.spec.name, seed, shot, "novel_accuracy", r.novel, secs, config.timing));
        rows.push_back(record("base2novel", world.spec.name, seed, shot, "hm", r.hm, secs, config.timing));
        emit(log, "base2novel seed=" + std::to_string(seed) + " base=" + fmt("%.2f", r.base) + " novel=" +
                      fmt("%.2f", r.novel) + " hm=" + fmt("%.2f", r.hm) + " final_loss=" + fmt("%.4f", t.final_loss()));
    }
    std::vector<RunRecord> out;
    append_with_aggregates(out, rows);
    return out;
}

std::vector<RunRecord> run_crossdata(const HarnessConfig& config, const World& source,
                                     const std::vector<const World*>& targets, const LogSink& log) {
    config.validate();
    const DimConfig& sd = source.spec.dims;
    for (const World* t : targets) {
        const DimConfig& td = t->spec.dims;
        if (td.b != sd.b || td.q != sd.q || td.u != sd.u || !(t->encoders->dims == source.encoders->dims)) {
            throw ArgumentError("crossdata: target " + t->spec.name + " dims " + std::to_string(td.b) + "x" +
                                std::to_string(td.q) + "x" + std::to_string(td.u) + " differ from source " +
                                std::to_string(sd.b) + "x" + std::to_string(sd.q) + "x" + std::to_string(sd.u));
        }
    }
    TrainConfig tc = config.train;
    tc.mode = PromptMode::shared;
    std::vector<RunRecord> out;
    for (std::size_t shot : config.shots) {
        std::vector<RunRecord> rows;
        for (std::size_t i = 0; i < config.seeds; ++i) {
            const std::uint64_t seed = run_seed(config, i);
            const SeedBundle seeds = SeedBundle::from_run_seed(seed);
            Stopwatch sw;
            const ShotSplit split = sample_shots(source.data, shot, seeds.data);
            const TrainOutcome t = train_model(source.encoders, source.data.labels, split.train, tc, seeds);
            for (const World* target : targets) {
                double acc = 0.0;
                if (target->spec.name == source.spec.name) {
                    acc = evaluate(t.state, split.test, tc.eval_mask, seeds.sampling);
                } else {
                    acc = evaluate(with_labels(t.state, target->data.labels), target->data.items, tc.eval_mask,
                                   seeds.sampling);
                }
                rows.push_back(record("crossdata", target->spec.name, seed, shot, "accuracy", acc, sw.seconds(),
                                      config.timing));
                emit(log, "crossdata source=" + source.spec.name + " target=" + target->spec.name +
                              " shot=" + std::to_string(shot) + " seed=" + std::to_string(seed) +
                              " accuracy=" + fmt("%.2f", acc));
            }
        }
        append_with_aggregates(out, rows);
    }
    return out;
}

std::vector<Components> ablation_combos(bool all) {
    if (!all) {
        return {{true, false, false}, {false, false, true}, {true, true, false}, {true, true, true}};
    }
    std::vector<Components> out;
    for (int bits = 0; bits < 8; ++bits) out.push_back({(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0});
    return out;
}

std::vector<RunRecord> run_ablation(const HarnessConfig& config, const World& world, const LogSink& log) {
    config.validate();
    const std::size_t shot = *std::max_element(config.shots.begin(), config.shots.end());
    std::vector<RunRecord> out;
    for (const Components& combo : ablation_combos(config.all_combos)) {
        TrainConfig tc = config.train;
        tc.components = combo;
        std::vector<RunRecord> rows;
        for (std::size_t i = 0; i < config.seeds; ++i) {
            const std::uint64_t seed = run_seed(config, i);
            const SeedBundle seeds = SeedBundle::from_run_seed(seed);
            Stopwatch sw;
            const ShotSplit split = sample_shots(world.data, shot, seeds.data);
            const TrainOutcome t = train_model(world.encoders, world.data.labels, split.train, tc, seeds);
            const double acc = evaluate(t.state, split.test, tc.eval_mask, seeds.sampling);
            rows.push_back(record("ablate/" + combo.name(), world.spec.name, seed, shot, "accuracy", acc, sw.seconds(),
                                  config.timing));
            emit(log, "ablate combo=" + combo.name() + " seed=" + std::to_string(seed) + " accuracy=" +
                          fmt("%.2f", acc) + " final_loss=" + fmt("%.4f", t.final_loss()));
        }
        append_with_aggregates(out, rows);
    }
    return out;
}

std::vector<RunRecord> run_sensitivity(const HarnessConfig& config, const World& world, const LogSink& log) {
    config.validate();
    const std::size_t shot = *std::max_element(config.shots.begin(), config.shots.end());
    // One split for every run, so only the init mean and the init seed vary.
    const std::uint64_t data_seed = SeedBundle::from_run_seed(config.seed).data;
    const ShotSplit split = sample_shots(world.data, shot, data_seed);
    std::vector<RunRecord> out;
    for (double mean : config.means) {
        TrainConfig tc = config.train;
        tc.p_init_mean = mean;
        std::vector<RunRecord> rows;
        for (std::size_t i = 0; i < config.seeds; ++i) {
            const std::uint64_t seed = run_seed(config, i);
            SeedBundle seeds = SeedBundle::from_run_seed(seed);
            seeds.data = data_seed;
            Stopwatch sw;
            const TrainOutcome t = train_model(world.encoders, world.data.labels, split.train, tc, seeds);
            const double acc = evaluate(t.state, split.test, tc.eval_mask, seeds.sampling);
            rows.push_back(record("sweep-init/" + fmt("%.2f", mean), world.spec.name, seed, shot, "accuracy", acc,
                                  sw.seconds(), config.timing));
            emit(log, "sweep-init mean=" + fmt("%.2f", mean) + " seed=" + std::to_string(seed) +
                          " accuracy=" + fmt("%.2f", acc));
        }
        append_with_aggregates(out, rows);
    }
    return out;
}

MaskDump dump_masks(const HarnessConfig& config, const World& world, const std::filesystem::path& out_dir,
                    const LogSink& log) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create mask directory " + out_dir.string());
    }
    TrainConfig tc = config.train;
    tc.mode = PromptMode::class_specific;
    const std::size_t shot = *std::max_element(config.shots.begin(), config.shots.end());
    const SeedBundle seeds = SeedBundle::from_run_seed(config.seed);
    const ShotSplit split = sample_shots(world.data, shot, seeds.data);

    MaskDump dump;
    auto snapshot = [&](std::size_t iteration, const ModelState& s) {
        const Array& P = s.probability.P;
        const std::size_t b = s.dims().b;
        for (std::size_t c = 0; c < s.num_classes(); ++c) {
            Array map({b, b});
            const std::size_t offset = s.config.mode == PromptMode::shared ? 0 : c * b * b;
            for (std::size_t j = 0; j < b * b; ++j) map[j] = std::clamp(P[offset + j], 0.0, 1.0);
            char name[96];
            std::snprintf(name, sizeof name, "%s_iter%05zu.pgm", s.labels[c].c_str(), iteration);
            const auto path = out_dir / name;
            write_pgm(path, map);
            dump.files.push_back(path);
        }
        dump.snapshot_iterations.push_back(iteration);
    };
    std::size_t last_snapshot = SIZE_MAX;
    const StepHook hook = [&](std::size_t iteration, const ModelState& s) {
        if (iteration == 0) dump.initial = mask_quality(s, world.data);
        if (iteration % config.mask_every == 0) {
            snapshot(iteration, s);
            last_snapshot = iteration;
        }
    };
    dump.outcome = train_model(world.encoders, world.data.labels, split.train, tc, seeds, hook);
    if (last_snapshot != dump.outcome.iterations) snapshot(dump.outcome.iterations, dump.outcome.state);
    dump.final = mask_quality(dump.outcome.state, world.data);
    for (std::size_t c = 0; c < dump.final.classes.size(); ++c) {
        const auto& f = dump.final.classes[c];
        emit(log, "masks class=" + f.label + " meaningful=" + fmt("%.4f", f.meaningful_mean) + " meaningless=" +
                      fmt("%.4f", f.meaningless_mean) + " separation=" + fmt("%.4f", f.separation) +
                      " initial_separation=" + fmt("%.4f", dump.initial.classes[c].separation));
    }
    return dump;
}

std::vector<RunRecord> mask_records(const MaskDump& dump, const World& world, std::uint64_t seed, std::size_t shot) {
    std::vector<RunRecord> out;
    for (std::size_t c = 0; c < dump.final.classes.size(); ++c) {
        const auto& f = dump.final.classes[c];
        const std::string ds = world.spec.name;
        out.push_back(record("dump-masks", ds, seed, shot, "meaningful_mean:" + f.label, f.meaningful_mean, 0, false));
        out.push_back(record("dump-masks", ds, seed, shot, "meaningless_mean:" + f.label, f.meaningless_mean, 0, false));
        out.push_back(record("dump-masks", ds, seed, shot, "separation:" + f.label, f.separation, 0, false));
        out.push_back(record("dump-masks", ds, seed, shot, "initial_separation:" + f.label,
                             dump.initial.classes[c].separation, 0, false));
    }
    return out;
}

}  // namespace ammpl
