// Command-line front end for the experiment harness.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ammpl/errors.hpp"
#include "ammpl/harness.hpp"
#include "ammpl/selftest.hpp"

namespace fs = std::filesystem;
using namespace ammpl;

namespace {

// Flags shared by every experiment subcommand. Unset flags leave the
// configuration (defaults, then --config file) untouched.
struct CommonFlags {
    std::optional<std::string> seed, seeds, mode, mean_init, tau, shots, eval_mask;
    std::string config_file;
    std::string out = "out";
    std::vector<std::string> sets;
    bool timing = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--seed", f.seed, "first run seed (run i uses seed + i)");
    cmd->add_option("--seeds", f.seeds, "number of seeds");
    cmd->add_option("--out", f.out, "output directory")->capture_default_str();
    cmd->add_option("--config", f.config_file, "file of key = value settings")->check(CLI::ExistingFile);
    cmd->add_option("--mode", f.mode, "prompt mode")->check(CLI::IsMember({"class-specific", "shared"}));
    cmd->add_option("--mean-init", f.mean_init, "mean of the initial keep probabilities");
    cmd->add_option("--tau", f.tau, "softmax temperature");
    cmd->add_option("--shots", f.shots, "comma-separated shot counts");
    cmd->add_option("--eval-mask", f.eval_mask, "threshold or stochastic:S");
    cmd->add_option("--set", f.sets, "extra key=value setting (repeatable)");
    cmd->add_flag("--timing", f.timing, "record wall-clock seconds in results.csv");
}

HarnessConfig resolve(const CommonFlags& f, HarnessConfig config) {
    if (!f.config_file.empty()) {
        for (const auto& [k, v] : read_config_file(f.config_file)) apply_setting(config, k, v);
    }
    for (const std::string& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
        apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    auto set = [&](const char* key, const std::optional<std::string>& v) {
        if (v) apply_setting(config, key, *v);
    };
    set("seed", f.seed);
    set("seeds", f.seeds);
    set("mode", f.mode);
    set("mean-init", f.mean_init);
    set("tau", f.tau);
    set("shots", f.shots);
    set("eval-mask", f.eval_mask);
    if (f.timing) config.timing = true;
    config.validate();
    return config;
}

// Writes results.csv, summary.csv and run.log under `dir`, and echoes log lines.
class RunOutput {
public:
    explicit RunOutput(const fs::path& dir) : dir_(dir) {
        fs::create_directories(dir_);
        log_.open(dir_ / "run.log");
        if (!log_) throw IoError("cannot open " + (dir_ / "run.log").string());
    }

    void line(const std::string& text) {
        std::cout << text << '\n';
        log_ << text << '\n';
        log_.flush();
    }

    LogSink sink() {
        return [this](const std::string& s) { line(s); };
    }

    void finish(const std::vector<RunRecord>& records) {
        std::ofstream csv(dir_ / "results.csv");
        write_csv(csv, records);
        std::ofstream summary(dir_ / "summary.csv");
        write_summary(summary, records);
        if (!csv || !summary) throw IoError("cannot write results under " + dir_.string());
        line("wrote " + (dir_ / "results.csv").string());
    }

private:
    fs::path dir_;
    std::ofstream log_;
};

void log_config(RunOutput& out, const std::string& command, const HarnessConfig& c) {
    std::string shots;
    for (auto s : c.shots) shots += (shots.empty() ? "" : ",") + std::to_string(s);
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%s seed=%llu seeds=%zu shots=%s mode=%s tau=%g lr=%g epochs=%zu mean_init=%g pad_init=%g "
                  "components=%s eval_mask=%s classes=%zu",
                  command.c_str(), static_cast<unsigned long long>(c.seed), c.seeds, shots.c_str(),
                  std::string(to_string(c.train.mode)).c_str(), c.train.tau, c.train.lr, c.train.epochs,
                  c.train.p_init_mean, c.train.pad_init, c.train.components.name().c_str(),
                  c.train.eval_mask.name().c_str(), c.world.classes);
    out.line(buf);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ammpl: adaptive multi-modality prompt learning on synthetic patch images"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto* fewshot = app.add_subcommand("fewshot", "class-specific few-shot accuracy per shot count");
    auto* b2n = app.add_subcommand("base2novel", "shared-mode base-to-novel generalization");
    auto* cross = app.add_subcommand("crossdata", "train on one world, evaluate on unseen worlds");
    auto* ablate = app.add_subcommand("ablate", "component ablation (C1 mask, C2 padding, C3 interaction)");
    auto* sweep = app.add_subcommand("sweep-init", "sensitivity to the initial keep-probability mean");
    auto* masks = app.add_subcommand("dump-masks", "write learned keep-probability maps as PGM files");
    auto* selftest = app.add_subcommand("selftest", "run the invariant suites");
    for (auto* cmd : {fewshot, b2n, cross, ablate, sweep, masks}) add_common(cmd, flags);

    std::size_t targets = 2;
    cross->add_option("--targets", targets, "number of unseen target worlds")->capture_default_str();
    bool all_combos = false;
    ablate->add_flag("--all-combos", all_combos, "run all eight component combinations");
    std::optional<std::string> means;
    sweep->add_option("--means", means, "comma-separated initial means");
    std::optional<std::size_t> every;
    masks->add_option("--every", every, "snapshot cadence in optimisation steps");

    CLI11_PARSE(app, argc, argv);

    try {
        if (selftest->parsed()) {
            bool ok = true;
            run_selftest([&](const CheckResult& r) {
                ok = ok && r.passed;
                std::printf("%s %s (%.2fs): %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                            r.detail.c_str());
            });
            return ok ? 0 : 1;
        }

        HarnessConfig defaults;
        if (cross->parsed()) defaults.shots = {1, 8, 16};
        HarnessConfig config = resolve(flags, defaults);
        if (all_combos) config.all_combos = true;
        if (means) config.means = parse_double_list(*means);
        if (every) config.mask_every = *every;
        config.validate();

        const std::string command = app.get_subcommands().front()->get_name();
        RunOutput out(flags.out);
        log_config(out, command, config);
        const World world = build_world(config);
        out.line("world " + world.spec.name + " classes=" + std::to_string(world.data.num_classes()) +
                 " items=" + std::to_string(world.data.items.size()));

        std::vector<RunRecord> records;
        if (fewshot->parsed()) {
            records = run_fewshot(config, world, out.sink());
        } else if (b2n->parsed()) {
            records = run_base_to_novel(config, world, out.sink());
        } else if (cross->parsed()) {
            std::vector<World> others;
            for (std::size_t v = 1; v <= targets; ++v) others.push_back(build_world(config, world.encoders, v));
            std::vector<const World*> all{&world};
            for (const World& w : others) all.push_back(&w);
            records = run_crossdata(config, world, all, out.sink());
        } else if (ablate->parsed()) {
            records = run_ablation(config, world, out.sink());
        } else if (sweep->parsed()) {
            records = run_sensitivity(config, world, out.sink());
        } else if (masks->parsed()) {
            const MaskDump dump = dump_masks(config, world, fs::path(flags.out) / "masks", out.sink());
            const std::size_t shot = *std::max_element(config.shots.begin(), config.shots.end());
            records = mask_records(dump, world, config.seed, shot);
            out.line("wrote " + std::to_string(dump.files.size()) + " mask files");
        }
        out.finish(records);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
