#include <CLI11.hpp>

#include "fed3d/cli.hpp"
#include "fed3d/common.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string mode;
    std::string correction;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t workers = 0;
    bool workers_set = false;
};

fed3d::ExperimentConfig resolve(const CommonFlags& flags) {
    fed3d::ExperimentConfig cfg;
    if (!flags.config_path.empty()) {
        cfg = fed3d::ExperimentConfig::from_file(flags.config_path);
    }
    // command-line overrides win over the file
    if (flags.seed_set) cfg.seed = flags.seed;
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (!flags.mode.empty()) cfg.mode = fed3d::parse_run_mode(flags.mode);
    if (!flags.correction.empty())
        cfg.correction = fed3d::parse_correction_mode(flags.correction);
    if (flags.workers_set) cfg.workers = flags.workers;
    return cfg;
}

void add_common(CLI::App* app, CommonFlags& flags) {
    app->add_option("--config", flags.config_path, "experiment config file (key = value)");
    app->add_option("--out", flags.out_dir, "output directory");
    app->add_option("--mode", flags.mode, "fed3d|fedavg-full|local-only|centralized");
    app->add_option("--correction", flags.correction, "off|local|local_global");
    app->add_option("--seed", flags.seed, "master seed")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    app->add_option("--workers", flags.workers, "parallel client training workers")
        ->each([&flags](const std::string&) { flags.workers_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fed3d: federated prompt-tuning simulator on synthetic point sets"};
    app.require_subcommand(1);

    CommonFlags pretrain_flags, run_flags;
    CLI::App* pretrain = app.add_subcommand("pretrain", "train and freeze the backbone");
    add_common(pretrain, pretrain_flags);
    CLI::App* run = app.add_subcommand("run", "run a federated experiment");
    add_common(run, run_flags);

    std::vector<std::string> summary_paths;
    std::string compare_out = ".";
    CLI::App* compare = app.add_subcommand("compare", "compare run summaries");
    compare->add_option("summaries", summary_paths, "summary.json files")->required();
    compare->add_option("--out", compare_out, "output directory for compare.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // bad usage is a config error
    }

    try {
        if (pretrain->parsed()) return fed3d::cli::cmd_pretrain(resolve(pretrain_flags));
        if (run->parsed()) return fed3d::cli::cmd_run(resolve(run_flags));
        if (compare->parsed()) return fed3d::cli::cmd_compare(summary_paths, compare_out);
    } catch (const fed3d::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
