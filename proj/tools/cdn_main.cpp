#include "cdn/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>

namespace {

// 0 success, 2 config error, 3 data error, 4 numerical abort
int run(const std::string& subcommand, const std::string& config_path,
        const std::string& checkpoint, const std::optional<std::string>& out_dir,
        const std::optional<std::uint64_t>& seed) {
    try {
        cdn::ExperimentConfig cfg = cdn::load_config(config_path);
        if (out_dir) cfg.output_dir = *out_dir;
        if (seed) cfg.seed = *seed;
        if (subcommand == "toy") {
            cdn::cmd_toy(cfg);
        } else if (subcommand == "train") {
            cdn::cmd_train(cfg);
        } else if (subcommand == "ood") {
            cdn::cmd_ood(cfg, checkpoint);
        } else {
            cdn::cmd_attack(cfg, checkpoint);
        }
        return 0;
    } catch (const cdn::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const cdn::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const cdn::FormatError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const cdn::ShapeError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const cdn::NumericalError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"compound density networks: training and evaluation harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
        sub->add_option("--config", config_path, "experiment config (JSON)")
            ->required();
        if (needs_checkpoint)
            sub->add_option("--checkpoint", checkpoint, "trained model checkpoint")
                ->required();
        sub->add_option("--out", out_dir, "output directory (overrides config)");
        sub->add_option("--seed", seed, "global seed (overrides config)");
    };

    add_common(app.add_subcommand("toy", "toy-regression uncertainty curves"), false);
    add_common(app.add_subcommand("train", "train a model and write a checkpoint"),
               false);
    add_common(app.add_subcommand("ood", "out-of-distribution entropy analysis"), true);
    add_common(app.add_subcommand("attack", "FGSM robustness sweep"), true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    return run(app.get_subcommands().front()->get_name(), config_path, checkpoint,
               out_dir, seed);
}
