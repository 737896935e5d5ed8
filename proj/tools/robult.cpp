#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "robult/cli.hpp"

namespace {

int run(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const robult::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const robult::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised multimodal training with missing-modality evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", mask = "all", variant, checkpoint, data;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the run seed");
        sub->add_option("--out-dir", out_dir, "report directory")->capture_default_str();
    };
    auto* train = app.add_subcommand("train", "train and write reports");
    add_common(train);
    auto* ablate = app.add_subcommand("ablate", "train one ablation variant");
    add_common(ablate);
    ablate->add_option("--variant", variant, "drop_sup | drop_rec | drop_lb | drop_ulb | uniform_weights | "
                                             "drop_pseudo | drop_unique")
        ->required();
    auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset");
    add_common(gen);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint under modality masks");
    eval->add_option("--checkpoint", checkpoint, "model.ckpt from train")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data, "dataset file (e.g. test.csv from train)")->required()->check(CLI::ExistingFile);
    eval->add_option("--mask", mask, "all | full | single:i | pair:i,j | random:p")->capture_default_str();
    eval->add_option("--seed", seed, "seed for random masks");
    eval->add_option("--out-dir", out_dir, "report directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    auto config = [&] {
        robult::RunConfig cfg =
            robult::load_config(config_path.empty() ? std::nullopt : std::optional<robult::fs::path>(config_path));
        if (seed) cfg.seed = *seed;
        return cfg;
    };

    return run([&] {
        if (train->parsed()) {
            const auto b = robult::cmd_train(config(), out_dir);
            std::cout << "wrote " << b.losses.string() << ", " << b.metrics.string() << ", "
                      << b.diagnostics.string() << ", " << b.checkpoint.string() << '\n';
        } else if (ablate->parsed()) {
            const auto b = robult::cmd_ablate(config(), variant, out_dir);
            std::cout << "wrote " << b.metrics.string() << '\n';
        } else if (gen->parsed()) {
            std::cout << "wrote " << robult::cmd_gen_data(config(), out_dir).string() << '\n';
        } else if (eval->parsed()) {
            for (const auto& row : robult::cmd_eval(checkpoint, data, mask, out_dir, seed.value_or(0))) {
                std::cout << row.tag;
                if (row.accuracy) std::cout << " accuracy=" << *row.accuracy;
                if (row.mae) std::cout << " mae=" << *row.mae;
                if (row.auroc) std::cout << " auroc=" << *row.auroc;
                std::cout << '\n';
            }
        }
    });
}
