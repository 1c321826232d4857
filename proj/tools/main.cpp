#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"stlab - windowed training and large-window transfer experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string preset = "desk";
    std::string out_dir = "out";
    std::string data_dir;
    std::string model_path;
    uint64_t seed = 0;
    bool have_seed = false;
    int threads = 0;

    app.add_option("--config", config_path, "JSON experiment config (merged over the preset)");
    app.add_option("--preset", preset, "configuration preset: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--seed", seed, "master seed override (sim/train/eval/mid derive from it)")
        ->each([&](const std::string&) { have_seed = true; });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--threads", threads, "worker threads (default: STLAB_THREADS or hardware)");

    auto* simulate = app.add_subcommand("simulate", "generate dataset shards and a manifest");
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--data", data_dir, "dataset directory")->required();
    auto* eval = app.add_subcommand("eval-transfer", "multi-scale MSE/OSPA evaluation");
    eval->add_option("--model", model_path, "model manifest path")->required();
    auto* bound = app.add_subcommand("bound", "transfer-bound report");
    bound->add_option("--model", model_path, "model manifest path")->required();
    bound->add_option("--data", data_dir, "training dataset directory")->required();
    auto* mid = app.add_subcommand("mid", "mobile-infrastructure-on-demand sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        stlab::cli::ExperimentConfig cfg = stlab::cli::load_config(preset, config_path);
        if (have_seed) stlab::cli::override_seeds(cfg, seed);

        if (simulate->parsed()) stlab::cli::cmd_simulate(cfg, out_dir, threads);
        if (train->parsed()) stlab::cli::cmd_train(cfg, data_dir, out_dir, threads);
        if (eval->parsed()) stlab::cli::cmd_eval_transfer(cfg, model_path, out_dir, threads);
        if (bound->parsed()) stlab::cli::cmd_bound(cfg, model_path, data_dir, out_dir, threads);
        if (mid->parsed()) stlab::cli::cmd_mid(cfg, out_dir, threads);
    } catch (const stlab::cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const stlab::cli::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
