// Command-line front end: atnet <command> [options]

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "atnet/commands.hpp"

namespace {

struct FlagKey {
    const char* flag;
    const char* key;
    const char* help;
};

constexpr FlagKey kGlobalFlags[] = {
    {"--seed", "seed", "Run seed"},
    {"--threads", "threads", "Worker thread cap (0 = OpenMP default); results do not depend on it"},
};

struct CommandInfo {
    const char* name;
    const char* help;
    std::vector<FlagKey> flags;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<CommandInfo> commands = {
        {"synth",
         "Degrade a folder of clean images into a paired dataset",
         {{"--input", "input", "Clean image directory"},
          {"--output", "output", "Dataset directory"},
          {"--pairs", "pairs_per_image", "Degraded pairs per clean image"}}},
        {"train-prior",
         "Stage 1: train the MC-dropout prior network",
         {{"--manifest", "manifest", "Training manifest"},
          {"--output", "output", "Run directory"},
          {"--iters", "iters_prior", "Iterations"},
          {"--batch", "batch", "Batch size"},
          {"--resume", "resume", "Checkpoint to resume from"}}},
        {"train-restore",
         "Stage 2: train the prior-conditioned restoration network",
         {{"--manifest", "manifest", "Training manifest"},
          {"--atnet1-ckpt", "atnet1_ckpt", "Stage-1 checkpoint"},
          {"--output", "output", "Run directory"},
          {"--S", "S", "MC-dropout samples per prior"},
          {"--iters", "iters_restore", "Iterations"},
          {"--batch", "batch", "Batch size"},
          {"--resume", "resume", "Checkpoint to resume from"}}},
        {"estimate",
         "Write the uncertainty prior of an image (or folder)",
         {{"--input", "input", "Degraded image or directory"},
          {"--atnet1-ckpt", "atnet1_ckpt", "Stage-1 checkpoint"},
          {"--output", "output", "Output directory"},
          {"--S", "S", "MC-dropout samples"}}},
        {"restore",
         "Restore an image (or folder)",
         {{"--input", "input", "Degraded image or directory"},
          {"--atnet1-ckpt", "atnet1_ckpt", "Stage-1 checkpoint"},
          {"--atnet-ckpt", "atnet_ckpt", "Stage-2 checkpoint"},
          {"--output", "output", "Output directory"},
          {"--S", "S", "MC-dropout samples"}}},
        {"eval",
         "PSNR/SSIM/d_VGG over a manifest, plus optional Top-K identification",
         {{"--manifest", "manifest", "Evaluation manifest"},
          {"--atnet1-ckpt", "atnet1_ckpt", "Stage-1 checkpoint"},
          {"--atnet-ckpt", "atnet_ckpt", "Stage-2 checkpoint"},
          {"--output", "output", "Report directory"},
          {"--S", "S", "MC-dropout samples"},
          {"--gallery", "gallery", "Gallery directory (identity/images)"},
          {"--probes", "probes", "Degraded probe directory (identity/images)"}}},
    };

    CLI::App app{"Single-image turbulence restoration with an MC-dropout uncertainty prior"};
    app.require_subcommand(1);
    std::string config_file;
    std::vector<std::string> sets;
    app.add_option("--config", config_file, "Flat key=value config file");
    app.add_option("--set", sets, "Override any config key: --set key=value (repeatable)");

    // Every flag is kept as text and typed by the config layer.
    std::vector<std::pair<const char*, std::string>> global_values(std::size(kGlobalFlags));
    for (std::size_t i = 0; i < std::size(kGlobalFlags); ++i) {
        global_values[i].first = kGlobalFlags[i].key;
        app.add_option(kGlobalFlags[i].flag, global_values[i].second, kGlobalFlags[i].help);
    }

    std::vector<std::vector<std::pair<const char*, std::string>>> values(commands.size());
    std::vector<CLI::App*> subs;
    for (std::size_t c = 0; c < commands.size(); ++c) {
        CLI::App* sub = app.add_subcommand(commands[c].name, commands[c].help);
        sub->fallthrough();
        values[c].resize(commands[c].flags.size());
        for (std::size_t f = 0; f < commands[c].flags.size(); ++f) {
            values[c][f].first = commands[c].flags[f].key;
            sub->add_option(commands[c].flags[f].flag, values[c][f].second, commands[c].flags[f].help);
        }
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return atnet::kExitUsage;
    }

    std::size_t chosen = 0;
    while (!subs[chosen]->parsed()) ++chosen;

    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = 0; i < std::size(kGlobalFlags); ++i)
        if (app.count(kGlobalFlags[i].flag)) overrides.emplace_back(global_values[i].first, global_values[i].second);
    for (std::size_t f = 0; f < values[chosen].size(); ++f)
        if (subs[chosen]->count(commands[chosen].flags[f].flag))
            overrides.emplace_back(values[chosen][f].first, values[chosen][f].second);
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::cerr << "error: --set expects key=value, got '" << s << "'\n";
            return atnet::kExitUsage;
        }
        overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }

    atnet::RunConfig cfg;
    try {
        cfg = atnet::resolve_config(config_file, overrides);
    } catch (const atnet::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return atnet::kExitUsage;
    }
    return atnet::run_command(commands[chosen].name, cfg, std::cout, std::cerr);
}
