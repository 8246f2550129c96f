#include <CLI11.hpp>
#include <iostream>

#include "ezdual/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Consumption-investment duality toolkit for recursive utility"};
    app.require_subcommand(1);

    ezdual::cli::CmdOptions opts;
    std::string out_dir;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "run configuration file")
            ->required();
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
        cmd->add_option("--seed", seed, "RNG seed (overrides config)");
        cmd->add_option("--threads", opts.threads, "worker threads")
            ->check(CLI::PositiveNumber);
        return cmd;
    };

    auto* check = add_common(app.add_subcommand(
        "check", "regime and model parameter checkers"));
    auto* solve = add_common(app.add_subcommand(
        "solve", "solve the value surface and export it"));
    auto* verify = add_common(app.add_subcommand(
        "verify", "full primal/dual verification pipeline"));
    auto* transforms = add_common(app.add_subcommand(
        "transforms", "conjugate-chain residual scan"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ezdual::cli::kExitConfig;
    }

    for (auto* cmd : {check, solve, verify, transforms}) {
        if (!cmd->parsed()) continue;
        if (cmd->count("--out")) opts.out_dir = out_dir;
        if (cmd->count("--seed")) opts.seed = seed;
    }

    if (check->parsed()) return ezdual::cli::cmd_check(opts, std::cout);
    if (solve->parsed()) return ezdual::cli::cmd_solve(opts, std::cout);
    if (verify->parsed()) return ezdual::cli::cmd_verify(opts, std::cout);
    if (transforms->parsed()) return ezdual::cli::cmd_transforms(opts, std::cout);
    return ezdual::cli::kExitConfig;
}
