#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fbsde/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"coupled FBSDE decoupling-field solver and verification harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int workers = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration JSON")->required();
        sub->add_option("--workers", workers, "worker thread count")
            ->envname("FBSDE_WORKERS")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
    };
    add_common(app.add_subcommand("solve", "compute the decoupling field"));
    add_common(app.add_subcommand("simulate", "solve, then simulate the coupled system"));
    add_common(app.add_subcommand("verify", "solve and run the configured checks"));
    add_common(app.add_subcommand("all", "solve, simulate, and verify"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return fbsde::kExitConfig;
    }

    const fbsde::Command cmd = fbsde::parse_command(app.get_subcommands().front()->get_name());
    fbsde::RunOptions ropt;
    ropt.workers = workers;
    ropt.out_dir = out_dir;
    return fbsde::run(cmd, config_path, ropt, std::cout, std::cerr);
}
