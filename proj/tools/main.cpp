#include <cstdio>
#include <iostream>

#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "ventus/error.hpp"
#include "ventus/log.hpp"
#include "ventus/parallel.hpp"

namespace {

int run(int argc, char** argv) {
    cli::Context ctx;
    ctx.jobs = ventus::default_jobs();

    CLI::App app{"Wind forecasting and marginal-generation toolkit.\nLog level: VENTUS_LOG=error|warn|info|debug"};
    app.name("ventus");
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--jobs", ctx.jobs, "Worker threads (1 gives bit-reproducible output)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    std::vector<cli::Command> cmds;
    cli::add_data_commands(app, ctx, cmds);
    cli::add_short_commands(app, ctx, cmds);
    cli::add_grid_commands(app, ctx, cmds);
    cli::add_hybrid_commands(app, ctx, cmds);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    for (auto& c : cmds) {
        if (!c.app->parsed()) continue;
        ventus::init_logging();
        cli::prepare_out(ctx);
        c.run(ctx);
        cli::write_run_json(*c.app, ctx);
        return 0;
    }
    std::cerr << app.help();
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ventus::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ventus::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
