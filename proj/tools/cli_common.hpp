#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include "ventus/core_data.hpp"
#include "ventus/ingestion.hpp"
#include "ventus/tide.hpp"

namespace cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Shared state of one invocation. Commands add resolved settings to
// `resolved`; run.json is written after a command succeeds.
struct Context {
    std::size_t jobs = 1;
    fs::path out;
    json resolved = json::object();
};

using Action = std::function<void(Context&)>;

struct Command {
    CLI::App* app = nullptr;
    Action run;
};

void add_data_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds);
void add_short_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds);
void add_grid_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds);
void add_hybrid_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds);

// Every subcommand takes --out <dir>.
void add_out_option(CLI::App* sub, Context& ctx);
void prepare_out(const Context& ctx);
fs::path out_file(const Context& ctx, const std::string& name);

// A path naming either the file itself or a directory holding `name`.
fs::path resolve_input(const fs::path& p, const std::string& name);

// Start of the held-out period: t0 plus 70% of the span, floored to 6 h.
ventus::Instant default_holdout_start(ventus::Instant t0, long span_hours);
ventus::Instant holdout_start(const std::string& text, ventus::Instant t0, long span_hours);

// Calendar covariates for the short-term model.
const std::vector<std::string>& calendar_names();
Eigen::MatrixXd calendar_matrix(ventus::Instant first, std::size_t n_hours);

// Forecast inputs at station hour `issue`: the last L values of y and
// calendar covariates from the first history hour far enough ahead for a
// chained forecast to `lead`.
ventus::ForecastTask short_task(const ventus::StationTable& table, const std::vector<double>& y, std::size_t issue,
                                const ventus::TideConfig& cfg, int lead);
// Hour index of t in the station table; throws if t is off the table.
std::size_t station_index(const ventus::StationTable& table, ventus::Instant t);

void write_run_json(const CLI::App& sub, const Context& ctx);

}  // namespace cli
