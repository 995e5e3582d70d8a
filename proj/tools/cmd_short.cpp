#include <optional>

#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "ventus/error.hpp"
#include "ventus/io_util.hpp"
#include "ventus/parallel.hpp"

namespace cli {

using namespace ventus;

namespace {

struct TrainArgs {
    std::string data, config, train_end;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
};

void run_train(const TrainArgs& a, Context& ctx) {
    TideConfig cfg = a.config.empty() ? TideConfig{} : load_tide_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.epochs) cfg.max_epochs = *a.epochs;
    cfg.validate();

    const auto table = load_stations_csv(resolve_input(a.data, "stations.csv"));
    if (table.stations.empty()) throw ValidationError("station file has no locations");
    const Instant split = holdout_start(a.train_end, table.timestamps.front(), static_cast<long>(table.timestamps.size()));
    const std::size_t n_train = station_index(table, split);
    const auto cov = calendar_matrix(table.timestamps.front(), n_train);

    std::vector<std::string> names;
    for (const auto& [name, _] : table.stations) names.push_back(name);
    std::vector<TideModel> models(names.size());
    std::vector<TrainReport> reports(names.size());
    parallel_for(names.size(), ctx.jobs, [&](std::size_t k) {
        const auto& ws = table.stations.at(names[k]).wind_speed;
        TideSeries s{std::vector<double>(ws.begin(), ws.begin() + static_cast<long>(n_train)), cov, calendar_names(), {}};
        try {
            std::tie(models[k], reports[k]) = train_tide({s}, cfg);
        } catch (const ValidationError& e) {
            throw ValidationError("location " + names[k] + ": " + e.what());
        }
        spdlog::info("trained {}: {} epochs, best validation loss {}", names[k], reports[k].epochs_run,
                     reports[k].best_validation_loss);
    });

    std::map<std::string, TideModel> by_name;
    json rep = json::object();
    for (std::size_t k = 0; k < names.size(); ++k) {
        by_name.emplace(names[k], std::move(models[k]));
        rep[names[k]] = {{"epochs_run", reports[k].epochs_run},
                         {"best_epoch", reports[k].best_epoch},
                         {"best_validation_loss", reports[k].best_validation_loss}};
    }
    save_tide_models(out_file(ctx, "tide.vmdl"), by_name);
    ctx.resolved["tide_config"] = cfg.to_text();
    ctx.resolved["covariates"] = calendar_names();
    ctx.resolved["train_end"] = format_utc(split);
    ctx.resolved["training"] = rep;
}

struct PredictArgs {
    std::string model, data, issue;
    int horizon = 48;
    int chains = 8;
    std::uint64_t seed = 0;
};

void run_predict(const PredictArgs& a, Context& ctx) {
    const auto models = load_tide_models(resolve_input(a.model, "tide.vmdl"));
    const auto table = load_stations_csv(resolve_input(a.data, "stations.csv"));
    const Instant issue = a.issue.empty() ? table.timestamps.back() : parse_utc(a.issue);
    const std::size_t i = station_index(table, issue);

    std::vector<std::string> names;
    for (const auto& [name, _] : models) {
        if (!table.stations.count(name)) throw ValidationError("no station series for model location " + name);
        names.push_back(name);
    }
    std::vector<RandomizedForecast> out(names.size());
    parallel_for(names.size(), ctx.jobs, [&](std::size_t k) {
        const auto& m = models.at(names[k]);
        const auto task = short_task(table, table.stations.at(names[k]).wind_speed, i, m.config(), a.horizon);
        out[k] = randomized_iterative_predict(m, task, a.horizon, a.chains, a.seed);
    });
    std::string csv = "location,issue,lead_hours,forecast\n";
    for (std::size_t k = 0; k < names.size(); ++k)
        for (std::size_t h = 0; h < out[k].mean.size(); ++h)
            csv += names[k] + "," + format_utc(issue) + "," + std::to_string(h + 1) + "," +
                   format_double17(out[k].mean[h]) + "\n";
    write_file(out_file(ctx, "forecast.csv"), csv);
    ctx.resolved["issue"] = format_utc(issue);
    json chains = json::array();
    if (!out.empty())
        for (const auto& c : out.front().chains) chains.push_back(c);
    ctx.resolved["chains"] = chains;
}

}  // namespace

void add_short_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds) {
    {
        auto a = std::make_shared<TrainArgs>();
        auto* s = app.add_subcommand("train-tide", "Train one short-term model per station");
        s->add_option("--data", a->data, "stations.csv or a directory holding it")->required();
        s->add_option("--config", a->config, "TiDE config file (key = value)");
        s->add_option("--train-end", a->train_end, "First held-out hour (default: 70% of the record)");
        s->add_option("--seed", a->seed, "Overrides the config seed");
        s->add_option("--epochs", a->epochs, "Overrides max_epochs")->check(CLI::PositiveNumber);
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_train(*a, c); }});
    }
    {
        auto a = std::make_shared<PredictArgs>();
        auto* s = app.add_subcommand("predict-tide", "Randomized-interval forecasts from a short-term model");
        s->add_option("--model", a->model, "tide.vmdl or a directory holding it")->required();
        s->add_option("--data", a->data, "stations.csv or a directory holding it")->required();
        s->add_option("--issue", a->issue, "Issue time (default: last station hour)");
        s->add_option("--horizon", a->horizon, "Target lead in hours")->check(CLI::PositiveNumber);
        s->add_option("--chains", a->chains, "Interval chains averaged")->check(CLI::PositiveNumber);
        s->add_option("--seed", a->seed, "Chain sampling seed");
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_predict(*a, c); }});
    }
}

}  // namespace cli
