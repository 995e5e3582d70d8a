#include <cmath>

#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "ventus/error.hpp"
#include "ventus/gridcaster.hpp"
#include "ventus/hybrid_eval.hpp"
#include "ventus/io_util.hpp"
#include "ventus/parallel.hpp"

namespace cli {

using namespace ventus;

namespace {

struct HybridArgs {
    std::string short_model, grid_model, bias, locations, data, train_end;
    int handoff = 48;
    int max_lead = 240;
    int chains = 8;
    int issue_every = 24;
    std::uint64_t seed = 0;
};

void run_predict_hybrid(const HybridArgs& a, Context& ctx) {
    if (!fs::is_directory(a.data)) throw ValidationError("--data must be a directory holding stations.csv and grid.gt1");
    if (a.issue_every % 6 != 0) throw ValidationError("--issue-every must be a multiple of 6 hours");
    const auto shorts = load_tide_models(resolve_input(a.short_model, "tide.vmdl"));
    const auto grid_model = GridForecaster::load(resolve_input(a.grid_model, "grid.vmdl"));
    if (!grid_model.forcing().empty()) throw ValidationError("predict-hybrid does not support models with forcing inputs");
    std::optional<BiasModel> bias;
    if (!a.bias.empty()) bias = BiasModel::load(resolve_input(a.bias, "bias.vmdl"));
    const auto locs = load_locations_csv(resolve_input(a.locations, "locations.csv"));
    const auto table = load_stations_csv(a.data / fs::path("stations.csv"));
    const auto grid = load_grid_tensor(a.data / fs::path("grid.gt1"));
    const auto& g = grid.spec();
    if (g.dt_seconds != 21600) throw ValidationError("predict-hybrid needs a 6-hourly grid");
    if (grid_model.grid().variables != g.variables || grid_model.grid().n_cells() != g.n_cells())
        throw ValidationError("grid model does not match the data grid");
    const std::size_t iu = g.variable_index("u10"), iv = g.variable_index("v10");
    const auto cells = snap_to_grid(locs, g);
    for (const auto& l : locs.entries()) {
        if (!shorts.count(l.name)) throw ValidationError("no short-term model for location " + l.name);
        if (!table.stations.count(l.name)) throw ValidationError("no station series for location " + l.name);
    }
    if (locs.entries().empty()) throw ValidationError("no locations");
    const auto& first_cfg = shorts.begin()->second.config();

    // Issue times: on the grid lattice, inside the held-out period, with a
    // full medium-range horizon of truth after them.
    const long span = static_cast<long>(grid.n_times()) * 6;
    const Instant start = holdout_start(a.train_end, g.t0, span);
    long first_step = std::chrono::duration_cast<std::chrono::hours>(start - g.t0).count();
    first_step = std::max<long>(1, (first_step + 5) / 6);
    std::vector<std::size_t> issues;  // grid indices
    const Instant last_truth = std::min(table.timestamps.back(), grid.time_of(grid.n_times() - 1));
    for (long k = first_step;; k += a.issue_every / 6) {
        const Instant t = grid.time_of(static_cast<std::size_t>(k));
        if (t + std::chrono::hours(a.max_lead) > last_truth) break;
        if (t < table.timestamps.front() + std::chrono::hours(first_cfg.lookback - 1)) continue;
        issues.push_back(static_cast<std::size_t>(k));
    }
    if (issues.empty()) throw ValidationError("no issue time in the held-out period has " + std::to_string(a.max_lead) +
                                              " hours of verifying data");

    const int n_steps = a.max_lead / 6;
    std::vector<Trajectory> rollouts(issues.size());
    parallel_for(issues.size(), ctx.jobs, [&](std::size_t k) {
        auto traj = grid_model.rollout(state_field(grid, issues[k] - 1), state_field(grid, issues[k]), n_steps);
        if (bias)
            for (int s = 0; s < n_steps; ++s)
                traj[s] = apply_bias_correction(traj[s], 6 * (s + 1), bias->variables, bias->cells, *bias);
        rollouts[k] = std::move(traj);
    });

    const auto& entries = locs.entries();
    const std::size_t n_loc = entries.size();
    std::vector<std::vector<double>> short_fc(issues.size() * n_loc);
    parallel_for(short_fc.size(), ctx.jobs, [&](std::size_t job) {
        const std::size_t k = job / n_loc;
        const auto& loc = entries[job % n_loc];
        const auto& m = shorts.at(loc.name);
        const std::size_t si = station_index(table, grid.time_of(issues[k]));
        const auto task = short_task(table, table.stations.at(loc.name).wind_speed, si, m.config(), a.handoff);
        short_fc[job] = randomized_iterative_predict(m, task, a.handoff, a.chains, a.seed).mean;
    });

    std::vector<LeadSeries> s_runs, m_runs, b_runs, t_runs;
    for (std::size_t k = 0; k < issues.size(); ++k) {
        const Instant issue = grid.time_of(issues[k]);
        const std::size_t si = station_index(table, issue);
        for (std::size_t l = 0; l < n_loc; ++l) {
            const auto& loc = entries[l];
            const auto& ws = table.stations.at(loc.name).wind_speed;
            LeadSeries s{loc.name, issue, {}}, m{loc.name, issue, {}}, b{loc.name, issue, {}}, t{loc.name, issue, {}};
            for (int h = 1; h <= a.handoff; ++h) s.values[h] = short_fc[k * n_loc + l][h - 1];
            const CellIndex c = cells.at(loc.name);
            const auto col = static_cast<Eigen::Index>(static_cast<std::size_t>(c.lat_index) * g.n_lon + c.lon_index);
            for (int st = 0; st < n_steps; ++st) {
                const Field& f = rollouts[k][st];
                m.values[6 * (st + 1)] = std::hypot(f(static_cast<Eigen::Index>(iu), col), f(static_cast<Eigen::Index>(iv), col));
            }
            for (int h = 1; h <= a.max_lead; ++h) {
                b.values[h] = ws[si];
                t.values[h] = ws[si + static_cast<std::size_t>(h)];
            }
            s_runs.push_back(std::move(s));
            m_runs.push_back(std::move(m));
            b_runs.push_back(std::move(b));
            t_runs.push_back(std::move(t));
        }
    }
    auto bundle = stitch_hybrid(s_runs, m_runs, a.handoff, a.max_lead);
    attach_baseline(bundle, b_runs);
    attach_truth(bundle, t_runs);
    bundle.validate();
    bundle.write_csv(out_file(ctx, "bundle.csv"));

    ctx.resolved["issues"] = issues.size();
    ctx.resolved["first_issue"] = format_utc(grid.time_of(issues.front()));
    ctx.resolved["last_issue"] = format_utc(grid.time_of(issues.back()));
    ctx.resolved["baseline"] = "persistence of the observed wind speed at issue time";
    ctx.resolved["bias_corrected"] = bias.has_value();
}

struct EvaluateArgs {
    std::string bundle;
    std::vector<std::string> windows{"14:38"};
    int handoff = 48;
};

void run_evaluate(const EvaluateArgs& a, Context& ctx) {
    const auto bundle = ForecastBundle::load_csv(resolve_input(a.bundle, "bundle.csv"), a.handoff);
    std::vector<Window> windows;
    for (const auto& w : a.windows) windows.push_back(parse_window(w));
    const auto rep = skill_report(bundle, windows);
    emit_report(rep, ctx.out);
    ctx.resolved["crossover_lead_hours"] = rep.crossover_lead ? json(*rep.crossover_lead) : json();
    ctx.resolved["leads"] = rep.leads.size();
}

}  // namespace

void add_hybrid_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds) {
    {
        auto a = std::make_shared<HybridArgs>();
        auto* s = app.add_subcommand("predict-hybrid", "Stitch short- and medium-range forecasts into a bundle");
        s->add_option("--short", a->short_model, "tide.vmdl or a directory holding it")->required();
        s->add_option("--grid", a->grid_model, "grid.vmdl or a directory holding it")->required();
        s->add_option("--bias", a->bias, "bias.vmdl or a directory holding it (default: raw grid output)");
        s->add_option("--locations", a->locations, "Locations CSV")->required();
        s->add_option("--data", a->data, "Directory with stations.csv and grid.gt1")->required();
        s->add_option("--handoff", a->handoff, "Last short-range lead (hours)")->check(CLI::PositiveNumber);
        s->add_option("--max-lead", a->max_lead, "Last medium-range lead (hours)")->check(CLI::PositiveNumber);
        s->add_option("--chains", a->chains, "Interval chains per short-range forecast")->check(CLI::PositiveNumber);
        s->add_option("--issue-every", a->issue_every, "Hours between issue times")->check(CLI::PositiveNumber);
        s->add_option("--seed", a->seed, "Chain sampling seed");
        s->add_option("--train-end", a->train_end, "First held-out time (default: 70% of the record)");
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_predict_hybrid(*a, c); }});
    }
    {
        auto a = std::make_shared<EvaluateArgs>();
        auto* s = app.add_subcommand("evaluate", "Per-lead skill, crossover and window summary of a bundle");
        s->add_option("--bundle", a->bundle, "bundle.csv or a directory holding it")->required();
        s->add_option("--window", a->windows, "Lead window START:END, repeatable");
        s->add_option("--handoff", a->handoff, "Handoff lead of the bundle")->check(CLI::PositiveNumber);
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_evaluate(*a, c); }});
    }
}

}  // namespace cli
