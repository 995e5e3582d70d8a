#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "ventus/decomposition.hpp"
#include "ventus/econometrics.hpp"
#include "ventus/error.hpp"
#include "ventus/ingestion.hpp"
#include "ventus/io_util.hpp"

namespace cli {

using namespace ventus;

namespace {

struct SynthArgs {
    std::uint64_t seed = 7;
    int hours = 720;
    std::string start = "2021-01-01T00:00:00Z";
    int plants = 20;
    int locations = 4;
};

void run_synth(const SynthArgs& a, Context& ctx) {
    SyntheticScenario sc;
    sc.seed = a.seed;
    sc.hours = a.hours;
    sc.start = parse_utc(a.start);
    sc.n_plants = a.plants;
    sc.n_locations = a.locations;
    const auto data = generate_synthetic(sc);

    write_panel_dir(data.panel, ctx.out);
    write_grid_tensor(data.grid, out_file(ctx, "grid.gt1"));
    write_stations_csv(data.stations, out_file(ctx, "stations.csv"));
    write_locations_csv(data.locations, out_file(ctx, "locations.csv"));
    const std::string box = format_double(data.box[0]) + "," + format_double(data.box[1]) + "," +
                            format_double(data.box[2]) + "," + format_double(data.box[3]);
    write_file(out_file(ctx, "box.txt"), box + "\n");
    std::string labels = "plant_id,wind_following\n";
    for (const auto& [id, wf] : data.plant_is_wind_following) labels += id + "," + (wf ? "1" : "0") + "\n";
    write_file(out_file(ctx, "plant_labels.csv"), labels);

    ctx.resolved["box"] = box;
    ctx.resolved["grid_steps"] = data.grid.n_times();
    ctx.resolved["noise_scale"] = sc.noise_scale;
    ctx.resolved["wind_following_fraction"] = sc.wind_following_fraction;
}

struct IngestArgs {
    std::string generation, grid, stations, locations;
};

void run_ingest(const IngestArgs& a, Context& ctx) {
    if (a.generation.empty() && a.grid.empty() && a.stations.empty() && a.locations.empty())
        throw ValidationError("nothing to ingest: give at least one of --generation, --grid, --stations, --locations");
    std::optional<GridStateSequence> grid;
    if (!a.generation.empty()) {
        const auto panel = load_generation_csv(a.generation);
        write_generation_csv(panel, out_file(ctx, "generation.csv"));
        ctx.resolved["generation_hours"] = panel.size();
        ctx.resolved["generation_series"] = panel.series().size();
    }
    if (!a.grid.empty()) {
        grid = load_grid_tensor(a.grid);
        write_grid_tensor(*grid, out_file(ctx, "grid.gt1"));
        ctx.resolved["grid_steps"] = grid->n_times();
        ctx.resolved["grid_variables"] = grid->spec().variables;
    }
    if (!a.stations.empty()) {
        const auto st = load_stations_csv(a.stations);
        write_stations_csv(st, out_file(ctx, "stations.csv"));
        ctx.resolved["station_hours"] = st.timestamps.size();
    }
    if (!a.locations.empty()) {
        const auto locs = load_locations_csv(a.locations);
        write_locations_csv(locs, out_file(ctx, "locations.csv"));
        if (grid) {
            json cells = json::object();
            for (const auto& [name, c] : snap_to_grid(locs, grid->spec()))
                cells[name] = {c.lat_index, c.lon_index};
            ctx.resolved["location_cells"] = cells;
        }
    }
}

struct DecomposeArgs {
    std::string series, column;
    int ensemble = 50;
    double noise = 0.2;
    std::uint64_t seed = 0;
    int imfs = 0;
};

std::vector<double> read_column(const fs::path& path, const std::string& column, std::string& used) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty series file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line, ',');
    std::size_t col = header.size() - 1;
    if (!column.empty()) {
        const auto it = std::find(header.begin(), header.end(), column);
        if (it == header.end()) throw ValidationError("series file has no column '" + column + "'");
        col = static_cast<std::size_t>(it - header.begin());
    }
    used = header[col];
    std::vector<double> x;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size()) throw ParseError(n, "expected " + std::to_string(header.size()) + " fields");
        try {
            x.push_back(parse_double(f[col]));
        } catch (const ValidationError& e) {
            throw ParseError(n, e.what());
        }
        if (!std::isfinite(x.back())) throw ParseError(n, "non-finite value");
    }
    return x;
}

void run_decompose(const DecomposeArgs& a, Context& ctx) {
    std::string used;
    const auto x = read_column(a.series, a.column, used);
    if (x.size() < 4) throw ValidationError("series needs at least 4 values to decompose");
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(x.size()));

    EemdOptions opts;
    opts.ensemble_size = a.ensemble;
    opts.noise_std = a.noise * sd;
    opts.seed = a.seed;
    opts.fixed_imfs = a.imfs;
    opts.jobs = ctx.jobs;
    const auto d = eemd(x, opts);

    std::string out;
    for (std::size_t k = 0; k < d.imfs.size(); ++k) out += "imf_" + std::to_string(k + 1) + ",";
    out += "residue\n";
    for (std::size_t t = 0; t < d.length(); ++t) {
        for (const auto& imf : d.imfs) out += format_double17(imf[t]) + ",";
        out += format_double17(d.residue[t]) + "\n";
    }
    write_file(out_file(ctx, "components.csv"), out);
    ctx.resolved["column"] = used;
    ctx.resolved["noise_std"] = opts.noise_std;
    ctx.resolved["n_imfs"] = d.imfs.size();
    ctx.resolved["sd_threshold"] = opts.sift.sd_threshold;
    ctx.resolved["max_sifts"] = opts.sift.max_sifts;
}

struct MarginalArgs {
    std::string panel;
    bool per_plant = false;
    bool no_month = false, no_year = false, no_controls = false;
    double significance = 1.96;
};

void run_marginal(const MarginalArgs& a, Context& ctx) {
    const auto panel = load_panel_dir(a.panel);
    RegressionSpec spec;
    spec.controls = !a.no_controls;
    spec.month_effects = !a.no_month;
    spec.year_effects = !a.no_year;
    spec.significance = a.significance;
    const auto aggregate = fit_fixed_effects(panel, spec);
    std::vector<PlantClassification> plants;
    if (a.per_plant) plants = classify_plants(panel, panel.plants(Technology::thermal), spec, ctx.jobs);
    write_file(out_file(ctx, "report.csv"), format_marginal_report(aggregate, plants));
    ctx.resolved["n_obs"] = aggregate.n_obs;
    ctx.resolved["r_squared"] = aggregate.r_squared;
    if (a.per_plant) {
        json counts = json::object();
        for (auto label : {PlantLabel::wind_following, PlantLabel::solar_following, PlantLabel::unclassified}) {
            std::size_t n = 0;
            for (const auto& p : plants) n += p.label == label;
            counts[std::string(to_string(label))] = n;
        }
        ctx.resolved["labels"] = counts;
    }
}

}  // namespace

void add_data_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds) {
    {
        auto a = std::make_shared<SynthArgs>();
        auto* s = app.add_subcommand("synth", "Generate a synthetic scenario (panel, grid, stations, locations)");
        s->add_option("--seed", a->seed, "Random seed");
        s->add_option("--hours", a->hours, "Length in hours")->check(CLI::Range(12, 1000000));
        s->add_option("--start", a->start, "First timestamp (UTC)");
        s->add_option("--plants", a->plants, "Thermal plants")->check(CLI::Range(1, 10000));
        s->add_option("--locations", a->locations, "Forecast locations inside the box")->check(CLI::Range(1, 16));
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_synth(*a, c); }});
    }
    {
        auto a = std::make_shared<IngestArgs>();
        auto* s = app.add_subcommand("ingest", "Validate input files and write canonical copies");
        s->add_option("--generation", a->generation, "Generation CSV");
        s->add_option("--grid", a->grid, "GT1 grid tensor");
        s->add_option("--stations", a->stations, "Station CSV");
        s->add_option("--locations", a->locations, "Locations CSV");
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_ingest(*a, c); }});
    }
    {
        auto a = std::make_shared<DecomposeArgs>();
        auto* s = app.add_subcommand("decompose", "Ensemble empirical mode decomposition of one CSV column");
        s->add_option("--series", a->series, "CSV with a header row")->required();
        s->add_option("--column", a->column, "Column to decompose (default: last)");
        s->add_option("--ensemble", a->ensemble, "Ensemble members")->check(CLI::Range(1, 100000));
        s->add_option("--noise", a->noise, "Noise std as a fraction of the series std")->check(CLI::NonNegativeNumber);
        s->add_option("--imfs", a->imfs, "Fixed IMF count (0: natural)")->check(CLI::NonNegativeNumber);
        s->add_option("--seed", a->seed, "Random seed");
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_decompose(*a, c); }});
    }
    {
        auto a = std::make_shared<MarginalArgs>();
        auto* s = app.add_subcommand("analyze-marginal", "Fixed-effects regression of thermal generation");
        s->add_option("--panel", a->panel, "Panel directory (generation.csv, optional capacity.csv)")->required();
        s->add_flag("--per-plant", a->per_plant, "Also fit and classify every thermal plant");
        s->add_flag("--no-month", a->no_month, "Drop month fixed effects");
        s->add_flag("--no-year", a->no_year, "Drop year fixed effects");
        s->add_flag("--no-controls", a->no_controls, "Drop hydro, geothermal and import controls");
        s->add_option("--significance", a->significance, "|t| threshold for plant labels")
            ->check(CLI::PositiveNumber);
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_marginal(*a, c); }});
    }
}

}  // namespace cli
