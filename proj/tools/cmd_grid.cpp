#include <cmath>

#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "ventus/error.hpp"
#include "ventus/gridcaster.hpp"
#include "ventus/io_util.hpp"

namespace cli {

using namespace ventus;

namespace {

// Training part of a grid record: states before the held-out start.
GridStateSequence training_part(const GridStateSequence& data, const std::string& train_end) {
    const auto& g = data.spec();
    const long span = static_cast<long>(data.n_times()) * g.dt_seconds / 3600;
    const Instant split = holdout_start(train_end, g.t0, span);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(split - g.t0).count();
    if (secs <= 0) throw ValidationError("training end " + format_utc(split) + " is not after the first grid state");
    const auto n = std::min<std::size_t>(data.n_times(), static_cast<std::size_t>((secs + g.dt_seconds - 1) / g.dt_seconds));
    return data.slice(0, n);
}

bool same_geometry(const GridSpec& a, const GridSpec& b) {
    return a.lat0 == b.lat0 && a.dlat == b.dlat && a.n_lat == b.n_lat && a.lon0 == b.lon0 && a.dlon == b.dlon &&
           a.n_lon == b.n_lon && a.variables == b.variables && a.dt_seconds == b.dt_seconds;
}

LossConfig loss_for(const std::string& path, const GridStateSequence& train) {
    if (path.empty()) return make_loss_config(train);
    auto cfg = load_loss_config(path);
    if (!same_geometry(cfg.grid, train.spec()))
        throw ValidationError("loss config grid does not match the data grid");
    return cfg;
}

struct TrainArgs {
    std::string model, data, loss, train_end, box;
    int steps = 1000;
    int batch = 4;
    double lr = 1e-3;
    int hidden = 32;
    double omega = 4.0;
    std::optional<int> rollout;
    std::uint64_t seed = 0;
};

void train_and_save(GridForecaster& model, const GridStateSequence& train, const LossConfig& cfg, const TrainArgs& a,
                    Context& ctx) {
    GridTrainOptions opts;
    opts.steps = a.steps;
    opts.batch = a.batch;
    opts.learning_rate = a.lr;
    opts.seed = a.seed;
    const auto rep = rollout_train(model, train, cfg, opts);
    model.save(out_file(ctx, "grid.vmdl"));
    write_file(out_file(ctx, "loss.ini"), cfg.to_text());
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < rep.losses.size(); ++i) csv += std::to_string(i + 1) + "," + format_double17(rep.losses[i]) + "\n";
    write_file(out_file(ctx, "train_loss.csv"), csv);
    ctx.resolved["loss_config"] = cfg.to_text();
    ctx.resolved["training_states"] = train.n_times();
    ctx.resolved["train_end"] = format_utc(train.time_of(train.n_times() - 1) + std::chrono::seconds(train.spec().dt_seconds));
    ctx.resolved["final_loss"] = rep.losses.empty() ? 0.0 : rep.losses.back();
    ctx.resolved["final_lr_fraction"] = opts.final_lr_fraction;
}

void run_train(const TrainArgs& a, Context& ctx) {
    const auto data = load_grid_tensor(resolve_input(a.data, "grid.gt1"));
    const auto train = training_part(data, a.train_end);
    auto cfg = loss_for(a.loss, train);
    if (a.rollout) cfg.rollout = *a.rollout;
    cfg.validate();
    auto model = GridForecaster::create(train, a.hidden, a.seed);
    train_and_save(model, train, cfg, a, ctx);
}

void run_finetune(const TrainArgs& a, Context& ctx) {
    auto model = GridForecaster::load(resolve_input(a.model, "grid.vmdl"));
    const auto data = load_grid_tensor(resolve_input(a.data, "grid.gt1"));
    if (!same_geometry(model.grid(), data.spec())) throw ValidationError("model grid does not match the data grid");
    const auto train = training_part(data, a.train_end);
    auto cfg = loss_for(a.loss, train);
    cfg.box = parse_box(a.box);
    cfg.omega = a.omega;
    if (a.rollout) cfg.rollout = *a.rollout;
    cfg.validate();
    if (box_cells(cfg.grid, *cfg.box).empty()) spdlog::warn("box {} contains no grid cell", a.box);
    train_and_save(model, train, cfg, a, ctx);
}

struct BiasArgs {
    std::string model, train, box, train_end;
    int leads = 40;
};

void run_bias(const BiasArgs& a, Context& ctx) {
    const auto model = GridForecaster::load(resolve_input(a.model, "grid.vmdl"));
    if (!model.forcing().empty()) throw ValidationError("bias-correct does not support models with forcing inputs");
    const auto data = load_grid_tensor(resolve_input(a.train, "grid.gt1"));
    if (!same_geometry(model.grid(), data.spec())) throw ValidationError("model grid does not match the data grid");
    const auto train = training_part(data, a.train_end);
    if (train.n_times() < static_cast<std::size_t>(a.leads) + 3)
        throw ValidationError("training record too short for " + std::to_string(a.leads) + " leads");
    std::vector<std::size_t> issues;
    for (std::size_t i = 1; i + static_cast<std::size_t>(a.leads) < train.n_times(); ++i) issues.push_back(i);

    std::vector<std::size_t> cells;
    if (a.box.empty()) {
        for (std::size_t c = 0; c < train.spec().n_cells(); ++c) cells.push_back(c);
    } else {
        cells = box_cells(train.spec(), parse_box(a.box));
        if (cells.empty()) throw ValidationError("box " + a.box + " contains no grid cell");
    }
    const auto archive = forecast_archive(model, train, issues, a.leads);
    const auto& vars = train.spec().variables;
    const auto bias = fit_bias_correction(archive, vars, cells, ctx.jobs);
    bias.save(out_file(ctx, "bias.vmdl"));

    double raw = 0.0, fixed = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < issues.size(); ++i)
        for (std::size_t k = 0; k < archive.lead_hours.size(); ++k) {
            const Field corr = apply_bias_correction(archive.raw[i][k], archive.lead_hours[k], vars, cells, bias);
            for (std::size_t v = 0; v < vars.size(); ++v)
                for (std::size_t c : cells) {
                    const auto r = static_cast<Eigen::Index>(v), col = static_cast<Eigen::Index>(c);
                    const double t = archive.target[i][k](r, col);
                    raw += std::pow(archive.raw[i][k](r, col) - t, 2);
                    fixed += std::pow(corr(r, col) - t, 2);
                    ++n;
                }
        }
    ctx.resolved["issues"] = issues.size();
    ctx.resolved["cells"] = cells.size();
    ctx.resolved["in_sample_mse_raw"] = raw / static_cast<double>(n);
    ctx.resolved["in_sample_mse_corrected"] = fixed / static_cast<double>(n);
}

}  // namespace

void add_grid_commands(CLI::App& app, Context& ctx, std::vector<Command>& cmds) {
    auto common = [](CLI::App* s, TrainArgs& a) {
        s->add_option("--data", a.data, "GT1 grid tensor or a directory holding grid.gt1")->required();
        s->add_option("--loss", a.loss, "Loss config file (default: estimated from the data)");
        s->add_option("--steps", a.steps, "Optimizer steps")->check(CLI::PositiveNumber);
        s->add_option("--batch", a.batch, "Rollouts per step")->check(CLI::PositiveNumber);
        s->add_option("--rollout", a.rollout, "Overrides the loss config rollout length")->check(CLI::PositiveNumber);
        s->add_option("--seed", a.seed, "Random seed");
        s->add_option("--train-end", a.train_end, "First held-out time (default: 70% of the record)");
    };
    {
        auto a = std::make_shared<TrainArgs>();
        auto* s = app.add_subcommand("train-grid", "Train the grid forecaster by rollout");
        common(s, *a);
        s->add_option("--lr", a->lr, "Peak learning rate")->check(CLI::PositiveNumber);
        s->add_option("--hidden", a->hidden, "Hidden units per cell")->check(CLI::PositiveNumber);
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_train(*a, c); }});
    }
    {
        auto a = std::make_shared<TrainArgs>();
        a->steps = 500;
        a->lr = 1e-4;
        auto* s = app.add_subcommand("finetune-grid", "Fine-tune a grid forecaster with a location-weighted loss");
        s->add_option("--model", a->model, "grid.vmdl or a directory holding it")->required();
        common(s, *a);
        s->add_option("--box", a->box, "latmin,latmax,lonmin,lonmax")->required();
        s->add_option("--omega", a->omega, "Weight inside the box")->check(CLI::PositiveNumber);
        s->add_option("--lr", a->lr, "Peak learning rate")->check(CLI::PositiveNumber);
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_finetune(*a, c); }});
    }
    {
        auto a = std::make_shared<BiasArgs>();
        auto* s = app.add_subcommand("bias-correct", "Fit per-lead linear bias correction on training rollouts");
        s->add_option("--model", a->model, "grid.vmdl or a directory holding it")->required();
        s->add_option("--train", a->train, "GT1 grid tensor or a directory holding grid.gt1")->required();
        s->add_option("--leads", a->leads, "Number of 6-hourly leads")->check(CLI::PositiveNumber);
        s->add_option("--box", a->box, "Restrict to cells in latmin,latmax,lonmin,lonmax (default: all)");
        s->add_option("--train-end", a->train_end, "First held-out time (default: 70% of the record)");
        add_out_option(s, ctx);
        cmds.push_back({s, [a](Context& c) { run_bias(*a, c); }});
    }
}

}  // namespace cli
