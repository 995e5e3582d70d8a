#include "cli_common.hpp"

#include <chrono>

#include "ventus/error.hpp"
#include "ventus/io_util.hpp"

namespace cli {

using namespace ventus;

void add_out_option(CLI::App* sub, Context& ctx) {
    sub->add_option("--out", ctx.out, "Output directory")->required();
}

void prepare_out(const Context& ctx) {
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec || !fs::is_directory(ctx.out))
        throw ValidationError("cannot create output directory " + ctx.out.string() +
                              (ec ? ": " + ec.message() : std::string()));
}

fs::path out_file(const Context& ctx, const std::string& name) { return ctx.out / name; }

fs::path resolve_input(const fs::path& p, const std::string& name) {
    if (fs::is_directory(p)) {
        const auto f = p / name;
        if (!fs::exists(f)) throw ValidationError("directory " + p.string() + " has no " + name);
        return f;
    }
    if (!fs::exists(p)) throw ValidationError("no such file: " + p.string());
    return p;
}

Instant default_holdout_start(Instant t0, long span_hours) {
    const long h = static_cast<long>(0.7 * static_cast<double>(span_hours)) / 6 * 6;
    return t0 + std::chrono::hours(h);
}

Instant holdout_start(const std::string& text, Instant t0, long span_hours) {
    return text.empty() ? default_holdout_start(t0, span_hours) : parse_utc(text);
}

const std::vector<std::string>& calendar_names() {
    static const std::vector<std::string> names{"hour_sin", "hour_cos", "dow_sin", "dow_cos"};
    return names;
}

Eigen::MatrixXd calendar_matrix(Instant first, std::size_t n_hours) {
    std::vector<Instant> ts(n_hours);
    for (std::size_t i = 0; i < n_hours; ++i) ts[i] = first + std::chrono::hours(static_cast<long>(i));
    const auto cal = calendar_features(ts);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n_hours), 4);
    for (std::size_t i = 0; i < n_hours; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        m(r, 0) = cal[i].hour_sin;
        m(r, 1) = cal[i].hour_cos;
        m(r, 2) = cal[i].dow_sin;
        m(r, 3) = cal[i].dow_cos;
    }
    return m;
}

ForecastTask short_task(const StationTable& table, const std::vector<double>& y, std::size_t issue,
                        const TideConfig& cfg, int lead) {
    const auto L = static_cast<std::size_t>(cfg.lookback);
    if (issue + 1 < L)
        throw ValidationError("issue " + format_utc(table.timestamps[issue]) + " has fewer than " + std::to_string(L) +
                              " hours of history");
    const std::size_t first = issue + 1 - L;
    ForecastTask task;
    task.history.assign(y.begin() + static_cast<long>(first), y.begin() + static_cast<long>(issue) + 1);
    task.covariates = calendar_matrix(table.timestamps[first], L + static_cast<std::size_t>(lead + 2 * cfg.horizon));
    return task;
}

std::size_t station_index(const StationTable& table, Instant t) {
    if (table.timestamps.empty() || t < table.timestamps.front() || t > table.timestamps.back())
        throw ValidationError(format_utc(t) + " lies outside the station record");
    const auto h = std::chrono::duration_cast<std::chrono::hours>(t - table.timestamps.front()).count();
    const auto i = static_cast<std::size_t>(h);
    if (table.timestamps[i] != t) throw ValidationError(format_utc(t) + " is not on the hourly station lattice");
    return i;
}

void write_run_json(const CLI::App& sub, const Context& ctx) {
    json j;
    j["command"] = sub.get_name();
    json opts = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
        const std::string name = opt->get_lnames().front();
        if (opt->count() > 0) {
            const auto& res = opt->results();
            if (opt->get_type_size() == 0)
                opts[name] = true;
            else if (res.size() == 1)
                opts[name] = res.front();
            else
                opts[name] = res;
        } else if (opt->get_type_size() == 0) {
            opts[name] = false;
        } else {
            opts[name] = opt->get_default_str();
        }
    }
    j["options"] = opts;
    j["jobs"] = ctx.jobs;
    j["resolved"] = ctx.resolved;
    write_file(ctx.out / "run.json", j.dump(2) + "\n");
}

}  // namespace cli
