#include "ventus/econometrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#include "ventus/error.hpp"
#include "ventus/io_util.hpp"
#include "ventus/parallel.hpp"

namespace ventus {

const Term& FitResult::at(std::string_view name) const {
    for (const auto& t : terms)
        if (t.name == name) return t;
    throw ValidationError("fit has no term '" + std::string(name) + "'");
}

bool FitResult::has(std::string_view name) const {
    return std::any_of(terms.begin(), terms.end(), [&](const Term& t) { return t.name == name; });
}

namespace {

struct YearMonth {
    int year;
    int month;
};

YearMonth year_month(Instant t) {
    const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(t)};
    return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month()))};
}

}  // namespace

DesignMatrix build_design(const TimeSeriesPanel& panel, const RegressionSpec& spec) {
    const std::vector<double> y = spec.plant ? panel.values({*spec.plant, Technology::thermal})
                                             : panel.aggregate(Technology::thermal);
    const auto S = panel.aggregate(Technology::solar);
    const auto W = panel.aggregate(Technology::wind);
    const auto D = panel.aggregate(Technology::demand);

    std::vector<std::pair<std::string, std::vector<double>>> controls;
    if (spec.controls) {
        for (auto [tech, name] : {std::pair{Technology::hydro, term::hydro},
                                  std::pair{Technology::geothermal, term::geothermal},
                                  std::pair{Technology::import, term::import}})
            if (panel.has_technology(tech)) controls.emplace_back(std::string(name), panel.aggregate(tech));
    }

    std::vector<std::size_t> rows;
    for (std::size_t t = 1; t < panel.size(); ++t) {
        bool ok = !is_missing(y[t]) && !is_missing(S[t]) && !is_missing(W[t]) && !is_missing(D[t]) &&
                  !is_missing(S[t - 1]) && !is_missing(W[t - 1]);
        for (const auto& [_, c] : controls) ok = ok && !is_missing(c[t]);
        if (ok) rows.push_back(t);
    }

    // Fixed-effect categories in chronological order of first appearance.
    std::vector<int> months, years;
    for (std::size_t t : rows) {
        const auto ym = year_month(panel.timestamps()[t]);
        if (std::find(months.begin(), months.end(), ym.month) == months.end()) months.push_back(ym.month);
        if (std::find(years.begin(), years.end(), ym.year) == years.end()) years.push_back(ym.year);
    }
    if (spec.month_effects && months.size() < 2)
        spdlog::warn("fewer than two distinct months present; month fixed effects dropped");

    DesignMatrix d;
    d.columns = {std::string(term::intercept), std::string(term::solar), std::string(term::wind),
                 std::string(term::demand), std::string(term::wind_ramp), std::string(term::solar_ramp)};
    for (const auto& [name, _] : controls) d.columns.push_back(name);
    const std::size_t first_month_col = d.columns.size();
    std::vector<int> month_dummies, year_dummies;
    if (spec.month_effects)
        for (std::size_t k = 1; k < months.size(); ++k) {
            month_dummies.push_back(months[k]);
            char buf[16];
            std::snprintf(buf, sizeof buf, "month_%02d", months[k]);
            d.columns.emplace_back(buf);
        }
    const std::size_t first_year_col = d.columns.size();
    if (spec.year_effects)
        for (std::size_t k = 1; k < years.size(); ++k) {
            year_dummies.push_back(years[k]);
            d.columns.push_back("year_" + std::to_string(years[k]));
        }

    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto p = static_cast<Eigen::Index>(d.columns.size());
    d.x = Eigen::MatrixXd::Zero(n, p);
    d.y.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t t = rows[static_cast<std::size_t>(r)];
        d.y(r) = y[t];
        d.x(r, 0) = 1.0;
        d.x(r, 1) = S[t];
        d.x(r, 2) = W[t];
        d.x(r, 3) = D[t];
        d.x(r, 4) = W[t] - W[t - 1];
        d.x(r, 5) = S[t] - S[t - 1];
        for (std::size_t c = 0; c < controls.size(); ++c)
            d.x(r, static_cast<Eigen::Index>(6 + c)) = controls[c].second[t];
        const auto ym = year_month(panel.timestamps()[t]);
        for (std::size_t k = 0; k < month_dummies.size(); ++k)
            if (month_dummies[k] == ym.month) d.x(r, static_cast<Eigen::Index>(first_month_col + k)) = 1.0;
        for (std::size_t k = 0; k < year_dummies.size(); ++k)
            if (year_dummies[k] == ym.year) d.x(r, static_cast<Eigen::Index>(first_year_col + k)) = 1.0;
    }
    d.rows = std::move(rows);
    return d;
}

FitResult fit_ols(const DesignMatrix& d) {
    const Eigen::Index n = d.x.rows(), p = d.x.cols();
    if (n <= p)
        throw ValidationError("regression has " + std::to_string(n) + " usable rows for " + std::to_string(p) +
                              " columns");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
    // Relative threshold on |R_kk| scaled by the largest column norm.
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::string cols;
        for (Eigen::Index k = qr.rank(); k < p; ++k) {
            if (!cols.empty()) cols += ", ";
            cols += d.columns[static_cast<std::size_t>(qr.colsPermutation().indices()(k))];
        }
        throw RankDeficientError("design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                                 std::to_string(p) + "); collinear columns: " + cols);
    }

    const Eigen::VectorXd beta = qr.solve(d.y);
    FitResult fit;
    fit.residuals = d.y - d.x * beta;
    const double rss = fit.residuals.squaredNorm();
    fit.n_obs = static_cast<std::size_t>(n);
    fit.rows = d.rows;
    fit.residual_variance = rss / static_cast<double>(n - p);
    const double tss = (d.y.array() - d.y.mean()).square().sum();
    fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : 0.0);

    // (X'X)^-1 = P R^-1 R^-T P'.
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::VectorXd diag_perm = r_inv.rowwise().squaredNorm();

    fit.terms.resize(static_cast<std::size_t>(p));
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::Index col = qr.colsPermutation().indices()(k);
        auto& t = fit.terms[static_cast<std::size_t>(col)];
        t.name = d.columns[static_cast<std::size_t>(col)];
        t.coefficient = beta(col);
        t.std_error = std::sqrt(fit.residual_variance * diag_perm(k));
        if (t.std_error > 0.0) t.t_stat = t.coefficient / t.std_error;
        else t.t_stat = t.coefficient == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                             : std::copysign(std::numeric_limits<double>::infinity(), t.coefficient);
    }
    return fit;
}

FitResult fit_fixed_effects(const TimeSeriesPanel& panel, const RegressionSpec& spec) {
    return fit_ols(build_design(panel, spec));
}

std::string_view to_string(PlantLabel label) {
    switch (label) {
        case PlantLabel::wind_following: return "wind_following";
        case PlantLabel::solar_following: return "solar_following";
        case PlantLabel::unclassified: return "unclassified";
    }
    return "unclassified";
}

PlantClassification classify_coefficients(std::string plant_id, double b_solar, double t_solar, double b_wind,
                                          double t_wind, double significance) {
    PlantClassification c;
    c.plant_id = std::move(plant_id);
    const bool solar_sig = std::abs(t_solar) > significance;
    const bool wind_sig = std::abs(t_wind) > significance;
    auto pick_wind = [&] {
        c.label = PlantLabel::wind_following;
        c.deciding_coefficient = b_wind;
        c.t_stat = t_wind;
    };
    auto pick_solar = [&] {
        c.label = PlantLabel::solar_following;
        c.deciding_coefficient = b_solar;
        c.t_stat = t_solar;
    };
    if (wind_sig && solar_sig) {
        if (std::abs(b_wind) == std::abs(b_solar)) {
            c.tie = true;
            pick_wind();
        } else if (std::abs(b_wind) > std::abs(b_solar)) {
            pick_wind();
        } else {
            pick_solar();
        }
    } else if (wind_sig) {
        pick_wind();
    } else if (solar_sig) {
        pick_solar();
    }
    return c;
}

std::vector<PlantClassification> classify_plants(const TimeSeriesPanel& panel, std::vector<std::string> plants,
                                                 const RegressionSpec& base, std::size_t jobs) {
    std::sort(plants.begin(), plants.end());
    plants.erase(std::unique(plants.begin(), plants.end()), plants.end());
    std::vector<PlantClassification> out(plants.size());
    parallel_for(plants.size(), jobs, [&](std::size_t i) {
        RegressionSpec spec = base;
        spec.plant = plants[i];
        FitResult fit;
        try {
            fit = fit_fixed_effects(panel, spec);
        } catch (const RankDeficientError& e) {
            throw RankDeficientError("plant " + plants[i] + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("plant " + plants[i] + ": " + e.what());
        }
        const auto& s = fit.at(term::solar);
        const auto& w = fit.at(term::wind);
        out[i] = classify_coefficients(plants[i], s.coefficient, s.t_stat, w.coefficient, w.t_stat, base.significance);
        if (out[i].tie) spdlog::warn("plant {}: |solar| == |wind| coefficient; labelled wind_following", plants[i]);
        out[i].fit = std::move(fit);
    });
    return out;
}

std::array<HourStat, 24> hourly_profile(const TimeSeriesPanel& panel, Technology tech, int year, bool normalize) {
    const auto total = panel.aggregate(tech);
    double scale = 1.0;
    if (normalize) {
        double cap = 0.0;
        bool any = false;
        for (const auto& [key, c] : panel.capacity_gw())
            if (key.technology == tech) {
                cap += c;
                any = true;
            }
        if (!any) throw ValidationError("no capacity metadata for " + std::string(to_string(tech)));
        if (!(cap > 0.0)) throw ValidationError("zero installed capacity for " + std::string(to_string(tech)));
        scale = 1.0 / cap;
    }
    // Welford accumulation per hour.
    std::array<HourStat, 24> out{};
    std::array<double, 24> m2{};
    bool any_in_year = false;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const Instant t = panel.timestamps()[i];
        if (year_month(t).year != year) continue;
        any_in_year = true;
        if (is_missing(total[i])) continue;
        const auto h = static_cast<std::size_t>(
            std::chrono::duration_cast<std::chrono::hours>(t - std::chrono::floor<std::chrono::days>(t)).count());
        const double v = total[i] * scale;
        auto& s = out[h];
        ++s.count;
        const double delta = v - s.mean;
        s.mean += delta / static_cast<double>(s.count);
        m2[h] += delta * (v - s.mean);
    }
    if (!any_in_year) throw ValidationError("panel has no data in year " + std::to_string(year));
    for (std::size_t h = 0; h < 24; ++h) out[h].std = out[h].count ? std::sqrt(m2[h] / static_cast<double>(out[h].count)) : 0.0;
    return out;
}

std::string format_marginal_report(const FitResult& aggregate, const std::vector<PlantClassification>& plants) {
    std::string out = "target,coefficient,std_error,t_stat,label\n";
    auto row = [&out](const std::string& target, const Term& t, std::string_view label) {
        out += target + ":" + t.name + "," + format_double17(t.coefficient) + "," + format_double17(t.std_error) +
               "," + format_double17(t.t_stat) + "," + std::string(label) + "\n";
    };
    for (const auto& t : aggregate.terms) row("aggregate", t, "");
    for (const auto& p : plants) {
        row(p.plant_id, p.fit.at(term::solar), to_string(p.label));
        row(p.plant_id, p.fit.at(term::wind), to_string(p.label));
    }
    return out;
}

}  // namespace ventus
