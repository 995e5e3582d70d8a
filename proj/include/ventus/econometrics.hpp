#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ventus/core_data.hpp"

namespace ventus {

// Term names used in FitResult. Month and year dummies are named
// "month_MM" and "year_YYYY".
namespace term {
inline constexpr std::string_view intercept = "intercept";
inline constexpr std::string_view solar = "solar";
inline constexpr std::string_view wind = "wind";
inline constexpr std::string_view demand = "demand";
inline constexpr std::string_view wind_ramp = "wind_ramp";
inline constexpr std::string_view solar_ramp = "solar_ramp";
inline constexpr std::string_view hydro = "hydro";
inline constexpr std::string_view geothermal = "geothermal";
inline constexpr std::string_view import = "import";
}  // namespace term

// G_t = a + b1 S_t + b2 W_t + b3 D_t + b4 dW_t + b5 dS_t + month_m + g X_t + year_a + e
struct RegressionSpec {
    // Empty: aggregate thermal generation. Otherwise one plant's series.
    std::optional<std::string> plant;
    bool controls = true;        // hydro, geothermal, import (those present in the panel)
    bool month_effects = true;
    bool year_effects = true;
    double significance = 1.96;  // |t| threshold used by classify_plants
};

struct Term {
    std::string name;
    double coefficient = 0.0;
    double std_error = 0.0;
    double t_stat = 0.0;
};

struct FitResult {
    std::vector<Term> terms;
    double residual_variance = 0.0;
    std::size_t n_obs = 0;
    double r_squared = 0.0;
    std::vector<std::size_t> rows;   // panel indices used after listwise deletion
    Eigen::VectorXd residuals;

    const Term& at(std::string_view name) const;
    bool has(std::string_view name) const;
};

struct DesignMatrix {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::string> columns;
    std::vector<std::size_t> rows;
};

// Builds the design for the spec: drops the first timestamp (ramps need
// t-1), deletes rows with any missing value, and drops the reference
// (chronologically first) month and year dummy.
DesignMatrix build_design(const TimeSeriesPanel& panel, const RegressionSpec& spec);

// OLS by column-pivoted Householder QR with classical homoskedastic errors.
FitResult fit_ols(const DesignMatrix& design);

FitResult fit_fixed_effects(const TimeSeriesPanel& panel, const RegressionSpec& spec);

enum class PlantLabel { wind_following, solar_following, unclassified };
std::string_view to_string(PlantLabel label);

struct PlantClassification {
    std::string plant_id;
    PlantLabel label = PlantLabel::unclassified;
    double deciding_coefficient = 0.0;
    double t_stat = 0.0;
    bool tie = false;  // |b1| == |b2|, both significant; resolved to wind_following
    FitResult fit;
};

// Fits the model per plant with that plant as dependent. Output is sorted
// by plant_id regardless of `jobs`.
std::vector<PlantClassification> classify_plants(const TimeSeriesPanel& panel, std::vector<std::string> plants,
                                                 const RegressionSpec& base = {}, std::size_t jobs = 1);

// The decision rule on its own, for a fitted (b1, t1, b2, t2).
PlantClassification classify_coefficients(std::string plant_id, double b_solar, double t_solar, double b_wind,
                                          double t_wind, double significance = 1.96);

struct HourStat {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    std::size_t count = 0;
};

// Per hour-of-day mean and std of the technology total over one calendar
// year; with normalize, values are divided by the technology's total
// installed capacity (GW), giving capacity factors.
std::array<HourStat, 24> hourly_profile(const TimeSeriesPanel& panel, Technology tech, int year,
                                        bool normalize = false);

// CSV with columns target,coefficient,std_error,t_stat,label where target
// is "<dependent>:<term>".
std::string format_marginal_report(const FitResult& aggregate, const std::vector<PlantClassification>& plants);

}  // namespace ventus
