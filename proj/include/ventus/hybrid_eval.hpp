#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ventus/core_data.hpp"

namespace ventus {


// sqrt(mean squared error). Throws on empty input or length mismatch.
double rmse(const std::vector<double>& pred, const std::vector<double>& truth);
// Pooled over every series and horizon step: sqrt(sum / (N H)).
double rmse(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& truth);

// One forecast run of one model: value per lead time (hours).
struct LeadSeries {
    std::string location;
    Instant issue{};
    std::map<int, double> values;
};

struct BundleRow {
    std::string location;
    Instant issue{};
    int lead_hours = 0;
    double short_term = kMissing;
    double medium_term = kMissing;
    double baseline = kMissing;
    double truth = kMissing;
};

struct ForecastBundle {
    int handoff = 48;
    std::vector<BundleRow> rows;  // sorted by location, issue, lead

    // The hybrid point forecast: short-term up to the handoff, medium-term after.
    double point(const BundleRow& r) const { return r.lead_hours <= handoff ? r.short_term : r.medium_term; }
    // No gaps in either regime's lead grid; truth wherever a prediction exists.
    void validate() const;
    void write_csv(const std::filesystem::path& path) const;
    static ForecastBundle load_csv(const std::filesystem::path& path, int handoff = 48);
};

// Hourly leads 1..handoff from the short model, 6-hourly leads handoff+6..max_lead
// from the medium model; the handoff row keeps both. A missing lead is an error
// naming it.
ForecastBundle stitch_hybrid(const std::vector<LeadSeries>& short_term, const std::vector<LeadSeries>& medium_term,
                             int handoff = 48, int max_lead = 240);

// Fills baseline and truth on matching (location, issue, lead) rows.
void attach_baseline(ForecastBundle& bundle, const std::vector<LeadSeries>& baseline);
void attach_truth(ForecastBundle& bundle, const std::vector<LeadSeries>& truth);

struct LeadSkill {
    int lead_hours = 0;
    double rmse_model = 0.0;
    double rmse_baseline = 0.0;
    double normalized_rmse = 0.0;
    double improvement = 0.0;
};

struct WindowSkill {
    int start = 14, end = 38;  // closed range of lead hours
    std::size_t n_leads = 0;
    double min_improvement = 0.0, max_improvement = 0.0, mean_improvement = 0.0;
    double mean_normalized_rmse = 0.0;
};

struct SkillReport {
    std::vector<LeadSkill> leads;
    std::optional<int> crossover_lead;  // first lead after which the model stays strictly better
    std::vector<WindowSkill> windows;
};

struct Window {
    int start = 14, end = 38;
};

// Per-lead RMSE is computed per location over issue times, then averaged
// over locations in name order.
SkillReport skill_report(const ForecastBundle& bundle, const std::vector<Window>& windows = {Window{}});
// Builds a report from per-lead RMSE values directly.
SkillReport skill_from_rmse(const std::vector<int>& leads, const std::vector<double>& rmse_model,
                            const std::vector<double>& rmse_baseline, const std::vector<Window>& windows = {Window{}});
Window parse_window(const std::string& text);  // "14:38"

// skill.csv, skill.svg and summary.json in dir.
void emit_report(const SkillReport& report, const std::filesystem::path& dir);
std::vector<LeadSkill> load_skill_csv(const std::filesystem::path& path);
std::string skill_svg(const SkillReport& report);

}  // namespace ventus
