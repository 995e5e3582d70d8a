#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ventus {

using Instant = std::chrono::sys_seconds;

// Accepts "YYYY-MM-DDTHH:MM:SSZ" and "YYYY-MM-DDTHH:MMZ". Throws ValidationError.
Instant parse_utc(std::string_view text);
std::string format_utc(Instant t);

enum class Technology { thermal, solar, wind, hydro, geothermal, import, demand };

std::string_view to_string(Technology tech);
Technology parse_technology(std::string_view text);

// Generation technologies must be non-negative; import and demand carry
// their own sign convention (imports are net injections, positive = inflow).
bool is_generation(Technology tech);

struct SeriesKey {
    std::string plant_id;
    Technology technology = Technology::thermal;

    auto operator<=>(const SeriesKey&) const = default;
};

// Explicit missing-value marker inside panel series.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return v != v; }

// Hourly generation/demand records in GWh, one value (or kMissing) per
// timestamp per series.
class TimeSeriesPanel {
public:
    TimeSeriesPanel() = default;
    TimeSeriesPanel(std::vector<Instant> timestamps,
                    std::map<SeriesKey, std::vector<double>> series,
                    std::map<SeriesKey, double> capacity_gw = {});

    const std::vector<Instant>& timestamps() const { return timestamps_; }
    const std::map<SeriesKey, std::vector<double>>& series() const { return series_; }
    const std::map<SeriesKey, double>& capacity_gw() const { return capacity_; }
    std::size_t size() const { return timestamps_.size(); }

    const std::vector<double>& values(const SeriesKey& key) const;
    bool has_technology(Technology tech) const;
    std::vector<std::string> plants(Technology tech) const;

    // Sum over every series of the technology; missing wherever any member is missing.
    std::vector<double> aggregate(Technology tech) const;

    // Bit-exact comparison; missing markers compare equal to each other.
    bool identical(const TimeSeriesPanel& other) const;

private:
    std::vector<Instant> timestamps_;
    std::map<SeriesKey, std::vector<double>> series_;
    std::map<SeriesKey, double> capacity_;
};

struct GridSpec {
    double lat0 = 0.0;
    double dlat = 0.25;
    int n_lat = 2;
    double lon0 = 0.0;
    double dlon = 0.25;
    int n_lon = 2;
    std::vector<std::string> variables;
    Instant t0{};
    long dt_seconds = 21600;

    void validate() const;
    std::size_t n_cells() const { return static_cast<std::size_t>(n_lat) * n_lon; }
    std::size_t n_vars() const { return variables.size(); }
    double lat_of(int i) const { return lat0 + i * dlat; }
    double lon_of(int j) const { return lon0 + j * dlon; }
    // Index of a variable name; throws ValidationError if absent.
    std::size_t variable_index(std::string_view name) const;

    bool operator==(const GridSpec&) const = default;
};

// Dense [time][variable][lat][lon] float32 states.
class GridStateSequence {
public:
    GridStateSequence() = default;
    GridStateSequence(GridSpec spec, std::size_t n_times, std::vector<float> data);

    const GridSpec& spec() const { return spec_; }
    std::size_t n_times() const { return n_times_; }
    const std::vector<float>& data() const { return data_; }

    std::size_t state_size() const { return spec_.n_vars() * spec_.n_cells(); }
    std::size_t offset(std::size_t t, std::size_t v, int i, int j) const {
        return ((t * spec_.n_vars() + v) * spec_.n_lat + i) * spec_.n_lon + j;
    }
    float at(std::size_t t, std::size_t v, int i, int j) const { return data_[offset(t, v, i, j)]; }
    std::span<const float> state(std::size_t t) const {
        return {data_.data() + t * state_size(), state_size()};
    }
    Instant time_of(std::size_t t) const {
        return spec_.t0 + std::chrono::seconds(spec_.dt_seconds * static_cast<long>(t));
    }

    // Contiguous sub-range of time steps [begin, end).
    GridStateSequence slice(std::size_t begin, std::size_t end) const;

    bool identical(const GridStateSequence& other) const;

private:
    GridSpec spec_;
    std::size_t n_times_ = 0;
    std::vector<float> data_;
};

struct Location {
    std::string name;
    double lat = 0.0;
    double lon = 0.0;
};

class LocationSet {
public:
    LocationSet() = default;
    explicit LocationSet(std::vector<Location> entries);
    const std::vector<Location>& entries() const { return entries_; }

private:
    std::vector<Location> entries_;
};

struct CellIndex {
    int lat_index = 0;
    int lon_index = 0;
    auto operator<=>(const CellIndex&) const = default;
};

// Nearest cell center in planar lat/lon; ties go to the lower index.
CellIndex snap_point(double lat, double lon, const GridSpec& spec, std::string_view name = "point");
std::map<std::string, CellIndex> snap_to_grid(const LocationSet& locations, const GridSpec& spec);

struct CalendarRow {
    int hour = 0;          // 0..23
    int day_of_week = 0;   // 0 = Monday .. 6 = Sunday
    int month = 1;         // 1..12
    double hour_sin = 0.0, hour_cos = 1.0;
    double dow_sin = 0.0, dow_cos = 1.0;
    double month_sin = 0.0, month_cos = 1.0;
};

using CalendarCovariates = std::vector<CalendarRow>;

CalendarCovariates calendar_features(std::span<const Instant> timestamps);

}  // namespace ventus
