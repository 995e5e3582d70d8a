#include "ventus/core_data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "ventus/error.hpp"

namespace ventus {

namespace {

int parse_int(std::string_view s, std::string_view full) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError("bad timestamp '" + std::string(full) + "'");
    return v;
}

bool same_bits(double a, double b) {
    if (is_missing(a) || is_missing(b)) return is_missing(a) && is_missing(b);
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

}  // namespace

Instant parse_utc(std::string_view text) {
    // YYYY-MM-DDTHH:MM[:SS]Z
    const bool with_seconds = text.size() == 20;
    if (!(with_seconds || text.size() == 17) || text[4] != '-' || text[7] != '-' ||
        text[10] != 'T' || text[13] != ':' || text.back() != 'Z' ||
        (with_seconds && text[16] != ':'))
        throw ValidationError("bad timestamp '" + std::string(text) + "'");
    using namespace std::chrono;
    const int y = parse_int(text.substr(0, 4), text);
    const int mo = parse_int(text.substr(5, 2), text);
    const int d = parse_int(text.substr(8, 2), text);
    const int h = parse_int(text.substr(11, 2), text);
    const int mi = parse_int(text.substr(14, 2), text);
    const int s = with_seconds ? parse_int(text.substr(17, 2), text) : 0;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59)
        throw ValidationError("bad timestamp '" + std::string(text) + "'");
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_utc(Instant t) {
    using namespace std::chrono;
    const auto day_start = floor<days>(t);
    const year_month_day ymd{day_start};
    const hh_mm_ss hms{t - day_start};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::string_view to_string(Technology tech) {
    switch (tech) {
        case Technology::thermal: return "thermal";
        case Technology::solar: return "solar";
        case Technology::wind: return "wind";
        case Technology::hydro: return "hydro";
        case Technology::geothermal: return "geothermal";
        case Technology::import: return "import";
        case Technology::demand: return "demand";
    }
    return "unknown";
}

Technology parse_technology(std::string_view text) {
    for (auto t : {Technology::thermal, Technology::solar, Technology::wind, Technology::hydro,
                   Technology::geothermal, Technology::import, Technology::demand})
        if (to_string(t) == text) return t;
    throw ValidationError("unknown technology '" + std::string(text) + "'");
}

bool is_generation(Technology tech) {
    return tech != Technology::import && tech != Technology::demand;
}

// ---------------------------------------------------------------------------

TimeSeriesPanel::TimeSeriesPanel(std::vector<Instant> timestamps,
                                 std::map<SeriesKey, std::vector<double>> series,
                                 std::map<SeriesKey, double> capacity_gw)
    : timestamps_(std::move(timestamps)), series_(std::move(series)), capacity_(std::move(capacity_gw)) {
    for (std::size_t i = 1; i < timestamps_.size(); ++i)
        if (timestamps_[i] - timestamps_[i - 1] != std::chrono::hours(1))
            throw StepError("timestamps must advance by exactly one hour (at " +
                            format_utc(timestamps_[i]) + ")");
    for (const auto& [key, values] : series_) {
        if (values.size() != timestamps_.size())
            throw ValidationError("series " + key.plant_id + " has " + std::to_string(values.size()) +
                                  " values for " + std::to_string(timestamps_.size()) + " timestamps");
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double v = values[i];
            if (is_missing(v)) continue;
            if (!std::isfinite(v))
                throw ValidationError("non-finite value in series " + key.plant_id + " at " +
                                      format_utc(timestamps_[i]));
            if (is_generation(key.technology) && v < 0.0)
                throw ValidationError("negative generation in series " + key.plant_id + " at " +
                                      format_utc(timestamps_[i]));
        }
    }
    for (const auto& [key, cap] : capacity_)
        if (!std::isfinite(cap) || cap < 0.0)
            throw ValidationError("invalid capacity for " + key.plant_id);
}

const std::vector<double>& TimeSeriesPanel::values(const SeriesKey& key) const {
    auto it = series_.find(key);
    if (it == series_.end())
        throw ValidationError("no series for plant '" + key.plant_id + "' (" +
                              std::string(to_string(key.technology)) + ")");
    return it->second;
}

bool TimeSeriesPanel::has_technology(Technology tech) const {
    return std::any_of(series_.begin(), series_.end(),
                       [tech](const auto& kv) { return kv.first.technology == tech; });
}

std::vector<std::string> TimeSeriesPanel::plants(Technology tech) const {
    std::vector<std::string> out;
    for (const auto& [key, _] : series_)
        if (key.technology == tech) out.push_back(key.plant_id);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> TimeSeriesPanel::aggregate(Technology tech) const {
    if (!has_technology(tech))
        throw ValidationError("panel has no " + std::string(to_string(tech)) + " series");
    std::vector<double> total(timestamps_.size(), 0.0);
    for (const auto& [key, values] : series_) {
        if (key.technology != tech) continue;
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += values[i];  // NaN propagates
    }
    return total;
}

bool TimeSeriesPanel::identical(const TimeSeriesPanel& other) const {
    if (timestamps_ != other.timestamps_ || series_.size() != other.series_.size()) return false;
    for (const auto& [key, values] : series_) {
        auto it = other.series_.find(key);
        if (it == other.series_.end()) return false;
        if (!std::equal(values.begin(), values.end(), it->second.begin(), it->second.end(), same_bits))
            return false;
    }
    if (capacity_.size() != other.capacity_.size()) return false;
    for (const auto& [key, cap] : capacity_) {
        auto it = other.capacity_.find(key);
        if (it == other.capacity_.end() || !same_bits(cap, it->second)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

void GridSpec::validate() const {
    if (!(dlat > 0.0) || !(dlon > 0.0)) throw ValidationError("grid spacing must be positive");
    if (n_lat < 2 || n_lon < 2) throw ValidationError("grid needs at least 2x2 cells");
    if (!std::isfinite(lat0) || !std::isfinite(lon0)) throw ValidationError("grid origin must be finite");
    if (variables.empty()) throw ValidationError("grid needs at least one variable");
    std::set<std::string> seen;
    for (const auto& v : variables) {
        if (v.empty() || v.find_first_of(",= \t\r\n") != std::string::npos)
            throw ValidationError("invalid variable name '" + v + "'");
        if (!seen.insert(v).second) throw ValidationError("duplicate variable '" + v + "'");
    }
    if (dt_seconds <= 0 || 86400 % dt_seconds != 0)
        throw ValidationError("dt must be positive and divide 86400");
}

std::size_t GridSpec::variable_index(std::string_view name) const {
    for (std::size_t i = 0; i < variables.size(); ++i)
        if (variables[i] == name) return i;
    throw ValidationError("grid has no variable '" + std::string(name) + "'");
}

GridStateSequence::GridStateSequence(GridSpec spec, std::size_t n_times, std::vector<float> data)
    : spec_(std::move(spec)), n_times_(n_times), data_(std::move(data)) {
    spec_.validate();
    if (n_times_ < 2) throw ValidationError("grid sequence needs at least 2 time steps");
    if (data_.size() != n_times_ * state_size())
        throw ShapeError("grid data has " + std::to_string(data_.size()) + " values, expected " +
                         std::to_string(n_times_ * state_size()));
    for (float v : data_)
        if (!std::isfinite(v)) throw NonFiniteError("grid data contains non-finite values");
}

GridStateSequence GridStateSequence::slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > n_times_) throw ValidationError("invalid time slice");
    GridSpec spec = spec_;
    spec.t0 = time_of(begin);
    std::vector<float> data(data_.begin() + static_cast<std::ptrdiff_t>(begin * state_size()),
                            data_.begin() + static_cast<std::ptrdiff_t>(end * state_size()));
    return GridStateSequence(std::move(spec), end - begin, std::move(data));
}

bool GridStateSequence::identical(const GridStateSequence& other) const {
    if (!(spec_ == other.spec_) || n_times_ != other.n_times_) return false;
    return std::equal(data_.begin(), data_.end(), other.data_.begin(), other.data_.end(),
                      [](float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); });
}

// ---------------------------------------------------------------------------

LocationSet::LocationSet(std::vector<Location> entries) : entries_(std::move(entries)) {
    std::set<std::string> seen;
    for (const auto& e : entries_) {
        if (e.name.empty()) throw ValidationError("location name must not be empty");
        if (!std::isfinite(e.lat) || !std::isfinite(e.lon))
            throw ValidationError("location '" + e.name + "' has non-finite coordinates");
        if (!seen.insert(e.name).second) throw ValidationError("duplicate location '" + e.name + "'");
    }
}

namespace {

// Rounds a fractional cell coordinate to the nearest index; x.5 goes down.
int nearest_index(double pos, int n, bool& inside) {
    constexpr double eps = 1e-9;
    inside = pos >= -0.5 - eps && pos <= (n - 1) + 0.5 + eps;
    const int k = static_cast<int>(std::ceil(pos - 0.5));
    return std::clamp(k, 0, n - 1);
}

}  // namespace

CellIndex snap_point(double lat, double lon, const GridSpec& spec, std::string_view name) {
    bool lat_ok = false, lon_ok = false;
    const int i = nearest_index((lat - spec.lat0) / spec.dlat, spec.n_lat, lat_ok);
    const int j = nearest_index((lon - spec.lon0) / spec.dlon, spec.n_lon, lon_ok);
    if (!lat_ok || !lon_ok)
        throw OutOfDomainError("location '" + std::string(name) + "' (" + std::to_string(lat) + ", " +
                               std::to_string(lon) + ") is outside the grid");
    return {i, j};
}

std::map<std::string, CellIndex> snap_to_grid(const LocationSet& locations, const GridSpec& spec) {
    spec.validate();
    std::map<std::string, CellIndex> out;
    for (const auto& loc : locations.entries()) out[loc.name] = snap_point(loc.lat, loc.lon, spec, loc.name);
    return out;
}

// ---------------------------------------------------------------------------

CalendarCovariates calendar_features(std::span<const Instant> timestamps) {
    using namespace std::chrono;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    CalendarCovariates out;
    out.reserve(timestamps.size());
    for (Instant t : timestamps) {
        const auto day_start = floor<days>(t);
        const year_month_day ymd{day_start};
        const weekday wd{day_start};
        CalendarRow row;
        row.hour = static_cast<int>(duration_cast<hours>(t - day_start).count());
        row.day_of_week = static_cast<int>(wd.iso_encoding()) - 1;
        row.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
        const double ha = two_pi * row.hour / 24.0;
        const double da = two_pi * row.day_of_week / 7.0;
        const double ma = two_pi * (row.month - 1) / 12.0;
        row.hour_sin = std::sin(ha);
        row.hour_cos = std::cos(ha);
        row.dow_sin = std::sin(da);
        row.dow_cos = std::cos(da);
        row.month_sin = std::sin(ma);
        row.month_cos = std::cos(ma);
        out.push_back(row);
    }
    return out;
}

}  // namespace ventus
