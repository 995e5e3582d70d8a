#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ventus/core_data.hpp"

namespace ventus {

// --- generation CSV --------------------------------------------------------
// Header `timestamp,plant_id,technology,energy_gwh`. Each plant_id belongs to
// one technology. Hours inside the covered span with no row become kMissing.
TimeSeriesPanel load_generation_csv(const std::filesystem::path& path);
TimeSeriesPanel parse_generation_csv(std::string_view text);
std::string format_generation_csv(const TimeSeriesPanel& panel);
void write_generation_csv(const TimeSeriesPanel& panel, const std::filesystem::path& path);

// Optional capacity metadata: `plant_id,technology,capacity_gw`.
std::map<SeriesKey, double> load_capacity_csv(const std::filesystem::path& path);
void write_capacity_csv(const std::map<SeriesKey, double>& capacity, const std::filesystem::path& path);

// A panel directory holds generation.csv and, optionally, capacity.csv.
TimeSeriesPanel load_panel_dir(const std::filesystem::path& dir);
void write_panel_dir(const TimeSeriesPanel& panel, const std::filesystem::path& dir);

// --- GT1 grid tensors ------------------------------------------------------
// Layout: "GRIDTS1\n", then key=value lines (lat0, dlat, n_lat, lon0, dlon,
// n_lon, variables, t0, dt, n_times), then "DATA\n", then little-endian
// float32 values in [time][variable][lat][lon] order.
GridStateSequence load_grid_tensor(const std::filesystem::path& path);
GridStateSequence decode_grid_tensor(std::string_view bytes);
std::string encode_grid_tensor(const GridStateSequence& seq);
void write_grid_tensor(const GridStateSequence& seq, const std::filesystem::path& path);

// --- locations and station series -----------------------------------------
LocationSet load_locations_csv(const std::filesystem::path& path);
void write_locations_csv(const LocationSet& locations, const std::filesystem::path& path);

// Hourly per-location observations for the short-term model.
struct StationSeries {
    std::vector<double> wind_speed;  // m/s
    std::vector<double> t2m;         // K
    std::vector<double> sp;          // Pa
};

struct StationTable {
    std::vector<Instant> timestamps;
    std::map<std::string, StationSeries> stations;
};

// `timestamp,location,wind_speed,t2m,sp`
StationTable load_stations_csv(const std::filesystem::path& path);
void write_stations_csv(const StationTable& table, const std::filesystem::path& path);

// --- synthetic scenarios ---------------------------------------------------
struct PlantedCoefficients {
    double alpha = 20.0;
    // solar, wind, demand, wind ramp, solar ramp
    std::array<double, 5> beta{-0.67, -0.95, 0.8, 0.1, -0.1};
    // hydro, geothermal, import
    std::array<double, 3> gamma{-0.3, -0.5, -0.2};
    // Offset per calendar month (index 0 = January) and per year.
    std::array<double, 12> month_offsets{0.0, 0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.6, -0.1, 0.4, -0.3, 0.25};
    std::map<int, double> year_offsets{};
};

struct GridWindParams {
    int n_lat = 8;
    int n_lon = 8;
    double lat0 = -40.0;
    double lon0 = -74.0;
    double resolution = 0.25;
    double base_u = 6.0;
    double base_v = 2.0;
    double diurnal_amplitude = 1.5;
    double wave_amplitude = 2.0;
    double spatial_wavelength_deg = 1.0;
    double advection_deg_per_hour = 0.02;
    double noise_scale = 0.3;
    double noise_ar = 0.95;  // hourly AR(1) coefficient
};

struct SyntheticScenario {
    std::uint64_t seed = 7;
    Instant start = parse_utc("2021-01-01T00:00:00Z");
    int hours = 720;
    PlantedCoefficients coefficients;
    double noise_scale = 0.05;  // std of the aggregate thermal noise
    int n_plants = 20;
    double wind_following_fraction = 0.7;
    GridWindParams grid;
    int n_locations = 4;

    void validate() const;
};

struct SyntheticData {
    TimeSeriesPanel panel;
    GridStateSequence grid;            // 6-hourly u10, v10
    StationTable stations;             // hourly, one entry per location
    LocationSet locations;
    std::array<double, 4> box{};       // lat_min, lat_max, lon_min, lon_max
    std::map<std::string, bool> plant_is_wind_following;
};

// Bit-reproducible for a given scenario.
SyntheticData generate_synthetic(const SyntheticScenario& scenario);

struct TwoToneParams {
    std::uint64_t seed = 1;
    int length = 1200;
    double base = 8.0;
    double fast_amplitude = 2.0;
    double fast_period = 10.0;   // hours
    double slow_amplitude = 3.0;
    double slow_period = 37.0;   // hours
    double noise_scale = 0.3;
};

// base + fast tone + slow tone + white noise; the short-term benchmark series.
std::vector<double> generate_two_tone(const TwoToneParams& params);

}  // namespace ventus
