#include "ventus/ingestion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "ventus/error.hpp"
#include "ventus/io_util.hpp"

namespace ventus {

namespace {

constexpr std::string_view kGenerationHeader = "timestamp,plant_id,technology,energy_gwh";
constexpr std::string_view kCapacityHeader = "plant_id,technology,capacity_gw";
constexpr std::string_view kLocationsHeader = "name,lat,lon";
constexpr std::string_view kStationsHeader = "timestamp,location,wind_speed,t2m,sp";
constexpr std::string_view kGridMagic = "GRIDTS1";

std::vector<std::string> lines_of(std::string_view text) {
    std::vector<std::string> lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r') l.pop_back();
    return lines;
}

void expect_header(const std::vector<std::string>& lines, std::string_view header) {
    if (lines.empty() || lines[0] != header)
        throw ParseError(1, "expected header '" + std::string(header) + "'");
}

template <class F>
auto at_line(std::size_t line, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ParseError&) {
        throw;
    } catch (const ValidationError& e) {
        throw ParseError(line, e.what());
    }
}

}  // namespace

// --- generation CSV --------------------------------------------------------

TimeSeriesPanel parse_generation_csv(std::string_view text) {
    const auto lines = lines_of(text);
    expect_header(lines, kGenerationHeader);

    struct Row {
        Instant t;
        std::string plant;
        double value;
    };
    std::vector<Row> rows;
    std::map<std::string, Technology> plant_tech;
    std::map<std::pair<std::string, Instant>, std::size_t> seen;

    for (std::size_t n = 1; n < lines.size(); ++n) {
        const std::size_t line_no = n + 1;
        const auto fields = split(lines[n], ',');
        if (fields.size() != 4) throw ParseError(line_no, "expected 4 fields");
        const Instant t = at_line(line_no, [&] { return parse_utc(fields[0]); });
        const std::string& plant = fields[1];
        if (plant.empty()) throw ParseError(line_no, "empty plant_id");
        const Technology tech = at_line(line_no, [&] { return parse_technology(fields[2]); });
        const double v = at_line(line_no, [&] { return parse_double(fields[3]); });
        if (!std::isfinite(v)) throw ParseError(line_no, "non-finite energy");
        if (is_generation(tech) && v < 0.0) throw ParseError(line_no, "negative generation");

        auto [it, inserted] = plant_tech.emplace(plant, tech);
        if (!inserted && it->second != tech)
            throw ParseError(line_no, "plant '" + plant + "' listed under two technologies");
        auto [sit, fresh] = seen.emplace(std::make_pair(plant, t), line_no);
        if (!fresh)
            throw DuplicateKeyError(line_no, "duplicate key (" + fields[0] + ", " + plant +
                                                 "), first seen on line " + std::to_string(sit->second));
        rows.push_back({t, plant, v});
    }

    if (rows.empty()) return TimeSeriesPanel({}, {});

    auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                        [](const Row& a, const Row& b) { return a.t < b.t; });
    const Instant t_min = lo->t, t_max = hi->t;
    for (const auto& r : rows)
        if ((r.t - t_min) % std::chrono::hours(1) != std::chrono::seconds(0))
            throw StepError("timestamp " + format_utc(r.t) + " is not on the hourly step from " +
                            format_utc(t_min));
    const auto n_hours = static_cast<std::size_t>((t_max - t_min) / std::chrono::hours(1)) + 1;

    std::vector<Instant> timestamps(n_hours);
    for (std::size_t i = 0; i < n_hours; ++i) timestamps[i] = t_min + std::chrono::hours(i);

    std::map<SeriesKey, std::vector<double>> series;
    for (const auto& [plant, tech] : plant_tech) series[{plant, tech}].assign(n_hours, kMissing);
    for (const auto& r : rows) {
        const auto idx = static_cast<std::size_t>((r.t - t_min) / std::chrono::hours(1));
        series[{r.plant, plant_tech[r.plant]}][idx] = r.value;
    }
    return TimeSeriesPanel(std::move(timestamps), std::move(series));
}

TimeSeriesPanel load_generation_csv(const std::filesystem::path& path) {
    return parse_generation_csv(read_file(path));
}

std::string format_generation_csv(const TimeSeriesPanel& panel) {
    std::string out(kGenerationHeader);
    out += '\n';
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const std::string ts = format_utc(panel.timestamps()[i]);
        for (const auto& [key, values] : panel.series()) {
            if (is_missing(values[i])) continue;
            out += ts;
            out += ',';
            out += key.plant_id;
            out += ',';
            out += to_string(key.technology);
            out += ',';
            out += format_double(values[i]);
            out += '\n';
        }
    }
    return out;
}

void write_generation_csv(const TimeSeriesPanel& panel, const std::filesystem::path& path) {
    write_file(path, format_generation_csv(panel));
}

std::map<SeriesKey, double> load_capacity_csv(const std::filesystem::path& path) {
    const auto lines = lines_of(read_file(path));
    expect_header(lines, kCapacityHeader);
    std::map<SeriesKey, double> out;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        const auto fields = split(lines[n], ',');
        if (fields.size() != 3) throw ParseError(n + 1, "expected 3 fields");
        const SeriesKey key{fields[0], at_line(n + 1, [&] { return parse_technology(fields[1]); })};
        const double cap = at_line(n + 1, [&] { return parse_double(fields[2]); });
        if (!out.emplace(key, cap).second) throw DuplicateKeyError(n + 1, "duplicate capacity for " + key.plant_id);
    }
    return out;
}

void write_capacity_csv(const std::map<SeriesKey, double>& capacity, const std::filesystem::path& path) {
    std::string out(kCapacityHeader);
    out += '\n';
    for (const auto& [key, cap] : capacity)
        out += key.plant_id + "," + std::string(to_string(key.technology)) + "," + format_double(cap) + "\n";
    write_file(path, out);
}

TimeSeriesPanel load_panel_dir(const std::filesystem::path& dir) {
    TimeSeriesPanel panel = load_generation_csv(dir / "generation.csv");
    const auto cap_path = dir / "capacity.csv";
    if (!std::filesystem::exists(cap_path)) return panel;
    auto series = panel.series();
    return TimeSeriesPanel(panel.timestamps(), std::move(series), load_capacity_csv(cap_path));
}

void write_panel_dir(const TimeSeriesPanel& panel, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_generation_csv(panel, dir / "generation.csv");
    if (!panel.capacity_gw().empty()) write_capacity_csv(panel.capacity_gw(), dir / "capacity.csv");
}

// --- GT1 -------------------------------------------------------------------

std::string encode_grid_tensor(const GridStateSequence& seq) {
    const GridSpec& s = seq.spec();
    std::string out;
    out += kGridMagic;
    out += '\n';
    auto kv = [&out](std::string_view k, const std::string& v) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    };
    kv("lat0", format_double(s.lat0));
    kv("dlat", format_double(s.dlat));
    kv("n_lat", std::to_string(s.n_lat));
    kv("lon0", format_double(s.lon0));
    kv("dlon", format_double(s.dlon));
    kv("n_lon", std::to_string(s.n_lon));
    std::string vars;
    for (std::size_t i = 0; i < s.variables.size(); ++i) vars += (i ? "," : "") + s.variables[i];
    kv("variables", vars);
    kv("t0", format_utc(s.t0));
    kv("dt", std::to_string(s.dt_seconds));
    kv("n_times", std::to_string(seq.n_times()));
    out += "DATA\n";
    const std::size_t header_size = out.size();
    out.resize(header_size + seq.data().size() * 4);
    char* p = out.data() + header_size;
    for (float f : seq.data()) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
        for (int b = 0; b < 4; ++b) *p++ = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
    return out;
}

GridStateSequence decode_grid_tensor(std::string_view bytes) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::optional<std::string_view> {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) return std::nullopt;
        std::string_view line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        return line;
    };

    const auto magic = next_line();
    if (!magic || *magic != kGridMagic) throw BadMagicError("not a GT1 file (bad magic)");

    static const std::vector<std::string> kKeys = {"lat0", "dlat", "n_lat", "lon0", "dlon",
                                                   "n_lon", "variables", "t0", "dt", "n_times"};
    std::map<std::string, std::string> header;
    bool saw_data = false;
    while (auto line = next_line()) {
        if (*line == "DATA") {
            saw_data = true;
            break;
        }
        const auto eq = line->find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value");
        std::string key(line->substr(0, eq));
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end())
            throw ParseError(line_no, "unknown header key '" + key + "'");
        if (!header.emplace(key, std::string(line->substr(eq + 1))).second)
            throw DuplicateKeyError(line_no, "duplicate header key '" + key + "'");
    }
    std::string missing;
    for (const auto& k : kKeys)
        if (!header.count(k)) missing += (missing.empty() ? "" : ", ") + k;
    if (!missing.empty()) throw MissingKeyError("GT1 header missing keys: " + missing);
    if (!saw_data) throw ParseError(line_no, "GT1 header not terminated by DATA");

    GridSpec spec;
    long long n_times = 0;
    try {
        spec.lat0 = parse_double(header["lat0"]);
        spec.dlat = parse_double(header["dlat"]);
        spec.n_lat = static_cast<int>(parse_integer(header["n_lat"]));
        spec.lon0 = parse_double(header["lon0"]);
        spec.dlon = parse_double(header["dlon"]);
        spec.n_lon = static_cast<int>(parse_integer(header["n_lon"]));
        spec.variables = split(header["variables"], ',');
        spec.t0 = parse_utc(header["t0"]);
        spec.dt_seconds = static_cast<long>(parse_integer(header["dt"]));
        n_times = parse_integer(header["n_times"]);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("GT1 header: ") + e.what());
    }
    spec.validate();
    if (n_times < 2) throw ValidationError("GT1 header: n_times must be at least 2");

    const std::size_t count = static_cast<std::size_t>(n_times) * spec.n_vars() * spec.n_cells();
    const std::size_t payload = bytes.size() - pos;
    if (payload != count * 4)
        throw PayloadLengthError("GT1 payload has " + std::to_string(payload) + " bytes, expected " +
                                 std::to_string(count * 4));

    std::vector<float> data(count);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (std::size_t i = 0; i < count; ++i, p += 4) {
        const std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
                                   (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
        data[i] = std::bit_cast<float>(bits);
        if (!std::isfinite(data[i]))
            throw NonFiniteError("GT1 payload value " + std::to_string(i) + " is not finite");
    }
    return GridStateSequence(std::move(spec), static_cast<std::size_t>(n_times), std::move(data));
}

GridStateSequence load_grid_tensor(const std::filesystem::path& path) {
    return decode_grid_tensor(read_file(path));
}

void write_grid_tensor(const GridStateSequence& seq, const std::filesystem::path& path) {
    write_file(path, encode_grid_tensor(seq));
}

// --- locations and stations ------------------------------------------------

LocationSet load_locations_csv(const std::filesystem::path& path) {
    const auto lines = lines_of(read_file(path));
    expect_header(lines, kLocationsHeader);
    std::vector<Location> out;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        const auto fields = split(lines[n], ',');
        if (fields.size() != 3) throw ParseError(n + 1, "expected 3 fields");
        out.push_back({fields[0], at_line(n + 1, [&] { return parse_double(fields[1]); }),
                       at_line(n + 1, [&] { return parse_double(fields[2]); })});
    }
    return LocationSet(std::move(out));
}

void write_locations_csv(const LocationSet& locations, const std::filesystem::path& path) {
    std::string out(kLocationsHeader);
    out += '\n';
    for (const auto& l : locations.entries())
        out += l.name + "," + format_double(l.lat) + "," + format_double(l.lon) + "\n";
    write_file(path, out);
}

StationTable load_stations_csv(const std::filesystem::path& path) {
    const auto lines = lines_of(read_file(path));
    expect_header(lines, kStationsHeader);
    std::map<Instant, std::map<std::string, std::array<double, 3>>> rows;
    std::set<std::string> names;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        const auto fields = split(lines[n], ',');
        if (fields.size() != 5) throw ParseError(n + 1, "expected 5 fields");
        const Instant t = at_line(n + 1, [&] { return parse_utc(fields[0]); });
        std::array<double, 3> v{};
        for (int k = 0; k < 3; ++k) {
            v[k] = at_line(n + 1, [&] { return parse_double(fields[2 + k]); });
            if (!std::isfinite(v[k])) throw ParseError(n + 1, "non-finite value");
        }
        if (!rows[t].emplace(fields[1], v).second)
            throw DuplicateKeyError(n + 1, "duplicate station row (" + fields[0] + ", " + fields[1] + ")");
        names.insert(fields[1]);
    }
    StationTable table;
    for (const auto& [t, by_name] : rows) {
        if (!table.timestamps.empty() && t - table.timestamps.back() != std::chrono::hours(1))
            throw StepError("station timestamps must be hourly without gaps (at " + format_utc(t) + ")");
        if (by_name.size() != names.size())
            throw ValidationError("station rows incomplete at " + format_utc(t));
        table.timestamps.push_back(t);
        for (const auto& [name, v] : by_name) {
            auto& s = table.stations[name];
            s.wind_speed.push_back(v[0]);
            s.t2m.push_back(v[1]);
            s.sp.push_back(v[2]);
        }
    }
    return table;
}

void write_stations_csv(const StationTable& table, const std::filesystem::path& path) {
    std::string out(kStationsHeader);
    out += '\n';
    for (std::size_t i = 0; i < table.timestamps.size(); ++i) {
        const std::string ts = format_utc(table.timestamps[i]);
        for (const auto& [name, s] : table.stations)
            out += ts + "," + name + "," + format_double(s.wind_speed[i]) + "," + format_double(s.t2m[i]) +
                   "," + format_double(s.sp[i]) + "\n";
    }
    write_file(path, out);
}

// --- synthetic -------------------------------------------------------------

void SyntheticScenario::validate() const {
    if (hours < 12) throw ValidationError("scenario needs at least 12 hours");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
        throw ValidationError("noise scale must be non-negative");
    if (n_plants < 1) throw ValidationError("scenario needs at least one plant");
    if (!(wind_following_fraction >= 0.0 && wind_following_fraction <= 1.0))
        throw ValidationError("wind-following fraction must lie in [0, 1]");
    if (grid.n_lat < 2 || grid.n_lon < 2 || !(grid.resolution > 0.0))
        throw ValidationError("grid generator needs positive resolution and at least 2x2 cells");
    if (!(grid.spatial_wavelength_deg > 0.0)) throw ValidationError("spatial wavelength must be positive");
    if (!(grid.noise_scale >= 0.0) || !(grid.diurnal_amplitude >= 0.0) || !(grid.wave_amplitude >= 0.0))
        throw ValidationError("grid amplitudes and noise scale must be non-negative");
    if (!(std::abs(grid.noise_ar) < 1.0)) throw ValidationError("noise AR coefficient must lie in (-1, 1)");
    if (n_locations < 1 || n_locations > (grid.n_lat / 2) * (grid.n_lon / 2))
        throw ValidationError("n_locations must fit inside the planted bounding box");
}

namespace {

// Independent stream per component so each part is reproducible on its own.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t component) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(component)};
    return std::mt19937_64(seq);
}

// Stationary AR(1) with unit marginal variance.
std::vector<double> ar1(std::mt19937_64& rng, std::size_t n, double rho) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> out(n);
    double x = z(rng);
    const double innov = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x;
        x = rho * x + innov * z(rng);
    }
    return out;
}

int hour_of_day(Instant t) {
    using namespace std::chrono;
    return static_cast<int>(duration_cast<hours>(t - floor<days>(t)).count());
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticScenario& sc) {
    sc.validate();
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const std::size_t H = static_cast<std::size_t>(sc.hours);
    const GridWindParams& g = sc.grid;

    std::vector<Instant> timestamps(H);
    for (std::size_t t = 0; t < H; ++t) timestamps[t] = sc.start + std::chrono::hours(t);

    // Hourly wind components on the grid: diurnal cycle + advected wave + AR noise.
    const std::size_t n_cells = static_cast<std::size_t>(g.n_lat) * g.n_lon;
    std::vector<double> u(H * n_cells), v(H * n_cells);
    {
        const double k = two_pi / g.spatial_wavelength_deg;
        auto rng = stream(sc.seed, 1);
        std::normal_distribution<double> z(0.0, 1.0);
        std::vector<double> nu(n_cells), nv(n_cells);
        for (std::size_t c = 0; c < n_cells; ++c) {
            nu[c] = z(rng);
            nv[c] = z(rng);
        }
        const double innov = std::sqrt(1.0 - g.noise_ar * g.noise_ar);
        for (std::size_t t = 0; t < H; ++t) {
            const double hod = hour_of_day(timestamps[t]);
            const double th = static_cast<double>(t);
            for (int i = 0; i < g.n_lat; ++i) {
                const double lat = g.lat0 + i * g.resolution;
                const double lat_factor = std::cos(0.5 * k * (lat - g.lat0));
                for (int j = 0; j < g.n_lon; ++j) {
                    const double lon = g.lon0 + j * g.resolution;
                    const std::size_t c = static_cast<std::size_t>(i) * g.n_lon + j;
                    const double phase = k * (lon - g.lon0 - g.advection_deg_per_hour * th);
                    u[t * n_cells + c] = g.base_u + g.diurnal_amplitude * std::sin(two_pi * hod / 24.0) +
                                         g.wave_amplitude * std::sin(phase) * lat_factor + g.noise_scale * nu[c];
                    v[t * n_cells + c] = g.base_v +
                                         g.diurnal_amplitude * std::sin(two_pi * hod / 24.0 + std::numbers::pi / 3) +
                                         g.wave_amplitude * std::sin(phase + std::numbers::pi / 2) * lat_factor +
                                         g.noise_scale * nv[c];
                    nu[c] = g.noise_ar * nu[c] + innov * z(rng);
                    nv[c] = g.noise_ar * nv[c] + innov * z(rng);
                }
            }
        }
    }

    SyntheticData out;

    // 6-hourly GT1 sequence.
    {
        GridSpec spec;
        spec.lat0 = g.lat0;
        spec.dlat = g.resolution;
        spec.n_lat = g.n_lat;
        spec.lon0 = g.lon0;
        spec.dlon = g.resolution;
        spec.n_lon = g.n_lon;
        spec.variables = {"u10", "v10"};
        spec.t0 = sc.start;
        spec.dt_seconds = 21600;
        const std::size_t n_steps = H / 6;
        if (n_steps < 2) throw ValidationError("scenario too short for a 6-hourly grid");
        std::vector<float> data(n_steps * 2 * n_cells);
        for (std::size_t s = 0; s < n_steps; ++s)
            for (std::size_t c = 0; c < n_cells; ++c) {
                data[(s * 2 + 0) * n_cells + c] = static_cast<float>(u[s * 6 * n_cells + c]);
                data[(s * 2 + 1) * n_cells + c] = static_cast<float>(v[s * 6 * n_cells + c]);
            }
        out.grid = GridStateSequence(std::move(spec), n_steps, std::move(data));
    }

    // Bounding box: lower-left quadrant of cell centers (25% of cells).
    const int box_lat = g.n_lat / 2, box_lon = g.n_lon / 2;
    out.box = {g.lat0, g.lat0 + (box_lat - 1) * g.resolution, g.lon0, g.lon0 + (box_lon - 1) * g.resolution};

    // Locations at distinct cell centers inside the box.
    std::vector<std::pair<int, int>> box_cells;
    for (int i = 0; i < box_lat; ++i)
        for (int j = 0; j < box_lon; ++j) box_cells.emplace_back(i, j);
    {
        auto rng = stream(sc.seed, 2);
        std::shuffle(box_cells.begin(), box_cells.end(), rng);
    }
    std::vector<Location> locs;
    for (int l = 0; l < sc.n_locations; ++l) {
        char name[16];
        std::snprintf(name, sizeof name, "LOC%02d", l + 1);
        locs.push_back({name, g.lat0 + box_cells[l].first * g.resolution, g.lon0 + box_cells[l].second * g.resolution});
    }
    out.locations = LocationSet(locs);

    // Hourly station series at the location cells.
    out.stations.timestamps = timestamps;
    {
        auto rng = stream(sc.seed, 3);
        for (int l = 0; l < sc.n_locations; ++l) {
            const std::size_t c = static_cast<std::size_t>(box_cells[l].first) * g.n_lon + box_cells[l].second;
            const auto t_noise = ar1(rng, H, 0.9);
            const auto p_noise = ar1(rng, H, 0.98);
            StationSeries s;
            for (std::size_t t = 0; t < H; ++t) {
                const double hod = hour_of_day(timestamps[t]);
                s.wind_speed.push_back(std::hypot(u[t * n_cells + c], v[t * n_cells + c]));
                s.t2m.push_back(288.0 + 5.0 * std::sin(two_pi * (hod - 9.0) / 24.0) + 0.5 * t_noise[t]);
                s.sp.push_back(101325.0 + 300.0 * std::sin(two_pi * static_cast<double>(t) / 120.0) + 20.0 * p_noise[t]);
            }
            out.stations.stations[locs[l].name] = std::move(s);
        }
    }

    // Generation panel.
    const auto& pc = sc.coefficients;
    std::vector<double> S(H), W(H), D(H), hydro(H), geo(H), imp(H);
    {
        auto rng = stream(sc.seed, 4);
        const auto cloud = ar1(rng, H, 0.97);
        const auto farm = ar1(rng, H, 0.8);
        const auto dem = ar1(rng, H, 0.98);
        const auto hyd = ar1(rng, H, 0.99);
        const auto geo_n = ar1(rng, H, 0.9);
        const auto imp_n = ar1(rng, H, 0.95);
        for (std::size_t t = 0; t < H; ++t) {
            const double hod = hour_of_day(timestamps[t]);
            const double sun = std::max(0.0, std::sin(std::numbers::pi * (hod - 6.0) / 12.0));
            S[t] = 3.0 * sun * (0.8 + 0.2 * std::tanh(cloud[t]));
            double ws = 0.0;
            for (const auto& [name, st] : out.stations.stations) ws += st.wind_speed[t];
            ws /= static_cast<double>(out.stations.stations.size());
            const double cf = std::clamp(std::pow(ws / 10.0, 3.0), 0.0, 1.0);
            W[t] = 2.5 * cf * (0.85 + 0.15 * std::tanh(farm[t]));
            const std::chrono::weekday wd{std::chrono::floor<std::chrono::days>(timestamps[t])};
            const bool weekend = wd == std::chrono::Saturday || wd == std::chrono::Sunday;
            D[t] = 8.0 + 1.2 * std::sin(two_pi * (hod - 14.0) / 24.0) - (weekend ? 0.6 : 0.0) + 0.4 * std::tanh(dem[t]);
            hydro[t] = 3.0 + 0.5 * std::sin(two_pi * static_cast<double>(t) / 168.0) + 0.3 * std::tanh(hyd[t]);
            geo[t] = 0.06 + 0.01 * std::tanh(geo_n[t]);
            imp[t] = 0.3 * std::tanh(imp_n[t]);
        }
    }

    std::map<SeriesKey, std::vector<double>> series;
    std::map<SeriesKey, double> capacity;
    series[{"SOLAR_SYS", Technology::solar}] = S;
    series[{"WIND_SYS", Technology::wind}] = W;
    series[{"DEMAND", Technology::demand}] = D;
    series[{"HYDRO_SYS", Technology::hydro}] = hydro;
    series[{"GEO_SYS", Technology::geothermal}] = geo;
    series[{"IMPORT", Technology::import}] = imp;
    capacity[{"SOLAR_SYS", Technology::solar}] = 3.0;
    capacity[{"WIND_SYS", Technology::wind}] = 2.5;
    capacity[{"HYDRO_SYS", Technology::hydro}] = 5.0;
    capacity[{"GEO_SYS", Technology::geothermal}] = 0.1;

    // Thermal fleet: plant coefficients split the planted aggregate so the
    // fleet total follows the aggregate model exactly.
    const int P = sc.n_plants;
    const int n_wind = static_cast<int>(std::lround(sc.wind_following_fraction * P));
    const int n_solar = P - n_wind;
    std::vector<int> order(P);
    for (int p = 0; p < P; ++p) order[p] = p;
    auto rng = stream(sc.seed, 5);
    std::shuffle(order.begin(), order.end(), rng);
    const double share = 1.0 / P;
    const double sigma_p = sc.noise_scale / std::sqrt(static_cast<double>(P));
    std::normal_distribution<double> z(0.0, 1.0);
    for (int rank = 0; rank < P; ++rank) {
        const int p = order[rank];
        const bool wind_following = rank < n_wind;
        double u_share = share, v_share = share;
        if (n_wind > 0 && n_solar > 0) {
            u_share = wind_following ? 0.1 / n_wind : 0.9 / n_solar;
            v_share = wind_following ? 0.9 / n_wind : 0.1 / n_solar;
        }
        char id[16];
        std::snprintf(id, sizeof id, "TH%02d", p + 1);
        out.plant_is_wind_following[id] = wind_following;
        capacity[{id, Technology::thermal}] = 2.0;
        std::vector<double> gen(H);
        for (std::size_t t = 0; t < H; ++t) {
            const double dW = t > 0 ? W[t] - W[t - 1] : 0.0;
            const double dS = t > 0 ? S[t] - S[t - 1] : 0.0;
            const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(timestamps[t])};
            const int month = static_cast<int>(static_cast<unsigned>(ymd.month()));
            const int year = static_cast<int>(ymd.year());
            const auto yo = pc.year_offsets.find(year);
            double fe = pc.month_offsets[month - 1] + (yo == pc.year_offsets.end() ? 0.0 : yo->second);
            double value = share * pc.alpha + u_share * pc.beta[0] * S[t] + v_share * pc.beta[1] * W[t] +
                           share * (pc.beta[2] * D[t] + pc.beta[3] * dW + pc.beta[4] * dS) +
                           share * (pc.gamma[0] * hydro[t] + pc.gamma[1] * geo[t] + pc.gamma[2] * imp[t]) +
                           share * fe;
            const double noise = z(rng);
            gen[t] = value + sigma_p * noise;
        }
        series[{id, Technology::thermal}] = std::move(gen);
    }
    out.panel = TimeSeriesPanel(timestamps, std::move(series), std::move(capacity));
    return out;
}

std::vector<double> generate_two_tone(const TwoToneParams& p) {
    if (p.length < 16) throw ValidationError("two-tone series needs at least 16 samples");
    if (!(p.fast_period > 0.0) || !(p.slow_period > 0.0)) throw ValidationError("periods must be positive");
    if (!(p.noise_scale >= 0.0)) throw ValidationError("noise scale must be non-negative");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto rng = stream(p.seed, 11);
    std::uniform_real_distribution<double> phase(0.0, two_pi);
    std::normal_distribution<double> z(0.0, 1.0);
    const double pf = phase(rng), ps = phase(rng);
    std::vector<double> out(static_cast<std::size_t>(p.length));
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double th = static_cast<double>(t);
        out[t] = p.base + p.fast_amplitude * std::sin(two_pi * th / p.fast_period + pf) +
                 p.slow_amplitude * std::sin(two_pi * th / p.slow_period + ps) + p.noise_scale * z(rng);
    }
    return out;
}

}  // namespace ventus
