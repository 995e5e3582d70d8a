#include "ventus/gridcaster.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ventus/config_text.hpp"
#include "ventus/error.hpp"
#include "ventus/io_util.hpp"
#include "ventus/model_io.hpp"
#include "ventus/parallel.hpp"

namespace ventus {

using nn::Mat;

namespace {

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

std::string join_reals(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
}

std::vector<std::string> split_names(const std::string& v) {
    std::vector<std::string> out;
    if (trim(v).empty()) return out;
    for (const auto& f : split(v, ',')) out.emplace_back(trim(f));
    return out;
}

std::string grid_text(const GridSpec& g) {
    std::ostringstream o;
    o << "[grid]\n"
      << "lat0 = " << format_double(g.lat0) << "\n"
      << "dlat = " << format_double(g.dlat) << "\n"
      << "n_lat = " << g.n_lat << "\n"
      << "lon0 = " << format_double(g.lon0) << "\n"
      << "dlon = " << format_double(g.dlon) << "\n"
      << "n_lon = " << g.n_lon << "\n"
      << "variables = " << join(g.variables) << "\n"
      << "t0 = " << format_utc(g.t0) << "\n"
      << "dt_seconds = " << g.dt_seconds << "\n";
    return o.str();
}

const boost::property_tree::ptree& section(const boost::property_tree::ptree& pt, const std::string& name) {
    const auto s = pt.get_child_optional(name);
    if (!s) throw MissingKeyError("config lacks the [" + name + "] section");
    return *s;
}

std::string value(const boost::property_tree::ptree& s, const std::string& key) {
    const auto v = s.get_optional<std::string>(key);
    if (!v) throw MissingKeyError("config lacks key '" + key + "'");
    return std::string(trim(*v));
}

GridSpec grid_from_ptree(const boost::property_tree::ptree& pt) {
    const auto& s = section(pt, "grid");
    GridSpec g;
    g.lat0 = config_real("lat0", value(s, "lat0"));
    g.dlat = config_real("dlat", value(s, "dlat"));
    g.n_lat = config_int("n_lat", value(s, "n_lat"));
    g.lon0 = config_real("lon0", value(s, "lon0"));
    g.dlon = config_real("dlon", value(s, "dlon"));
    g.n_lon = config_int("n_lon", value(s, "n_lon"));
    g.variables = split_names(value(s, "variables"));
    g.t0 = parse_utc(value(s, "t0"));
    g.dt_seconds = config_int("dt_seconds", value(s, "dt_seconds"));
    g.validate();
    return g;
}

std::vector<double> to_vector(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

Eigen::MatrixXd to_column(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Population variance of consecutive differences; fn maps (t, cell) to a value.
template <class F>
double diff_variance(std::size_t n_times, std::size_t n_cells, F fn) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t + 1 < n_times; ++t)
        for (std::size_t c = 0; c < n_cells; ++c) {
            sum += fn(t + 1, c) - fn(t, c);
            ++n;
        }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t t = 0; t + 1 < n_times; ++t)
        for (std::size_t c = 0; c < n_cells; ++c) {
            const double d = fn(t + 1, c) - fn(t, c) - mean;
            ss += d * d;
        }
    return ss / static_cast<double>(n);
}

}  // namespace

// ------------------------------------------------------------------ loss config

Box parse_box(const std::string& text) {
    const auto f = config_reals("box", text);
    if (f.size() != 4) throw ValidationError("box needs latmin,latmax,lonmin,lonmax");
    Box b{f[0], f[1], f[2], f[3]};
    if (b.lat_min > b.lat_max || b.lon_min > b.lon_max) throw ValidationError("box minimum exceeds maximum");
    return b;
}

std::vector<double> area_weights(const GridSpec& grid) {
    std::vector<double> a(grid.n_cells());
    double sum = 0.0;
    for (int i = 0; i < grid.n_lat; ++i)
        for (int j = 0; j < grid.n_lon; ++j) {
            const double w = std::cos(grid.lat_of(i) * std::numbers::pi / 180.0);
            a[static_cast<std::size_t>(i) * grid.n_lon + j] = w;
            sum += w;
        }
    if (!(sum > 0.0)) throw ValidationError("area weights vanish on this grid");
    const double mean = sum / static_cast<double>(a.size());
    for (double& w : a) w /= mean;
    return a;
}

void LossConfig::validate() const {
    grid.validate();
    const std::size_t V = grid.n_vars();
    if (weights.size() != V || inv_diff_var.size() != V) throw ShapeError("loss weights must match the variables");
    for (std::size_t j = 0; j < V; ++j) {
        if (!(weights[j] >= 0.0)) throw ValidationError("variable weight for '" + grid.variables[j] + "' is negative");
        if (!(inv_diff_var[j] > 0.0) || !std::isfinite(inv_diff_var[j]))
            throw ValidationError("s_j for '" + grid.variables[j] + "' must be positive");
    }
    if (area.size() != grid.n_cells()) throw ShapeError("area weights must cover every cell");
    double sum = 0.0;
    for (double a : area) {
        if (!(a >= 0.0)) throw ValidationError("area weights must be non-negative");
        sum += a;
    }
    if (std::abs(sum / static_cast<double>(area.size()) - 1.0) > 1e-12)
        throw ValidationError("area weights must have unit mean");
    if (!(omega >= 1.0)) throw ValidationError("location up-weight must be at least 1");
    if (!(wm_weight >= 0.0) || !(wp_weight >= 0.0)) throw ValidationError("wind term weights must be non-negative");
    if (!(s_wm > 0.0) || !(s_wp > 0.0)) throw ValidationError("wind term s values must be positive");
    if (rollout < 1) throw ValidationError("rollout length must be at least 1");
    if (box && (box->lat_min > box->lat_max || box->lon_min > box->lon_max))
        throw ValidationError("box minimum exceeds maximum");
}

std::vector<double> LossConfig::location_weights() const {
    std::vector<double> m(grid.n_cells(), 1.0);
    if (!box) return m;
    for (int i = 0; i < grid.n_lat; ++i)
        for (int j = 0; j < grid.n_lon; ++j)
            if (box->contains(grid.lat_of(i), grid.lon_of(j))) m[static_cast<std::size_t>(i) * grid.n_lon + j] = omega;
    return m;
}

std::optional<std::pair<std::size_t, std::size_t>> LossConfig::wind_pair() const {
    if (wm_weight == 0.0 && wp_weight == 0.0) return std::nullopt;
    const auto& v = grid.variables;
    const auto u = std::find(v.begin(), v.end(), "u10"), w = std::find(v.begin(), v.end(), "v10");
    if (u == v.end() || w == v.end()) return std::nullopt;
    return std::pair{static_cast<std::size_t>(u - v.begin()), static_cast<std::size_t>(w - v.begin())};
}

std::string LossConfig::to_text() const {
    std::ostringstream o;
    o << "[loss]\n"
      << "weights = " << join_reals(weights) << "\n"
      << "inv_diff_var = " << join_reals(inv_diff_var) << "\n"
      << "area = " << join_reals(area) << "\n"
      << "box = "
      << (box ? join_reals({box->lat_min, box->lat_max, box->lon_min, box->lon_max}) : std::string("none")) << "\n"
      << "omega = " << format_double(omega) << "\n"
      << "wm_weight = " << format_double(wm_weight) << "\n"
      << "wp_weight = " << format_double(wp_weight) << "\n"
      << "s_wm = " << format_double(s_wm) << "\n"
      << "s_wp = " << format_double(s_wp) << "\n"
      << "rollout = " << rollout << "\n\n"
      << grid_text(grid);
    return o.str();
}

LossConfig LossConfig::from_text(const std::string& text) {
    const auto pt = parse_ini(text);
    LossConfig c;
    c.grid = grid_from_ptree(pt);
    c = default_loss_config(c.grid);
    const auto& s = section(pt, "loss");
    for (const auto& [key, node] : s) {
        const std::string v(trim(node.data()));
        if (key == "weights") c.weights = config_reals(key, v);
        else if (key == "inv_diff_var") c.inv_diff_var = config_reals(key, v);
        else if (key == "area") c.area = config_reals(key, v);
        else if (key == "box") c.box = (v == "none" || v.empty()) ? std::nullopt : std::optional<Box>(parse_box(v));
        else if (key == "omega") c.omega = config_real(key, v);
        else if (key == "wm_weight") c.wm_weight = config_real(key, v);
        else if (key == "wp_weight") c.wp_weight = config_real(key, v);
        else if (key == "s_wm") c.s_wm = config_real(key, v);
        else if (key == "s_wp") c.s_wp = config_real(key, v);
        else if (key == "rollout") c.rollout = config_int(key, v);
        else throw ValidationError("unknown loss config key '" + key + "'");
    }
    c.validate();
    return c;
}

LossConfig load_loss_config(const std::filesystem::path& path) { return LossConfig::from_text(read_file(path)); }

LossConfig default_loss_config(const GridSpec& grid) {
    grid.validate();
    LossConfig c;
    c.grid = grid;
    c.weights.assign(grid.n_vars(), 1.0);
    c.inv_diff_var.assign(grid.n_vars(), 1.0);
    c.area = area_weights(grid);
    return c;
}

LossConfig make_loss_config(const GridStateSequence& train) {
    LossConfig c = default_loss_config(train.spec());
    c.inv_diff_var = estimate_s_j(train);
    if (c.wind_pair()) std::tie(c.s_wm, c.s_wp) = estimate_s_wind(train);
    return c;
}

// ------------------------------------------------------------------ wind terms

WindDerived wind_derivations(const Eigen::ArrayXd& u10, const Eigen::ArrayXd& v10) {
    if (u10.size() != v10.size()) throw ShapeError("u10 and v10 differ in size");
    WindDerived d;
    d.wm = (u10.square() + v10.square()).sqrt();
    d.wp = d.wm.cube();
    return d;
}

std::vector<double> estimate_s_j(const GridStateSequence& seq) {
    if (seq.n_times() < 3) throw ValidationError("estimating s_j needs at least 3 time steps");
    const auto& g = seq.spec();
    std::vector<double> s(g.n_vars());
    for (std::size_t v = 0; v < g.n_vars(); ++v) {
        const double var = diff_variance(seq.n_times(), g.n_cells(), [&](std::size_t t, std::size_t c) {
            return static_cast<double>(seq.data()[seq.offset(t, v, 0, 0) + c]);
        });
        if (!(var > 0.0)) throw ValidationError("variable '" + g.variables[v] + "' has zero time-difference variance");
        s[v] = 1.0 / var;
    }
    return s;
}

std::pair<double, double> estimate_s_wind(const GridStateSequence& seq) {
    if (seq.n_times() < 3) throw ValidationError("estimating s_j needs at least 3 time steps");
    const auto& g = seq.spec();
    const std::size_t u = g.variable_index("u10"), v = g.variable_index("v10");
    auto wm = [&](std::size_t t, std::size_t c) {
        return std::hypot(static_cast<double>(seq.data()[seq.offset(t, u, 0, 0) + c]),
                          static_cast<double>(seq.data()[seq.offset(t, v, 0, 0) + c]));
    };
    const double var_wm = diff_variance(seq.n_times(), g.n_cells(), wm);
    const double var_wp = diff_variance(seq.n_times(), g.n_cells(), [&](std::size_t t, std::size_t c) {
        const double m = wm(t, c);
        return m * m * m;
    });
    if (!(var_wm > 0.0)) throw ValidationError("wind magnitude has zero time-difference variance");
    if (!(var_wp > 0.0)) throw ValidationError("wind power has zero time-difference variance");
    return {1.0 / var_wm, 1.0 / var_wp};
}

// ------------------------------------------------------------------ weighted loss

namespace {

struct LossWeights {
    std::vector<double> cell;  // a_i m_i / (J |G|)
    std::vector<double> var;   // s_j w_j
    std::optional<std::pair<std::size_t, std::size_t>> wind;
    double wm = 0.0, wp = 0.0;  // s w for the derived terms
};

LossWeights loss_weights(const LossConfig& cfg) {
    LossWeights w;
    w.wind = cfg.wind_pair();
    std::size_t J = cfg.grid.n_vars();
    if (w.wind) {
        if (cfg.wm_weight > 0.0) ++J;
        if (cfg.wp_weight > 0.0) ++J;
        w.wm = cfg.s_wm * cfg.wm_weight;
        w.wp = cfg.s_wp * cfg.wp_weight;
    }
    const auto m = cfg.location_weights();
    const double norm = 1.0 / (static_cast<double>(J) * static_cast<double>(cfg.grid.n_cells()));
    w.cell.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) w.cell[i] = cfg.area[i] * m[i] * norm;
    for (std::size_t j = 0; j < cfg.grid.n_vars(); ++j) w.var.push_back(cfg.inv_diff_var[j] * cfg.weights[j]);
    return w;
}

// Sum of the per-field losses over the column blocks of pred (each block is
// one grid state); adds the gradient times `scale` into grad when non-null.
double field_loss(const Field& pred, const Field& target, const LossWeights& w, double scale, Field* grad) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("prediction and target differ in shape");
    const Eigen::Index G = static_cast<Eigen::Index>(w.cell.size());
    if (pred.rows() != static_cast<Eigen::Index>(w.var.size()) || G == 0 || pred.cols() % G != 0)
        throw ShapeError("field shape does not match the loss grid");
    double loss = 0.0;
    for (Eigen::Index col = 0; col < pred.cols(); ++col) {
        const double a = w.cell[static_cast<std::size_t>(col % G)];
        double cell = 0.0;
        for (Eigen::Index j = 0; j < pred.rows(); ++j) {
            const double e = pred(j, col) - target(j, col);
            cell += w.var[static_cast<std::size_t>(j)] * e * e;
            if (grad) (*grad)(j, col) += scale * 2.0 * w.var[static_cast<std::size_t>(j)] * a * e;
        }
        if (w.wind) {
            const auto [iu, iv] = *w.wind;
            const double up = pred(static_cast<Eigen::Index>(iu), col), vp = pred(static_cast<Eigen::Index>(iv), col);
            const double mp = std::hypot(up, vp);
            const double mt = std::hypot(target(static_cast<Eigen::Index>(iu), col), target(static_cast<Eigen::Index>(iv), col));
            const double em = mp - mt, ep = mp * mp * mp - mt * mt * mt;
            cell += w.wm * em * em + w.wp * ep * ep;
            if (grad && mp > 0.0) {
                // d/du of wm is u/wm; of wp it is 3 wm u.
                const double dm = 2.0 * w.wm * em / mp + 2.0 * w.wp * ep * 3.0 * mp;
                (*grad)(static_cast<Eigen::Index>(iu), col) += scale * a * dm * up;
                (*grad)(static_cast<Eigen::Index>(iv), col) += scale * a * dm * vp;
            }
        }
        loss += a * cell;
    }
    return loss;
}

}  // namespace

double weighted_loss(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& target,
                     const LossConfig& cfg) {
    if (pred.size() != target.size() || pred.empty()) throw ShapeError("batch sizes differ or are empty");
    const auto w = loss_weights(cfg);
    double total = 0.0;
    for (std::size_t b = 0; b < pred.size(); ++b) {
        if (pred[b].size() != target[b].size() || pred[b].empty()) throw ShapeError("rollout lengths differ or are empty");
        double sum = 0.0;
        for (std::size_t k = 0; k < pred[b].size(); ++k) sum += field_loss(pred[b][k], target[b][k], w, 0.0, nullptr);
        total += sum / static_cast<double>(pred[b].size());
    }
    return total / static_cast<double>(pred.size());
}

double weighted_loss(const Field& pred, const Field& target, const LossConfig& cfg) {
    return weighted_loss(std::vector<Trajectory>{{pred}}, std::vector<Trajectory>{{target}}, cfg);
}

std::vector<Trajectory> weighted_loss_grad(const std::vector<Trajectory>& pred,
                                           const std::vector<Trajectory>& target, const LossConfig& cfg) {
    if (pred.size() != target.size() || pred.empty()) throw ShapeError("batch sizes differ or are empty");
    const auto w = loss_weights(cfg);
    std::vector<Trajectory> grad(pred.size());
    for (std::size_t b = 0; b < pred.size(); ++b) {
        if (pred[b].size() != target[b].size() || pred[b].empty()) throw ShapeError("rollout lengths differ or are empty");
        const double scale = 1.0 / static_cast<double>(pred.size() * pred[b].size());
        for (std::size_t k = 0; k < pred[b].size(); ++k) {
            grad[b].push_back(Field::Zero(pred[b][k].rows(), pred[b][k].cols()));
            field_loss(pred[b][k], target[b][k], w, scale, &grad[b].back());
        }
    }
    return grad;
}

// ------------------------------------------------------------------ forecaster

Field state_field(const GridStateSequence& seq, std::size_t t) {
    if (t >= seq.n_times()) throw ValidationError("time index " + std::to_string(t) + " is past the sequence end");
    const auto s = seq.state(t);
    const auto V = static_cast<Eigen::Index>(seq.spec().n_vars()), C = static_cast<Eigen::Index>(seq.spec().n_cells());
    Field f(V, C);
    for (Eigen::Index v = 0; v < V; ++v)
        for (Eigen::Index c = 0; c < C; ++c) f(v, c) = static_cast<double>(s[static_cast<std::size_t>(v * C + c)]);
    return f;
}

Field forcing_field(const GridStateSequence& forcing, std::size_t t) { return state_field(forcing, t); }

Eigen::Index GridForecaster::input_dim() const { return static_cast<Eigen::Index>(18 * n_vars() + 3); }

GridForecaster GridForecaster::create(const GridStateSequence& train, int hidden, std::uint64_t seed) {
    if (hidden < 1) throw ValidationError("hidden width must be positive");
    GridForecaster m;
    m.grid_ = train.spec();
    m.hidden_ = hidden;
    const std::size_t V = m.n_vars(), C = m.n_cells(), T = train.n_times();
    for (std::size_t v = 0; v < V; ++v) {
        double sum = 0.0;
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) sum += train.data()[train.offset(t, v, 0, 0) + c];
        const double mean = sum / static_cast<double>(T * C);
        double ss = 0.0;
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                const double d = train.data()[train.offset(t, v, 0, 0) + c] - mean;
                ss += d * d;
            }
        const double sd = std::sqrt(ss / static_cast<double>(T * C));
        if (!(sd > 0.0)) throw ValidationError("variable '" + m.grid_.variables[v] + "' is constant in the training data");
        double dsd = std::sqrt(diff_variance(T, C, [&](std::size_t t, std::size_t c) {
            return static_cast<double>(train.data()[train.offset(t, v, 0, 0) + c]);
        }));
        if (!(dsd > 0.0)) {
            spdlog::warn("variable '{}' never changes in time; residuals are scaled by its spread", m.grid_.variables[v]);
            dsd = sd;
        }
        m.mean_.push_back(mean);
        m.std_.push_back(sd);
        m.dstd_.push_back(dsd);
    }
    m.build();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x9c1du};
    std::mt19937_64 rng(seq);
    m.in_.init(m.ps_, rng);
    m.out_.init(m.ps_, rng);
    m.skip_.init(m.ps_, rng);
    return m;
}

void GridForecaster::build() {
    grid_.validate();
    ps_ = nn::ParamStore();
    in_ = nn::Dense::create(ps_, "in", input_dim(), hidden_);
    out_ = nn::Dense::create(ps_, "out", hidden_, static_cast<Eigen::Index>(n_vars()));
    skip_ = nn::Dense::create(ps_, "skip", input_dim(), static_cast<Eigen::Index>(n_vars()));
    has_forcing_ = !forcing_.empty();
    if (has_forcing_) {
        const auto F = static_cast<Eigen::Index>(forcing_.size());
        f_in_ = nn::Dense::create(ps_, "forcing_in", F, hidden_);
        f_skip_ = nn::Dense::create(ps_, "forcing_skip", F, static_cast<Eigen::Index>(n_vars()));
    }
    const int NL = grid_.n_lat, NO = grid_.n_lon;
    stencil_.assign(n_cells(), {});
    statics_.resize(3, static_cast<Eigen::Index>(n_cells()));
    const double lat_mid = grid_.lat0 + 0.5 * (NL - 1) * grid_.dlat, lat_half = 0.5 * (NL - 1) * grid_.dlat;
    const double lon_mid = grid_.lon0 + 0.5 * (NO - 1) * grid_.dlon, lon_half = 0.5 * (NO - 1) * grid_.dlon;
    for (int i = 0; i < NL; ++i)
        for (int j = 0; j < NO; ++j) {
            const std::size_t c = static_cast<std::size_t>(i) * NO + j;
            int s = 0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ii = std::clamp(i + di, 0, NL - 1), jj = std::clamp(j + dj, 0, NO - 1);
                    stencil_[c][static_cast<std::size_t>(s++)] = static_cast<std::size_t>(ii) * NO + jj;
                }
            statics_(0, static_cast<Eigen::Index>(c)) = (grid_.lat_of(i) - lat_mid) / lat_half;
            statics_(1, static_cast<Eigen::Index>(c)) = (grid_.lon_of(j) - lon_mid) / lon_half;
            statics_(2, static_cast<Eigen::Index>(c)) = 0.0;  // land mask placeholder
        }
}

void GridForecaster::gather(const Field& prev, const Field& cur, const Field& /*forcing*/, Mat& x) const {
    const auto V = static_cast<Eigen::Index>(n_vars());
    const auto C = static_cast<Eigen::Index>(n_cells());
    const Eigen::Index N = cur.cols();
    x.resize(input_dim(), N);
    for (Eigen::Index col = 0; col < N; ++col) {
        const Eigen::Index base = (col / C) * C;
        const auto& st = stencil_[static_cast<std::size_t>(col % C)];
        Eigen::Index r = 0;
        for (const Field* f : {&cur, &prev})
            for (Eigen::Index v = 0; v < V; ++v) {
                const double mu = mean_[static_cast<std::size_t>(v)], inv = 1.0 / std_[static_cast<std::size_t>(v)];
                for (std::size_t s = 0; s < 9; ++s) x(r++, col) = ((*f)(v, base + static_cast<Eigen::Index>(st[s])) - mu) * inv;
            }
        x.block(r, col, 3, 1) = statics_.col(col % C);
    }
}

Field GridForecaster::step(const Field& prev, const Field& cur, const Field& forcing, StepCache* cache) const {
    const auto V = static_cast<Eigen::Index>(n_vars()), C = static_cast<Eigen::Index>(n_cells());
    if (cur.rows() != V || prev.rows() != V || cur.cols() != prev.cols() || cur.cols() == 0 || cur.cols() % C != 0)
        throw ShapeError("grid states must be " + std::to_string(V) + " x (multiple of " + std::to_string(C) + ")");
    Mat f;
    if (has_forcing_) {
        if (forcing.rows() != static_cast<Eigen::Index>(forcing_.size()) || forcing.cols() != cur.cols())
            throw ShapeError("forcing must be " + std::to_string(forcing_.size()) + " x " + std::to_string(cur.cols()));
        f.resize(forcing.rows(), forcing.cols());
        for (Eigen::Index r = 0; r < f.rows(); ++r)
            f.row(r) = (forcing.row(r).array() - forcing_mean_[static_cast<std::size_t>(r)]) /
                       forcing_std_[static_cast<std::size_t>(r)];
    }
    Mat x;
    gather(prev, cur, forcing, x);
    Mat pre = in_.forward(ps_, x);
    if (has_forcing_) pre += f_in_.forward(ps_, f);
    const Mat act = pre.cwiseMax(0.0);
    Mat y = out_.forward(ps_, act) + skip_.forward(ps_, x);
    if (has_forcing_) y += f_skip_.forward(ps_, f);
    Field next = cur;
    for (Eigen::Index v = 0; v < V; ++v) next.row(v) += dstd_[static_cast<std::size_t>(v)] * y.row(v);
    if (cache) {
        cache->prev = prev;
        cache->cur = cur;
        cache->forcing = std::move(f);
        cache->x = std::move(x);
        cache->pre = std::move(pre);
    }
    return next;
}

void GridForecaster::step_backward(const StepCache& cache, const Field& dnext, Field& dprev, Field& dcur) {
    const auto V = static_cast<Eigen::Index>(n_vars()), C = static_cast<Eigen::Index>(n_cells());
    dcur += dnext;
    Mat dy = dnext;
    for (Eigen::Index v = 0; v < V; ++v) dy.row(v) *= dstd_[static_cast<std::size_t>(v)];
    const Mat act = cache.pre.cwiseMax(0.0);
    const Mat dact = out_.backward(ps_, act, dy);
    const Mat dpre = (cache.pre.array() > 0.0).select(dact, 0.0);
    Mat dx = skip_.backward(ps_, cache.x, dy);
    dx += in_.backward(ps_, cache.x, dpre);
    if (has_forcing_) {
        f_skip_.backward_params(ps_, cache.forcing, dy);
        f_in_.backward_params(ps_, cache.forcing, dpre);
    }
    for (Eigen::Index col = 0; col < dx.cols(); ++col) {
        const Eigen::Index base = (col / C) * C;
        const auto& st = stencil_[static_cast<std::size_t>(col % C)];
        Eigen::Index r = 0;
        for (Field* f : {&dcur, &dprev})
            for (Eigen::Index v = 0; v < V; ++v) {
                const double inv = 1.0 / std_[static_cast<std::size_t>(v)];
                for (std::size_t s = 0; s < 9; ++s) (*f)(v, base + static_cast<Eigen::Index>(st[s])) += dx(r++, col) * inv;
            }
    }
}

Trajectory GridForecaster::rollout(const Field& prev, const Field& cur, int n_steps,
                                   const std::vector<Field>& forcing) const {
    if (n_steps < 1) throw ValidationError("rollout needs at least one step");
    if (has_forcing_ && forcing.size() < static_cast<std::size_t>(n_steps))
        throw ShapeError("forcing must cover every rollout step");
    Trajectory out;
    Field p = prev, c = cur;
    for (int k = 0; k < n_steps; ++k) {
        Field next = step(p, c, has_forcing_ ? forcing[static_cast<std::size_t>(k)] : Field());
        p = std::move(c);
        c = next;
        out.push_back(std::move(next));
    }
    return out;
}

void GridForecaster::add_forcing_inputs(const std::vector<std::string>& names, const GridStateSequence* reference) {
    if (names.empty()) return;
    if (has_forcing_) throw ValidationError("forcing inputs can only be added once");
    std::set<std::string> seen(grid_.variables.begin(), grid_.variables.end());
    for (const auto& n : names)
        if (!seen.insert(n).second) throw ValidationError("duplicate forcing name '" + n + "' is already an input");
    const nn::ParamStore old = ps_;
    forcing_ = names;
    forcing_mean_.assign(names.size(), 0.0);
    forcing_std_.assign(names.size(), 1.0);
    if (reference) {
        for (std::size_t k = 0; k < names.size(); ++k) {
            const std::size_t v = reference->spec().variable_index(names[k]);
            const std::size_t T = reference->n_times(), C = reference->spec().n_cells();
            double sum = 0.0, ss = 0.0;
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t c = 0; c < C; ++c) sum += reference->data()[reference->offset(t, v, 0, 0) + c];
            const double mean = sum / static_cast<double>(T * C);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t c = 0; c < C; ++c) {
                    const double d = reference->data()[reference->offset(t, v, 0, 0) + c] - mean;
                    ss += d * d;
                }
            const double sd = std::sqrt(ss / static_cast<double>(T * C));
            if (!(sd > 0.0)) throw ValidationError("forcing variable '" + names[k] + "' is constant");
            forcing_mean_[k] = mean;
            forcing_std_[k] = sd;
        }
    }
    build();
    for (std::size_t i = 0; i < old.size(); ++i) ps_[i].value = old[i].value;
    ps_[f_in_.w].value.setZero();
    ps_[f_skip_.w].value.setZero();
    ps_[f_in_.b].value.setZero();
    ps_[f_skip_.b].value.setZero();
}

std::string GridForecaster::encode() const {
    ModelContainer c;
    c.kind = "gridcaster";
    c.config_text = "[model]\nhidden = " + std::to_string(hidden_) + "\nforcing = " + join(forcing_) + "\n\n" + grid_text(grid_);
    for (const auto& p : ps_.blocks()) c.blocks.emplace_back(p.name, p.value);
    c.blocks.emplace_back("stats/mean", to_column(mean_));
    c.blocks.emplace_back("stats/std", to_column(std_));
    c.blocks.emplace_back("stats/diff_std", to_column(dstd_));
    if (has_forcing_) {
        c.blocks.emplace_back("stats/forcing_mean", to_column(forcing_mean_));
        c.blocks.emplace_back("stats/forcing_std", to_column(forcing_std_));
    }
    return encode_model(c);
}

GridForecaster GridForecaster::decode(const std::string& bytes) {
    const auto c = decode_model(bytes);
    if (c.kind != "gridcaster") throw ValidationError("model file holds a '" + c.kind + "' model, not a gridcaster");
    const auto pt = parse_ini(c.config_text);
    GridForecaster m;
    m.grid_ = grid_from_ptree(pt);
    const auto& s = section(pt, "model");
    m.hidden_ = config_int("hidden", value(s, "hidden"));
    m.forcing_ = split_names(value(s, "forcing"));
    m.mean_ = to_vector(c.block("stats/mean"));
    m.std_ = to_vector(c.block("stats/std"));
    m.dstd_ = to_vector(c.block("stats/diff_std"));
    if (m.mean_.size() != m.n_vars() || m.std_.size() != m.n_vars() || m.dstd_.size() != m.n_vars())
        throw ShapeError("normalization statistics do not match the variables");
    if (!m.forcing_.empty()) {
        m.forcing_mean_ = to_vector(c.block("stats/forcing_mean"));
        m.forcing_std_ = to_vector(c.block("stats/forcing_std"));
        if (m.forcing_mean_.size() != m.forcing_.size() || m.forcing_std_.size() != m.forcing_.size())
            throw ShapeError("forcing statistics do not match the forcing names");
    }
    m.build();
    for (auto& p : m.ps_.blocks()) {
        const auto& b = c.block(p.name);
        if (b.rows() != p.value.rows() || b.cols() != p.value.cols())
            throw ShapeError("parameter block '" + p.name + "' has the wrong shape");
        p.value = b;
    }
    return m;
}

void GridForecaster::save(const std::filesystem::path& path) const { write_file(path, encode()); }

GridForecaster GridForecaster::load(const std::filesystem::path& path) { return decode(read_file(path)); }

// ------------------------------------------------------------------ training

GridTrainer::GridTrainer(GridForecaster& model, const GridStateSequence& data, LossConfig cfg, GridTrainOptions opts,
                         const GridStateSequence* forcing)
    : model_(model), data_(data), forcing_(forcing), cfg_(std::move(cfg)), opts_(opts),
      adam_(model.params(), nn::AdamOptions{opts.learning_rate, 0.9, 0.999, 1e-8}) {
    cfg_.validate();
    if (cfg_.grid.variables != data.spec().variables || cfg_.grid.n_lat != data.spec().n_lat ||
        cfg_.grid.n_lon != data.spec().n_lon)
        throw ShapeError("loss config grid does not match the data");
    if (data.spec().variables != model.grid().variables || data.spec().n_lat != model.grid().n_lat ||
        data.spec().n_lon != model.grid().n_lon)
        throw ShapeError("model grid does not match the data");
    if (!model.forcing().empty()) {
        if (!forcing) throw ValidationError("the model takes forcing inputs but no forcing data was given");
        if (forcing->n_times() != data.n_times() || forcing->spec().n_cells() != data.spec().n_cells())
            throw ShapeError("forcing data must align with the training data");
        for (const auto& n : model.forcing()) (void)forcing->spec().variable_index(n);
    }
    if (data.n_times() < static_cast<std::size_t>(cfg_.rollout) + 2)
        throw ValidationError("training data is too short for " + std::to_string(cfg_.rollout) + "-step rollouts");
    if (opts_.batch < 1) throw ValidationError("batch size must be positive");
    if (!(opts_.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32), 0x5a3u};
    rng_.seed(seq);
}

std::vector<std::size_t> GridTrainer::next_starts() {
    const std::size_t last = data_.n_times() - 1 - static_cast<std::size_t>(cfg_.rollout);
    std::uniform_int_distribution<std::size_t> pick(1, last);
    std::vector<std::size_t> s(static_cast<std::size_t>(opts_.batch));
    for (auto& v : s) v = pick(rng_);
    return s;
}

double GridTrainer::evaluate(const std::vector<std::size_t>& starts, bool grad, std::uint64_t* pattern) {
    const auto T = cfg_.rollout;
    const auto B = static_cast<Eigen::Index>(starts.size());
    const auto V = static_cast<Eigen::Index>(model_.n_vars()), C = static_cast<Eigen::Index>(model_.n_cells());
    const auto F = static_cast<Eigen::Index>(model_.forcing().size());
    auto batch_state = [&](long offset) {
        Field f(V, B * C);
        for (Eigen::Index b = 0; b < B; ++b)
            f.middleCols(b * C, C) = state_field(data_, static_cast<std::size_t>(static_cast<long>(starts[static_cast<std::size_t>(b)]) + offset));
        return f;
    };
    auto batch_forcing = [&](long offset) {
        if (F == 0) return Field();
        Field f(F, B * C);
        for (Eigen::Index b = 0; b < B; ++b) {
            const std::size_t t = static_cast<std::size_t>(static_cast<long>(starts[static_cast<std::size_t>(b)]) + offset);
            for (Eigen::Index k = 0; k < F; ++k) {
                const std::size_t v = forcing_->spec().variable_index(model_.forcing()[static_cast<std::size_t>(k)]);
                for (Eigen::Index c = 0; c < C; ++c)
                    f(k, b * C + c) = forcing_->data()[forcing_->offset(t, v, 0, 0) + static_cast<std::size_t>(c)];
            }
        }
        return f;
    };
    // states[0] = t-1, states[1] = t, states[k+1] = prediction k.
    std::vector<Field> states{batch_state(-1), batch_state(0)};
    std::vector<GridForecaster::StepCache> caches(static_cast<std::size_t>(T));
    const auto w = loss_weights(cfg_);
    const double scale = 1.0 / static_cast<double>(B * T);
    std::vector<Field> dstates(static_cast<std::size_t>(T) + 2, Field::Zero(V, B * C));
    double loss = 0.0;
    for (int k = 1; k <= T; ++k) {
        Field next = model_.step(states[static_cast<std::size_t>(k - 1)], states[static_cast<std::size_t>(k)],
                                 batch_forcing(k), &caches[static_cast<std::size_t>(k - 1)]);
        if (pattern) nn::hash_relu_pattern(caches[static_cast<std::size_t>(k - 1)].pre, *pattern);
        loss += scale * field_loss(next, batch_state(k), w, scale, grad ? &dstates[static_cast<std::size_t>(k) + 1] : nullptr);
        states.push_back(std::move(next));
    }
    if (grad) {
        model_.params().zero_grad();
        for (int k = T; k >= 1; --k)
            model_.step_backward(caches[static_cast<std::size_t>(k - 1)], dstates[static_cast<std::size_t>(k) + 1],
                                 dstates[static_cast<std::size_t>(k - 1)], dstates[static_cast<std::size_t>(k)]);
    }
    return loss;
}

double GridTrainer::step(const std::vector<std::size_t>& starts) {
    const double loss = evaluate(starts, true);
    bool finite = std::isfinite(loss);
    for (const auto& p : model_.params().blocks()) finite = finite && p.grad.allFinite();
    if (!finite) throw NumericalError("non-finite rollout loss at training step " + std::to_string(done_ + 1));
    const double progress = opts_.steps > 1 ? static_cast<double>(done_) / (opts_.steps - 1) : 0.0;
    const double f = opts_.final_lr_fraction;
    adam_.set_learning_rate(opts_.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)))));
    adam_.step(model_.params());
    ++done_;
    return loss;
}

GridTrainReport rollout_train(GridForecaster& model, const GridStateSequence& data, const LossConfig& cfg,
                              const GridTrainOptions& opts, const GridStateSequence* forcing) {
    GridTrainer trainer(model, data, cfg, opts, forcing);
    GridTrainReport rep;
    for (int s = 0; s < opts.steps; ++s) {
        rep.losses.push_back(trainer.step(trainer.next_starts()));
        if ((s + 1) % 500 == 0) spdlog::info("grid training step {}: loss {:.6g}", s + 1, rep.losses.back());
    }
    return rep;
}

// ------------------------------------------------------------------ bias correction

ForecastArchive forecast_archive(const GridForecaster& model, const GridStateSequence& data,
                                 const std::vector<std::size_t>& issues, int n_leads,
                                 const GridStateSequence* forcing) {
    if (n_leads < 1) throw ValidationError("need at least one lead");
    ForecastArchive a;
    const long dt_hours = data.spec().dt_seconds / 3600;
    for (int k = 1; k <= n_leads; ++k) a.lead_hours.push_back(static_cast<int>(k * dt_hours));
    for (std::size_t i : issues) {
        if (i < 1 || i + static_cast<std::size_t>(n_leads) >= data.n_times())
            throw ValidationError("issue index " + std::to_string(i) + " leaves no room for the rollout");
        std::vector<Field> f;
        if (!model.forcing().empty()) {
            if (!forcing) throw ValidationError("the model takes forcing inputs but no forcing data was given");
            for (int k = 1; k <= n_leads; ++k) {
                Field ff(static_cast<Eigen::Index>(model.forcing().size()), static_cast<Eigen::Index>(model.n_cells()));
                const Field all = forcing_field(*forcing, i + static_cast<std::size_t>(k));
                for (std::size_t r = 0; r < model.forcing().size(); ++r)
                    ff.row(static_cast<Eigen::Index>(r)) = all.row(static_cast<Eigen::Index>(forcing->spec().variable_index(model.forcing()[r])));
                f.push_back(std::move(ff));
            }
        }
        a.raw.push_back(model.rollout(state_field(data, i - 1), state_field(data, i), n_leads, f));
        std::vector<Field> truth;
        for (int k = 1; k <= n_leads; ++k) truth.push_back(state_field(data, i + static_cast<std::size_t>(k)));
        a.target.push_back(std::move(truth));
    }
    return a;
}

std::vector<std::size_t> box_cells(const GridSpec& grid, const Box& box) {
    std::vector<std::size_t> out;
    for (int i = 0; i < grid.n_lat; ++i)
        for (int j = 0; j < grid.n_lon; ++j)
            if (box.contains(grid.lat_of(i), grid.lon_of(j))) out.push_back(static_cast<std::size_t>(i) * grid.n_lon + j);
    return out;
}

BiasCoef fit_simple_regression(const std::vector<double>& raw, const std::vector<double>& target) {
    if (raw.size() != target.size()) throw ShapeError("raw and target differ in length");
    if (raw.size() < 3) throw ValidationError("bias fit needs at least 3 pairs");
    const double n = static_cast<double>(raw.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        mx += raw[i];
        my += target[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        sxx += (raw[i] - mx) * (raw[i] - mx);
        sxy += (raw[i] - mx) * (target[i] - my);
    }
    if (std::all_of(raw.begin(), raw.end(), [&](double v) { return v == raw.front(); })) return {my, 0.0};
    const double beta = sxy / sxx;
    return {my - beta * mx, beta};
}

const BiasCoef& BiasModel::at(const BiasKey& key) const {
    const auto it = coef.find(key);
    if (it == coef.end())
        throw MissingKeyError("no bias coefficients for lead " + std::to_string(key.lead_hours) + "h, variable " +
                              key.variable + ", cell " + std::to_string(key.cell));
    return it->second;
}

BiasModel fit_bias_correction(const ForecastArchive& archive, const std::vector<std::string>& variables,
                              const std::vector<std::size_t>& cells, std::size_t jobs) {
    if (archive.raw.size() != archive.target.size()) throw ShapeError("archive raw and target differ in issue count");
    if (archive.raw.size() < 3) throw ValidationError("bias fit needs at least 3 forecasts per lead");
    if (cells.empty()) throw ValidationError("bias fit needs at least one cell");
    BiasModel m;
    m.variables = variables;
    m.lead_hours = archive.lead_hours;
    m.cells = cells;
    const std::size_t L = archive.lead_hours.size(), V = variables.size(), C = cells.size();
    std::vector<BiasKey> keys;
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t v = 0; v < V; ++v)
            for (std::size_t c = 0; c < C; ++c) keys.push_back({archive.lead_hours[l], variables[v], cells[c]});
    std::vector<BiasCoef> out(keys.size());
    std::vector<char> constant(keys.size(), 0);
    parallel_for(keys.size(), jobs, [&](std::size_t k) {
        const std::size_t l = k / (V * C), v = (k / C) % V, c = k % C;
        std::vector<double> x, y;
        for (std::size_t i = 0; i < archive.raw.size(); ++i) {
            const auto& r = archive.raw[i].at(l);
            const auto& t = archive.target[i].at(l);
            if (v >= static_cast<std::size_t>(r.rows()) || cells[c] >= static_cast<std::size_t>(r.cols()))
                throw ShapeError("archive fields are smaller than the requested variables and cells");
            x.push_back(r(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(cells[c])));
            y.push_back(t(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(cells[c])));
        }
        out[k] = fit_simple_regression(x, y);
        constant[k] = std::all_of(x.begin(), x.end(), [&](double a) { return a == x.front(); });
    });
    std::size_t n_constant = 0;
    for (std::size_t k = 0; k < keys.size(); ++k) {
        m.coef.emplace(keys[k], out[k]);
        n_constant += static_cast<std::size_t>(constant[k]);
    }
    if (n_constant > 0)
        spdlog::warn("{} of {} bias fits had a constant raw predictor; using intercept-only corrections", n_constant, keys.size());
    return m;
}

double apply_bias_correction(double raw, const BiasKey& key, const BiasModel& bias) {
    const auto& c = bias.at(key);
    return c.alpha + c.beta * raw;
}

Field apply_bias_correction(const Field& raw, int lead_hours, const std::vector<std::string>& variables,
                            const std::vector<std::size_t>& cells, const BiasModel& bias) {
    if (static_cast<std::size_t>(raw.rows()) != variables.size()) throw ShapeError("field rows must match the variables");
    Field out = raw;
    for (std::size_t v = 0; v < variables.size(); ++v)
        for (std::size_t c : cells) {
            if (c >= static_cast<std::size_t>(raw.cols())) throw ShapeError("cell index past the field");
            auto& x = out(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c));
            x = apply_bias_correction(x, BiasKey{lead_hours, variables[v], c}, bias);
        }
    return out;
}

void BiasModel::save(const std::filesystem::path& path) const {
    ModelContainer c;
    c.kind = "bias";
    std::string cells_text, leads_text;
    for (std::size_t i = 0; i < cells.size(); ++i) cells_text += (i ? "," : "") + std::to_string(cells[i]);
    for (std::size_t i = 0; i < lead_hours.size(); ++i) leads_text += (i ? "," : "") + std::to_string(lead_hours[i]);
    c.config_text = "[bias]\nvariables = " + join(variables) + "\nlead_hours = " + leads_text + "\ncells = " + cells_text + "\n";
    Eigen::MatrixXd m(static_cast<Eigen::Index>(coef.size()), 2);
    Eigen::Index r = 0;
    for (const auto& [k, v] : coef) {
        m(r, 0) = v.alpha;
        m(r++, 1) = v.beta;
    }
    c.blocks.emplace_back("coef", m);
    write_model(path, c);
}

BiasModel BiasModel::load(const std::filesystem::path& path) {
    const auto c = read_model(path);
    if (c.kind != "bias") throw ValidationError("model file holds a '" + c.kind + "' model, not a bias model");
    const auto pt = parse_ini(c.config_text);
    const auto& s = section(pt, "bias");
    BiasModel m;
    m.variables = split_names(value(s, "variables"));
    for (const auto& f : split_names(value(s, "lead_hours"))) m.lead_hours.push_back(config_int("lead_hours", f));
    for (const auto& f : split_names(value(s, "cells"))) m.cells.push_back(static_cast<std::size_t>(config_int("cells", f)));
    std::vector<BiasKey> keys;
    for (int l : m.lead_hours)
        for (const auto& v : m.variables)
            for (std::size_t cell : m.cells) keys.push_back({l, v, cell});
    std::sort(keys.begin(), keys.end());
    const auto& coef = c.block("coef");
    if (coef.rows() != static_cast<Eigen::Index>(keys.size()) || coef.cols() != 2)
        throw ShapeError("bias coefficient block does not match its keys");
    for (std::size_t k = 0; k < keys.size(); ++k)
        m.coef.emplace(keys[k], BiasCoef{coef(static_cast<Eigen::Index>(k), 0), coef(static_cast<Eigen::Index>(k), 1)});
    return m;
}

}  // namespace ventus
