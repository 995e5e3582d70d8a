#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "ventus/core_data.hpp"
#include "ventus/nn.hpp"

namespace ventus {

// One state: rows are variables, columns are cells in lat-major order.
using Field = Eigen::MatrixXd;
using Trajectory = std::vector<Field>;

struct Box {
    double lat_min = 0.0, lat_max = 0.0, lon_min = 0.0, lon_max = 0.0;
    bool contains(double lat, double lon) const {
        return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
    }
};

// Parses "latmin,latmax,lonmin,lonmax".
Box parse_box(const std::string& text);

struct LossConfig {
    GridSpec grid;                  // geometry and variable names
    std::vector<double> weights;    // w_j per variable
    std::vector<double> inv_diff_var;  // s_j per variable
    std::vector<double> area;       // cos(lat) per cell, unit mean
    std::optional<Box> box;
    double omega = 1.0;
    double wm_weight = 1.0;
    double wp_weight = 0.1;
    double s_wm = 1.0;
    double s_wp = 1.0;
    int rollout = 4;

    void validate() const;
    // m_i: omega inside the box, 1 elsewhere.
    std::vector<double> location_weights() const;
    // Indices of u10 and v10 when both are present and a derived term is weighted.
    std::optional<std::pair<std::size_t, std::size_t>> wind_pair() const;
    std::string to_text() const;
    static LossConfig from_text(const std::string& text);
};

// Unit weights, unit s_j, cos-latitude area weights, no box.
LossConfig default_loss_config(const GridSpec& grid);
// Same, with s_j, s_wm and s_wp estimated from the training sequence.
LossConfig make_loss_config(const GridStateSequence& train);
LossConfig load_loss_config(const std::filesystem::path& path);

std::vector<double> area_weights(const GridSpec& grid);

struct WindDerived {
    Eigen::ArrayXd wm, wp;
};
WindDerived wind_derivations(const Eigen::ArrayXd& u10, const Eigen::ArrayXd& v10);

// 1 / population variance of x[t+1] - x[t] over all cells and steps, per variable.
std::vector<double> estimate_s_j(const GridStateSequence& seq);
// The same statistic for wind magnitude and wind power.
std::pair<double, double> estimate_s_wind(const GridStateSequence& seq);

// Spatially weighted MSE over a batch of rollouts: the mean over the batch
// and rollout steps of (1/J)(1/|G|) sum_i sum_j s_j w_j a_i m_i (pred - target)^2.
// J counts the variables plus wind magnitude and power when weighted.
double weighted_loss(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& target,
                     const LossConfig& cfg);
double weighted_loss(const Field& pred, const Field& target, const LossConfig& cfg);
// Gradient of the batch loss with respect to every predicted field.
std::vector<Trajectory> weighted_loss_grad(const std::vector<Trajectory>& pred,
                                           const std::vector<Trajectory>& target, const LossConfig& cfg);

// Per-cell MLP over a 3x3 stencil of the two latest states plus static cell
// features, predicting a residual update of the center cell. Forcing inputs
// (if any) enter through separate zero-initialized weights.
class GridForecaster {
public:
    GridForecaster() = default;
    static GridForecaster create(const GridStateSequence& train, int hidden, std::uint64_t seed);

    const GridSpec& grid() const { return grid_; }
    const std::vector<std::string>& forcing() const { return forcing_; }
    int hidden() const { return hidden_; }
    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }
    std::size_t n_vars() const { return grid_.n_vars(); }
    std::size_t n_cells() const { return grid_.n_cells(); }
    Eigen::Index input_dim() const;

    struct StepCache {
        Field prev, cur, forcing;
        nn::Mat x, pre;
    };

    // Next state from (previous, current). forcing is n_forcing x cells.
    Field step(const Field& prev, const Field& cur, const Field& forcing = Field(), StepCache* cache = nullptr) const;
    // Accumulates parameter gradients; adds dL/dprev and dL/dcur into the outputs.
    void step_backward(const StepCache& cache, const Field& dnext, Field& dprev, Field& dcur);

    // Autoregressive forecast of n_steps states after `cur`.
    // forcing[k] is used for step k and may be empty when the model has none.
    Trajectory rollout(const Field& prev, const Field& cur, int n_steps,
                       const std::vector<Field>& forcing = {}) const;

    // Adds zero-weight forcing inputs; throws on duplicate names. Forcing
    // normalization comes from the same-named variables of reference when
    // given (mean 0, std 1 otherwise). Forcing can be added once.
    void add_forcing_inputs(const std::vector<std::string>& names, const GridStateSequence* reference = nullptr);

    // Normalization statistics.
    const std::vector<double>& state_mean() const { return mean_; }
    const std::vector<double>& state_std() const { return std_; }
    const std::vector<double>& diff_std() const { return dstd_; }

    void save(const std::filesystem::path& path) const;
    static GridForecaster load(const std::filesystem::path& path);
    std::string encode() const;
    static GridForecaster decode(const std::string& bytes);

private:
    void build();
    void gather(const Field& prev, const Field& cur, const Field& forcing, nn::Mat& x) const;

    GridSpec grid_;
    std::vector<std::string> forcing_;
    int hidden_ = 32;
    std::vector<double> mean_, std_, dstd_;
    std::vector<double> forcing_mean_, forcing_std_;
    nn::ParamStore ps_;
    nn::Dense in_, out_, skip_, f_in_, f_skip_;
    bool has_forcing_ = false;
    std::vector<std::array<std::size_t, 9>> stencil_;  // neighbour cells, edge-clamped
    nn::Mat statics_;                                   // 3 x cells
};

Field state_field(const GridStateSequence& seq, std::size_t t);
// Forcing fields aligned with seq: forcing sequence t holds the value for state t.
Field forcing_field(const GridStateSequence& forcing, std::size_t t);

struct GridTrainOptions {
    int steps = 1000;
    int batch = 4;
    double learning_rate = 1e-3;
    double final_lr_fraction = 0.1;  // cosine decay to this fraction of the learning rate
    std::uint64_t seed = 0;
};

struct GridTrainReport {
    std::vector<double> losses;  // one per optimizer step
};

// Optimizer state and start-time sampling for rollout training.
class GridTrainer {
public:
    GridTrainer(GridForecaster& model, const GridStateSequence& data, LossConfig cfg, GridTrainOptions opts,
                const GridStateSequence* forcing = nullptr);
    // Start times (index of the current state) for the next step.
    std::vector<std::size_t> next_starts();
    // One Adam step on the given starts; returns the loss before the update.
    double step(const std::vector<std::size_t>& starts);
    // Loss of the current parameters on the given starts. With grad, the
    // parameter gradients are overwritten; pattern (if given) receives a
    // hash of every ReLU on/off state.
    double evaluate(const std::vector<std::size_t>& starts, bool grad, std::uint64_t* pattern = nullptr);
    int steps_done() const { return done_; }

private:
    GridForecaster& model_;
    const GridStateSequence& data_;
    const GridStateSequence* forcing_;
    LossConfig cfg_;
    GridTrainOptions opts_;
    nn::Adam adam_;
    std::mt19937_64 rng_;
    int done_ = 0;
};

GridTrainReport rollout_train(GridForecaster& model, const GridStateSequence& data, const LossConfig& cfg,
                              const GridTrainOptions& opts, const GridStateSequence* forcing = nullptr);

// Raw forecasts and verifying states: raw[issue][lead - 1] is V x cells.
struct ForecastArchive {
    std::vector<int> lead_hours;
    std::vector<std::vector<Field>> raw, target;
};

// Rollouts from every issue index (needs index - 1 and n_leads later states).
ForecastArchive forecast_archive(const GridForecaster& model, const GridStateSequence& data,
                                 const std::vector<std::size_t>& issues, int n_leads,
                                 const GridStateSequence* forcing = nullptr);

struct BiasKey {
    int lead_hours = 0;
    std::string variable;
    std::size_t cell = 0;
    auto operator<=>(const BiasKey&) const = default;
};

struct BiasCoef {
    double alpha = 0.0;
    double beta = 1.0;
};

struct BiasModel {
    std::vector<std::string> variables;
    std::vector<int> lead_hours;
    std::vector<std::size_t> cells;
    std::map<BiasKey, BiasCoef> coef;

    const BiasCoef& at(const BiasKey& key) const;
    void save(const std::filesystem::path& path) const;
    static BiasModel load(const std::filesystem::path& path);
};

// Box cells of a grid, lat-major order.
std::vector<std::size_t> box_cells(const GridSpec& grid, const Box& box);

BiasCoef fit_simple_regression(const std::vector<double>& raw, const std::vector<double>& target);
BiasModel fit_bias_correction(const ForecastArchive& archive, const std::vector<std::string>& variables,
                              const std::vector<std::size_t>& cells, std::size_t jobs = 1);
// Corrects the listed cells of a raw field at the given lead.
Field apply_bias_correction(const Field& raw, int lead_hours, const std::vector<std::string>& variables,
                            const std::vector<std::size_t>& cells, const BiasModel& bias);
double apply_bias_correction(double raw, const BiasKey& key, const BiasModel& bias);

}  // namespace ventus
