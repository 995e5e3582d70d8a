#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ventus/nn.hpp"

namespace ventus {

struct TideConfig {
    int lookback = 48;
    int horizon = 48;
    int hidden_size = 256;
    int n_encoder_layers = 1;
    int n_decoder_layers = 1;
    int decoder_output_dim = 4;
    int temporal_decoder_hidden = 32;
    int projected_covariate_dim = 4;
    double dropout = 0.0;
    bool layer_norm = false;
    double learning_rate = 1e-3;
    bool revin = false;
    std::vector<int> interval_set{6, 12, 24, 48};
    std::uint64_t seed = 0;
    // "" checks every field against the tuning ranges; "prose" admits the
    // 4-block, 128-unit, dropout 0.1 configuration instead.
    std::string preset;
    int batch_size = 32;
    int max_epochs = 100;
    int patience = 20;
    double outlier_threshold = 5.0;
    int outlier_window = 24;

    void validate() const;
    static TideConfig prose();
    std::string to_text() const;
    static TideConfig from_text(const std::string& text);
};

TideConfig load_tide_config(const std::filesystem::path& path);

// Per-feature affine map fitted on a training split.
struct Scaler {
    std::vector<std::string> names;
    std::vector<double> mean, scale;

    std::size_t size() const { return mean.size(); }
    // x is samples x features.
    Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
    double transform(double v, std::size_t feature) const { return (v - mean[feature]) / scale[feature]; }
    double inverse(double v, std::size_t feature) const { return v * scale[feature] + mean[feature]; }
};

struct Normalized {
    Eigen::MatrixXd values;                 // cleaned and scaled
    Scaler scaler;
    std::vector<std::size_t> replaced;      // outliers replaced per feature
};

// Replaces |z| > threshold by the rolling median (centered window), then
// fits mean and population std on the cleaned data.
Normalized normalize(const Eigen::MatrixXd& x, const std::vector<std::string>& names, double threshold = 5.0,
                     int window = 24);

class TideNet {
public:
    struct Batch {
        nn::Mat history;     // L x B
        nn::Mat covariates;  // C x (L+H)*B, sample-major
        nn::Mat statics;     // (S+1) x B, last row is the interval covariate
    };

    TideNet() = default;
    TideNet(const TideConfig& cfg, int n_covariates, int n_statics);

    void init(std::uint64_t seed);
    nn::Mat forward(const Batch& b, bool training = false, std::mt19937_64* rng = nullptr) const;
    // Inference forward that also hashes the ReLU on/off pattern.
    nn::Mat forward_pattern(const Batch& b, std::uint64_t* pattern) const;
    // Forward, masked MSE and backward; gradients accumulate into params().
    double loss_and_grad(const Batch& b, const nn::Mat& target, const nn::Mat& mask, bool training,
                         std::mt19937_64* rng);

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }
    const TideConfig& config() const { return cfg_; }
    int n_covariates() const { return n_cov_; }
    int n_statics() const { return n_static_; }

private:
    struct Cache;
    nn::Mat run(const Batch& b, bool training, std::mt19937_64* rng, Cache* cache) const;
    void backprop(const Cache& c, const nn::Mat& dout);
    void check(const Batch& b) const;

    TideConfig cfg_;
    int n_cov_ = 0, n_static_ = 0, proj_dim_ = 0;
    nn::ParamStore ps_;
    nn::ResidualBlock proj_;
    std::vector<nn::ResidualBlock> enc_, dec_;
    nn::ResidualBlock temporal_;
    nn::Dense global_;
};

inline double interval_covariate(int hours) { return hours / 48.0; }

// One location's training data. cov is T x C; statics are already scaled.
struct TideSeries {
    std::vector<double> y;
    Eigen::MatrixXd cov;
    std::vector<std::string> cov_names;
    std::vector<double> statics;
};

// Raw-unit inputs for one forecast: L history values, covariate rows
// starting at the first history step.
struct ForecastTask {
    std::vector<double> history;
    Eigen::MatrixXd covariates;
    std::vector<double> statics;
};

struct TideModel {
    TideNet net;
    Scaler y_scaler;
    Scaler cov_scaler;

    const TideConfig& config() const { return net.config(); }
    // H raw-unit predictions conditioned on the given interval.
    std::vector<double> forward(const ForecastTask& task, int interval) const;
};

struct TrainReport {
    int epochs_run = 0;
    int best_epoch = 0;
    double best_validation_loss = 0.0;
    bool stopped_early = false;
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
};

// Scaled windows ready for the network.
struct WindowSet {
    nn::Mat history, covariates, statics, target;
    Eigen::Index size() const { return history.cols(); }
};

struct SplitOrigins {
    std::vector<std::size_t> train, validation, test;
};
// Chronological 70/15/15 split of window origins (index of the last
// history step). A window belongs to the split holding all its targets.
SplitOrigins split_origins(std::size_t length, int lookback, int horizon);

WindowSet make_windows(const TideModel& model, const TideSeries& s, const std::vector<std::size_t>& origins);

// Tracks the best validation loss and the patience window.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}
    // Returns true when the new loss is the best so far.
    bool update(double loss);
    bool should_stop() const { return since_best_ >= patience_; }
    double best() const { return best_; }
    int best_epoch() const { return best_epoch_; }

private:
    int patience_;
    int epoch_ = 0, best_epoch_ = 0, since_best_ = 0;
    double best_ = 0.0;
};

// Adam on the training windows with interval-masked MSE, early stopping on
// the validation windows and best-parameter restore.
TrainReport fit_windows(TideModel& model, const WindowSet& train, const WindowSet& validation);

// Fits scalers on the training split of every series, builds windows and trains.
std::pair<TideModel, TrainReport> train_tide(const std::vector<TideSeries>& data, const TideConfig& cfg);

// Rolls the model along one interval chain; returns the hourly trajectory.
std::vector<double> predict_chain(const TideModel& model, const ForecastTask& task, const std::vector<int>& chain);
// Mean of the chain trajectories. All chains must share the same total.
std::vector<double> predict_with_chains(const TideModel& model, const ForecastTask& task,
                                        const std::vector<std::vector<int>>& chains);

// Chains summing to target_lead. When some intervals divide the lead the
// chain repeats one of them; otherwise it is a random composition.
std::vector<std::vector<int>> sample_chains(const std::vector<int>& intervals, int target_lead, int n_chains,
                                            std::uint64_t seed);

struct RandomizedForecast {
    std::vector<double> mean;  // hourly, lead 1..target
    std::vector<std::vector<int>> chains;
    std::vector<std::vector<double>> per_chain;
};
RandomizedForecast randomized_iterative_predict(const TideModel& model, const ForecastTask& task, int target_lead,
                                                int n_chains, std::uint64_t seed);

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t kink_skips = 0;  // draws rejected because a ReLU switched inside the stencil
    std::string worst_block;
};
// loss(true, ...) accumulates gradients into ps; loss(false, ...) only evaluates.
// When non-null, pattern receives a hash of the ReLU on/off pattern. Central
// differences taken across a change of pattern are discarded and redrawn.
using CheckedLoss = std::function<double(bool grad, std::uint64_t* pattern)>;
GradCheck gradient_check(nn::ParamStore& ps, const CheckedLoss& loss, std::size_t n_samples, std::uint64_t seed,
                         double step = 1e-5);
GradCheck tide_gradient_check(TideNet& net, const TideNet::Batch& batch, const nn::Mat& target,
                              std::size_t n_samples = 200, std::uint64_t seed = 0);

// Named models sharing one configuration, e.g. one per location.
void save_tide_models(const std::filesystem::path& path, const std::map<std::string, TideModel>& models);
std::map<std::string, TideModel> load_tide_models(const std::filesystem::path& path);

}  // namespace ventus
