#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ventus/decomposition.hpp"
#include "ventus/tide.hpp"

namespace ventus {

struct EnsembleConfig {
    TideConfig tide;
    int n_imfs = 2;                // fixed IMF count; components are these plus the residue
    int window = 96;               // trailing samples decomposed at each step
    int ensemble_size = 20;
    double noise_fraction = 0.2;   // EEMD noise std as a fraction of the window's std
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    void validate() const;
};

// Causal component series: value t of component j is component j at the
// last sample of the EEMD of x[t-window+1 .. t]. Steps without a full
// window hold NaN. Components plus residue sum to x at every defined step.
std::vector<std::vector<double>> causal_components(const std::vector<double>& x, const EnsembleConfig& cfg);

struct ComponentModel {
    bool constant = false;  // zero variance in training: persistence of the last value
    TideModel model;
};

struct EnsembleModel {
    EnsembleConfig config;
    std::vector<ComponentModel> components;
    std::vector<TrainReport> reports;  // empty entries for constant components
};

// Trains one model per component of the causal decomposition of y.
EnsembleModel train_ensemble(const std::vector<std::vector<double>>& components, const Eigen::MatrixXd& cov,
                             const std::vector<std::string>& cov_names, const std::vector<double>& statics,
                             const EnsembleConfig& cfg);

struct EnsembleForecast {
    std::vector<double> total;                    // hourly, lead 1..target
    std::vector<std::vector<double>> components;  // per component
    std::vector<std::vector<int>> chains;
};

// histories[j] holds the last L values of component j; covariate rows start
// at the first history step. Every component follows the same chains.
EnsembleForecast predict_ensemble(const EnsembleModel& m, const std::vector<std::vector<double>>& histories,
                                  const Eigen::MatrixXd& cov, const std::vector<double>& statics,
                                  const std::vector<std::vector<int>>& chains);

// Decomposes, trains and forecasts target_lead hours past the end of y.
// cov must extend beyond y far enough for the sampled chains.
EnsembleForecast decompose_predict_ensemble(const std::vector<double>& y, const Eigen::MatrixXd& cov,
                                            const std::vector<std::string>& cov_names,
                                            const std::vector<double>& statics, const EnsembleConfig& cfg,
                                            int target_lead, int n_chains);

}  // namespace ventus
