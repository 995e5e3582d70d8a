#include "ventus/ensemble.hpp"

#include <cmath>
#include <limits>

#include "ventus/error.hpp"
#include "ventus/parallel.hpp"

namespace ventus {

void EnsembleConfig::validate() const {
    tide.validate();
    if (n_imfs < 0) throw ValidationError("IMF count must be non-negative");
    if (window < 16) throw ValidationError("decomposition window must hold at least 16 samples");
    if (window < tide.lookback) throw ValidationError("decomposition window is shorter than the lookback");
    if (ensemble_size < 1) throw ValidationError("EEMD ensemble size must be at least 1");
    if (!(noise_fraction >= 0.0)) throw ValidationError("EEMD noise fraction must be non-negative");
}

std::vector<std::vector<double>> causal_components(const std::vector<double>& x, const EnsembleConfig& cfg) {
    cfg.validate();
    const std::size_t n = x.size(), W = static_cast<std::size_t>(cfg.window), K = static_cast<std::size_t>(cfg.n_imfs);
    std::vector<std::vector<double>> comps(K + 1, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
    if (n < W) return comps;
    parallel_for(n - W + 1, cfg.jobs, [&](std::size_t k) {
        const std::size_t t = k + W - 1;
        const std::span<const double> win(x.data() + k, W);
        double mean = 0.0;
        for (double v : win) mean += v;
        mean /= static_cast<double>(W);
        double var = 0.0;
        for (double v : win) var += (v - mean) * (v - mean);
        EemdOptions o;
        o.ensemble_size = cfg.ensemble_size;
        o.noise_std = cfg.noise_fraction * std::sqrt(var / static_cast<double>(W));
        o.seed = cfg.seed * 1000003ull + t;
        o.fixed_imfs = cfg.n_imfs;
        if (K == 0) {
            comps[0][t] = x[t];
            return;
        }
        const auto d = eemd(win, o);
        for (std::size_t j = 0; j < K; ++j) comps[j][t] = d.imfs[j][W - 1];
        comps[K][t] = d.residue[W - 1];
    });
    return comps;
}

namespace {

bool constant_in_training(const std::vector<double>& c) {
    const std::size_t end = c.size() * 70 / 100;
    double first = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < end; ++i) {
        if (!std::isfinite(c[i])) continue;
        if (std::isnan(first)) first = c[i];
        else if (c[i] != first) return false;
    }
    return true;
}

}  // namespace

EnsembleModel train_ensemble(const std::vector<std::vector<double>>& components, const Eigen::MatrixXd& cov,
                             const std::vector<std::string>& cov_names, const std::vector<double>& statics,
                             const EnsembleConfig& cfg) {
    cfg.validate();
    if (components.size() != static_cast<std::size_t>(cfg.n_imfs) + 1)
        throw ShapeError("expected " + std::to_string(cfg.n_imfs + 1) + " component series");
    EnsembleModel m;
    m.config = cfg;
    m.components.resize(components.size());
    m.reports.resize(components.size());
    parallel_for(components.size(), cfg.jobs, [&](std::size_t j) {
        if (constant_in_training(components[j])) {
            m.components[j].constant = true;
            return;
        }
        TideConfig tc = cfg.tide;
        tc.seed = cfg.tide.seed * 7919ull + j;
        TideSeries s{components[j], cov, cov_names, statics};
        try {
            auto [model, rep] = train_tide({s}, tc);
            m.components[j].model = std::move(model);
            m.reports[j] = std::move(rep);
        } catch (const NumericalError& e) {
            throw NumericalError("component " + std::to_string(j) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("component " + std::to_string(j) + ": " + e.what());
        }
    });
    return m;
}

EnsembleForecast predict_ensemble(const EnsembleModel& m, const std::vector<std::vector<double>>& histories,
                                  const Eigen::MatrixXd& cov, const std::vector<double>& statics,
                                  const std::vector<std::vector<int>>& chains) {
    if (histories.size() != m.components.size()) throw ShapeError("one history per component is required");
    if (chains.empty()) throw ValidationError("no chains");
    std::size_t lead = 0;
    for (int s : chains[0]) lead += static_cast<std::size_t>(s);
    EnsembleForecast f;
    f.chains = chains;
    f.total.assign(lead, 0.0);
    for (std::size_t j = 0; j < m.components.size(); ++j) {
        const auto& c = m.components[j];
        std::vector<double> pred;
        if (c.constant) {
            if (histories[j].empty()) throw ShapeError("empty component history");
            pred.assign(lead, histories[j].back());
        } else {
            pred = predict_with_chains(c.model, ForecastTask{histories[j], cov, statics}, chains);
        }
        for (std::size_t t = 0; t < lead; ++t) f.total[t] += pred[t];
        f.components.push_back(std::move(pred));
    }
    return f;
}

EnsembleForecast decompose_predict_ensemble(const std::vector<double>& y, const Eigen::MatrixXd& cov,
                                            const std::vector<std::string>& cov_names,
                                            const std::vector<double>& statics, const EnsembleConfig& cfg,
                                            int target_lead, int n_chains) {
    const auto comps = causal_components(y, cfg);
    const Eigen::Index n = static_cast<Eigen::Index>(y.size());
    if (cov.rows() < n) throw ShapeError("covariates must cover the series");
    const auto model = train_ensemble(comps, cov.topRows(n), cov_names, statics, cfg);
    const int L = cfg.tide.lookback;
    std::vector<std::vector<double>> hist;
    for (const auto& c : comps) hist.emplace_back(c.end() - L, c.end());
    for (const auto& h : hist)
        for (double v : h)
            if (!std::isfinite(v)) throw ValidationError("series too short for the decomposition window and lookback");
    const auto chains = sample_chains(cfg.tide.interval_set, target_lead, n_chains, cfg.seed);
    return predict_ensemble(model, hist, cov.bottomRows(cov.rows() - (n - L)), statics, chains);
}

}  // namespace ventus
