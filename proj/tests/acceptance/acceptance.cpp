// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

#include <fmt/format.h>

#include "cli_harness.hpp"
#include "short_term_harness.hpp"
#include "ventus/decomposition.hpp"
#include "ventus/econometrics.hpp"
#include "ventus/gridcaster.hpp"
#include "ventus/hybrid_eval.hpp"
#include "ventus/ingestion.hpp"
#include "ventus/log.hpp"
#include "ventus/tide.hpp"

using namespace ventus;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double limit_seconds, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_seconds > 0 && secs > limit_seconds) {
        o.pass = false;
        o.detail += fmt::format("; runtime over the {:.0f} s limit", limit_seconds);
    }
    failures += !o.pass;
    std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

SyntheticData scenario(std::uint64_t seed, double noise, int hours) {
    SyntheticScenario sc;
    sc.seed = seed;
    sc.hours = hours;
    sc.noise_scale = noise;
    return generate_synthetic(sc);
}

const std::array<std::string_view, 5> kBetaTerms{term::solar, term::wind, term::demand, term::wind_ramp,
                                                 term::solar_ramp};

Outcome econometric_recovery() {
    const PlantedCoefficients pc;
    const auto exact = fit_fixed_effects(scenario(1, 0.0, 8760).panel, {});
    double worst_exact = 0.0;
    for (std::size_t k = 0; k < 5; ++k)
        worst_exact = std::max(worst_exact, std::abs(exact.at(kBetaTerms[k]).coefficient / pc.beta[k] - 1.0));

    std::array<double, 5> mean{};
    constexpr int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        const auto fit = fit_fixed_effects(scenario(1000 + s, 0.05, 24 * 90).panel, {});
        for (std::size_t k = 0; k < 5; ++k) mean[k] += fit.at(kBetaTerms[k]).coefficient / seeds;
    }
    double worst_mean = 0.0;
    for (std::size_t k = 0; k < 5; ++k) worst_mean = std::max(worst_mean, std::abs(mean[k] / pc.beta[k] - 1.0));
    return {worst_exact < 1e-9 && worst_mean < 0.02,
            fmt::format("noiseless max relative error {:.2e} (< 1e-9); noisy mean over {} seeds within {:.3f}% (< 2%)",
                        worst_exact, seeds, 100 * worst_mean)};
}

Outcome classification_fidelity() {
    int worst = 20;
    for (int s = 0; s < 10; ++s) {
        const auto data = scenario(200 + s, 0.05, 24 * 40);
        const auto res = classify_plants(data.panel, data.panel.plants(Technology::thermal));
        int correct = 0;
        for (const auto& c : res)
            correct += c.label != PlantLabel::unclassified &&
                       (c.label == PlantLabel::wind_following) == data.plant_is_wind_following.at(c.plant_id);
        worst = std::min(worst, correct);
    }
    return {worst >= 19, fmt::format("worst seed {}/20 correct (>= 19) over 10 seeds", worst)};
}

Outcome eemd_reconstruction() {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> x(256);
        double walk = 0.0;
        for (auto& v : x) {
            walk += 0.3 * z(rng);
            v = walk + z(rng);
        }
        double mean = 0.0, var = 0.0;
        for (double v : x) mean += v / 256.0;
        for (double v : x) var += (v - mean) * (v - mean) / 256.0;
        const auto d = eemd(x, 10, 0.2 * std::sqrt(var), 500 + rep);
        const auto r = recompose(d);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            num += (r[i] - x[i]) * (r[i] - x[i]);
            den += x[i] * x[i];
        }
        worst = std::max(worst, std::sqrt(num / den));
    }
    return {worst < 1e-8, fmt::format("max relative L2 error {:.2e} over 100 series (< 1e-8)", worst)};
}

Outcome gradient_corners() {
    double worst = 0.0;
    std::string where;
    for (int corner = 0; corner < 8; ++corner) {
        TideConfig c;
        c.lookback = 8;
        c.horizon = 6;
        c.interval_set = {6};
        c.layer_norm = corner & 2;
        c.revin = corner & 4;
        if (corner & 1) {
            c.hidden_size = 1024;
            c.n_encoder_layers = 3;
            c.n_decoder_layers = 3;
            c.decoder_output_dim = 32;
            c.temporal_decoder_hidden = 128;
        } else {
            c.hidden_size = 256;
            c.n_encoder_layers = 1;
            c.n_decoder_layers = 1;
            c.decoder_output_dim = 4;
            c.temporal_decoder_hidden = 32;
        }
        TideNet net(c, 2, 1);
        std::mt19937_64 rng(corner);
        std::normal_distribution<double> z;
        TideNet::Batch b;
        b.history = nn::Mat::NullaryExpr(8, 3, [&] { return z(rng); });
        b.covariates = nn::Mat::NullaryExpr(2, 14 * 3, [&] { return z(rng); });
        b.statics = nn::Mat::NullaryExpr(2, 3, [&] { return z(rng); });
        const nn::Mat target = nn::Mat::NullaryExpr(6, 3, [&] { return z(rng); });
        const auto g = tide_gradient_check(net, b, target, 200, static_cast<std::uint64_t>(corner));
        if (g.max_rel_error >= worst) {
            worst = g.max_rel_error;
            where = fmt::format("corner {} ({})", corner, g.worst_block);
        }
    }
    return {worst < 1e-4, fmt::format("max relative error {:.2e} at {} over 8 configs (< 1e-4)", worst, where)};
}

Outcome short_term_skill() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto s = harness::short_term_scores(seed, false);
        worst = std::max(worst, s.ensemble / s.persistence);
    }
    return {worst <= 0.7, fmt::format("worst 24 h RMSE ratio to persistence {:.3f} over 5 seeds (<= 0.70)", worst)};
}

Outcome randomized_intervals() {
    int ok = 0, mixed = 0;
    double worst_identity = 0.0;
    double tightest = 1e300;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        TwoToneParams tp;
        tp.seed = seed;
        tp.length = 800;
        const auto y = generate_two_tone(tp);
        TideConfig c;
        c.lookback = 48;
        c.horizon = 48;
        c.interval_set = {6, 12, 24, 48};
        c.max_epochs = 8;
        c.seed = seed;
        const Eigen::MatrixXd cov(static_cast<Eigen::Index>(y.size()), 0);
        const auto model = train_tide({TideSeries{y, cov, {}, {}}}, c).first;

        const auto split = split_origins(y.size(), 48, 48);
        const Eigen::MatrixXd future(48 + 48 + 48, 0);
        std::vector<double> se;
        double se_mean = 0.0;
        std::size_t n = 0;
        for (std::size_t o : split.test) {
            if (o + 48 >= y.size()) continue;
            const ForecastTask t{std::vector<double>(y.begin() + static_cast<long>(o) - 47, y.begin() + static_cast<long>(o) + 1),
                                 future, {}};
            const auto f = randomized_iterative_predict(model, t, 48, 8, seed);
            if (n == 0) mixed += std::set<std::vector<int>>(f.chains.begin(), f.chains.end()).size() > 1;
            se.resize(f.per_chain.size(), 0.0);
            const double truth = y[o + 48];
            for (std::size_t k = 0; k < f.per_chain.size(); ++k) se[k] += std::pow(f.per_chain[k][47] - truth, 2);
            se_mean += std::pow(f.mean[47] - truth, 2);
            ++n;
            if (n == 1) {
                const auto a = predict_chain(model, t, {24, 24});
                const auto b = predict_chain(model, t, {12, 12, 12, 12});
                const auto m = predict_with_chains(model, t, {{24, 24}, {12, 12, 12, 12}});
                for (int k = 0; k < 48; ++k) worst_identity = std::max(worst_identity, std::abs(m[k] - 0.5 * (a[k] + b[k])));
            }
        }
        const double worst_chain = std::sqrt(*std::max_element(se.begin(), se.end()) / static_cast<double>(n));
        const double avg = std::sqrt(se_mean / static_cast<double>(n));
        ok += avg <= worst_chain;
        tightest = std::min(tightest, worst_chain - avg);
    }
    return {ok == 20 && worst_identity <= 1e-12,
            fmt::format("averaged <= worst chain on {}/20 seeds, {} with distinct chains (smallest margin {:.3g}); averaging identity error {:.1e} "
                        "(<= 1e-12)",
                        ok, mixed, tightest, worst_identity)};
}

Outcome loss_algebra() {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z;
    GridSpec g;
    g.lat0 = -40.0;
    g.n_lat = 4;
    g.lon0 = -74.0;
    g.n_lon = 4;
    g.variables = {"u10", "v10", "t2m"};
    auto unit = default_loss_config(g);
    unit.area.assign(g.n_cells(), 1.0);
    unit.wm_weight = unit.wp_weight = 0.0;
    double worst_mse = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Trajectory> p(2), t(2);
        double sum = 0.0;
        for (int b = 0; b < 2; ++b)
            for (int k = 0; k < 3; ++k) {
                p[b].push_back(Field::NullaryExpr(3, 16, [&] { return z(rng); }));
                t[b].push_back(Field::NullaryExpr(3, 16, [&] { return z(rng); }));
                sum += (p[b].back() - t[b].back()).squaredNorm();
            }
        worst_mse = std::max(worst_mse, std::abs(weighted_loss(p, t, unit) - sum / (2 * 3 * 48)));
    }
    auto cfg = default_loss_config(g);
    cfg.box = Box{-40.0, -39.75, -74.0, -73.75};
    double worst_scale = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Field t = Field::NullaryExpr(3, 16, [&] { return 3.0 * z(rng); });
        Field p = t;
        for (auto c : box_cells(g, *cfg.box)) p.col(static_cast<Eigen::Index>(c)) += Field::NullaryExpr(3, 1, [&] { return z(rng); });
        cfg.omega = 1.0;
        const double base = weighted_loss(p, t, cfg);
        const double omega = 1.0 + std::abs(z(rng)) * 5.0;
        cfg.omega = omega;
        worst_scale = std::max(worst_scale, std::abs(weighted_loss(p, t, cfg) / (omega * base) - 1.0));
    }
    return {worst_mse <= 1e-12 && worst_scale <= 1e-12,
            fmt::format("unit weights vs plain MSE {:.1e} (<= 1e-12); in-box omega scaling relative error {:.1e}",
                        worst_mse, worst_scale)};
}

GridStateSequence synthetic_grid(std::uint64_t seed, int hours) {
    SyntheticScenario sc;
    sc.seed = seed;
    sc.hours = hours;
    return generate_synthetic(sc).grid;
}

Outcome rollout_training() {
    double worst = 0.0;
    bool zero_is_persistence = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto all = synthetic_grid(seed, 4380);
        const std::size_t cut = all.n_times() * 7 / 10;
        const auto train = all.slice(0, cut), test = all.slice(cut, all.n_times());
        auto m = GridForecaster::create(train, 32, seed);
        auto zero = m;
        zero.params().set_zero();
        for (std::size_t i = 1; i + 4 < test.n_times(); i += 7)
            for (const auto& f : zero.rollout(state_field(test, i - 1), state_field(test, i), 4))
                zero_is_persistence = zero_is_persistence && f == state_field(test, i);
        GridTrainOptions o;
        o.steps = 1000;
        o.seed = seed;
        rollout_train(m, train, make_loss_config(train), o);
        double se = 0.0, sp = 0.0;
        for (std::size_t i = 1; i + 4 < test.n_times(); ++i) {
            const auto r = m.rollout(state_field(test, i - 1), state_field(test, i), 4);
            const Field truth = state_field(test, i + 4);
            se += (r[3] - truth).squaredNorm();
            sp += (state_field(test, i) - truth).squaredNorm();
        }
        worst = std::max(worst, std::sqrt(se / sp));
    }
    return {worst <= 0.8 && zero_is_persistence,
            fmt::format("worst 24 h RMSE ratio to persistence {:.3f} over 5 seeds (<= 0.80); zero model is persistence: {}",
                        worst, zero_is_persistence ? "bit-exact" : "NO")};
}

Outcome forcing_equivalence() {
    const auto all = synthetic_grid(12, 4380);
    const std::size_t cut = all.n_times() * 7 / 10;
    const auto train = all.slice(0, cut), test = all.slice(cut, all.n_times());
    auto base = GridForecaster::create(train, 32, 12);
    GridTrainOptions o;
    o.steps = 500;
    o.seed = 12;
    rollout_train(base, train, make_loss_config(train), o);

    auto rename = [](const GridStateSequence& s) {
        auto spec = s.spec();
        spec.variables = {"hres_u10", "hres_v10"};
        return GridStateSequence(spec, s.n_times(), s.data());
    };
    const auto ftrain = rename(train), ftest = rename(test);
    auto forced = base;
    forced.add_forcing_inputs({"hres_u10", "hres_v10"}, &ftrain);

    std::mt19937_64 rng(99);
    std::normal_distribution<double> z;
    int identical = 0;
    for (int i = 0; i < 1000; ++i) {
        const Field prev = Field::NullaryExpr(2, 64, [&] { return 5.0 * z(rng); });
        const Field cur = Field::NullaryExpr(2, 64, [&] { return 5.0 * z(rng); });
        const Field f = Field::NullaryExpr(2, 64, [&] { return 10.0 * z(rng); });
        identical += forced.step(prev, cur, f) == base.step(prev, cur);
    }

    auto cfg = make_loss_config(train);
    cfg.rollout = 1;
    o.steps = 2000;
    o.seed = 13;
    rollout_train(forced, train, cfg, o, &ftrain);
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t i = 1; i + 1 < test.n_times(); ++i) {
        const Field truth = state_field(test, i + 1);
        s0 += (base.step(state_field(test, i - 1), state_field(test, i)) - truth).squaredNorm();
        s1 += (forced.step(state_field(test, i - 1), state_field(test, i), forcing_field(ftest, i + 1)) - truth).squaredNorm();
    }
    return {identical == 1000 && s1 < s0,
            fmt::format("{}/1000 zero-weight outputs bit-identical; held-out 6 h RMSE {:.4f} -> {:.4f} with oracle forcing",
                        identical, std::sqrt(s0 / static_cast<double>(test.n_times() - 2)),
                        std::sqrt(s1 / static_cast<double>(test.n_times() - 2)))};
}

Outcome bias_correction() {
    const auto all = synthetic_grid(15, 2400);
    auto m = GridForecaster::create(all, 16, 15);
    GridTrainOptions o;
    o.steps = 200;
    o.seed = 15;
    rollout_train(m, all, make_loss_config(all), o);
    std::vector<std::size_t> issues;
    for (std::size_t i = 1; i + 40 < all.n_times(); i += 2) issues.push_back(i);
    const auto archive = forecast_archive(m, all, issues, 40);
    std::vector<std::size_t> cells(all.spec().n_cells());
    for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = c;
    const std::vector<std::string> vars{"u10", "v10"};
    const auto bias = fit_bias_correction(archive, vars, cells, 1);

    double worst_coef = 0.0;
    std::size_t increases = 0, triples = 0;
    const double n = static_cast<double>(issues.size());
    for (std::size_t l = 0; l < archive.lead_hours.size(); ++l)
        for (std::size_t v = 0; v < vars.size(); ++v)
            for (std::size_t c : cells) {
                const auto r = static_cast<Eigen::Index>(v), col = static_cast<Eigen::Index>(c);
                double mx = 0.0, my = 0.0;
                for (std::size_t i = 0; i < issues.size(); ++i) {
                    mx += archive.raw[i][l](r, col) / n;
                    my += archive.target[i][l](r, col) / n;
                }
                double sxy = 0.0, sxx = 0.0;
                for (std::size_t i = 0; i < issues.size(); ++i) {
                    const double dx = archive.raw[i][l](r, col) - mx;
                    sxy += dx * (archive.target[i][l](r, col) - my);
                    sxx += dx * dx;
                }
                const double beta = sxx > 0.0 ? sxy / sxx : 0.0;
                const double alpha = my - beta * mx;
                const BiasKey key{archive.lead_hours[l], vars[v], c};
                const auto& fit = bias.at(key);
                worst_coef = std::max({worst_coef, std::abs(fit.alpha - alpha), std::abs(fit.beta - beta)});
                double before = 0.0, after = 0.0;
                for (std::size_t i = 0; i < issues.size(); ++i) {
                    const double raw = archive.raw[i][l](r, col), truth = archive.target[i][l](r, col);
                    before += (raw - truth) * (raw - truth);
                    const double fixed = apply_bias_correction(raw, key, bias);
                    after += (fixed - truth) * (fixed - truth);
                }
                increases += after > before * (1.0 + 1e-12);
                ++triples;
            }
    return {worst_coef <= 1e-10 && increases == 0,
            fmt::format("max coefficient deviation {:.1e} (<= 1e-10); MSE increased on {}/{} (lead, variable, cell) triples",
                        worst_coef, increases, triples)};
}

Outcome hybrid_crossover() {
    // Errors at three locations and ten issues per 6-hourly lead: the model
    // is worse than the baseline through 30 h (with a dip at 12 h) and
    // better from 36 h on.
    std::mt19937_64 rng(36);
    std::normal_distribution<double> z;
    std::vector<int> leads;
    std::vector<double> rm, rb;
    for (int lead = 6; lead <= 240; lead += 6) {
        const double base_scale = 1.0 + 0.01 * lead;
        const double ratio = lead <= 30 ? (lead == 12 ? 0.95 : 1.3) : 0.75;
        double sm = 0.0, sb = 0.0;
        for (int loc = 0; loc < 3; ++loc) {
            std::vector<double> em, eb, zero(10, 0.0);
            for (int i = 0; i < 10; ++i) {
                const double e = base_scale * (1.0 + 0.1 * z(rng));
                eb.push_back(e * (i % 2 ? 1 : -1));
                em.push_back(ratio * e * (i % 3 ? 1 : -1));
            }
            sm += rmse(em, zero) / 3.0;
            sb += rmse(eb, zero) / 3.0;
        }
        leads.push_back(lead);
        rm.push_back(sm);
        rb.push_back(sb);
    }
    const auto rep = skill_from_rmse(leads, rm, rb);
    double worst = 0.0;
    for (const auto& s : rep.leads) worst = std::max(worst, std::abs(s.improvement - (1.0 - s.normalized_rmse)));
    const bool cross = rep.crossover_lead && *rep.crossover_lead == 36;
    return {cross && worst <= 1e-12,
            fmt::format("crossover {} (expected 36 h); max |improvement - (1 - normalized)| {:.1e} (<= 1e-12)",
                        rep.crossover_lead ? std::to_string(*rep.crossover_lead) + " h" : std::string("none"), worst)};
}

Outcome pipeline_determinism() {
    const auto a = harness::fresh_dir("accept_a"), b = harness::fresh_dir("accept_b");
    const auto ra = harness::run_pipeline(a, 21);
    if (ra.code != 0) return {false, ra.err};
    const auto rb = harness::run_pipeline(b, 21);
    if (rb.code != 0) return {false, rb.err};
    const auto sa = read_file(a / "report" / "skill.csv"), sb = read_file(b / "report" / "skill.csv");
    const bool same = sa == sb && !sa.empty();
    return {same, fmt::format("skill.csv ({} bytes) {} across two --jobs 1 runs", sa.size(),
                              same ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main() {
    init_logging();
    criterion(1, "econometric recovery", 10, econometric_recovery);
    criterion(2, "classification fidelity", 30, classification_fidelity);
    criterion(3, "EEMD reconstruction", 60, eemd_reconstruction);
    criterion(4, "gradient correctness", 120, gradient_corners);
    criterion(5, "short-term skill", 600, short_term_skill);
    criterion(6, "randomized-interval ensemble", 0, randomized_intervals);
    criterion(7, "weighted-loss algebra", 1, loss_algebra);
    criterion(8, "rollout training", 600, rollout_training);
    criterion(9, "forcing-input equivalence", 300, forcing_equivalence);
    criterion(10, "bias correction", 0, bias_correction);
    criterion(11, "hybrid evaluation", 0, hybrid_crossover);
    criterion(12, "end-to-end determinism", 0, pipeline_determinism);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures;
}
