#include "ventus/tide.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <spdlog/spdlog.h>

#include "ventus/config_text.hpp"
#include "ventus/error.hpp"
#include "ventus/io_util.hpp"
#include "ventus/model_io.hpp"

namespace ventus {

using nn::Mat;

namespace {

template <class T>
bool one_of(T v, std::initializer_list<T> allowed) {
    return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
    return std::mt19937_64(seq);
}

}  // namespace

void TideConfig::validate() const {
    auto bad = [](const std::string& what) { throw ValidationError("TiDE config: " + what); };
    if (preset.empty()) {
        if (!one_of(hidden_size, {256, 512, 1024})) bad("hidden_size must be one of 256, 512, 1024");
        if (!one_of(n_encoder_layers, {1, 2, 3})) bad("n_encoder_layers must be 1, 2 or 3");
        if (!one_of(n_decoder_layers, {1, 2, 3})) bad("n_decoder_layers must be 1, 2 or 3");
        if (!one_of(dropout, {0.0, 0.1, 0.2, 0.3, 0.5})) bad("dropout must be one of 0, 0.1, 0.2, 0.3, 0.5");
    } else if (preset == "prose") {
        if (hidden_size != 128 || n_encoder_layers != 4 || n_decoder_layers != 4 || dropout != 0.1)
            bad("the prose preset fixes hidden_size 128, 4 encoder and 4 decoder layers, dropout 0.1");
    } else {
        bad("unknown preset '" + preset + "'");
    }
    if (!one_of(decoder_output_dim, {4, 8, 16, 32})) bad("decoder_output_dim must be one of 4, 8, 16, 32");
    if (!one_of(temporal_decoder_hidden, {32, 64, 128})) bad("temporal_decoder_hidden must be one of 32, 64, 128");
    if (!(learning_rate >= 1e-5 && learning_rate <= 1e-2)) bad("learning_rate must lie in [1e-5, 1e-2]");
    if (interval_set.empty()) bad("interval_set is empty");
    std::set<int> seen;
    for (int iv : interval_set) {
        if (!one_of(iv, {6, 12, 24, 48})) bad("intervals must be drawn from 6, 12, 24, 48");
        if (!seen.insert(iv).second) bad("duplicate interval " + std::to_string(iv));
    }
    if (lookback < 1 || horizon < 1) bad("lookback and horizon must be positive");
    if (projected_covariate_dim < 1) bad("projected_covariate_dim must be positive");
    if (batch_size < 1 || max_epochs < 1 || patience < 1) bad("batch_size, max_epochs and patience must be positive");
    if (!(outlier_threshold > 0.0) || outlier_window < 1) bad("outlier rule needs a positive threshold and window");
}

TideConfig TideConfig::prose() {
    TideConfig c;
    c.preset = "prose";
    c.hidden_size = 128;
    c.n_encoder_layers = 4;
    c.n_decoder_layers = 4;
    c.dropout = 0.1;
    c.learning_rate = 1e-3;
    return c;
}

std::string TideConfig::to_text() const {
    std::ostringstream o;
    o << "lookback = " << lookback << "\n"
      << "horizon = " << horizon << "\n"
      << "hidden_size = " << hidden_size << "\n"
      << "n_encoder_layers = " << n_encoder_layers << "\n"
      << "n_decoder_layers = " << n_decoder_layers << "\n"
      << "decoder_output_dim = " << decoder_output_dim << "\n"
      << "temporal_decoder_hidden = " << temporal_decoder_hidden << "\n"
      << "projected_covariate_dim = " << projected_covariate_dim << "\n"
      << "dropout = " << format_double(dropout) << "\n"
      << "layer_norm = " << (layer_norm ? "true" : "false") << "\n"
      << "learning_rate = " << format_double(learning_rate) << "\n"
      << "revin = " << (revin ? "true" : "false") << "\n"
      << "interval_set = " << join_ints(interval_set) << "\n"
      << "seed = " << seed << "\n"
      << "preset = " << preset << "\n"
      << "batch_size = " << batch_size << "\n"
      << "max_epochs = " << max_epochs << "\n"
      << "patience = " << patience << "\n"
      << "outlier_threshold = " << format_double(outlier_threshold) << "\n"
      << "outlier_window = " << outlier_window << "\n";
    return o.str();
}

namespace {

// Applies top-level key = value entries; sections are skipped.
TideConfig config_from_ptree(const boost::property_tree::ptree& pt) {
    TideConfig c;
    for (const auto& [key, node] : pt) {
        if (!node.empty()) continue;
        const std::string v(trim(node.data()));
        if (key == "lookback") c.lookback = config_int(key, v);
        else if (key == "horizon") c.horizon = config_int(key, v);
        else if (key == "hidden_size") c.hidden_size = config_int(key, v);
        else if (key == "n_encoder_layers") c.n_encoder_layers = config_int(key, v);
        else if (key == "n_decoder_layers") c.n_decoder_layers = config_int(key, v);
        else if (key == "decoder_output_dim") c.decoder_output_dim = config_int(key, v);
        else if (key == "temporal_decoder_hidden") c.temporal_decoder_hidden = config_int(key, v);
        else if (key == "projected_covariate_dim") c.projected_covariate_dim = config_int(key, v);
        else if (key == "dropout") c.dropout = config_real(key, v);
        else if (key == "layer_norm") c.layer_norm = config_bool(key, v);
        else if (key == "learning_rate") c.learning_rate = config_real(key, v);
        else if (key == "revin") c.revin = config_bool(key, v);
        else if (key == "interval_set") {
            c.interval_set.clear();
            for (const auto& f : split(v, ',')) c.interval_set.push_back(config_int(key, std::string(trim(f))));
        } else if (key == "seed") c.seed = static_cast<std::uint64_t>(config_int(key, v));
        else if (key == "preset") c.preset = v;
        else if (key == "batch_size") c.batch_size = config_int(key, v);
        else if (key == "max_epochs") c.max_epochs = config_int(key, v);
        else if (key == "patience") c.patience = config_int(key, v);
        else if (key == "outlier_threshold") c.outlier_threshold = config_real(key, v);
        else if (key == "outlier_window") c.outlier_window = config_int(key, v);
        else throw ValidationError("unknown TiDE config key '" + key + "'");
    }
    if (c.preset == "prose") {
        // Keys not given explicitly take the preset values.
        const TideConfig p = TideConfig::prose();
        if (!pt.get_child_optional("hidden_size")) c.hidden_size = p.hidden_size;
        if (!pt.get_child_optional("n_encoder_layers")) c.n_encoder_layers = p.n_encoder_layers;
        if (!pt.get_child_optional("n_decoder_layers")) c.n_decoder_layers = p.n_decoder_layers;
        if (!pt.get_child_optional("dropout")) c.dropout = p.dropout;
    }
    c.validate();
    return c;
}


}  // namespace

TideConfig TideConfig::from_text(const std::string& text) { return config_from_ptree(parse_ini(text)); }

TideConfig load_tide_config(const std::filesystem::path& path) { return TideConfig::from_text(read_file(path)); }

// ---------------------------------------------------------------- scaling

Eigen::MatrixXd Scaler::transform(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != size())
        throw ShapeError("scaler has " + std::to_string(size()) + " features, input has " + std::to_string(x.cols()));
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - mean[j]) / scale[j];
    return out;
}

Normalized normalize(const Eigen::MatrixXd& x, const std::vector<std::string>& names, double threshold, int window) {
    if (static_cast<std::size_t>(x.cols()) != names.size()) throw ShapeError("feature names do not match columns");
    if (x.rows() < 2) throw ValidationError("normalization needs at least two samples");
    if (!x.allFinite()) throw NonFiniteError("normalization input has non-finite values");
    Normalized r;
    r.values = x;
    r.scaler.names = names;
    r.replaced.assign(names.size(), 0);
    const Eigen::Index n = x.rows();
    const Eigen::Index half = window / 2;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const Eigen::VectorXd col = x.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().mean());
        if (sd == 0.0) throw ValidationError("feature '" + names[j] + "' has zero variance");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs((col(i) - mean) / sd) <= threshold) continue;
            const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
            const Eigen::Index hi = std::min<Eigen::Index>(n, lo + window);
            std::vector<double> w(col.data() + lo, col.data() + hi);
            std::sort(w.begin(), w.end());
            const std::size_t m = w.size();
            r.values(i, j) = m % 2 ? w[m / 2] : 0.5 * (w[m / 2 - 1] + w[m / 2]);
            ++r.replaced[j];
        }
        const double m2 = r.values.col(j).mean();
        const double s2 = std::sqrt((r.values.col(j).array() - m2).square().mean());
        if (s2 == 0.0) throw ValidationError("feature '" + names[j] + "' has zero variance after outlier removal");
        r.scaler.mean.push_back(m2);
        r.scaler.scale.push_back(s2);
        r.values.col(j) = (r.values.col(j).array() - m2) / s2;
    }
    return r;
}

// ---------------------------------------------------------------- model

std::vector<double> TideModel::forward(const ForecastTask& task, int interval) const {
    const auto& cfg = config();
    const int L = cfg.lookback, H = cfg.horizon, C = net.n_covariates();
    if (static_cast<int>(task.history.size()) != L)
        throw ShapeError("history has " + std::to_string(task.history.size()) + " values, lookback is " + std::to_string(L));
    if (task.covariates.cols() != C || task.covariates.rows() < L + H)
        throw ShapeError("covariates must have " + std::to_string(C) + " columns and cover lookback + horizon rows");
    if (static_cast<int>(task.statics.size()) != net.n_statics()) throw ShapeError("wrong number of static attributes");
    TideNet::Batch b;
    b.history.resize(L, 1);
    for (int i = 0; i < L; ++i) b.history(i, 0) = y_scaler.transform(task.history[i], 0);
    b.covariates.resize(C, L + H);
    if (C > 0) b.covariates = cov_scaler.transform(task.covariates.topRows(L + H)).transpose();
    b.statics.resize(net.n_statics() + 1, 1);
    for (int i = 0; i < net.n_statics(); ++i) b.statics(i, 0) = task.statics[i];
    b.statics(net.n_statics(), 0) = interval_covariate(interval);
    const Mat out = net.forward(b);
    std::vector<double> y(H);
    for (int t = 0; t < H; ++t) y[t] = y_scaler.inverse(out(t, 0), 0);
    return y;
}

SplitOrigins split_origins(std::size_t length, int lookback, int horizon) {
    SplitOrigins s;
    const std::size_t train_end = length * 70 / 100;
    const std::size_t val_end = length * 85 / 100;
    const std::size_t L = lookback, H = horizon;
    if (length < L + H) return s;
    for (std::size_t o = L - 1; o + H < length; ++o) {
        if (o + H < train_end) s.train.push_back(o);
        else if (o + 1 >= train_end && o + H < val_end) s.validation.push_back(o);
        else if (o + 1 >= val_end) s.test.push_back(o);
    }
    return s;
}

WindowSet make_windows(const TideModel& model, const TideSeries& s, const std::vector<std::size_t>& origins) {
    const auto& cfg = model.config();
    const Eigen::Index L = cfg.lookback, H = cfg.horizon, C = model.net.n_covariates();
    const Eigen::Index N = static_cast<Eigen::Index>(origins.size());
    if (s.cov.cols() != C) throw ShapeError("series covariates do not match the model");
    if (static_cast<int>(s.statics.size()) != model.net.n_statics()) throw ShapeError("series statics do not match the model");
    WindowSet w;
    w.history.resize(L, N);
    w.target.resize(H, N);
    w.covariates.resize(C, (L + H) * N);
    w.statics.resize(model.net.n_statics(), N);
    const Eigen::MatrixXd cov = C > 0 ? model.cov_scaler.transform(s.cov) : s.cov;
    for (Eigen::Index k = 0; k < N; ++k) {
        const Eigen::Index o = static_cast<Eigen::Index>(origins[k]);
        if (o < L - 1 || o + H >= static_cast<Eigen::Index>(s.y.size()) || o + H >= s.cov.rows())
            throw ValidationError("window origin " + std::to_string(o) + " out of range");
        for (Eigen::Index i = 0; i < L; ++i) w.history(i, k) = model.y_scaler.transform(s.y[o - L + 1 + i], 0);
        for (Eigen::Index t = 0; t < H; ++t) w.target(t, k) = model.y_scaler.transform(s.y[o + 1 + t], 0);
        if (C > 0) w.covariates.block(0, k * (L + H), C, L + H) = cov.middleRows(o - L + 1, L + H).transpose();
        for (int i = 0; i < model.net.n_statics(); ++i) w.statics(i, k) = s.statics[i];
    }
    return w;
}

bool EarlyStopping::update(double loss) {
    ++epoch_;
    if (epoch_ == 1 || loss < best_) {
        best_ = loss;
        best_epoch_ = epoch_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

namespace {

TideNet::Batch gather(const WindowSet& w, const std::vector<Eigen::Index>& idx, Eigen::Index L, Eigen::Index H,
                      const std::vector<int>& intervals, Mat* target, Mat* mask) {
    const Eigen::Index B = static_cast<Eigen::Index>(idx.size());
    TideNet::Batch b;
    b.history.resize(L, B);
    b.covariates.resize(w.covariates.rows(), (L + H) * B);
    b.statics.resize(w.statics.rows() + 1, B);
    target->resize(H, B);
    mask->setZero(H, B);
    for (Eigen::Index k = 0; k < B; ++k) {
        const Eigen::Index j = idx[k];
        b.history.col(k) = w.history.col(j);
        if (w.covariates.rows() > 0) b.covariates.middleCols(k * (L + H), L + H) = w.covariates.middleCols(j * (L + H), L + H);
        b.statics.col(k).head(w.statics.rows()) = w.statics.col(j);
        b.statics(w.statics.rows(), k) = interval_covariate(intervals[k]);
        target->col(k) = w.target.col(j);
        mask->col(k).head(std::min<Eigen::Index>(intervals[k], H)).setOnes();
    }
    return b;
}

std::string first_bad_block(const nn::ParamStore& ps) {
    for (const auto& p : ps.blocks())
        if (!p.value.allFinite() || !p.grad.allFinite()) return p.name;
    return "(none)";
}

double validation_loss(const TideModel& model, const WindowSet& val) {
    const auto& cfg = model.config();
    const Eigen::Index L = cfg.lookback, H = cfg.horizon;
    const auto& set = cfg.interval_set;
    double sq = 0.0, count = 0.0;
    const Eigen::Index chunk = 256;
    for (Eigen::Index start = 0; start < val.size(); start += chunk) {
        std::vector<Eigen::Index> idx;
        std::vector<int> iv;
        for (Eigen::Index j = start; j < std::min(val.size(), start + chunk); ++j) {
            idx.push_back(j);
            iv.push_back(set[static_cast<std::size_t>(j) % set.size()]);
        }
        Mat target, mask;
        const auto b = gather(val, idx, L, H, iv, &target, &mask);
        const Mat out = model.net.forward(b);
        const double c = mask.sum();
        sq += nn::masked_mse(out, target, mask, nullptr) * c;
        count += c;
    }
    return sq / count;
}

}  // namespace

TrainReport fit_windows(TideModel& model, const WindowSet& train, const WindowSet& val) {
    const auto cfg = model.config();
    if (train.size() == 0) throw ValidationError("no training windows");
    if (val.size() == 0) throw ValidationError("no validation windows");
    const Eigen::Index L = cfg.lookback, H = cfg.horizon;
    auto shuffle_rng = stream(cfg.seed, 1);
    auto interval_rng = stream(cfg.seed, 2);
    auto dropout_rng = stream(cfg.seed, 3);
    std::uniform_int_distribution<std::size_t> pick(0, cfg.interval_set.size() - 1);

    auto& ps = model.net.params();
    nn::Adam adam(ps, {.learning_rate = cfg.learning_rate});
    nn::ParamStore best = ps;
    EarlyStopping stopper(cfg.patience);
    TrainReport rep;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<int> iv(idx.size());
            for (auto& v : iv) v = cfg.interval_set[pick(interval_rng)];
            Mat target, mask;
            const auto b = gather(train, idx, L, H, iv, &target, &mask);
            ps.zero_grad();
            const double loss = model.net.loss_and_grad(b, target, mask, true, &dropout_rng);
            ++batches;
            if (!std::isfinite(loss) || first_bad_block(ps) != "(none)")
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batches) + "; offending parameter block: " + first_bad_block(ps));
            adam.step(ps);
            total += loss;
        }
        rep.train_loss.push_back(total / batches);
        const double vl = validation_loss(model, val);
        if (!std::isfinite(vl))
            throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch) +
                                 "; offending parameter block: " + first_bad_block(ps));
        rep.validation_loss.push_back(vl);
        rep.epochs_run = epoch;
        if (stopper.update(vl)) best = ps;
        spdlog::debug("epoch {} train {:.6g} validation {:.6g}", epoch, rep.train_loss.back(), vl);
        if (stopper.should_stop()) {
            rep.stopped_early = true;
            break;
        }
    }
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].value = best[i].value;
    rep.best_epoch = stopper.best_epoch();
    rep.best_validation_loss = stopper.best();
    return rep;
}

namespace {

bool window_finite(const TideSeries& s, std::size_t o, int L, int H) {
    for (std::size_t i = o + 1 - L; i <= o + H; ++i)
        if (!std::isfinite(s.y[i]) || !s.cov.row(static_cast<Eigen::Index>(i)).allFinite()) return false;
    return true;
}

}  // namespace

std::pair<TideModel, TrainReport> train_tide(const std::vector<TideSeries>& data, const TideConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw ValidationError("no training series");
    const int max_iv = *std::max_element(cfg.interval_set.begin(), cfg.interval_set.end());
    if (cfg.horizon < max_iv)
        throw ValidationError("horizon " + std::to_string(cfg.horizon) + " is shorter than the largest interval " +
                              std::to_string(max_iv));
    const Eigen::Index C = data[0].cov.cols();
    const int S = static_cast<int>(data[0].statics.size());
    for (const auto& s : data) {
        if (s.cov.cols() != C || static_cast<int>(s.statics.size()) != S || s.cov_names.size() != std::size_t(C))
            throw ShapeError("series disagree on covariate or static layout");
        if (s.cov.rows() != static_cast<Eigen::Index>(s.y.size()))
            throw ShapeError("covariate rows must match the series length");
    }

    // Scalers come from the training portion of every series, with outliers
    // replaced in a cleaned copy used for the training windows.
    std::vector<std::size_t> train_end(data.size());
    Eigen::Index rows = 0;
    for (std::size_t k = 0; k < data.size(); ++k) {
        train_end[k] = data[k].y.size() * 70 / 100;
        rows += static_cast<Eigen::Index>(train_end[k]);
    }
    Eigen::MatrixXd yall(rows, 1), call(rows, C);
    std::vector<Eigen::Index> keep;
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < data.size(); ++k)
        for (std::size_t i = 0; i < train_end[k]; ++i, ++r) {
            yall(r, 0) = data[k].y[i];
            call.row(r) = data[k].cov.row(static_cast<Eigen::Index>(i));
            if (std::isfinite(yall(r, 0)) && call.row(r).allFinite()) keep.push_back(r);
        }
    Eigen::MatrixXd yk(keep.size(), 1), ck(keep.size(), C);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        yk.row(static_cast<Eigen::Index>(i)) = yall.row(keep[i]);
        ck.row(static_cast<Eigen::Index>(i)) = call.row(keep[i]);
    }
    if (yk.rows() >= 2 && (yk.array() == yk(0, 0)).all()) {
        // Nothing to learn: all-zero parameters map any history to the
        // constant, which is also what persistence predicts.
        TideModel model{TideNet(cfg, static_cast<int>(C), S), Scaler{{"target"}, {yk(0, 0)}, {1.0}}, {}};
        model.net.params().set_zero();
        if (C > 0) model.cov_scaler = normalize(ck, data[0].cov_names, cfg.outlier_threshold, cfg.outlier_window).scaler;
        spdlog::info("constant training target {}; using the zero-parameter model", yk(0, 0));
        return {std::move(model), TrainReport{}};
    }
    const auto ny = normalize(yk, {"target"}, cfg.outlier_threshold, cfg.outlier_window);
    TideModel model{TideNet(cfg, static_cast<int>(C), S), ny.scaler, {}};
    std::optional<Normalized> nc;
    if (C > 0) {
        nc = normalize(ck, data[0].cov_names, cfg.outlier_threshold, cfg.outlier_window);
        model.cov_scaler = nc->scaler;
    }

    std::vector<TideSeries> cleaned = data;
    for (std::size_t i = 0, k = 0, base = 0; i < keep.size(); ++i) {
        Eigen::Index g = keep[i];
        while (g >= static_cast<Eigen::Index>(base + train_end[k])) base += train_end[k++];
        const std::size_t t = static_cast<std::size_t>(g) - base;
        cleaned[k].y[t] = ny.scaler.inverse(ny.values(static_cast<Eigen::Index>(i), 0), 0);
        for (Eigen::Index j = 0; j < C; ++j)
            cleaned[k].cov(static_cast<Eigen::Index>(t), j) = nc->scaler.inverse(nc->values(static_cast<Eigen::Index>(i), j), j);
    }

    WindowSet train, val;
    auto append = [](WindowSet& dst, const WindowSet& src) {
        if (dst.size() == 0) {
            dst = src;
            return;
        }
        auto cat = [](Mat& a, const Mat& b) {
            Mat c(a.rows(), a.cols() + b.cols());
            c << a, b;
            a = std::move(c);
        };
        cat(dst.history, src.history);
        cat(dst.covariates, src.covariates);
        cat(dst.statics, src.statics);
        cat(dst.target, src.target);
    };
    for (const auto& s : cleaned) {
        const auto split = split_origins(s.y.size(), cfg.lookback, cfg.horizon);
        std::vector<std::size_t> tr, va;
        for (auto o : split.train)
            if (window_finite(s, o, cfg.lookback, cfg.horizon)) tr.push_back(o);
        for (auto o : split.validation)
            if (window_finite(s, o, cfg.lookback, cfg.horizon)) va.push_back(o);
        append(train, make_windows(model, s, tr));
        append(val, make_windows(model, s, va));
    }
    auto rep = fit_windows(model, train, val);
    return {std::move(model), rep};
}

// ---------------------------------------------------------------- prediction

std::vector<double> predict_chain(const TideModel& model, const ForecastTask& task, const std::vector<int>& chain) {
    const auto& cfg = model.config();
    const int L = cfg.lookback, H = cfg.horizon;
    if (chain.empty()) throw ValidationError("empty interval chain");
    std::vector<double> hist = task.history;
    std::vector<double> traj;
    Eigen::Index offset = 0;
    for (int step : chain) {
        if (step < 1 || step > H)
            throw ValidationError("chain step " + std::to_string(step) + " exceeds the horizon " + std::to_string(H));
        if (task.covariates.rows() < offset + L + H)
            throw ShapeError("covariates end before the chain does: need " + std::to_string(offset + L + H) + " rows");
        ForecastTask sub{hist, task.covariates.middleRows(offset, L + H), task.statics};
        const auto pred = model.forward(sub, step);
        traj.insert(traj.end(), pred.begin(), pred.begin() + step);
        hist.insert(hist.end(), pred.begin(), pred.begin() + step);
        hist.erase(hist.begin(), hist.end() - L);
        offset += step;
    }
    return traj;
}

std::vector<double> predict_with_chains(const TideModel& model, const ForecastTask& task,
                                        const std::vector<std::vector<int>>& chains) {
    if (chains.empty()) throw ValidationError("no chains");
    std::vector<double> mean;
    for (const auto& c : chains) {
        const auto traj = predict_chain(model, task, c);
        if (mean.empty()) mean.assign(traj.size(), 0.0);
        if (traj.size() != mean.size()) throw ValidationError("chains must share the same total lead");
        for (std::size_t t = 0; t < traj.size(); ++t) mean[t] += traj[t];
    }
    for (auto& v : mean) v /= static_cast<double>(chains.size());
    return mean;
}

std::vector<std::vector<int>> sample_chains(const std::vector<int>& intervals, int target_lead, int n_chains,
                                            std::uint64_t seed) {
    if (n_chains < 1) throw ValidationError("need at least one chain");
    if (intervals.empty()) throw ValidationError("empty interval set");
    if (target_lead < 1) throw ValidationError("target lead must be positive");
    std::vector<char> reach(static_cast<std::size_t>(target_lead) + 1, 0);
    reach[0] = 1;
    for (int s = 1; s <= target_lead; ++s)
        for (int iv : intervals)
            if (iv <= s && reach[s - iv]) reach[s] = 1;
    if (!reach[target_lead]) {
        std::string feasible;
        for (int s = 1; s <= target_lead; ++s)
            if (reach[s]) feasible += (feasible.empty() ? "" : ", ") + std::to_string(s);
        throw ValidationError("lead " + std::to_string(target_lead) + " h is not a sum of intervals {" +
                              join_ints(intervals) + "}; feasible leads up to it: " +
                              (feasible.empty() ? "none" : feasible));
    }
    std::vector<int> divisors;
    for (int iv : intervals)
        if (target_lead % iv == 0) divisors.push_back(iv);
    std::mt19937_64 rng(seed);
    std::vector<std::vector<int>> chains;
    for (int c = 0; c < n_chains; ++c) {
        std::vector<int> chain;
        if (!divisors.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, divisors.size() - 1);
            const int iv = divisors[pick(rng)];
            chain.assign(static_cast<std::size_t>(target_lead / iv), iv);
        } else {
            int left = target_lead;
            while (left > 0) {
                std::vector<int> ok;
                for (int iv : intervals)
                    if (iv <= left && reach[left - iv]) ok.push_back(iv);
                std::uniform_int_distribution<std::size_t> pick(0, ok.size() - 1);
                chain.push_back(ok[pick(rng)]);
                left -= chain.back();
            }
        }
        chains.push_back(std::move(chain));
    }
    return chains;
}

RandomizedForecast randomized_iterative_predict(const TideModel& model, const ForecastTask& task, int target_lead,
                                                int n_chains, std::uint64_t seed) {
    RandomizedForecast f;
    f.chains = sample_chains(model.config().interval_set, target_lead, n_chains, seed);
    f.mean.assign(static_cast<std::size_t>(target_lead), 0.0);
    for (const auto& c : f.chains) {
        f.per_chain.push_back(predict_chain(model, task, c));
        for (std::size_t t = 0; t < f.mean.size(); ++t) f.mean[t] += f.per_chain.back()[t];
    }
    for (auto& v : f.mean) v /= static_cast<double>(f.chains.size());
    return f;
}

// ---------------------------------------------------------------- gradient check

GradCheck gradient_check(nn::ParamStore& ps, const CheckedLoss& loss, std::size_t n_samples, std::uint64_t seed,
                         double step) {
    ps.zero_grad();
    std::uint64_t base_pattern = 0;
    loss(true, &base_pattern);
    const std::size_t total = ps.scalar_count();
    std::vector<std::string> owner;
    std::vector<std::size_t> block_start;
    for (const auto& p : ps.blocks()) {
        block_start.push_back(owner.size());
        owner.insert(owner.end(), static_cast<std::size_t>(p.value.size()), p.name);
    }
    std::mt19937_64 rng(seed);
    // One index from every block first, then uniform draws; kinked draws
    // are replaced by fresh uniform ones.
    std::vector<std::size_t> queue;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto sz = static_cast<std::size_t>(ps[k].value.size());
        if (sz == 0) continue;
        std::uniform_int_distribution<std::size_t> u(0, sz - 1);
        queue.push_back(block_start[k] + u(rng));
    }
    std::uniform_int_distribution<std::size_t> any(0, total - 1);
    std::set<std::size_t> tried;
    const std::size_t want = std::min(n_samples, total);
    GradCheck g;
    std::size_t q = 0;
    while (g.checked < want && tried.size() < total) {
        std::size_t i;
        if (q < queue.size()) i = queue[q++];
        else i = any(rng);
        if (!tried.insert(i).second) continue;
        const double analytic = ps.grad_at(i);
        double& v = ps.value_at(i);
        const double orig = v;
        std::uint64_t pp = 0, pm = 0;
        v = orig + step;
        const double lp = loss(false, &pp);
        v = orig - step;
        const double lm = loss(false, &pm);
        v = orig;
        if (pp != base_pattern || pm != base_pattern) {
            ++g.kink_skips;
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * step);
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        if (g.checked == 0 || rel > g.max_rel_error) {
            g.max_rel_error = rel;
            g.worst_block = owner[i];
            spdlog::debug("gradient check {}: analytic {:.6g} numeric {:.6g}", owner[i], analytic, numeric);
        }
        ++g.checked;
    }
    return g;
}

GradCheck tide_gradient_check(TideNet& net, const TideNet::Batch& batch, const Mat& target, std::size_t n_samples,
                              std::uint64_t seed) {
    const Mat mask = Mat::Ones(target.rows(), target.cols());
    auto loss = [&](bool grad, std::uint64_t* pattern) {
        const Mat out = net.forward_pattern(batch, pattern);
        if (grad) net.loss_and_grad(batch, target, mask, false, nullptr);
        return nn::masked_mse(out, target, mask, nullptr);
    };
    return gradient_check(net.params(), loss, n_samples, seed);
}

// ---------------------------------------------------------------- files

void save_tide_models(const std::filesystem::path& path, const std::map<std::string, TideModel>& models) {
    if (models.empty()) throw ValidationError("no models to save");
    const auto& first = models.begin()->second;
    ModelContainer c;
    c.kind = "tide";
    std::string names;
    for (const auto& [name, m] : models) {
        if (name.empty() || name.find_first_of("/,=[]\n") != std::string::npos)
            throw ValidationError("model name '" + name + "' is not storable");
        if (m.config().to_text() != first.config().to_text() || m.net.n_covariates() != first.net.n_covariates() ||
            m.net.n_statics() != first.net.n_statics())
            throw ValidationError("models in one file must share a configuration");
        names += (names.empty() ? "" : ",") + name;
    }
    std::string cov_names;
    for (const auto& n : first.cov_scaler.names) cov_names += (cov_names.empty() ? "" : ",") + n;
    c.config_text = first.config().to_text() + "\n[shape]\nn_covariates = " + std::to_string(first.net.n_covariates()) +
                    "\nn_statics = " + std::to_string(first.net.n_statics()) + "\ncovariates = " + cov_names +
                    "\nmodels = " + names + "\n";
    for (const auto& [name, m] : models) {
        for (const auto& p : m.net.params().blocks()) c.blocks.emplace_back(name + "/" + p.name, p.value);
        auto vec = [](const std::vector<double>& v) {
            return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(v.data(), static_cast<Eigen::Index>(v.size()), 1));
        };
        c.blocks.emplace_back(name + "/scaler.y.mean", vec(m.y_scaler.mean));
        c.blocks.emplace_back(name + "/scaler.y.scale", vec(m.y_scaler.scale));
        c.blocks.emplace_back(name + "/scaler.cov.mean", vec(m.cov_scaler.mean));
        c.blocks.emplace_back(name + "/scaler.cov.scale", vec(m.cov_scaler.scale));
    }
    write_model(path, c);
}

std::map<std::string, TideModel> load_tide_models(const std::filesystem::path& path) {
    const auto c = read_model(path);
    if (c.kind != "tide") throw ValidationError("model file holds '" + c.kind + "', not a TiDE model");
    const auto pt = parse_ini(c.config_text);
    const TideConfig cfg = config_from_ptree(pt);
    const auto shape = pt.get_child_optional("shape");
    if (!shape) throw MissingKeyError("model file lacks the [shape] section");
    auto get = [&](const std::string& k) {
        auto v = shape->get_optional<std::string>(k);
        if (!v) throw MissingKeyError("model file lacks shape key '" + k + "'");
        return std::string(trim(*v));
    };
    const int C = config_int("n_covariates", get("n_covariates"));
    const int S = config_int("n_statics", get("n_statics"));
    std::vector<std::string> cov_names;
    if (C > 0)
        for (const auto& f : split(get("covariates"), ',')) cov_names.emplace_back(trim(f));
    std::map<std::string, TideModel> out;
    for (const auto& f : split(get("models"), ',')) {
        const std::string name(trim(f));
        TideModel m{TideNet(cfg, C, S), {}, {}};
        for (auto& p : m.net.params().blocks()) {
            const auto& b = c.block(name + "/" + p.name);
            if (b.rows() != p.value.rows() || b.cols() != p.value.cols())
                throw ShapeError("block '" + name + "/" + p.name + "' has the wrong shape");
            p.value = b;
        }
        auto vec = [&](const std::string& k) {
            const auto& b = c.block(name + "/" + k);
            return std::vector<double>(b.data(), b.data() + b.size());
        };
        m.y_scaler = {{"target"}, vec("scaler.y.mean"), vec("scaler.y.scale")};
        m.cov_scaler = {cov_names, vec("scaler.cov.mean"), vec("scaler.cov.scale")};
        if (m.y_scaler.size() != 1 || m.cov_scaler.size() != static_cast<std::size_t>(C))
            throw ShapeError("scaler blocks do not match the model shape");
        out.emplace(name, std::move(m));
    }
    return out;
}

}  // namespace ventus
