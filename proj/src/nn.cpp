#include "ventus/nn.hpp"

#include <cmath>
#include <cstring>

#include "ventus/error.hpp"

namespace ventus::nn {

std::size_t ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    for (const auto& p : params_)
        if (p.name == name) throw ValidationError("duplicate parameter block '" + name + "'");
    params_.push_back({std::move(name), Mat::Zero(rows, cols), Mat::Zero(rows, cols)});
    return params_.size() - 1;
}

const Param* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.setZero();
}

void ParamStore::set_zero() {
    for (auto& p : params_) p.value.setZero();
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

double& ParamStore::value_at(std::size_t flat) {
    for (auto& p : params_) {
        const auto sz = static_cast<std::size_t>(p.value.size());
        if (flat < sz) return p.value.data()[flat];
        flat -= sz;
    }
    throw ValidationError("parameter index out of range");
}

double ParamStore::grad_at(std::size_t flat) const {
    for (const auto& p : params_) {
        const auto sz = static_cast<std::size_t>(p.grad.size());
        if (flat < sz) return p.grad.data()[flat];
        flat -= sz;
    }
    throw ValidationError("parameter index out of range");
}

bool ParamStore::identical(const ParamStore& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& a = params_[i].value;
        const auto& b = other.params_[i].value;
        if (params_[i].name != other.params_[i].name || a.rows() != b.rows() || a.cols() != b.cols()) return false;
        if (std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0) return false;
    }
    return true;
}

void init_uniform_fan_in(Param& w, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.value.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < w.value.cols(); ++j)
        for (Eigen::Index i = 0; i < w.value.rows(); ++i) w.value(i, j) = u(rng);
}

Dense Dense::create(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out) {
    Dense d;
    d.in = in;
    d.out = out;
    d.w = ps.add(name + ".w", out, in);
    d.b = ps.add(name + ".b", out, 1);
    return d;
}

void Dense::init(ParamStore& ps, std::mt19937_64& rng) const {
    init_uniform_fan_in(ps[w], rng);
    ps[b].value.setZero();
}

Mat Dense::forward(const ParamStore& ps, const Mat& x) const {
    if (x.rows() != in)
        throw ShapeError("dense '" + ps[w].name + "' expects " + std::to_string(in) + " inputs, got " +
                         std::to_string(x.rows()));
    Mat y = ps[w].value * x;
    y.colwise() += ps[b].value.col(0);
    return y;
}

void Dense::backward_params(ParamStore& ps, const Mat& x, const Mat& dy) const {
    ps[w].grad.noalias() += dy * x.transpose();
    ps[b].grad.col(0) += dy.rowwise().sum();
}

Mat Dense::backward(ParamStore& ps, const Mat& x, const Mat& dy) const {
    backward_params(ps, x, dy);
    return ps[w].value.transpose() * dy;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, Eigen::Index dim) {
    LayerNorm ln;
    ln.dim = dim;
    ln.gamma = ps.add(name + ".gamma", dim, 1);
    ln.beta = ps.add(name + ".beta", dim, 1);
    return ln;
}

void LayerNorm::init(ParamStore& ps) const {
    ps[gamma].value.setOnes();
    ps[beta].value.setZero();
}

Mat LayerNorm::forward(const ParamStore& ps, const Mat& x, Cache* cache) const {
    const double n = static_cast<double>(x.rows());
    const Eigen::RowVectorXd mean = x.colwise().sum() / n;
    Mat xc = x.rowwise() - mean;
    const Eigen::RowVectorXd var = xc.array().square().colwise().sum() / n;
    const Eigen::RowVectorXd inv = (var.array() + eps).rsqrt();
    Mat xhat = xc.array().rowwise() * inv.array();
    Mat y = (xhat.array().colwise() * ps[gamma].value.col(0).array()).matrix();
    y.colwise() += ps[beta].value.col(0);
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = inv;
    }
    return y;
}

Mat LayerNorm::backward(ParamStore& ps, const Cache& c, const Mat& dy) const {
    ps[gamma].grad.col(0) += (dy.array() * c.xhat.array()).rowwise().sum().matrix();
    ps[beta].grad.col(0) += dy.rowwise().sum();
    const Mat dxhat = dy.array().colwise() * ps[gamma].value.col(0).array();
    const double n = static_cast<double>(dy.rows());
    const Eigen::RowVectorXd mean_d = dxhat.colwise().sum() / n;
    const Eigen::RowVectorXd mean_dx = (dxhat.array() * c.xhat.array()).colwise().sum() / n;
    Mat dx = dxhat.rowwise() - mean_d;
    dx -= (c.xhat.array().rowwise() * mean_dx.array()).matrix();
    return dx.array().rowwise() * c.inv_std.array();
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
    Mat m(rows, cols);
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = keep(rng) ? scale : 0.0;
    return m;
}

ResidualBlock ResidualBlock::create(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                                    Eigen::Index out, bool layer_norm, double dropout) {
    ResidualBlock r;
    r.hidden = Dense::create(ps, name + ".hidden", in, hidden);
    r.output = Dense::create(ps, name + ".output", hidden, out);
    r.skip = Dense::create(ps, name + ".skip", in, out);
    // Normalizing a single output would pin it to the shift parameter.
    r.use_layer_norm = layer_norm && out > 1;
    if (r.use_layer_norm) r.norm = LayerNorm::create(ps, name + ".norm", out);
    r.dropout = dropout;
    return r;
}

void ResidualBlock::init(ParamStore& ps, std::mt19937_64& rng) const {
    hidden.init(ps, rng);
    output.init(ps, rng);
    skip.init(ps, rng);
    if (use_layer_norm) norm.init(ps);
}

Mat ResidualBlock::forward(const ParamStore& ps, const Mat& x, bool training, std::mt19937_64* rng,
                           Cache* cache) const {
    Mat pre = hidden.forward(ps, x);
    Mat act = pre.cwiseMax(0.0);
    Mat o = output.forward(ps, act);
    Mat mask;
    if (training && dropout > 0.0) {
        mask = dropout_mask(o.rows(), o.cols(), dropout, *rng);
        o = o.cwiseProduct(mask);
    }
    o += skip.forward(ps, x);
    if (use_layer_norm) o = norm.forward(ps, o, cache ? &cache->ln : nullptr);
    if (cache) {
        cache->x = x;
        cache->pre = std::move(pre);
        cache->act = std::move(act);
        cache->mask = std::move(mask);
    }
    return o;
}

Mat ResidualBlock::backward(ParamStore& ps, const Cache& c, const Mat& dy, bool need_dx) const {
    const Mat ds = use_layer_norm ? norm.backward(ps, c.ln, dy) : dy;
    Mat d_out = c.mask.size() ? Mat(ds.cwiseProduct(c.mask)) : ds;
    const Mat d_act = output.backward(ps, c.act, d_out);
    const Mat d_pre = (c.pre.array() > 0.0).select(d_act, 0.0);
    if (!need_dx) {
        skip.backward_params(ps, c.x, ds);
        hidden.backward_params(ps, c.x, d_pre);
        return {};
    }
    Mat dx = skip.backward(ps, c.x, ds);
    dx += hidden.backward(ps, c.x, d_pre);
    return dx;
}

void hash_relu_pattern(const Mat& pre, std::uint64_t& h) {
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
        h ^= pre.data()[i] > 0.0 ? 0x9e3779b97f4a7c15ull : 0x2545f4914f6cdd1dull;
        h *= 0x100000001b3ull;
        h ^= h >> 29;
    }
}

Adam::Adam(const ParamStore& ps, AdamOptions opts) : opts_(opts) {
    for (const auto& p : ps.blocks()) {
        m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    }
}

void Adam::step(ParamStore& ps) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& p = ps[i];
        m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * p.grad;
        v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * p.grad.cwiseAbs2();
        p.value.array() -= opts_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opts_.eps);
    }
}

double masked_mse(const Mat& pred, const Mat& target, const Mat& mask, Mat* dpred) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols() || mask.rows() != pred.rows() ||
        mask.cols() != pred.cols())
        throw ShapeError("loss operands differ in shape");
    const double count = (mask.array() != 0.0).count();
    if (count == 0) throw ValidationError("loss mask selects no entries");
    const Mat diff = (mask.array() != 0.0).select(pred - target, 0.0);
    if (dpred) *dpred = diff * (2.0 / count);
    return diff.squaredNorm() / count;
}

}  // namespace ventus::nn
