#include "ventus/tide.hpp"

#include "ventus/error.hpp"

namespace ventus {

using nn::Mat;

struct TideNet::Cache {
    Eigen::RowVectorXd mu, sigma;
    Mat yn;
    nn::ResidualBlock::Cache proj;
    Mat projected;
    std::vector<nn::ResidualBlock::Cache> enc, dec;
    nn::ResidualBlock::Cache temporal;
};

TideNet::TideNet(const TideConfig& cfg, int n_covariates, int n_statics)
    : cfg_(cfg), n_cov_(n_covariates), n_static_(n_statics) {
    cfg.validate();
    if (n_covariates < 0 || n_statics < 0) throw ShapeError("negative feature count");
    const int L = cfg.lookback, H = cfg.horizon, hid = cfg.hidden_size;
    proj_dim_ = n_cov_ > 0 ? cfg.projected_covariate_dim : 0;
    const bool ln = cfg.layer_norm;
    const double dr = cfg.dropout;
    if (n_cov_ > 0)
        proj_ = nn::ResidualBlock::create(ps_, "projection", n_cov_, cfg.temporal_decoder_hidden, proj_dim_, ln, dr);
    const Eigen::Index enc_in = L + static_cast<Eigen::Index>(L + H) * proj_dim_ + n_static_ + 1;
    for (int i = 0; i < cfg.n_encoder_layers; ++i)
        enc_.push_back(nn::ResidualBlock::create(ps_, "encoder" + std::to_string(i), i == 0 ? enc_in : hid, hid, hid,
                                                 ln, dr));
    for (int i = 0; i < cfg.n_decoder_layers; ++i) {
        const Eigen::Index out = i + 1 == cfg.n_decoder_layers ? Eigen::Index(H) * cfg.decoder_output_dim : hid;
        dec_.push_back(nn::ResidualBlock::create(ps_, "decoder" + std::to_string(i), hid, hid, out, ln, dr));
    }
    temporal_ = nn::ResidualBlock::create(ps_, "temporal", cfg.decoder_output_dim + proj_dim_,
                                          cfg.temporal_decoder_hidden, 1, ln, dr);
    global_ = nn::Dense::create(ps_, "global_skip", L, H);
    init(cfg.seed);
}

void TideNet::init(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1d1eu};
    std::mt19937_64 rng(seq);
    if (n_cov_ > 0) proj_.init(ps_, rng);
    for (const auto& b : enc_) b.init(ps_, rng);
    for (const auto& b : dec_) b.init(ps_, rng);
    temporal_.init(ps_, rng);
    global_.init(ps_, rng);
}

void TideNet::check(const Batch& b) const {
    const Eigen::Index L = cfg_.lookback, H = cfg_.horizon, B = b.history.cols();
    auto fail = [](const std::string& what) { throw ShapeError("TiDE input: " + what); };
    if (b.history.rows() != L) fail("history has " + std::to_string(b.history.rows()) + " rows, expected " + std::to_string(L));
    if (b.covariates.rows() != n_cov_) fail("covariates have " + std::to_string(b.covariates.rows()) + " features, expected " + std::to_string(n_cov_));
    if (b.covariates.cols() != (L + H) * B && n_cov_ > 0) fail("covariates must span lookback + horizon for every sample");
    if (b.statics.rows() != n_static_ + 1 || b.statics.cols() != B) fail("statics must be (attributes + 1) x batch");
}

Mat TideNet::run(const Batch& b, bool training, std::mt19937_64* rng, Cache* c) const {
    check(b);
    const Eigen::Index L = cfg_.lookback, H = cfg_.horizon, B = b.history.cols(), P = proj_dim_;
    const Eigen::Index D = cfg_.decoder_output_dim;

    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(B), sigma = Eigen::RowVectorXd::Ones(B);
    Mat yn = b.history;
    if (cfg_.revin) {
        mu = b.history.colwise().mean();
        const Mat centered = b.history.rowwise() - mu;
        sigma = ((centered.array().square().colwise().sum() / double(L)) + 1e-5).sqrt();
        yn = centered.array().rowwise() / sigma.array();
    }

    Mat projected;
    if (n_cov_ > 0) projected = proj_.forward(ps_, b.covariates, training, rng, c ? &c->proj : nullptr);

    Mat h(L + (L + H) * P + n_static_ + 1, B);
    h.topRows(L) = yn;
    if (P > 0) h.middleRows(L, (L + H) * P) = Eigen::Map<const Mat>(projected.data(), (L + H) * P, B);
    h.bottomRows(n_static_ + 1) = b.statics;

    if (c) {
        c->enc.resize(enc_.size());
        c->dec.resize(dec_.size());
    }
    for (std::size_t i = 0; i < enc_.size(); ++i) h = enc_[i].forward(ps_, h, training, rng, c ? &c->enc[i] : nullptr);
    for (std::size_t i = 0; i < dec_.size(); ++i) h = dec_[i].forward(ps_, h, training, rng, c ? &c->dec[i] : nullptr);

    // Column t of sample b in the decoded block is d_t.
    Mat tin(D + P, H * B);
    tin.topRows(D) = Eigen::Map<const Mat>(h.data(), D, H * B);
    for (Eigen::Index s = 0; s < B; ++s)
        if (P > 0) tin.block(D, s * H, P, H) = projected.block(0, s * (L + H) + L, P, H);
    const Mat tout = temporal_.forward(ps_, tin, training, rng, c ? &c->temporal : nullptr);

    Mat out = Eigen::Map<const Mat>(tout.data(), H, B) + global_.forward(ps_, yn);
    if (cfg_.revin) out = (out.array().rowwise() * sigma.array()).rowwise() + mu.array();
    if (c) {
        c->mu = mu;
        c->sigma = sigma;
        c->yn = std::move(yn);
        c->projected = std::move(projected);
    }
    return out;
}

void TideNet::backprop(const Cache& c, const Mat& dout) {
    const Eigen::Index L = cfg_.lookback, H = cfg_.horizon, B = dout.cols(), P = proj_dim_;
    const Eigen::Index D = cfg_.decoder_output_dim;
    Mat dn = dout;
    if (cfg_.revin) dn = dout.array().rowwise() * c.sigma.array();

    global_.backward_params(ps_, c.yn, dn);
    const Mat dtin = temporal_.backward(ps_, c.temporal, Eigen::Map<const Mat>(dn.data(), 1, H * B));

    const Mat dd = dtin.topRows(D);
    Mat dh = Eigen::Map<const Mat>(dd.data(), H * D, B);
    for (std::size_t i = dec_.size(); i-- > 0;) dh = dec_[i].backward(ps_, c.dec[i], dh);
    for (std::size_t i = enc_.size(); i-- > 0;) dh = enc_[i].backward(ps_, c.enc[i], dh, i > 0 || P > 0);

    if (P == 0) return;
    Mat dproj(P, (L + H) * B);
    for (Eigen::Index s = 0; s < B; ++s) {
        dproj.block(0, s * (L + H), P, L + H) = Eigen::Map<const Mat>(dh.col(s).data() + L, P, L + H);
        dproj.block(0, s * (L + H) + L, P, H) += dtin.block(D, s * H, P, H);
    }
    proj_.backward(ps_, c.proj, dproj, false);
}

Mat TideNet::forward(const Batch& b, bool training, std::mt19937_64* rng) const {
    return run(b, training, rng, nullptr);
}

Mat TideNet::forward_pattern(const Batch& b, std::uint64_t* pattern) const {
    Cache c;
    Mat out = run(b, false, nullptr, &c);
    std::uint64_t h = 0xcbf29ce484222325ull;
    if (n_cov_ > 0) nn::hash_relu_pattern(c.proj.pre, h);
    for (const auto& e : c.enc) nn::hash_relu_pattern(e.pre, h);
    for (const auto& d : c.dec) nn::hash_relu_pattern(d.pre, h);
    nn::hash_relu_pattern(c.temporal.pre, h);
    *pattern = h;
    return out;
}

double TideNet::loss_and_grad(const Batch& b, const Mat& target, const Mat& mask, bool training,
                              std::mt19937_64* rng) {
    Cache c;
    const Mat out = run(b, training, rng, &c);
    Mat dout;
    const double loss = nn::masked_mse(out, target, mask, &dout);
    backprop(c, dout);
    return loss;
}

}  // namespace ventus
