#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ventus::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Param {
    std::string name;
    Mat value;
    Mat grad;
};

// Flat collection of named parameter blocks. Layers hold indices into it.
class ParamStore {
public:
    std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);
    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::size_t size() const { return params_.size(); }
    std::vector<Param>& blocks() { return params_; }
    const std::vector<Param>& blocks() const { return params_; }
    const Param* find(const std::string& name) const;

    void zero_grad();
    void set_zero();
    std::size_t scalar_count() const;
    // Scalar view across all blocks in insertion order.
    double& value_at(std::size_t flat);
    double grad_at(std::size_t flat) const;

    bool identical(const ParamStore& other) const;

private:
    std::vector<Param> params_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
void init_uniform_fan_in(Param& w, std::mt19937_64& rng);

struct Dense {
    std::size_t w = 0, b = 0;
    Eigen::Index in = 0, out = 0;

    static Dense create(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index out);
    void init(ParamStore& ps, std::mt19937_64& rng) const;
    Mat forward(const ParamStore& ps, const Mat& x) const;
    // Accumulates parameter gradients; returns dL/dx.
    Mat backward(ParamStore& ps, const Mat& x, const Mat& dy) const;
    // Same, without computing dL/dx.
    void backward_params(ParamStore& ps, const Mat& x, const Mat& dy) const;
};

// Per-column normalization with learnable gain and shift.
struct LayerNorm {
    std::size_t gamma = 0, beta = 0;
    Eigen::Index dim = 0;
    static constexpr double eps = 1e-5;

    struct Cache {
        Mat xhat;
        Eigen::RowVectorXd inv_std;
    };

    static LayerNorm create(ParamStore& ps, const std::string& name, Eigen::Index dim);
    void init(ParamStore& ps) const;
    Mat forward(const ParamStore& ps, const Mat& x, Cache* cache) const;
    Mat backward(ParamStore& ps, const Cache& cache, const Mat& dy) const;
};

// Inverted dropout: kept units are scaled by 1/(1-rate) during training.
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng);

// dense -> ReLU -> dense -> dropout, plus a linear skip from the input,
// then optional layer norm.
struct ResidualBlock {
    Dense hidden, output, skip;
    bool use_layer_norm = false;
    LayerNorm norm;
    double dropout = 0.0;

    struct Cache {
        Mat x, pre, act, mask;
        LayerNorm::Cache ln;
    };

    static ResidualBlock create(ParamStore& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                                Eigen::Index out, bool layer_norm, double dropout);
    void init(ParamStore& ps, std::mt19937_64& rng) const;
    // rng is only used when training with dropout > 0. cache may be null for inference.
    Mat forward(const ParamStore& ps, const Mat& x, bool training, std::mt19937_64* rng, Cache* cache) const;
    Mat backward(ParamStore& ps, const Cache& cache, const Mat& dy, bool need_dx = true) const;
};

// Folds the sign pattern of pre-activations into a running hash.
void hash_relu_pattern(const Mat& pre, std::uint64_t& h);

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(const ParamStore& ps, AdamOptions opts);
    void step(ParamStore& ps);
    long steps() const { return t_; }
    void set_learning_rate(double lr) { opts_.learning_rate = lr; }

private:
    AdamOptions opts_;
    std::vector<Mat> m_, v_;
    long t_ = 0;
};

// Mean of squared differences over entries where mask != 0. Writes the
// gradient with respect to pred into dpred when non-null.
double masked_mse(const Mat& pred, const Mat& target, const Mat& mask, Mat* dpred);

}  // namespace ventus::nn
