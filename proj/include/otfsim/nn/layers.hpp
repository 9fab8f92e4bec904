#pragma once

// Dense layers, batch normalisation, ReLU and Adam on column-major batches
// (features x batch).

#include "otfsim/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace otfsim::nn {

struct Param {
    RMat value;
    RMat grad;

    Param() = default;
    explicit Param(RMat v) : value(std::move(v)), grad(RMat::Zero(value.rows(), value.cols())) {}
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

enum class Mode { train, eval };

/// Uniform on [-a, a], a = sqrt(6 / (fan_in + fan_out)).
inline RMat glorot_uniform(int rows, int cols, Rng& rng)
{
    const double a = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    RMat w(rows, cols);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    return w;
}

struct Linear {
    Param w; ///< out x in
    Param b; ///< out x 1

    Linear() = default;
    Linear(int in, int out, Rng& rng) : w(glorot_uniform(out, in, rng)), b(RMat::Zero(out, 1)) {}

    int in_dim() const { return static_cast<int>(w.value.cols()); }
    int out_dim() const { return static_cast<int>(w.value.rows()); }

    RMat forward(const RMat& x) const
    {
        if (x.rows() != w.value.cols()) throw ConfigError("linear layer input shape mismatch");
        return (w.value * x).colwise() + b.value.col(0);
    }

    /// Accumulates parameter gradients; returns dL/dx.
    RMat backward(const RMat& x, const RMat& g)
    {
        w.grad.noalias() += g * x.transpose();
        b.grad.col(0) += g.rowwise().sum();
        return w.value.transpose() * g;
    }
};

struct BatchNorm {
    Param gamma;
    Param beta;
    RVec running_mean;
    RVec running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    struct Cache {
        RMat xhat;
        RVec inv_std;
        RVec mean;
        RVec var;
    };

    BatchNorm() = default;
    explicit BatchNorm(int dim, double eps_ = 1e-5)
        : gamma(RMat::Ones(dim, 1)), beta(RMat::Zero(dim, 1)), running_mean(RVec::Zero(dim)), running_var(RVec::Ones(dim)), eps(eps_)
    {
    }

    int dim() const { return static_cast<int>(gamma.value.rows()); }

    /// Train mode normalises with the biased batch variance; eval mode with
    /// the running statistics.
    RMat forward(const RMat& x, Mode mode, Cache* cache = nullptr) const
    {
        if (x.rows() != dim()) throw ConfigError("batch-norm input shape mismatch");
        RVec mean;
        RVec var;
        if (mode == Mode::train) {
            if (x.cols() < 2) throw ConfigError("batch normalisation in train mode needs a batch of at least 2");
            mean = x.rowwise().mean();
            var = (x.colwise() - mean).array().square().rowwise().mean();
        } else {
            mean = running_mean;
            var = running_var;
        }
        const RVec inv_std = (var.array() + eps).rsqrt();
        RMat xhat = (x.colwise() - mean).array().colwise() * inv_std.array();
        RMat y = (xhat.array().colwise() * gamma.value.col(0).array()).colwise() + beta.value.col(0).array();
        if (cache) *cache = Cache{std::move(xhat), inv_std, mean, var};
        return y;
    }

    /// Train-mode backward pass.
    RMat backward(const Cache& c, const RMat& g)
    {
        const double b = static_cast<double>(g.cols());
        gamma.grad.col(0) += (g.array() * c.xhat.array()).rowwise().sum().matrix();
        beta.grad.col(0) += g.rowwise().sum();
        const RVec gmean = g.rowwise().mean();
        const RVec gx_mean = (g.array() * c.xhat.array()).rowwise().sum().matrix() / b;
        RMat centred = (g.colwise() - gmean) - (c.xhat.array().colwise() * gx_mean.array()).matrix();
        return centred.array().colwise() * (gamma.value.col(0).array() * c.inv_std.array());
    }

    /// Exponential moving average of the batch statistics (unbiased variance).
    void update_running(const Cache& c, int batch)
    {
        const double unbias = batch > 1 ? static_cast<double>(batch) / (batch - 1) : 1.0;
        running_mean = (1.0 - momentum) * running_mean + momentum * c.mean;
        running_var = (1.0 - momentum) * running_var + momentum * unbias * c.var;
    }
};

inline RMat relu(const RMat& x) { return x.cwiseMax(0.0); }

inline RMat relu_backward(const RMat& pre, const RMat& g) { return (pre.array() > 0.0).select(g, 0.0); }

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<RMat> m;
    std::vector<RMat> v;
    long long t = 0;
};

/// One bias-corrected Adam update of every parameter. Non-finite gradients
/// abort with NumericalError before anything is modified.
inline void adam_step(const std::vector<Param*>& params, AdamState& st, const AdamConfig& cfg)
{
    require(cfg.lr > 0.0, "learning rate must be positive");
    for (const Param* p : params)
        if (!p->grad.allFinite()) throw NumericalError("non-finite gradient in optimizer step");
    if (st.m.empty()) {
        for (const Param* p : params) {
            st.m.push_back(RMat::Zero(p->value.rows(), p->value.cols()));
            st.v.push_back(RMat::Zero(p->value.rows(), p->value.cols()));
        }
    }
    require(st.m.size() == params.size(), "optimizer state does not match parameters");
    ++st.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        require(st.m[i].rows() == p.value.rows() && st.m[i].cols() == p.value.cols(), "optimizer state shape mismatch");
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * p.grad;
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
        p.value.array() -= cfg.lr * (st.m[i].array() / c1) / ((st.v[i].array() / c2).sqrt() + cfg.eps);
    }
}

} // namespace otfsim::nn
