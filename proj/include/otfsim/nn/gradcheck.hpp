#pragma once

// Central finite-difference check of the end-to-end analytic gradient.

#include "otfsim/nn/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace otfsim::nn {

struct TensorCheck {
    std::string name;
    double max_rel_error = 0.0;
    Eigen::Index worst_index = 0;
};

struct GradCheckResult {
    std::vector<TensorCheck> tensors;
    double loss = 0.0;
    double floor = 0.0;

    double max_rel_error() const
    {
        double e = 0.0;
        for (const auto& t : tensors) e = std::max(e, t.max_rel_error);
        return e;
    }
};

/// Compares dL/dtheta from ae_pass against (L(theta + h) - L(theta - h)) / 2h
/// with h = 1e-5 max(1, |theta|) for every entry of every tensor. Relative
/// error is |a - n| / max(|a|, |n|, floor) with floor = 1e-6 max(1, |L|), the
/// scale below which a difference quotient of L is pure rounding. Batch norm
/// runs in train mode on the fixed batch; the noise is frozen.
inline GradCheckResult gradient_check(MultiBandAE& ae, const Batch& batch, const LinkMatrices& link, const CMat& noise, double eta,
                                      double rel_step = 1e-5)
{
    PassOptions opt;
    opt.mode = Mode::train;
    opt.eta = eta;
    opt.backward = true;
    ae.zero_grad();
    GradCheckResult res;
    res.loss = ae_pass(ae, batch, link, noise, opt).loss.total;
    res.floor = 1e-6 * std::max(1.0, std::abs(res.loss));

    opt.backward = false;
    auto loss_at = [&] { return ae_pass(ae, batch, link, noise, opt).loss.total; };
    for (auto& [name, p] : ae.named_params()) {
        TensorCheck tc{name};
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double& v = p->value.data()[i];
            const double v0 = v;
            const double h = rel_step * std::max(1.0, std::abs(v0));
            v = v0 + h;
            const double lp = loss_at();
            v = v0 - h;
            const double lm = loss_at();
            v = v0;
            const double num = (lp - lm) / (2.0 * h);
            const double ana = p->grad.data()[i];
            const double err = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), res.floor});
            if (err > tc.max_rel_error) {
                tc.max_rel_error = err;
                tc.worst_index = i;
            }
        }
        res.tensors.push_back(tc);
    }
    return res;
}

} // namespace otfsim::nn
