#pragma once

#include <cmath>
#include <vector>

#include "gpa/autodiff.hpp"
#include "gpa/errors.hpp"

namespace gpa {

// Adam with bias correction. Betas/eps follow the usual defaults; the paper
// only pins the learning rates.
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Tensor> m, v;
};

inline void adam_step(AdamState& state, std::vector<Var>& params,
                      const std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Tensor::zeros(p.value().shape(), p.value().dtype()));
            state.v.push_back(Tensor::zeros(p.value().shape(), p.value().dtype()));
        }
    }
    for (const auto& g : grads)
        if (has_nan(g)) throw NumericError("adam_step: NaN gradient");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].mutable_value();
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g))
            throw ShapeError("adam_step: param shape " + shape_str(p.shape()) +
                             " vs grad shape " + shape_str(g.shape()));
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        m.quantize();
        v.quantize();
        p.quantize();
    }
}

} // namespace gpa
