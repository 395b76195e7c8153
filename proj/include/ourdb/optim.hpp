#pragma once

#include <cmath>

#include "ourdb/param_set.hpp"

namespace ourdb {

/// SGD with momentum and coupled weight decay, plus the polynomial LR
/// schedule driving it.
struct OptimState {
    std::vector<std::vector<double>> momentum_buffers;  // mirrors param shapes
    double base_lr = 2.5e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double power = 0.9;
    int max_iter = 1;

    static OptimState init(const ParamSet& params, double base_lr, double momentum,
                           double weight_decay, double power, int max_iter) {
        detail::check(momentum >= 0.0 && momentum <= 1.0, "optim: momentum must be in [0,1]");
        detail::check(weight_decay >= 0.0, "optim: weight decay must be >= 0");
        detail::check(max_iter > 0, "optim: max_iter must be positive");
        OptimState s;
        s.base_lr = base_lr;
        s.momentum = momentum;
        s.weight_decay = weight_decay;
        s.power = power;
        s.max_iter = max_iter;
        s.momentum_buffers.reserve(params.entries.size());
        for (const auto& e : params.entries)
            s.momentum_buffers.emplace_back(static_cast<size_t>(e.tensor.size()), 0.0);
        return s;
    }
};

/// base_lr * (1 - iter/max_iter)^power, clamped to 0 past max_iter.
inline double poly_lr(int iter, const OptimState& s) {
    detail::check(iter >= 0, "poly_lr: negative iteration");
    double frac = 1.0 - static_cast<double>(iter) / s.max_iter;
    if (frac <= 0.0) return 0.0;
    return s.base_lr * std::pow(frac, s.power);
}

/// v <- m*v + (g + wd*theta); theta <- theta - lr*v
inline void sgd_step(ParamSet& params, OptimState& state, double lr) {
    detail::check(state.momentum_buffers.size() == params.entries.size(),
                  "sgd_step: optimizer state does not mirror the parameter set");
    for (size_t i = 0; i < params.entries.size(); ++i) {
        Tensor& t = params.entries[i].tensor;
        detail::check(t.has_grad(), "sgd_step: parameter '" + params.entries[i].name +
                                        "' has no gradient");
        auto& buf = state.momentum_buffers[i];
        detail::check(buf.size() == static_cast<size_t>(t.size()),
                      "sgd_step: momentum buffer shape mismatch");
        double* th = t.data().data();
        const double* g = t.grad().data();
        for (size_t j = 0; j < buf.size(); ++j) {
            buf[j] = state.momentum * buf[j] + (g[j] + state.weight_decay * th[j]);
            th[j] -= lr * buf[j];
        }
    }
}

}  // namespace ourdb
