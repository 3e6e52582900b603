#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "sws/nnkit/tensor.hpp"

namespace sws::nn {

/// Named parameter collection; std::map keeps iteration order deterministic.
template <typename T>
using ParamSet = std::map<std::string, Tensor<T>>;

template <typename T>
struct AdamState {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    ParamSet<T> m;
    ParamSet<T> v;
};

/// One bias-corrected Adam update over every named parameter. Moment buffers
/// are created on first use. Throws NumericalError on a non-finite gradient,
/// leaving parameters untouched so the caller can keep its last good state.
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state) {
    for (const auto& [name, g] : grads) {
        const auto it = params.find(name);
        if (it == params.end()) throw ShapeError("adam: gradient for unknown parameter " + name);
        check_same_shape(it->second, g, "adam");
        for (T x : g.data)
            if (!std::isfinite(static_cast<double>(x)))
                throw NumericalError("adam: non-finite gradient in parameter " + name +
                                     " at step " + std::to_string(state.step + 1));
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (auto& [name, p] : params) {
        const auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor<T>& g = git->second;
        Tensor<T>& m = state.m.try_emplace(name, Tensor<T>::zeros(p.rows, p.cols)).first->second;
        Tensor<T>& v = state.v.try_emplace(name, Tensor<T>::zeros(p.rows, p.cols)).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g.data[i]);
            const double mi = state.beta1 * static_cast<double>(m.data[i]) + (1.0 - state.beta1) * gi;
            const double vi = state.beta2 * static_cast<double>(v.data[i]) + (1.0 - state.beta2) * gi * gi;
            m.data[i] = static_cast<T>(mi);
            v.data[i] = static_cast<T>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) -
                                       state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
        }
    }
}

}  // namespace sws::nn
