#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sws/nnkit/adam.hpp"
#include "sws/nnkit/graph.hpp"
#include "sws/rng.hpp"

namespace sws::nn {

/// Builds a scalar loss in a fresh graph from the given (double precision)
/// parameters. Called repeatedly by grad_check, so it must be deterministic.
using LossBuilder = std::function<Var(Graph<double>&, const std::map<std::string, Var>&)>;

/// Compares reverse-mode gradients against central finite differences on a
/// random coordinate sample (5% of each parameter, at least one) and returns
/// the maximum relative error. Throws ContractError if the loss is not a
/// scalar or the graph contains non-frozen dropout.
inline double grad_check(const LossBuilder& build, const ParamSet<double>& params,
                         double epsilon = 1e-4, std::uint64_t seed = 0,
                         double sample_fraction = 0.05) {
    const auto eval = [&](const ParamSet<double>& p, ParamSet<double>* grads_out) {
        Graph<double> g;
        std::map<std::string, Var> vars;
        for (const auto& [name, tensor] : p) vars[name] = g.input(tensor, grads_out != nullptr);
        const Var loss = build(g, vars);
        if (!g.value(loss).is_scalar())
            throw ContractError("grad_check requires a scalar-valued computation");
        if (g.has_unfrozen_dropout())
            throw ContractError("grad_check requires seed-frozen dropout");
        if (grads_out) {
            g.backward(loss);
            for (const auto& [name, var] : vars) (*grads_out)[name] = g.grad(var);
        }
        return g.value(loss).data[0];
    };

    ParamSet<double> analytic;
    eval(params, &analytic);

    Rng rng(seed);
    double max_rel = 0.0;
    ParamSet<double> perturbed = params;
    for (const auto& [name, tensor] : params) {
        const std::size_t n = tensor.size();
        const std::size_t samples =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(sample_fraction * static_cast<double>(n))));
        for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t i = rng.uniform_int(n);
            auto& slot = perturbed.at(name).data[i];
            const double saved = slot;
            slot = saved + epsilon;
            const double f_plus = eval(perturbed, nullptr);
            slot = saved - epsilon;
            const double f_minus = eval(perturbed, nullptr);
            slot = saved;
            const double fd = (f_plus - f_minus) / (2.0 * epsilon);
            const double ad = analytic.at(name).data[i];
            const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace sws::nn
