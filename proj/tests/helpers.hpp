#pragma once

// Shared test utilities: finite-difference oracles and small net builders.
// The oracles stay independent of the gradient code they check.

#include <functional>

#include "glab/nnkernel.hpp"

namespace testutil {

using glab::MlpNet;
using glab::Vec;

// central difference d f / d x at step h
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline bool close_rel(double a, double b, double rtol, double atol) {
    return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

struct ParamRef {
    bool is_weight;
    std::size_t layer;
    std::size_t index;
};

inline std::vector<ParamRef> all_params(const MlpNet& net) {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].size(); ++i) refs.push_back({true, l, i});
        for (std::size_t i = 0; i < net.biases[l].size(); ++i) refs.push_back({false, l, i});
    }
    return refs;
}

inline double& param_at(MlpNet& net, const ParamRef& r) {
    return r.is_weight ? net.weights[r.layer][r.index] : net.biases[r.layer][r.index];
}

inline double param_grad_at(const glab::MlpGrads& g, const ParamRef& r) {
    return r.is_weight ? g.weights[r.layer][r.index] : g.biases[r.layer][r.index];
}

// True when some pre-activation sits too close to a ReLU kink for a central
// difference of step h to be trustworthy.
inline bool near_relu_kink(const glab::GradTape& tape, double margin) {
    for (std::size_t l = 0; l + 1 < tape.pre.size(); ++l)
        for (double p : tape.pre[l])
            if (std::abs(p) < margin) return true;
    return false;
}

}  // namespace testutil
