// Adam with bias correction, plus global-norm gradient clipping.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "unmt/params.hpp"

namespace unmt {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    int64_t t = 0;
    std::vector<std::vector<double>> m;  // aligned with the ParamSet order
    std::vector<std::vector<double>> v;

    static AdamState for_params(const ParamSet& params, AdamConfig cfg = {}) {
        AdamState s;
        s.cfg = cfg;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto& [name, p] : params.items()) {
            s.m.emplace_back(p.numel(), 0.0);
            s.v.emplace_back(p.numel(), 0.0);
        }
        return s;
    }
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(ParamSet& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : params.items())
        for (double gv : p.grad()) sq += gv * gv;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, p] : params.items())
            for (double& gv : p.grad()) gv *= s;
    }
    return norm;
}

inline void adam_step(ParamSet& params, AdamState& state) {
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state does not match param set");
    state.t += 1;
    const auto& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params.items()[i].second;
        if (state.m[i].size() != p.numel())
            throw std::invalid_argument("adam_step: moment shape mismatch for " + params.items()[i].first);
        auto& m = state.m[i];
        auto& v = state.v[i];
        auto& val = p.value();
        const auto& g = p.grad();
        for (size_t j = 0; j < val.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

}  // namespace unmt
