// Central finite-difference gradient checker. The numeric side only ever
// calls the forward evaluation, so it stays independent of the backward
// implementation it is checking.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "unmt/params.hpp"

namespace unmt {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
};

// Compares the analytic gradients already stored in `params` against central
// differences of `forward` (a pure function of the current param values).
// Relative error per component: |a - n| / max(1e-8, |a| + |n|).
inline GradCheckReport grad_check(const std::function<double()>& forward, ParamSet& params,
                                  double eps = 1e-5) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
    GradCheckReport rep;
    for (auto& [name, p] : params.items()) {
        for (size_t j = 0; j < p.numel(); ++j) {
            const double saved = p.value()[j];
            p.value()[j] = saved + eps;
            const double f_plus = forward();
            p.value()[j] = saved - eps;
            const double f_minus = forward();
            p.value()[j] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw std::runtime_error("grad_check: non-finite function value at " + name);
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double analytic = p.grad()[j];
            const double rel = std::fabs(analytic - numeric) /
                               std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name;
                rep.worst_index = j;
            }
        }
    }
    return rep;
}

}  // namespace unmt
