#pragma once

#include "emphtts/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace emphtts::testing {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst = 0;  // index into the inputs
    double worst_analytic_norm = 0.0;
    double worst_numeric_norm = 0.0;
};

// Central differences against the analytic gradient of `loss` w.r.t. every
// leaf in `inputs`. The error of one tensor is ||a - n|| / max(||a|| + ||n||, 1e-6);
// the floor keeps tensors whose true gradient is identically zero (the key
// bias of an attention layer) from comparing rounding noise with itself.
// The result is the maximum over tensors.
inline GradCheckResult grad_check(const std::vector<ag::Var>& inputs, const std::function<ag::Var()>& loss,
                                  double eps = 1e-5) {
    for (const auto& v : inputs) v.zero_grad();
    loss().backward();
    std::vector<ag::Matrix> analytic;
    for (const auto& v : inputs) analytic.push_back(v.grad());

    GradCheckResult r;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        ag::Var v = inputs[t];
        ag::Matrix numeric(v.rows(), v.cols());
        for (ag::Index i = 0; i < v.value().size(); ++i) {
            double& x = v.mutable_value().data()[i];
            const double orig = x;
            x = orig + eps;
            const double up = loss().item();
            x = orig - eps;
            const double down = loss().item();
            x = orig;
            numeric.data()[i] = (up - down) / (2 * eps);
            ++r.checked;
        }
        const double denom = std::max(analytic[t].norm() + numeric.norm(), 1e-6);
        const double err = (analytic[t] - numeric).norm() / denom;
        if (err >= r.max_relative_error) {
            r.max_relative_error = err;
            r.worst = t;
            r.worst_analytic_norm = analytic[t].norm();
            r.worst_numeric_norm = numeric.norm();
        }
    }
    return r;
}

// Fixed random projection so that a scalar loss depends on every output entry.
inline ag::Var probe_loss(const ag::Var& out, unsigned seed = 7) {
    std::srand(seed);
    ag::Matrix w = ag::Matrix::Random(out.rows(), out.cols());
    return ag::sum_all(ag::mul(out, ag::constant(w)));
}

}  // namespace emphtts::testing
