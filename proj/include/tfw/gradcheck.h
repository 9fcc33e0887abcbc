#pragma once
// Central finite-difference verification of analytic gradients, run in
// double precision. An op under test is a closure: given the current values
// of all differentiable inputs it returns a scalar loss, and (when asked)
// the analytic gradient wrt every input. The checker perturbs each
// coordinate by +/-eps and compares.
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tfw/tensor.h"

namespace tfw {

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
        double analytic = 0.0;  // at the worst coordinate
        double numeric = 0.0;
    };
    std::vector<Entry> entries;
    double max_rel_err = 0.0;

    bool pass(double tol) const { return max_rel_err < tol; }
};

inline double rel_err(double a, double n) {
    // A two-sided probe with eps ~ 1e-5 on an O(1) loss cannot resolve
    // differences below ~1e-10 (roundoff / 2*eps). Coordinates whose true
    // derivative is exactly zero — the attention key bias is one, since a
    // uniform logit shift cancels inside softmax — read as noise vs noise,
    // so differences under 1e-8 count as agreement rather than being
    // ratioed against the tiny denominator floor.
    const double diff = std::fabs(a - n);
    if (diff < 1e-8) return 0.0;
    const double denom = std::max({std::fabs(a), std::fabs(n), 1e-8});
    return diff / denom;
}

// fn(inputs, grads): computes the scalar loss from `inputs`; when `grads`
// is non-null it must also fill one gradient tensor per input (same shapes).
using CheckFn = std::function<double(const std::vector<DTensor>&, std::vector<DTensor>*)>;

inline GradCheckReport grad_check(const CheckFn& fn, std::vector<DTensor> inputs,
                                  const std::vector<std::string>& names, double eps = 1e-5) {
    if (names.size() != inputs.size())
        throw ConfigError("grad_check: " + std::to_string(inputs.size()) + " inputs vs " +
                          std::to_string(names.size()) + " names");
    std::vector<DTensor> grads;
    fn(inputs, &grads);
    if (grads.size() != inputs.size())
        throw StateError("grad_check: op returned " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(inputs.size()) + " inputs");
    GradCheckReport report;
    for (size_t t = 0; t < inputs.size(); ++t) {
        GradCheckReport::Entry e;
        e.name = names[t];
        for (int64_t i = 0; i < inputs[t].numel(); ++i) {
            const double keep = inputs[t].ptr()[i];
            inputs[t].ptr()[i] = keep + eps;
            const double lp = fn(inputs, nullptr);
            inputs[t].ptr()[i] = keep - eps;
            const double lm = fn(inputs, nullptr);
            inputs[t].ptr()[i] = keep;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double analytic = grads[t].ptr()[i];
            const double r = rel_err(analytic, numeric);
            if (r >= e.max_rel_err) {
                e.max_rel_err = r;
                e.analytic = analytic;
                e.numeric = numeric;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace tfw
