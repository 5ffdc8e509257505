#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace wsnloc {

/// log(1 - exp(d)) for d <= 0.
inline double log1mexp(double d) {
    if (d > -0.6931471805599453) return std::log(-std::expm1(d));
    return std::log1p(-std::exp(d));
}

/// log(sum(exp(v))); -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

/// Shifts log-weights in place so they sum to one; returns the log of the
/// previous total.
inline double normalize_log_weights(std::span<double> logw) {
    const double total = log_sum_exp(logw);
    for (double& x : logw) x -= total;
    return total;
}

inline std::vector<double> exp_weights(std::span<const double> logw) {
    std::vector<double> out(logw.size());
    std::transform(logw.begin(), logw.end(), out.begin(), [](double x) { return std::exp(x); });
    return out;
}

}  // namespace wsnloc
