#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace pillid {

// Central finite differences with step h: g_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
// The callback must treat its argument as read-only between calls.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double step = 1e-6) {
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double orig = point[i];
        point[i] = orig + step;
        const double fp = f(point);
        point[i] = orig - step;
        const double fm = f(point);
        point[i] = orig;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

// ||a - b||_2 / max(||a||_2, ||b||_2), with a floor so two zero gradients
// compare as equal.
inline double gradient_relative_error(std::span<const double> analytic,
                                      std::span<const double> numeric) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = analytic[i] - numeric[i];
        diff += d * d;
        na += analytic[i] * analytic[i];
        nb += numeric[i] * numeric[i];
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    return std::sqrt(diff) / scale;
}

} // namespace pillid
