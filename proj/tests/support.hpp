#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "robult/tensor.hpp"

namespace robult::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (double& v : m.data) v = u(rng);
    return m;
}

inline Matrix unit_rows(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    Matrix m = random_matrix(r, c, rng, -1.0, 1.0);
    for (std::size_t i = 0; i < r; ++i) {
        double n = 0.0;
        for (double v : m.row(i)) n += v * v;
        n = std::sqrt(n);
        for (double& v : m.row(i)) v /= n;
    }
    return m;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

/// Largest relative error between the analytic gradient of f w.r.t. each
/// input and central differences with step h.
inline double max_gradient_error(std::vector<Tensor> inputs, const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 double h = 1e-5) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    f(inputs).backward();
    double worst = 0.0;
    for (auto& t : inputs) {
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double orig = t.values()[k];
            double plus, minus;
            {
                NoGradGuard ng;
                t.mutable_values()[k] = orig + h;
                plus = f(inputs).item();
                t.mutable_values()[k] = orig - h;
                minus = f(inputs).item();
                t.mutable_values()[k] = orig;
            }
            worst = std::max(worst, relative_error(t.grad()[k], (plus - minus) / (2.0 * h)));
        }
    }
    return worst;
}

}  // namespace robult::testing
