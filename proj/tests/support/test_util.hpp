#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "multitrans/autodiff.hpp"
#include "multitrans/tensor.hpp"

namespace multitrans::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline Shape random_shape(std::mt19937_64& rng, std::size_t max_rank = 3, std::size_t max_dim = 5) {
    std::uniform_int_distribution<std::size_t> rank_d(1, max_rank);
    std::uniform_int_distribution<std::size_t> dim_d(1, max_dim);
    Shape s(rank_d(rng));
    for (auto& d : s) d = dim_d(rng);
    return s;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

/// Runs backward on loss(inputs) and compares every input's gradient against
/// central differences. Returns the worst relative error over all inputs.
inline double gradient_check(const std::function<Tensor(const std::vector<Tensor>&)>& loss,
                             std::vector<Tensor> inputs, double eps = 1e-4) {
    for (auto& t : inputs) t.zero_grad();
    backward(loss(inputs));
    double worst = 0.0;
    for (auto& t : inputs) {
        if (!t.requires_grad()) continue;
        std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                    : std::vector<double>(t.numel(), 0.0);
        Tensor numeric = finite_difference_grad([&](const Tensor&) { return loss(inputs).item(); }, t, eps);
        worst = std::max(worst, max_relative_error(analytic, numeric.data()));
    }
    return worst;
}

}  // namespace multitrans::testing
