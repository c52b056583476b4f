#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "multitrans/tensor.hpp"

// Differentiable operations. Each records a backward rule on the thread's tape
// when recording is enabled and at least one input requires grad.
namespace multitrans::ops {

Tensor matmul(const Tensor& a, const Tensor& b);

/// Batched product over the leading axis: [n x m x k] . [n x k x p].
/// With transpose_b the right operand is [n x p x k] and is transposed per batch.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Binary ops take equal shapes, or one operand with a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor sigmoid(const Tensor& x);
/// Natural log; throws NumericError on non-positive input.
Tensor log(const Tensor& x);
/// x * Phi(x) with the exact normal CDF.
Tensor gelu(const Tensor& x);
/// Gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

/// Adds a length-n vector to every length-n row along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// Max-shifted softmax along `axis`; NumericError on non-finite input.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis, then applies per-feature gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

enum class Reduce { Sum, Mean, Max };

/// Reduces over `axis` (removing it), or over every element when axis is empty.
/// Max sends the whole gradient to the first maximal element.
Tensor reduce(const Tensor& x, Reduce op, std::optional<std::size_t> axis = std::nullopt);

inline Tensor sum(const Tensor& x, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(x, Reduce::Sum, axis);
}
inline Tensor mean(const Tensor& x, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(x, Reduce::Mean, axis);
}
inline Tensor max(const Tensor& x, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(x, Reduce::Max, axis);
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis);
inline Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis) {
    return concat(std::span<const Tensor>(xs.begin(), xs.size()), axis);
}

Tensor reshape(const Tensor& x, Shape shape);

}  // namespace multitrans::ops
