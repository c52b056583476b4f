#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "multitrans/tensor.hpp"

namespace multitrans {

/// Receives the gradient of the recorded output and accumulates into inputs.
using BackwardRule = std::function<void(const std::vector<double>& output_grad)>;

/// Thread-local record of differentiable operations for one forward pass.
///
/// Operations append to the tape in execution order, so inputs always precede
/// the operations that consume them. backward() replays the tape in reverse
/// and then releases it; the next forward pass starts a new generation.
class Tape {
public:
    static bool recording();
    static std::uint64_t generation();
    static std::size_t size();

    /// Drops everything recorded so far without running backward.
    static void discard();

    static void record(std::vector<std::shared_ptr<detail::TensorNode>> inputs,
                       std::shared_ptr<detail::TensorNode> output, BackwardRule rule);
};

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Populates grad on every requires_grad tensor reachable from a scalar loss.
/// Gradients accumulate into existing grad buffers. Throws ContractError for a
/// non-scalar loss and StateError when the loss's tape was already consumed.
void backward(const Tensor& loss);

/// Central-difference estimate of df/dx, one coordinate at a time.
///
/// x is perturbed in place and restored after each coordinate, so f may read
/// x either through its argument or through any alias (e.g. a parameter tree).
/// f runs with recording disabled.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, Tensor x, double eps);

}  // namespace multitrans
