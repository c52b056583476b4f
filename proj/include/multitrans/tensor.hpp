#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace multitrans {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::optional<std::vector<double>> grad;
    bool requires_grad = false;
    // Tape generation that produced this node; 0 for leaves.
    std::uint64_t generation = 0;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how
/// parameters, the optimizer and the gradient tape refer to one value. The
/// shape is fixed at construction; reshape() yields a new tensor.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::vector<double> values, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Writable view of the values. Used by optimizers and perturbation-based
    /// gradient checks on leaf tensors; mutating a tensor that already fed a
    /// recorded operation invalidates that operation's backward rule.
    std::span<double> mutable_data();

    double item() const;
    double operator[](std::size_t flat_index) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    Tensor grad_tensor() const;
    void zero_grad();

    /// Copy of the values with no gradient history.
    Tensor detach() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::TensorNode> node);

private:
    std::shared_ptr<detail::TensorNode> node_;
};

}  // namespace multitrans
