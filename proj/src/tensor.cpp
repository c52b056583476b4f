#include "multitrans/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

#include "multitrans/errors.hpp"

namespace multitrans {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

std::vector<double>& TensorNode::ensure_grad() {
    if (!grad) grad.emplace(data.size(), 0.0);
    return *grad;
}

}  // namespace detail

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    return Tensor({rows, cols}, std::move(values), requires_grad);
}

namespace {
const detail::TensorNode& checked(const std::shared_ptr<detail::TensorNode>& node) {
    if (!node) throw StateError("use of an undefined tensor");
    return *node;
}
}  // namespace

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
    checked(node_);
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::operator[](std::size_t flat_index) const { return data()[flat_index]; }

double Tensor::at(std::size_t i, std::size_t j) const {
    const auto& s = shape();
    if (s.size() != 2 || i >= s[0] || j >= s[1]) throw ShapeError("bad 2-d index into " + shape_str(s));
    return node_->data[i * s[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    const auto& s = shape();
    if (s.size() != 3 || i >= s[0] || j >= s[1] || k >= s[2]) {
        throw ShapeError("bad 3-d index into " + shape_str(s));
    }
    return node_->data[(i * s[1] + j) * s[2] + k];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    checked(node_);
    node_->requires_grad = value;
    return *this;
}

bool Tensor::is_leaf() const { return checked(node_).generation == 0; }

bool Tensor::has_grad() const { return checked(node_).grad.has_value(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw StateError("tensor has no gradient; run backward() first");
    return *node_->grad;
}

Tensor Tensor::grad_tensor() const {
    auto g = grad();
    return Tensor(shape(), std::vector<double>(g.begin(), g.end()));
}

void Tensor::zero_grad() {
    checked(node_);
    node_->grad.reset();
}

Tensor Tensor::detach() const { return Tensor(shape(), std::vector<double>(data().begin(), data().end())); }

Tensor Tensor::from_node(std::shared_ptr<detail::TensorNode> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

}  // namespace multitrans
