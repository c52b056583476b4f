#include "multitrans/autodiff.hpp"

#include "multitrans/errors.hpp"

namespace multitrans {

namespace {

struct TapeEntry {
    std::vector<std::shared_ptr<detail::TensorNode>> inputs;
    std::shared_ptr<detail::TensorNode> output;
    BackwardRule rule;
};

struct TapeState {
    std::vector<TapeEntry> entries;
    std::uint64_t generation = 1;
    bool grad_enabled = true;
};

TapeState& state() {
    thread_local TapeState s;
    return s;
}

}  // namespace

bool Tape::recording() { return state().grad_enabled; }

std::uint64_t Tape::generation() { return state().generation; }

std::size_t Tape::size() { return state().entries.size(); }

void Tape::discard() {
    auto& s = state();
    s.entries.clear();
    ++s.generation;
}

void Tape::record(std::vector<std::shared_ptr<detail::TensorNode>> inputs,
                  std::shared_ptr<detail::TensorNode> output, BackwardRule rule) {
    auto& s = state();
    output->generation = s.generation;
    s.entries.push_back({std::move(inputs), std::move(output), std::move(rule)});
}

NoGradGuard::NoGradGuard() : previous_(state().grad_enabled) { state().grad_enabled = false; }

NoGradGuard::~NoGradGuard() { state().grad_enabled = previous_; }

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward() on an undefined tensor");
    if (loss.numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    auto node = loss.node();
    if (node->generation == 0) {
        // A leaf is its own loss.
        if (node->requires_grad) node->ensure_grad()[0] += 1.0;
        return;
    }
    auto& s = state();
    if (node->generation != s.generation) {
        throw StateError("backward() on a loss whose tape was already consumed; run a new forward pass");
    }
    node->ensure_grad()[0] += 1.0;
    for (auto it = s.entries.rbegin(); it != s.entries.rend(); ++it) {
        if (!it->output->grad) continue;
        it->rule(*it->output->grad);
    }
    s.entries.clear();
    ++s.generation;
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, Tensor x, double eps) {
    if (!(eps > 0.0)) throw ContractError("finite_difference_grad needs eps > 0");
    NoGradGuard guard;
    auto values = x.mutable_data();
    std::vector<double> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double up = f(x);
        values[i] = saved - eps;
        const double down = f(x);
        values[i] = saved;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return Tensor(x.shape(), std::move(grad));
}

}  // namespace multitrans
