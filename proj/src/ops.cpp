#include "multitrans/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "multitrans/autodiff.hpp"
#include "multitrans/errors.hpp"

namespace multitrans::ops {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::recording()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Gradient buffer of an input, or null when it does not take gradients.
std::vector<double>* grad_sink(TensorNode* node) {
    return node->requires_grad ? &node->ensure_grad() : nullptr;
}

Tensor finish(Shape shape, std::vector<double> data, bool track, std::vector<NodePtr> inputs,
              BackwardRule rule) {
    Tensor out(std::move(shape), std::move(data), track);
    if (track) Tape::record(std::move(inputs), out.node(), std::move(rule));
    return out;
}

template <class MakeRule>
Tensor finish_with_output(Shape shape, std::vector<double> data, bool track, std::vector<NodePtr> inputs,
                          MakeRule make_rule) {
    Tensor out(std::move(shape), std::move(data), track);
    if (track) Tape::record(std::move(inputs), out.node(), make_rule(out.node().get()));
    return out;
}

void check_finite(const Tensor& x, const char* op) {
    for (double v : x.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
    }
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& x, Forward fwd, Derivative deriv) {
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    const bool track = wants_grad({&x});
    auto xn = x.node();
    TensorNode* xp = xn.get();
    return finish(x.shape(), std::move(out), track, {xn}, [xp, deriv](const std::vector<double>& g) {
        auto* dx = grad_sink(xp);
        if (!dx) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * deriv(xp->data[i]);
    });
}

enum class Binary { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary op, const char* name) {
    const bool same = a.shape() == b.shape();
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    if (!same && !a_scalar && !b_scalar) {
        throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ and neither is a scalar");
    }
    const Shape& shape = (same || b_scalar) ? a.shape() : b.shape();
    const std::size_t n = shape_numel(shape);
    const auto ad = a.data();
    const auto bd = b.data();
    const std::size_t sa = (a.numel() == n) ? 1 : 0;
    const std::size_t sb = (b.numel() == n) ? 1 : 0;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ad[i * sa];
        const double y = bd[i * sb];
        out[i] = op == Binary::Add ? x + y : op == Binary::Sub ? x - y : x * y;
    }
    const bool track = wants_grad({&a, &b});
    auto an = a.node();
    auto bn = b.node();
    TensorNode* ap = an.get();
    TensorNode* bp = bn.get();
    return finish(shape, std::move(out), track, {an, bn}, [ap, bp, sa, sb, op](const std::vector<double>& g) {
        if (auto* da = grad_sink(ap)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double local = op == Binary::Mul ? bp->data[i * sb] : 1.0;
                (*da)[i * sa] += g[i] * local;
            }
        }
        if (auto* db = grad_sink(bp)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double local = op == Binary::Mul ? ap->data[i * sa] : op == Binary::Sub ? -1.0 : 1.0;
                (*db)[i * sb] += g[i] * local;
            }
        }
    });
}

// Splits a shape around `axis` into (outer, axis extent, inner) strides.
struct AxisView {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            const double* brow = bd.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    const bool track = wants_grad({&a, &b});
    auto an = a.node();
    auto bn = b.node();
    TensorNode* ap = an.get();
    TensorNode* bp = bn.get();
    return finish({m, n}, std::move(out), track, {an, bn}, [ap, bp, m, k, n](const std::vector<double>& g) {
        if (auto* da = grad_sink(ap)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bp->data[p * n + j];
                    (*da)[i * k + p] += acc;
                }
            }
        }
        if (auto* db = grad_sink(bp)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = ap->data[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) (*db)[p * n + j] += aip * g[i * n + j];
                }
            }
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
        a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         (transpose_b ? " (right operand transposed)" : ""));
    }
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
    // Element (p, j) of the effective right operand for one batch.
    const std::size_t bs_p = transpose_b ? 1 : n;
    const std::size_t bs_j = transpose_b ? k : 1;
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(batch * m * n, 0.0);
    for (std::size_t t = 0; t < batch; ++t) {
        const double* A = ad.data() + t * m * k;
        const double* B = bd.data() + t * k * n;
        double* O = out.data() + t * m * n;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = A[i * k + p];
                for (std::size_t j = 0; j < n; ++j) O[i * n + j] += aip * B[p * bs_p + j * bs_j];
            }
        }
    }
    const bool track = wants_grad({&a, &b});
    auto an = a.node();
    auto bn = b.node();
    TensorNode* ap = an.get();
    TensorNode* bp = bn.get();
    return finish({batch, m, n}, std::move(out), track, {an, bn},
                  [ap, bp, batch, m, k, n, bs_p, bs_j](const std::vector<double>& g) {
                      auto* da = grad_sink(ap);
                      auto* db = grad_sink(bp);
                      for (std::size_t t = 0; t < batch; ++t) {
                          const double* A = ap->data.data() + t * m * k;
                          const double* B = bp->data.data() + t * k * n;
                          const double* G = g.data() + t * m * n;
                          for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                  double acc = 0.0;
                                  const double aip = A[i * k + p];
                                  for (std::size_t j = 0; j < n; ++j) {
                                      const double gij = G[i * n + j];
                                      acc += gij * B[p * bs_p + j * bs_j];
                                      if (db) (*db)[t * k * n + p * bs_p + j * bs_j] += aip * gij;
                                  }
                                  if (da) (*da)[t * m * k + i * k + p] += acc;
                              }
                          }
                      }
                  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Mul, "mul"); }

Tensor scale(const Tensor& x, double factor) {
    return unary(x, [factor](double v) { return v * factor; }, [factor](double) { return factor; });
}

Tensor sigmoid(const Tensor& x) {
    auto f = [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    };
    return unary(x, f, [f](double v) {
        const double s = f(v);
        return s * (1.0 - s);
    });
}

Tensor log(const Tensor& x) {
    for (double v : x.data()) {
        if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
    }
    return unary(x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    constexpr double inv_sqrt_2pi = std::numbers::inv_sqrtpi * inv_sqrt2;
    return unary(
        x, [](double v) { return v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)); },
        [](double v) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    return unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
    }
    const std::size_t n = bias.dim(0);
    const auto xd = x.data();
    const auto bd = bias.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] + bd[i % n];
    const bool track = wants_grad({&x, &bias});
    auto xn = x.node();
    auto bn = bias.node();
    TensorNode* xp = xn.get();
    TensorNode* bp = bn.get();
    return finish(x.shape(), std::move(out), track, {xn, bn}, [xp, bp, n](const std::vector<double>& g) {
        if (auto* dx = grad_sink(xp)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
        }
        if (auto* db = grad_sink(bp)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*db)[i % n] += g[i];
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    }
    check_finite(x, "softmax");
    const AxisView v = axis_view(x.shape(), axis);
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.extent * v.inner + in;
            double hi = xd[base];
            for (std::size_t e = 1; e < v.extent; ++e) hi = std::max(hi, xd[base + e * v.inner]);
            double total = 0.0;
            for (std::size_t e = 0; e < v.extent; ++e) {
                const double w = std::exp(xd[base + e * v.inner] - hi);
                out[base + e * v.inner] = w;
                total += w;
            }
            for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] /= total;
        }
    }
    const bool track = wants_grad({&x});
    auto xn = x.node();
    TensorNode* xp = xn.get();
    return finish_with_output(x.shape(), std::move(out), track, {xn}, [xp, v](TensorNode* yp) {
        return [xp, yp, v](const std::vector<double>& g) {
            auto* dx = grad_sink(xp);
            if (!dx) return;
            const auto& y = yp->data;
            for (std::size_t o = 0; o < v.outer; ++o) {
                for (std::size_t in = 0; in < v.inner; ++in) {
                    const std::size_t base = o * v.extent * v.inner + in;
                    double dot = 0.0;
                    for (std::size_t e = 0; e < v.extent; ++e) {
                        const std::size_t i = base + e * v.inner;
                        dot += g[i] * y[i];
                    }
                    for (std::size_t e = 0; e < v.extent; ++e) {
                        const std::size_t i = base + e * v.inner;
                        (*dx)[i] += y[i] * (g[i] - dot);
                    }
                }
            }
        };
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() == 0 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.shape().back() ||
        bias.dim(0) != x.shape().back()) {
        throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
    }
    const std::size_t n = x.shape().back();
    if (n == 0) throw ShapeError("layer_norm over an empty axis");
    const std::size_t rows = x.numel() / n;
    const auto xd = x.data();
    const auto gd = gain.data();
    const auto bd = bias.data();
    std::vector<double> out(xd.size());
    // Normalized values and inverse std per row, kept for the backward rule.
    auto xhat = std::make_shared<std::vector<double>>(xd.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * is;
            (*xhat)[r * n + j] = h;
            out[r * n + j] = gd[j] * h + bd[j];
        }
    }
    const bool track = wants_grad({&x, &gain, &bias});
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    TensorNode* xp = xn.get();
    TensorNode* gp = gn.get();
    TensorNode* bp = bn.get();
    return finish(x.shape(), std::move(out), track, {xn, gn, bn},
                  [xp, gp, bp, xhat, inv_std, n, rows](const std::vector<double>& g) {
                      auto* dx = grad_sink(xp);
                      auto* dg = grad_sink(gp);
                      auto* db = grad_sink(bp);
                      const double inv_n = 1.0 / static_cast<double>(n);
                      for (std::size_t r = 0; r < rows; ++r) {
                          const double* gr = g.data() + r * n;
                          const double* hr = xhat->data() + r * n;
                          double mean_d = 0.0;
                          double mean_dh = 0.0;
                          for (std::size_t j = 0; j < n; ++j) {
                              const double d = gr[j] * gp->data[j];
                              mean_d += d;
                              mean_dh += d * hr[j];
                              if (dg) (*dg)[j] += gr[j] * hr[j];
                              if (db) (*db)[j] += gr[j];
                          }
                          if (!dx) continue;
                          mean_d *= inv_n;
                          mean_dh *= inv_n;
                          const double is = (*inv_std)[r];
                          for (std::size_t j = 0; j < n; ++j) {
                              const double d = gr[j] * gp->data[j];
                              (*dx)[r * n + j] += is * (d - mean_d - hr[j] * mean_dh);
                          }
                      }
                  });
}

Tensor reduce(const Tensor& x, Reduce op, std::optional<std::size_t> axis) {
    AxisView v;
    Shape out_shape;
    if (axis) {
        if (*axis >= x.rank()) {
            throw ShapeError("reduce: axis " + std::to_string(*axis) + " out of range for " + shape_str(x.shape()));
        }
        v = axis_view(x.shape(), *axis);
        out_shape = x.shape();
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
    } else {
        v.extent = x.numel();
    }
    if (v.extent == 0) throw ShapeError("reduce over an empty axis of " + shape_str(x.shape()));
    const auto xd = x.data();
    std::vector<double> out(v.outer * v.inner);
    // Flat index of the selected element, per output, for Max.
    std::vector<std::size_t> argmax(op == Reduce::Max ? out.size() : 0);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.extent * v.inner + in;
            const std::size_t dst = o * v.inner + in;
            if (op == Reduce::Max) {
                std::size_t best = base;
                for (std::size_t e = 1; e < v.extent; ++e) {
                    const std::size_t i = base + e * v.inner;
                    if (xd[i] > xd[best]) best = i;
                }
                argmax[dst] = best;
                out[dst] = xd[best];
            } else {
                double acc = 0.0;
                for (std::size_t e = 0; e < v.extent; ++e) acc += xd[base + e * v.inner];
                out[dst] = op == Reduce::Mean ? acc / static_cast<double>(v.extent) : acc;
            }
        }
    }
    const bool track = wants_grad({&x});
    auto xn = x.node();
    TensorNode* xp = xn.get();
    return finish(std::move(out_shape), std::move(out), track, {xn},
                  [xp, v, op, argmax = std::move(argmax)](const std::vector<double>& g) {
                      auto* dx = grad_sink(xp);
                      if (!dx) return;
                      const double w = op == Reduce::Mean ? 1.0 / static_cast<double>(v.extent) : 1.0;
                      for (std::size_t o = 0; o < v.outer; ++o) {
                          for (std::size_t in = 0; in < v.inner; ++in) {
                              const std::size_t dst = o * v.inner + in;
                              if (op == Reduce::Max) {
                                  (*dx)[argmax[dst]] += g[dst];
                                  continue;
                              }
                              const std::size_t base = o * v.extent * v.inner + in;
                              for (std::size_t e = 0; e < v.extent; ++e) (*dx)[base + e * v.inner] += g[dst] * w;
                          }
                      }
                  });
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat of zero tensors");
    const Shape& first = xs[0].shape();
    if (axis >= first.size()) {
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& t : xs) {
        const Shape& s = t.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) {
            throw ShapeError("concat: shape " + shape_str(s) + " does not match " + shape_str(first) +
                             " outside axis " + std::to_string(axis));
        }
        out_shape[axis] += s[axis];
    }
    const AxisView ov = axis_view(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& t : xs) {
        const std::size_t chunk = t.shape()[axis] * ov.inner;
        const auto td = t.data();
        for (std::size_t o = 0; o < ov.outer; ++o) {
            std::copy_n(td.data() + o * chunk, chunk, out.data() + o * ov.extent * ov.inner + offset * ov.inner);
        }
        offsets.push_back(offset);
        offset += t.shape()[axis];
    }
    bool track = false;
    std::vector<NodePtr> inputs;
    std::vector<TensorNode*> raw;
    for (const auto& t : xs) {
        track = track || wants_grad({&t});
        inputs.push_back(t.node());
        raw.push_back(t.node().get());
    }
    return finish(std::move(out_shape), std::move(out), track, std::move(inputs),
                  [raw, offsets, ov, axis](const std::vector<double>& g) {
                      for (std::size_t k = 0; k < raw.size(); ++k) {
                          auto* dx = grad_sink(raw[k]);
                          if (!dx) continue;
                          const std::size_t chunk = raw[k]->shape[axis] * ov.inner;
                          for (std::size_t o = 0; o < ov.outer; ++o) {
                              const double* src = g.data() + o * ov.extent * ov.inner + offsets[k] * ov.inner;
                              double* dst = dx->data() + o * chunk;
                              for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                          }
                      }
                  });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    const auto xd = x.data();
    const bool track = wants_grad({&x});
    auto xn = x.node();
    TensorNode* xp = xn.get();
    return finish(std::move(shape), std::vector<double>(xd.begin(), xd.end()), track, {xn},
                  [xp](const std::vector<double>& g) {
                      auto* dx = grad_sink(xp);
                      if (!dx) return;
                      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
                  });
}

}  // namespace multitrans::ops
