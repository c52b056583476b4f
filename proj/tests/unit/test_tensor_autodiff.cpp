#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <random>

#include "multitrans/autodiff.hpp"
#include "multitrans/errors.hpp"
#include "multitrans/ops.hpp"
#include "test_util.hpp"

using namespace multitrans;
using multitrans::testing::gradient_check;
using multitrans::testing::random_shape;
using multitrans::testing::random_tensor;

namespace {

void expect_values(const Tensor& t, std::initializer_list<double> expected, double tol = 0.0) {
    ASSERT_EQ(t.numel(), expected.size());
    std::size_t i = 0;
    for (double e : expected) EXPECT_NEAR(t[i++], e, tol) << "index " << i - 1;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
    EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.at(1, 2), 6.0);
    EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, ReshapeProducesNewTensor) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = ops::reshape(t, {3, 2});
    EXPECT_EQ(t.shape(), (Shape{2, 3}));
    EXPECT_EQ(r.shape(), (Shape{3, 2}));
    EXPECT_THROW(ops::reshape(t, {4, 2}), ShapeError);
}

TEST(Matmul, IdentityAndDot) {
    Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
    Tensor b = Tensor::matrix(2, 2, {3, 4, 5, 6});
    expect_values(ops::matmul(id, b), {3, 4, 5, 6});
    expect_values(ops::matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4})), {11});
}

TEST(Matmul, MismatchNamesBothShapes) {
    try {
        ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("[2x3] and [2x3]"), std::string::npos);
    }
}

TEST(Matmul, IdentityIsExact) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng() % 5, n = 1 + rng() % 5;
        Tensor a = random_tensor(rng, {m, n}, -2, 2, false);
        std::vector<double> left(m * m, 0.0), right(n * n, 0.0);
        for (std::size_t i = 0; i < m; ++i) left[i * m + i] = 1.0;
        for (std::size_t i = 0; i < n; ++i) right[i * n + i] = 1.0;
        Tensor il = ops::matmul(Tensor::matrix(m, m, left), a);
        Tensor ir = ops::matmul(a, Tensor::matrix(n, n, right));
        for (std::size_t i = 0; i < a.numel(); ++i) {
            EXPECT_EQ(il[i], a[i]);
            EXPECT_EQ(ir[i], a[i]);
        }
    }
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2}, -2, 2, false);
    backward(ops::sum(ops::matmul(a, b)));
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t p = 0; p < 4; ++p) {
            const double expected = b.at(p, 0) + b.at(p, 1);
            EXPECT_NEAR(a.grad()[i * 4 + p], expected, 1e-12);
        }
    }
    auto fd = finite_difference_grad([&](const Tensor& x) { return ops::sum(ops::matmul(x, b)).item(); }, a, 1e-5);
    EXPECT_LT(multitrans::testing::max_relative_error(a.grad(), fd.data()), 1e-6);
}

TEST(Softmax, Examples) {
    expect_values(ops::softmax(Tensor::vector({0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
    expect_values(ops::softmax(Tensor::vector({1000, 0}), 0), {1.0, 0.0}, 1e-12);
    // e^{x_i} / sum_j e^{x_j}, evaluated independently.
    expect_values(ops::softmax(Tensor::vector({1, 2, 3}), 0), {0.09003057317038046, 0.24472847105479767,
                                                               0.6652409557748219},
                  1e-12);
}

TEST(Softmax, NonFiniteInputIsNumericError) {
    EXPECT_THROW(ops::softmax(Tensor::vector({1.0, NAN}), 0), NumericError);
    EXPECT_THROW(ops::softmax(Tensor::vector({1.0, INFINITY}), 0), NumericError);
    EXPECT_THROW(ops::softmax(Tensor::vector({1.0}), 1), ShapeError);
}

TEST(Softmax, SlicesSumToOneProperty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Shape s = random_shape(rng);
        const std::size_t axis = rng() % s.size();
        Tensor x = random_tensor(rng, s, -50, 50, false);
        Tensor y = ops::softmax(x, axis);
        // Sum along axis through the reduce op.
        Tensor sums = ops::sum(y, axis);
        for (double v : sums.data()) EXPECT_NEAR(v, 1.0, 1e-9);
        for (double v : y.data()) EXPECT_GE(v, 0.0);
    }
}

TEST(Elementwise, Examples) {
    expect_values(ops::sigmoid(Tensor::scalar(0.0)), {0.5});
    expect_values(ops::log(Tensor::scalar(1.0)), {0.0});
    // x * Phi(x) at x = 1 with the exact normal CDF.
    expect_values(ops::gelu(Tensor::scalar(1.0)), {0.8413447460685429}, 1e-12);
    EXPECT_THROW(ops::log(Tensor::vector({1.0, 0.0})), NumericError);
    EXPECT_THROW(ops::log(Tensor::vector({-1.0})), NumericError);
}

TEST(Elementwise, BinaryShapesAndScalarBroadcast) {
    Tensor a = Tensor::vector({1, 2, 3});
    expect_values(ops::add(a, Tensor::scalar(1)), {2, 3, 4});
    expect_values(ops::sub(Tensor::scalar(1), a), {0, -1, -2});
    expect_values(ops::mul(a, a), {1, 4, 9});
    EXPECT_THROW(ops::add(a, Tensor::vector({1, 2})), ShapeError);
}

TEST(Reduce, Examples) {
    expect_values(ops::mean(Tensor::vector({0.2, 0.4, 0.6})), {0.4}, 1e-15);
    expect_values(ops::max(Tensor::matrix(2, 2, {1, 5, 7, 2}), 0), {7, 5});
    Tensor x = Tensor::vector({1, 2, 3}, true);
    backward(ops::sum(x));
    expect_values(x.grad_tensor(), {1, 1, 1});
    EXPECT_THROW(ops::sum(Tensor::zeros({2, 0}), 1), ShapeError);
    EXPECT_THROW(ops::sum(Tensor::zeros({2, 2}), 2), ShapeError);
}

TEST(Reduce, MaxRoutesGradientToFirstMaximum) {
    Tensor x = Tensor::vector({3, 1, 3}, true);
    backward(ops::max(x));
    expect_values(x.grad_tensor(), {1, 0, 0});
}

TEST(Concat, Examples) {
    expect_values(ops::concat({Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 2, {3, 4})}, 1), {1, 2, 3, 4});
    Tensor single = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tensor same = ops::concat({single}, 0);
    EXPECT_EQ(same.shape(), single.shape());
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(same[i], single[i]);
    EXPECT_THROW(ops::concat({Tensor::zeros({1, 2}), Tensor::zeros({2, 3})}, 1), ShapeError);
}

TEST(Concat, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    std::vector<Tensor> in{random_tensor(rng, {2, 3, 2}), random_tensor(rng, {2, 1, 2}), random_tensor(rng, {2, 4, 2})};
    Tensor weights = random_tensor(rng, {2, 8, 2}, -2, 2, false);
    auto loss = [&](const std::vector<Tensor>& xs) {
        return ops::sum(ops::mul(ops::concat(std::span<const Tensor>(xs), 1), weights));
    };
    EXPECT_LT(gradient_check(loss, in), 1e-6);
}

TEST(Backward, Examples) {
    Tensor x = Tensor::vector({1, 2}, true);
    backward(ops::sum(ops::mul(x, x)));
    expect_values(x.grad_tensor(), {2, 4});

    Tensor leaf = Tensor::scalar(3.0, true);
    backward(leaf);
    expect_values(leaf.grad_tensor(), {1});
}

TEST(Backward, NonScalarLossIsContractError) {
    Tensor x = Tensor::vector({1, 2}, true);
    EXPECT_THROW(backward(ops::scale(x, 2.0)), ContractError);
    Tape::discard();
}

TEST(Backward, SecondBackwardWithoutForwardIsStateError) {
    Tensor x = Tensor::vector({1, 2}, true);
    Tensor loss = ops::sum(ops::mul(x, x));
    backward(loss);
    EXPECT_THROW(backward(loss), StateError);
    EXPECT_EQ(Tape::size(), 0u);
}

TEST(Backward, GradientsAccumulateAcrossBranches) {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor(rng, {4});
    Tensor w1 = random_tensor(rng, {4}, -2, 2, false);
    Tensor w2 = random_tensor(rng, {4}, -2, 2, false);
    backward(ops::add(ops::sum(ops::mul(x, w1)), ops::sum(ops::sigmoid(ops::mul(x, w2)))));
    std::vector<double> both(x.grad().begin(), x.grad().end());

    x.zero_grad();
    backward(ops::sum(ops::mul(x, w1)));
    std::vector<double> first(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(ops::sum(ops::sigmoid(ops::mul(x, w2))));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(both[i], first[i] + x.grad()[i], 1e-14);
}

TEST(Backward, NoGradGuardRecordsNothing) {
    Tensor x = Tensor::vector({1, 2}, true);
    {
        NoGradGuard guard;
        Tensor y = ops::sum(ops::mul(x, x));
        EXPECT_FALSE(y.requires_grad());
        EXPECT_EQ(Tape::size(), 0u);
    }
    EXPECT_TRUE(Tape::recording());
}

TEST(FiniteDifference, Examples) {
    Tensor x = Tensor::vector({0.3, -1.2, 2.0});
    auto g = finite_difference_grad([](const Tensor& t) { return ops::sum(t).item(); }, x, 1e-4);
    for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-10);
    auto g2 = finite_difference_grad([](const Tensor& t) { return ops::sum(ops::mul(t, t)).item(); },
                                     Tensor::vector({3.0}), 1e-4);
    EXPECT_NEAR(g2[0], 6.0, 1e-8);
    EXPECT_THROW(finite_difference_grad([](const Tensor&) { return 0.0; }, x, 0.0), ContractError);
    // x restored after perturbation
    EXPECT_EQ(x[1], -1.2);
}

// Every differentiable op against central differences on random inputs in
// [-2, 2], rank <= 3, dims <= 5.
class OpGradientProperty : public ::testing::TestWithParam<int> {};

TEST_P(OpGradientProperty, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(1000 + GetParam());
    const Shape s = random_shape(rng);
    Tensor x = random_tensor(rng, s);
    Tensor y = random_tensor(rng, s);
    Tensor w = random_tensor(rng, s, -2, 2, false);
    const std::size_t axis = rng() % s.size();
    const double tol = 1e-3;
    // Weighted sums keep gradients from being trivially uniform.
    auto wsum = [&](const Tensor& t) { return ops::sum(ops::mul(t, w)); };
    struct Case {
        const char* name;
        std::function<Tensor(const std::vector<Tensor>&)> f;
        std::vector<Tensor> in;
    };
    Tensor positive = random_tensor(rng, s, 0.5, 2.0);
    // Max is non-differentiable at ties; keep entries at least 4/n apart.
    std::vector<double> spaced(x.numel());
    for (std::size_t i = 0; i < spaced.size(); ++i) {
        spaced[i] = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(spaced.size());
    }
    std::shuffle(spaced.begin(), spaced.end(), rng);
    Tensor separated(s, spaced, true);
    Tensor row_bias = random_tensor(rng, {s.back()});
    Tensor gain = random_tensor(rng, {s.back()});
    std::vector<Case> cases{
        {"add", [&](const auto& v) { return wsum(ops::add(v[0], v[1])); }, {x, y}},
        {"sub", [&](const auto& v) { return wsum(ops::sub(v[0], v[1])); }, {x, y}},
        {"mul", [&](const auto& v) { return wsum(ops::mul(v[0], v[1])); }, {x, y}},
        {"scale", [&](const auto& v) { return wsum(ops::scale(v[0], -1.7)); }, {x}},
        {"sigmoid", [&](const auto& v) { return wsum(ops::sigmoid(v[0])); }, {x}},
        {"log", [&](const auto& v) { return wsum(ops::log(v[0])); }, {positive}},
        {"gelu", [&](const auto& v) { return wsum(ops::gelu(v[0])); }, {x}},
        {"softmax", [&](const auto& v) { return wsum(ops::softmax(v[0], axis)); }, {x}},
        {"add_bias", [&](const auto& v) { return wsum(ops::add_bias(v[0], v[1])); }, {x, row_bias}},
        {"mean", [&](const auto& v) { return ops::sum(ops::mul(ops::mean(v[0], axis), ops::mean(w, axis))); }, {x}},
        {"sum", [&](const auto& v) { return ops::sum(ops::mul(ops::sum(v[0], axis), ops::mean(w, axis))); }, {x}},
        {"max", [&](const auto& v) { return ops::sum(ops::mul(ops::max(v[0], axis), ops::mean(w, axis))); }, {separated}},
        {"reshape", [&](const auto& v) { return ops::sum(ops::mul(ops::reshape(v[0], {x.numel()}),
                                                                  ops::reshape(w, {x.numel()}))); }, {x}},
    };
    if (s.back() > 1) {
        cases.push_back({"layer_norm",
                         [&](const auto& v) { return wsum(ops::layer_norm(v[0], v[1], v[2])); },
                         {x, gain, row_bias}});
    }
    if (s.size() == 2) {
        Tensor b = random_tensor(rng, {s[1], 3});
        cases.push_back({"matmul", [&](const auto& v) { return ops::sum(ops::sigmoid(ops::matmul(v[0], v[1]))); },
                         {x, b}});
    }
    if (s.size() == 3) {
        Tensor b = random_tensor(rng, {s[0], s[2], 2});
        Tensor bt = random_tensor(rng, {s[0], 4, s[2]});
        cases.push_back({"bmm", [&](const auto& v) { return ops::sum(ops::sigmoid(ops::bmm(v[0], v[1]))); },
                         {x, b}});
        cases.push_back({"bmm_t", [&](const auto& v) { return ops::sum(ops::sigmoid(ops::bmm(v[0], v[1], true))); },
                         {x, bt}});
    }
    for (auto& c : cases) {
        EXPECT_LT(gradient_check(c.f, c.in, 1e-4), tol) << c.name << " on shape " << shape_str(s);
    }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, OpGradientProperty, ::testing::Range(0, 40));
