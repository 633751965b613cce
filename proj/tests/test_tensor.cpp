#include "kmgan/tensor.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace kmgan;
using kmgan::testing::max_gradient_error;
using kmgan::testing::random_matrix;

namespace {

constexpr double kTol = 1e-4;

// Weighted sum so every output entry carries a distinct upstream gradient.
Tensor weighted(const Tensor& y, std::uint64_t seed) {
    Rng rng(seed);
    return sum(mul(y, Tensor(random_matrix(rng, y.rows(), y.cols()))));
}

}  // namespace

TEST(Tensor, ScalarAndItem) {
    Tensor s = Tensor::scalar(2.5);
    EXPECT_EQ(s.rows(), 1);
    EXPECT_DOUBLE_EQ(s.item(), 2.5);
    EXPECT_THROW(Tensor(Matrix::Zero(2, 2)).item(), ShapeError);
}

TEST(Tensor, BackwardRejectsNonScalarAndLeaves) {
    Tensor x(Matrix::Ones(2, 2), true);
    EXPECT_THROW(backward(relu(x)), ShapeError);
    EXPECT_THROW(backward(Tensor::scalar(1.0, true)), std::logic_error);
}

TEST(Tensor, UnreachedLeafHasZeroGradient) {
    Tensor x(Matrix::Ones(2, 3), true);
    Tensor unused(Matrix::Ones(4, 1), true);
    Gradients g = backward(sum(x));
    EXPECT_TRUE(g.of(unused).isZero());
    EXPECT_EQ(g.of(unused).rows(), 4);
    EXPECT_TRUE(g.of(x).isOnes());
}

TEST(Tensor, SharedSubexpressionAccumulates) {
    Tensor x(Matrix::Constant(1, 1, 3.0), true);
    Tensor y = mul(x, x);  // x^2 -> 2x
    Gradients g = backward(sum(add(y, x)));
    EXPECT_DOUBLE_EQ(g.of(x)(0, 0), 7.0);
}

TEST(Tensor, DetachCutsTheGraph) {
    Tensor x(Matrix::Constant(1, 1, 3.0), true);
    Tensor y = mul(x, x.detach());
    EXPECT_DOUBLE_EQ(backward(sum(y)).of(x)(0, 0), 3.0);
}

TEST(Tensor, ShapeErrors) {
    Tensor a(Matrix::Ones(2, 3)), b(Matrix::Ones(2, 2));
    EXPECT_THROW(matmul(a, b), ShapeError);
    EXPECT_NO_THROW(matmul(b, a));
    EXPECT_THROW(add(a, b), ShapeError);
    EXPECT_THROW(add_row(a, Tensor(Matrix::Ones(1, 2))), ShapeError);
    EXPECT_THROW(pairwise_l1_cross(a, b), ShapeError);
}

TEST(Tensor, NonFiniteValuesAreRejected) {
    Tensor x(Matrix::Constant(1, 1, 0.0), true);
    EXPECT_THROW(log(x), NumericError);
    Matrix bad = Matrix::Zero(1, 1);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(require_finite(bad, "probe"), NumericError);
}

TEST(Tensor, PairwiseValues) {
    Matrix x(3, 1);
    x << 0, 2, 5;
    EXPECT_DOUBLE_EQ(pairwise_l1_within(Tensor(x)).item(), 2 + 5 + 3);
    Matrix a(1, 2), b(2, 2);
    a << 0, 0;
    b << 1, 2, -3, 4;
    EXPECT_DOUBLE_EQ(pairwise_l1_cross(Tensor(a), Tensor(b)).item(), 3 + 7);
}

TEST(Tensor, RowNormAtOriginHasZeroSubgradient) {
    Tensor x(Matrix::Zero(2, 3), true);
    Gradients g = backward(sum(row_norms(x)));
    EXPECT_TRUE(g.of(x).isZero());
}

TEST(Tensor, SoftmaxRowsSumToOne) {
    Rng rng(3);
    Matrix p = softmax(random_matrix(rng, 5, 4, 30.0));
    for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(Tensor, BatchNormNormalises) {
    Rng rng(5);
    Matrix x = random_matrix(rng, 32, 3, 4.0);
    auto out = batch_norm_train(Tensor(x), Tensor(Matrix::Ones(1, 3)), Tensor(Matrix::Zero(1, 3)), 1e-5);
    const Matrix& y = out.y.value();
    for (Eigen::Index c = 0; c < 3; ++c) {
        EXPECT_NEAR(y.col(c).mean(), 0.0, 1e-12);
        EXPECT_NEAR(y.col(c).squaredNorm() / 32.0, 1.0, 1e-5);
    }
    EXPECT_THROW(batch_norm_train(Tensor(Matrix::Ones(1, 3)), Tensor(Matrix::Ones(1, 3)),
                                  Tensor(Matrix::Zero(1, 3)), 1e-5),
                 std::invalid_argument);
}

// Finite-difference checks for every primitive, over several random instances.
class OpGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradient, Elementwise) {
    Rng rng(GetParam());
    Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 4);
    Matrix pos = a.cwiseAbs().array() + 0.5;
    auto seed = GetParam();
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(add(t[0], t[1]), seed); }, {a, b}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(sub(t[0], t[1]), seed); }, {a, b}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(mul(t[0], t[1]), seed); }, {a, b}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(relu(t[0]), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(sigmoid(t[0]), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(tanh(t[0]), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(log(t[0]), seed); }, {pos}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(abs(t[0]), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(clamp(t[0], -0.5, 0.5), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(scale(t[0], -1.7), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(add_scalar(t[0], 2.0), seed); }, {a}), kTol);
}

TEST_P(OpGradient, Structural) {
    Rng rng(GetParam());
    auto seed = GetParam();
    Matrix a = random_matrix(rng, 5, 3), w = random_matrix(rng, 3, 2), r = random_matrix(rng, 1, 3);
    ColVector f = random_matrix(rng, 5, 1);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(matmul(t[0], t[1]), seed); }, {a, w}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(add_row(t[0], t[1]), seed); }, {a, r}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(scale_rows(t[0], f), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(sum_rows(t[0]), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(row_norms(t[0]), seed); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return mean(t[0]); }, {a}), kTol);
}

TEST_P(OpGradient, PairwiseAndCrossEntropy) {
    Rng rng(GetParam());
    Matrix a = random_matrix(rng, 4, 3), b = random_matrix(rng, 5, 3);
    EXPECT_LE(max_gradient_error([&](auto& t) { return pairwise_l1_within(t[0]); }, {a}), kTol);
    EXPECT_LE(max_gradient_error([&](auto& t) { return pairwise_l1_cross(t[0], t[1]); }, {a, b}), kTol);
    std::vector<std::size_t> labels{0, 2, 1, 2};
    EXPECT_LE(max_gradient_error([&](auto& t) { return softmax_cross_entropy(t[0], labels); }, {a}), kTol);
}

TEST_P(OpGradient, BatchNorm) {
    Rng rng(GetParam());
    auto seed = GetParam();
    Matrix x = random_matrix(rng, 6, 3, 2.0), g = random_matrix(rng, 1, 3), b = random_matrix(rng, 1, 3);
    EXPECT_LE(max_gradient_error([&](auto& t) { return weighted(batch_norm_train(t[0], t[1], t[2], 1e-5).y, seed); },
                                 {x, g, b}),
              kTol);
    RowVector mu = random_matrix(rng, 1, 3), var = random_matrix(rng, 1, 3).cwiseAbs().array() + 0.3;
    EXPECT_LE(max_gradient_error(
                  [&](auto& t) { return weighted(batch_norm_eval(t[0], t[1], t[2], mu, var, 1e-5), seed); },
                  {x, g, b}),
              kTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range<std::uint64_t>(1, 21));
