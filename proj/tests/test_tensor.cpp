#include <gtest/gtest.h>

#include <cmath>

#include "agpis/core/gradcheck.hpp"
#include "agpis/core/tensor.hpp"

using namespace agpis;

TEST(Matmul, IdentityCase) {
  Tensor i2 = Tensor::from_data(2, 2, {1, 0, 0, 1});
  Tensor b = Tensor::from_data(2, 2, {1, 2, 3, 4});
  Tensor c = matmul(i2, b);
  EXPECT_EQ(c.data(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, IdentityBackwardAllOnes) {
  Tensor a = Tensor::from_data(2, 2, {1, 0, 0, 1});
  Tensor b = Tensor::from_data(2, 2, {5, 6, 7, 8}, true);
  Tensor c = sum_all(matmul(a, b));
  backward(c);
  EXPECT_EQ(b.grad(), (std::vector<double>{1, 1, 1, 1}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(4, 2);
  try {
    matmul(a, b);
    FAIL() << "expected shape error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(42);
  Tensor a = Tensor::randn(3, 4, rng, 0.5);
  Tensor b = Tensor::randn(4, 2, rng, 0.5);
  double err_a = grad_check([&](const Tensor& x) { return sum_all(mul(matmul(x, b), matmul(x, b))); }, a);
  EXPECT_LT(err_a, 1e-6);
  double err_b = grad_check([&](const Tensor& x) { return sum_all(mul(matmul(a, x), matmul(a, x))); }, b);
  EXPECT_LT(err_b, 1e-6);
}

TEST(Softmax, UniformTwoEntries) {
  Tensor x = Tensor::from_data(1, 2, {0, 0});
  Tensor y = softmax_rows(x);
  EXPECT_DOUBLE_EQ(y.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 0.5);
}

TEST(Softmax, LogTwoRatio) {
  Tensor x = Tensor::from_data(1, 2, {std::log(2.0), 0.0});
  Tensor y = softmax_rows(x);
  EXPECT_NEAR(y.data()[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(y.data()[1], 1.0 / 3.0, 1e-12);
}

TEST(Softmax, LargeInputNoOverflow) {
  Tensor x = Tensor::from_data(1, 2, {1000.0, 0.0});
  Tensor y = softmax_rows(x);
  EXPECT_NEAR(y.data()[0], 1.0, 1e-12);
  EXPECT_NEAR(y.data()[1], 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(y.data()[0]));
}

TEST(Softmax, RowsSumToOneAndNonnegative) {
  Rng rng(7);
  Tensor x = Tensor::randn(5, 9, rng, 3.0);
  Tensor y = softmax_rows(x);
  for (int r = 0; r < 5; ++r) {
    double s = 0.0;
    for (int c = 0; c < 9; ++c) {
      EXPECT_GE(y.at(r, c), 0.0);
      s += y.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  Tensor x = Tensor::filled(1, 4, 3.7);
  Tensor g = Tensor::filled(1, 4, 1.0);
  Tensor b = Tensor::zeros(1, 4);
  Tensor y = layer_norm(x, g, b);
  for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(LayerNorm, ConstantRowWithBeta) {
  Tensor x = Tensor::filled(1, 4, -2.0);
  Tensor g = Tensor::filled(1, 4, 1.0);
  Tensor b = Tensor::filled(1, 4, 0.25);
  Tensor y = layer_norm(x, g, b);
  for (double v : y.data()) EXPECT_NEAR(v, 0.25, 1e-9);
}

TEST(LayerNorm, NormalizesRandomRow) {
  Rng rng(3);
  Tensor x = Tensor::randn(1, 64, rng, 2.0);
  Tensor g = Tensor::filled(1, 64, 1.0);
  Tensor b = Tensor::zeros(1, 64);
  Tensor y = layer_norm(x, g, b, 1e-5);
  double mean = 0.0;
  for (double v : y.data()) mean += v;
  mean /= 64;
  EXPECT_LT(std::fabs(mean), 1e-9);
  double var = 0.0;
  for (double v : y.data()) var += (v - mean) * (v - mean);
  var /= 64;
  EXPECT_NEAR(var, 1.0, 1e-3);
}

TEST(LayerNorm, GradCheck) {
  Rng rng(11);
  Tensor x = Tensor::randn(3, 6, rng, 0.7);
  Tensor g = Tensor::randn(1, 6, rng, 0.5);
  Tensor b = Tensor::randn(1, 6, rng, 0.5);
  EXPECT_LT(grad_check([&](const Tensor& t) { return sum_all(mul(layer_norm(t, g, b), layer_norm(t, g, b))); }, x), 1e-6);
  EXPECT_LT(grad_check([&](const Tensor& t) { return sum_all(mul(layer_norm(x, t, b), layer_norm(x, t, b))); }, g), 1e-6);
}

TEST(CrossEntropy, TwoUniformLogits) {
  Tensor logits = Tensor::from_data(1, 2, {0, 0});
  Tensor l = cross_entropy_logits(logits, {0});
  EXPECT_NEAR(l.item(), std::log(2.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectNearZero) {
  Tensor logits = Tensor::from_data(1, 2, {10, -10});
  Tensor l = cross_entropy_logits(logits, {0});
  EXPECT_LT(l.item(), 1e-8);
}

TEST(CrossEntropy, Uniform45Classes) {
  Tensor logits = Tensor::zeros(1, 45);
  Tensor l = cross_entropy_logits(logits, {7});
  EXPECT_NEAR(l.item(), std::log(45.0), 1e-9);
  EXPECT_NEAR(l.item(), 3.8067, 5e-5);
}

TEST(CrossEntropy, OutOfRangeTarget) {
  Tensor logits = Tensor::zeros(1, 3);
  EXPECT_THROW(cross_entropy_logits(logits, {3}), std::out_of_range);
  EXPECT_THROW(cross_entropy_logits(logits, {-1}), std::out_of_range);
}

TEST(CrossEntropy, GradCheck) {
  Rng rng(5);
  Tensor logits = Tensor::randn(4, 6, rng, 1.0);
  EXPECT_LT(grad_check([&](const Tensor& t) { return cross_entropy_logits(t, {0, 3, 5, 2}); },
                       logits),
            1e-7);
}

TEST(Backward, ProductRule) {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y = Tensor::scalar(3.0, true);
  backward(mul(x, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::filled(2, 3, 1.5, true);
  backward(sum_all(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = Tensor::filled(2, 2, 1.0, true);
  EXPECT_THROW(backward(add(x, x)), std::logic_error);
}

TEST(Backward, TwoLayerCompositionMatchesFiniteDifferences) {
  Rng rng(13);
  Tensor w1 = Tensor::randn(4, 5, rng, 0.5);
  Tensor w2 = Tensor::randn(5, 3, rng, 0.5);
  Tensor x = Tensor::randn(2, 4, rng, 0.8);
  auto f = [&](const Tensor& t) { return sum_all(gelu(matmul(gelu(matmul(x, t)), w2))); };
  EXPECT_LT(grad_check(f, w1), 1e-6);
}

TEST(Backward, AccumulatesAcrossUses) {
  // loss = sum(x*x) uses x twice; gradient must be the sum of both paths
  Tensor x = Tensor::from_data(1, 2, {1.0, 2.0}, true);
  backward(sum_all(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    Rng rng(99);
    Tensor a = Tensor::randn(6, 6, rng, 0.3);
    Tensor b = Tensor::randn(6, 6, rng, 0.3);
    backward(sum_all(softmax_rows(matmul(a, b))));
    return a.grad();
  };
  auto g1 = run();
  auto g2 = run();
  EXPECT_EQ(g1, g2);  // bitwise
}

TEST(GradCheck, LinearIsExact) {
  Tensor x = Tensor::from_data(1, 3, {1, 2, 3}, true);
  EXPECT_LT(grad_check([](const Tensor& t) { return sum_all(t); }, x), 1e-10);
}

TEST(GradCheck, Quadratic) {
  Tensor x = Tensor::from_data(1, 2, {1.0, 2.0}, true);
  auto f = [](const Tensor& t) { return sum_all(mul(t, t)); };
  x.zero_grad();
  Tensor y = f(x);
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  EXPECT_LT(grad_check(f, x), 1e-8);
}

TEST(Ops, SliceConcatGradCheck) {
  Rng rng(21);
  Tensor x = Tensor::randn(4, 6, rng, 0.5);
  auto f = [](const Tensor& t) {
    Tensor a = slice_cols(t, 0, 3);
    Tensor b = slice_cols(t, 3, 3);
    Tensor joined = concat_rows({a, b});
    return sum_all(mul(joined, joined));
  };
  EXPECT_LT(grad_check(f, x), 1e-7);
}

TEST(Ops, BceWithLogitMatchesDefinition) {
  Tensor z = Tensor::scalar(0.3, true);
  double p = 1.0 / (1.0 + std::exp(-0.3));
  EXPECT_NEAR(bce_with_logit(z, 1).item(), -std::log(p), 1e-12);
  EXPECT_NEAR(bce_with_logit(z, 0).item(), -std::log(1 - p), 1e-12);
  backward(bce_with_logit(z, 1));
  EXPECT_NEAR(z.grad()[0], p - 1.0, 1e-12);
}
