#include <gtest/gtest.h>

#include <cmath>

#include "recdan/errors.hpp"
#include "recdan/gradcheck.hpp"
#include "recdan/kernels.hpp"
#include "recdan/ops.hpp"
#include "test_util.hpp"

using namespace recdan;
using test::random_tensor;
using test::values;

TEST(Matmul, IdentityAndClosedForm) {
  Tape tape;
  const auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const auto m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(values(ops::matmul(tape, eye, m)), values(m));
  const auto r = ops::matmul(tape, Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(r[0], 11.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(ops::matmul(tape, Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  const auto a = random_tensor({3, 4}, 1), b = random_tensor({4, 2}, 2);
  const auto w = random_tensor({3, 2}, 3, 1.0, false);
  const auto rep = grad_check([&](Tape& t) { return ops::sum(t, ops::mul(t, ops::matmul(t, a, b), w)); },
                              {{"a", a}, {"b", b}}, 1e-5, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST(Elementwise, ClosedForms) {
  Tape tape;
  EXPECT_DOUBLE_EQ(ops::sigmoid(tape, Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(ops::tanh(tape, Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(values(ops::relu(tape, Tensor::vector({-3.2, 3.2}))), (std::vector<double>{0.0, 3.2}));
  EXPECT_DOUBLE_EQ(ops::square(tape, Tensor::scalar(-3.0)).item(), 9.0);
  EXPECT_EQ(values(ops::mul(tape, Tensor::vector({2, 3}), Tensor::vector({4, 5}))), (std::vector<double>{8, 15}));
  EXPECT_EQ(values(ops::sub(tape, Tensor::vector({2, 3}), Tensor::vector({4, 5}))), (std::vector<double>{-2, -2}));
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  Tape tape;
  EXPECT_THROW(ops::log(tape, Tensor::vector({1.0, 0.0})), DomainError);
  EXPECT_NEAR(ops::log_clamped(tape, Tensor::scalar(0.0), 1e-7).item(), std::log(1e-7), 1e-15);
}

TEST(Elementwise, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(ops::add(tape, Tensor({2}), Tensor({3})), DimensionError);
}

TEST(Softmax, ClosedFormsAndStability) {
  Tape tape;
  EXPECT_EQ(values(ops::softmax(tape, Tensor::vector({2, 2}))), (std::vector<double>{0.5, 0.5}));
  const auto p = ops::softmax(tape, Tensor::vector({0.0, std::log(3.0)}));
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  const auto big = ops::softmax(tape, Tensor::vector({1000.0, 0.0}));
  EXPECT_TRUE(big.all_finite());
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_NEAR(big[1], 0.0, 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  Tape tape;
  const auto p = ops::softmax(tape, random_tensor({20, 2}, 4, 10.0, false));
  for (std::size_t r = 0; r < 20; ++r) EXPECT_NEAR(p.at(r, 0) + p.at(r, 1), 1.0, 1e-12);
}

TEST(MeanSquaredError, ClosedFormAndGradient) {
  Tape tape;
  EXPECT_DOUBLE_EQ(ops::mean_squared_error(tape, Tensor::vector({1, 2}), Tensor::vector({1, 2})).item(), 0.0);
  const auto pred = Tensor::vector({1, 2}, true);
  const auto loss = ops::mean_squared_error(tape, pred, Tensor::vector({1, 4}));
  EXPECT_DOUBLE_EQ(loss.item(), 2.0);
  tape.backward(loss);
  // 2 (pred - truth) / n
  EXPECT_DOUBLE_EQ(pred.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(pred.grad()[1], -2.0);
  const auto p = random_tensor({7}, 5), t = random_tensor({7}, 6, 1.0, false);
  EXPECT_TRUE(grad_check([&](Tape& tp) { return ops::mean_squared_error(tp, p, t); }, {{"pred", p}}, 1e-5, 1e-6)
                  .passed);
}

TEST(Backward, SquareAtThree) {
  Tape tape;
  const auto x = Tensor::scalar(3.0, true);
  tape.backward(ops::square(tape, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SecondCallDoublesGradients) {
  const auto w = random_tensor({4, 4}, 7), x = random_tensor({4, 1}, 8, 1.0, false);
  Tape tape;
  const auto loss = ops::sum(tape, ops::sigmoid(tape, ops::matmul(tape, w, x)));
  tape.backward(loss);
  const auto once = std::vector<double>(w.grad().begin(), w.grad().end());
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Backward, SigmoidLayerMatchesFiniteDifferences) {
  const auto w = random_tensor({4, 4}, 9), x = random_tensor({4, 1}, 10, 1.0, false);
  const auto rep = grad_check([&](Tape& t) { return ops::sum(t, ops::sigmoid(t, ops::matmul(t, w, x))); },
                              {{"w", w}}, 1e-5, 1e-5);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  const auto x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(tape.backward(ops::square(tape, x)), ArgumentError);
}

TEST(Backward, InferenceTapeRecordsNothing) {
  Tape tape = Tape::inference();
  const auto x = Tensor::scalar(3.0, true);
  ops::square(tape, x);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(GradCheck, PolynomialIsExact) {
  const auto x = Tensor::scalar(2.0, true);
  const auto rep = grad_check([&](Tape& t) { return ops::mul(t, x, x); }, {{"x", x}}, 1e-5, 1e-8);
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.max_rel_error(), 1e-8);
  EXPECT_DOUBLE_EQ(x[0], 2.0);  // restored
}

TEST(GradCheck, WrongBackwardRuleIsCaught) {
  const auto x = random_tensor({5}, 11);
  auto broken_square = [&](Tape& t) {
    Tensor out({5});
    for (std::size_t i = 0; i < 5; ++i) out[i] = x[i] * x[i];
    if (t.enabled()) {
      out.set_requires_grad(true);
      t.record(out, [x, out] {
        for (std::size_t i = 0; i < 5; ++i) x.grad()[i] += 3.0 * x[i] * out.grad()[i];  // should be 2x
      });
    }
    return ops::sum(t, out);
  };
  const auto rep = grad_check(broken_square, {{"x", x}}, 1e-5, 1e-5);
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_rel_error(), 1e-2);
}

TEST(Kernels, SerialAndOpenMpAgreeBitwise) {
  const std::size_t m = 37, k = 29, n = 41;
  const auto a = values(random_tensor({m, k}, 12, 1.0, false));
  const auto b = values(random_tensor({k, n}, 13, 1.0, false));
  const auto bt = values(random_tensor({n, k}, 14, 1.0, false));
  const auto am = values(random_tensor({m, n}, 15, 1.0, false));
  std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
  kernels::serial::gemm_acc(a, b, c1, m, k, n);
  kernels::omp::gemm_acc(a, b, c2, m, k, n);
  EXPECT_EQ(c1, c2);
  std::vector<double> d1(k * n, 0.25), d2(k * n, 0.25);
  kernels::serial::gemm_at_b_acc(a, am, d1, m, k, n);
  kernels::omp::gemm_at_b_acc(a, am, d2, m, k, n);
  EXPECT_EQ(d1, d2);
  std::vector<double> e1(m * n, 0.0), e2(m * n, 0.0);
  kernels::serial::gemm_a_bt_acc(a, bt, e1, m, k, n);
  kernels::omp::gemm_a_bt_acc(a, bt, e2, m, k, n);
  EXPECT_EQ(e1, e2);
  EXPECT_EQ(kernels::serial::pairwise_distance_sum(a, m, bt, n, k, false),
            kernels::omp::pairwise_distance_sum(a, m, bt, n, k, false));
  EXPECT_EQ(kernels::serial::pairwise_distance_sum(a, m, a, m, k, true),
            kernels::omp::pairwise_distance_sum(a, m, a, m, k, true));
}

TEST(Kernels, GemmMatchesNaiveTripleLoop) {
  const std::size_t m = 9, k = 13, n = 7;
  const auto a = values(random_tensor({m, k}, 16, 1.0, false));
  const auto b = values(random_tensor({k, n}, 17, 1.0, false));
  std::vector<double> c(m * n, 0.0);
  kernels::gemm_acc(a, b, c, m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-12);
    }
  }
}

TEST(Kernels, PairwiseDistanceOfConstructedClouds) {
  // three points at the origin vs. three at (6, 8): every cross distance is 10
  const std::vector<double> a(6, 0.0), b{6, 8, 6, 8, 6, 8};
  EXPECT_DOUBLE_EQ(kernels::pairwise_distance_sum(a, 3, b, 3, 2, false), 90.0);
  EXPECT_DOUBLE_EQ(kernels::pairwise_distance_sum(a, 3, a, 3, 2, true), 0.0);
}

TEST(Kernels, BackendSwitchGivesSameTapeResults) {
  const auto w = random_tensor({16, 16}, 18), x = random_tensor({16, 8}, 19, 1.0, false);
  auto run = [&] {
    w.zero_grad();
    Tape tape;
    const auto loss = ops::sum(tape, ops::tanh(tape, ops::matmul(tape, w, x)));
    tape.backward(loss);
    return std::make_pair(loss.item(), std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  std::pair<double, std::vector<double>> serial, parallel;
  {
    kernels::ScopedBackend b(kernels::Backend::serial);
    serial = run();
  }
  {
    kernels::ScopedBackend b(kernels::Backend::openmp);
    parallel = run();
  }
  EXPECT_EQ(serial, parallel);
}

TEST(Ops, GatherConcatColumnShapes) {
  Tape tape;
  const auto table = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> idx{2, 0, 2};
  const auto g = ops::gather_rows(tape, table, idx);
  EXPECT_EQ(values(g), (std::vector<double>{5, 6, 1, 2, 5, 6}));
  const auto c = ops::concat_cols(tape, table, table);
  EXPECT_EQ(c.shape(), (Shape{3, 4}));
  EXPECT_EQ(values(ops::column(tape, table, 1)), (std::vector<double>{2, 4, 6}));
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(ops::gather_rows(tape, table, bad), DataError);
}
