#include <gtest/gtest.h>

#include <cmath>

#include "recdan/errors.hpp"
#include "recdan/gradcheck.hpp"
#include "recdan/layers.hpp"
#include "recdan/ops.hpp"
#include "test_util.hpp"

using namespace recdan;
using namespace recdan::layers;
using test::random_tensor;
using test::values;

namespace {

LstmCell zero_cell(std::size_t in, std::size_t h) {
  LstmCell c;
  for (Tensor* w : {&c.w_xi, &c.w_xf, &c.w_xo, &c.w_xc}) *w = Tensor({in, h}, 0.0, true);
  for (Tensor* w : {&c.w_hi, &c.w_hf, &c.w_ho, &c.w_hc}) *w = Tensor({h, h}, 0.0, true);
  for (Tensor* b : {&c.b_i, &c.b_f, &c.b_o, &c.b_c}) *b = Tensor({h}, 0.0, true);
  return c;
}

LstmState zero_state(std::size_t b, std::size_t h) { return {Tensor({b, h}), Tensor({b, h})}; }

std::vector<NamedTensor> cell_params(const LstmCell& c) {
  std::vector<NamedTensor> out;
  c.collect("cell.", out);
  return out;
}

double weighted_total(Tape& t, const Tensor& x, std::uint64_t seed) {
  return ops::sum(t, ops::mul(t, x, random_tensor(x.shape(), seed, 1.0, false))).item();
}

}  // namespace

TEST(LstmStep, ZeroCellStaysAtZero) {
  Tape tape;
  const auto s = lstm_step(tape, zero_cell(3, 4), random_tensor({2, 3}, 1, 1.0, false), zero_state(2, 4));
  for (double v : values(s.h)) EXPECT_EQ(v, 0.0);
  for (double v : values(s.c)) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, ScalarOracle) {
  // Gates saturated open (bias 100), candidate tanh(1 * x) with x = 1.
  LstmCell c = zero_cell(1, 1);
  c.b_i[0] = c.b_f[0] = c.b_o[0] = 100.0;
  c.w_xc[0] = 1.0;
  Tape tape;
  const auto s = lstm_step(tape, c, Tensor::matrix(1, 1, {1.0}), zero_state(1, 1));
  const double c1 = std::tanh(1.0);
  EXPECT_NEAR(s.c[0], c1, 1e-12);
  EXPECT_NEAR(s.h[0], std::tanh(c1), 1e-12);
  EXPECT_NEAR(s.c[0], 0.76159, 1e-5);
  EXPECT_NEAR(s.h[0], 0.64201, 1e-5);
}

TEST(LstmStep, GradientCheckAtHiddenEight) {
  Rng rng(2);
  const auto cell = LstmCell::init(5, 8, rng);
  const auto x = random_tensor({3, 5}, 3), h0 = random_tensor({3, 8}, 4), c0 = random_tensor({3, 8}, 5);
  auto inputs = cell_params(cell);
  inputs.push_back({"x", x});
  inputs.push_back({"h0", h0});
  inputs.push_back({"c0", c0});
  const auto w = random_tensor({3, 8}, 6, 1.0, false);
  const auto rep = grad_check(
      [&](Tape& t) {
        const auto s = lstm_step(t, cell, x, {h0, c0});
        return ops::add(t, ops::sum(t, ops::mul(t, s.h, w)), ops::sum(t, ops::mul(t, s.c, w)));
      },
      inputs, 1e-5, 1e-5);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST(LstmStep, ShapeMismatchThrows) {
  Rng rng(7);
  const auto cell = LstmCell::init(5, 8, rng);
  Tape tape;
  EXPECT_THROW(lstm_step(tape, cell, Tensor({2, 4}), zero_state(2, 8)), DimensionError);
}

TEST(TokenBatch, PadsToLongest) {
  const auto b = TokenBatch::from_sequences({{5, 6, 7}, {8}});
  EXPECT_EQ(b.batch, 2u);
  EXPECT_EQ(b.steps, 3u);
  EXPECT_EQ(b.ids, (std::vector<std::size_t>{5, 6, 7, 8, 0, 0}));
  EXPECT_EQ(b.lengths, (std::vector<std::size_t>{3, 1}));
}

class EncodeTest : public ::testing::Test {
 protected:
  Rng rng{11};
  EmbeddingTable emb = EmbeddingTable::init(20, 6, rng);
  LstmCell cell = LstmCell::init(6, 5, rng);
};

TEST_F(EncodeTest, LengthOneEqualsSingleStep) {
  Tape tape;
  const auto out = encode_sequence(tape, emb, cell, TokenBatch::from_sequences({{7}}));
  const std::vector<std::size_t> id{7};
  const auto x = ops::gather_rows(tape, emb.weights, id);
  const auto s = lstm_step(tape, cell, x, zero_state(1, 5));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(out[i], s.h[i], 1e-15);
}

TEST_F(EncodeTest, ZeroCellGivesZeroVector) {
  Tape tape;
  const auto out = encode_sequence(tape, emb, zero_cell(6, 5), TokenBatch::from_sequences({{1, 2, 3}}));
  for (double v : values(out)) EXPECT_EQ(v, 0.0);
}

TEST_F(EncodeTest, IdenticalSequencesGiveIdenticalRows) {
  Tape tape;
  const auto out = encode_sequence(tape, emb, cell, TokenBatch::from_sequences({{4, 9, 2}, {4, 9, 2}}));
  for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out.at(0, j), out.at(1, j));
}

TEST_F(EncodeTest, PaddingDoesNotChangeOutput) {
  Tape tape;
  const auto alone = encode_sequence(tape, emb, cell, TokenBatch::from_sequences({{4, 9}}));
  const auto padded = encode_sequence(tape, emb, cell, TokenBatch::from_sequences({{4, 9}, {1, 2, 3, 5, 6, 7, 8}}));
  for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(alone.at(0, j), padded.at(0, j));
}

TEST_F(EncodeTest, FusedMatchesComposedReference) {
  const auto tokens = TokenBatch::from_sequences({{4, 9, 2, 11}, {3}, {5, 5, 6}});
  auto params = cell_params(cell);
  params.push_back({"emb", emb.weights});
  const auto run = [&](auto encoder) {
    for (auto& p : params) p.tensor.zero_grad();
    Tape tape;
    const auto out = encoder(tape, emb, cell, tokens);
    tape.backward(ops::sum(tape, ops::mul(tape, out, random_tensor(out.shape(), 12, 1.0, false))));
    std::vector<double> all = values(out);
    for (auto& p : params) all.insert(all.end(), p.tensor.grad().begin(), p.tensor.grad().end());
    return all;
  };
  const auto fused = run(encode_sequence);
  const auto reference = run(encode_sequence_reference);
  ASSERT_EQ(fused.size(), reference.size());
  for (std::size_t i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused[i], reference[i], 1e-12) << i;
}

TEST_F(EncodeTest, GradientCheck) {
  const auto tokens = TokenBatch::from_sequences({{4, 9, 2}, {3, 1}});
  auto params = cell_params(cell);
  params.push_back({"emb", emb.weights});
  const auto rep = grad_check(
      [&](Tape& t) {
        const auto out = encode_sequence(t, emb, cell, tokens);
        return ops::sum(t, ops::mul(t, out, random_tensor(out.shape(), 13, 1.0, false)));
      },
      params, 1e-5, 1e-5);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST_F(EncodeTest, OutOfVocabularyIdThrows) {
  Tape tape;
  EXPECT_THROW(encode_sequence(tape, emb, cell, TokenBatch::from_sequences({{25}})), Error);
}

TEST(Dense, IdentityAndRelu) {
  DenseLayer layer{Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({0, 0}), Activation::none};
  Tape tape;
  const auto x = Tensor::matrix(1, 2, {-1, 2});
  EXPECT_EQ(values(dense_forward(tape, layer, x)), values(x));
  layer.activation = Activation::relu;
  EXPECT_EQ(values(dense_forward(tape, layer, x)), (std::vector<double>{0, 2}));
}

TEST(Dense, GradientCheck) {
  Rng rng(14);
  for (auto act : {Activation::none, Activation::tanh}) {
    const auto layer = DenseLayer::init(4, 3, act, rng);
    const auto x = random_tensor({5, 4}, 15);
    const auto rep = grad_check(
        [&](Tape& t) {
          const auto y = dense_forward(t, layer, x);
          return ops::sum(t, ops::mul(t, y, random_tensor(y.shape(), 16, 1.0, false)));
        },
        {{"w", layer.w}, {"b", layer.b}, {"x", x}}, 1e-5, 1e-6);
    EXPECT_TRUE(rep.passed) << rep.max_rel_error();
  }
}

TEST(Dropout, EvalAndZeroRateAreIdentity) {
  Rng rng(17);
  Tape tape;
  const auto x = random_tensor({4, 6}, 18, 1.0, false);
  EXPECT_EQ(values(dropout(tape, x, {0.5, Mode::eval}, rng)), values(x));
  EXPECT_EQ(values(dropout(tape, x, {0.0, Mode::train}, rng)), values(x));
}

TEST(Dropout, InvertedScalingIsUnbiased) {
  Rng rng(19);
  Tape tape;
  const auto out = dropout(tape, Tensor({100000}, 1.0), {0.5, Mode::train}, rng);
  double sum = 0.0;
  for (double v : values(out)) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    sum += v;
  }
  EXPECT_NEAR(sum / 100000.0, 1.0, 0.02);
}

TEST(Dropout, RateOneIsRejected) {
  Rng rng(20);
  Tape tape;
  EXPECT_THROW(dropout(tape, Tensor({3}, 1.0), {1.0, Mode::train}, rng), ArgumentError);
}

TEST(Init, GlorotBoundsAndOrthogonality) {
  Rng rng(21);
  const auto w = glorot_uniform(30, 20, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  for (double v : values(w)) EXPECT_LE(std::abs(v), limit);
  const auto q = orthogonal(6, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 6; ++k) dot += q.at(k, i) * q.at(k, j);
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}
