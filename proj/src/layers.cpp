#include "recdan/layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "recdan/errors.hpp"
#include "recdan/kernels.hpp"
#include "recdan/ops.hpp"

namespace recdan::layers {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(Shape{fan_in, fan_out});
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor orthogonal(std::size_t n, Rng& rng) {
  // Columns of a are orthonormalised in place (Gram-Schmidt, two passes).
  std::vector<double> a(n * n);
  for (double& v : a) v = rng.normal();
  auto col = [&](std::size_t j, std::size_t i) -> double& { return a[i * n + j]; };
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t q = 0; q < j; ++q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += col(q, i) * col(j, i);
        for (std::size_t i = 0; i < n; ++i) col(j, i) -= dot * col(q, i);
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += col(j, i) * col(j, i);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) col(j, i) /= norm;
  }
  return Tensor(Shape{n, n}, std::move(a));
}

EmbeddingTable EmbeddingTable::init(std::size_t vocab_size, std::size_t dim, Rng& rng) {
  EmbeddingTable e{glorot_uniform(vocab_size, dim, rng)};
  e.weights.set_requires_grad(true);
  return e;
}

void EmbeddingTable::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "embedding", weights});
}

LstmCell LstmCell::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  LstmCell c;
  c.w_xi = glorot_uniform(input_dim, hidden_dim, rng);
  c.w_hi = orthogonal(hidden_dim, rng);
  c.w_xf = glorot_uniform(input_dim, hidden_dim, rng);
  c.w_hf = orthogonal(hidden_dim, rng);
  c.w_xo = glorot_uniform(input_dim, hidden_dim, rng);
  c.w_ho = orthogonal(hidden_dim, rng);
  c.w_xc = glorot_uniform(input_dim, hidden_dim, rng);
  c.w_hc = orthogonal(hidden_dim, rng);
  c.b_i = Tensor(Shape{hidden_dim});
  c.b_f = Tensor(Shape{hidden_dim});
  c.b_o = Tensor(Shape{hidden_dim});
  c.b_c = Tensor(Shape{hidden_dim});
  std::vector<NamedTensor> params;
  c.collect("", params);
  for (auto& p : params) p.tensor.set_requires_grad(true);
  return c;
}

void LstmCell::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "w_xi", w_xi});
  out.push_back({prefix + "w_hi", w_hi});
  out.push_back({prefix + "w_xf", w_xf});
  out.push_back({prefix + "w_hf", w_hf});
  out.push_back({prefix + "w_xo", w_xo});
  out.push_back({prefix + "w_ho", w_ho});
  out.push_back({prefix + "w_xc", w_xc});
  out.push_back({prefix + "w_hc", w_hc});
  out.push_back({prefix + "b_i", b_i});
  out.push_back({prefix + "b_f", b_f});
  out.push_back({prefix + "b_o", b_o});
  out.push_back({prefix + "b_c", b_c});
}

namespace {

Tensor gate_preactivation(Tape& tape, const Tensor& x, const Tensor& w_x, const Tensor& h,
                          const Tensor& w_h, const Tensor& b) {
  return ops::add_bias(tape, ops::add(tape, ops::matmul(tape, x, w_x), ops::matmul(tape, h, w_h)), b);
}

}  // namespace

LstmState lstm_step(Tape& tape, const LstmCell& cell, const Tensor& x, const LstmState& prev) {
  const std::size_t hidden = cell.hidden_dim();
  if (x.rank() != 2 || x.cols() != cell.input_dim()) {
    throw DimensionError("lstm_step: input " + shape_string(x.shape()) + " does not match input_dim " +
                         std::to_string(cell.input_dim()));
  }
  const Shape state_shape{x.rows(), hidden};
  if (prev.h.shape() != state_shape || prev.c.shape() != state_shape) {
    throw DimensionError("lstm_step: state " + shape_string(prev.h.shape()) + "/" +
                         shape_string(prev.c.shape()) + " expected " + shape_string(state_shape));
  }
  Tensor i = ops::sigmoid(tape, gate_preactivation(tape, x, cell.w_xi, prev.h, cell.w_hi, cell.b_i));
  Tensor f = ops::sigmoid(tape, gate_preactivation(tape, x, cell.w_xf, prev.h, cell.w_hf, cell.b_f));
  Tensor o = ops::sigmoid(tape, gate_preactivation(tape, x, cell.w_xo, prev.h, cell.w_ho, cell.b_o));
  Tensor g = ops::tanh(tape, gate_preactivation(tape, x, cell.w_xc, prev.h, cell.w_hc, cell.b_c));
  Tensor c = ops::add(tape, ops::mul(tape, f, prev.c), ops::mul(tape, i, g));
  Tensor h = ops::mul(tape, o, ops::tanh(tape, c));
  return {h, c};
}

TokenBatch TokenBatch::from_sequences(const std::vector<std::vector<std::size_t>>& seqs,
                                      std::size_t pad_id) {
  TokenBatch tb;
  tb.batch = seqs.size();
  for (const auto& s : seqs) tb.steps = std::max(tb.steps, s.size());
  tb.ids.assign(tb.batch * tb.steps, pad_id);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    std::copy(seqs[b].begin(), seqs[b].end(), tb.ids.begin() + static_cast<std::ptrdiff_t>(b * tb.steps));
    tb.lengths.push_back(seqs[b].size());
  }
  return tb;
}

namespace {

// Validates a token batch against the vocabulary; returns the longest length.
std::size_t check_tokens(const EmbeddingTable& emb, const TokenBatch& tokens) {
  const std::size_t batch = tokens.batch;
  if (batch == 0 || tokens.lengths.size() != batch || tokens.ids.size() != batch * tokens.steps) {
    throw DimensionError("encode_sequence: malformed token batch");
  }
  std::size_t longest = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = tokens.lengths[b];
    if (len < 1 || len > tokens.steps) {
      throw DataError("encode_sequence: row " + std::to_string(b) + " has length " +
                      std::to_string(len) + " outside [1, " + std::to_string(tokens.steps) + "]");
    }
    longest = std::max(longest, len);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t id = tokens.ids[b * tokens.steps + t];
      if (id >= emb.vocab_size()) {
        throw DataError("encode_sequence: token id " + std::to_string(id) + " at (row " +
                        std::to_string(b) + ", step " + std::to_string(t) + ") exceeds vocabulary of " +
                        std::to_string(emb.vocab_size()));
      }
    }
  }
  return longest;
}

// Token read by row b at step t; finished rows read PAD.
std::size_t token_at(const TokenBatch& tokens, std::size_t b, std::size_t t) {
  return t < tokens.lengths[b] ? tokens.ids[b * tokens.steps + t] : 0;
}

double pool_weight(const TokenBatch& tokens, std::size_t b, std::size_t t) {
  return t < tokens.lengths[b] ? 1.0 / static_cast<double>(tokens.lengths[b]) : 0.0;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Gate blocks are laid out i | f | o | g along the columns.
// Vectors count as a single row.
std::size_t block_rows(const Tensor& t) { return t.rank() == 1 ? 1 : t.rows(); }
std::size_t block_cols(const Tensor& t) { return t.rank() == 1 ? t.size() : t.cols(); }

std::vector<double> stack_columns(const std::array<Tensor, 4>& parts) {
  const std::size_t rows = block_rows(parts[0]), w = block_cols(parts[0]);
  std::vector<double> out(rows * 4 * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t q = 0; q < 4; ++q) {
      const auto src = parts[q].data().subspan(r * w, w);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(r * 4 * w + q * w));
    }
  }
  return out;
}

void unstack_columns_acc(const std::vector<double>& stacked, const std::array<Tensor, 4>& parts) {
  const std::size_t rows = block_rows(parts[0]), w = block_cols(parts[0]);
  for (std::size_t q = 0; q < 4; ++q) {
    if (!parts[q].requires_grad()) continue;
    auto g = parts[q].grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < w; ++j) g[r * w + j] += stacked[r * 4 * w + q * w + j];
    }
  }
}

}  // namespace

Tensor encode_sequence(Tape& tape, const EmbeddingTable& emb, const LstmCell& cell, const TokenBatch& tokens) {
  const std::size_t steps = check_tokens(emb, tokens);
  const std::size_t batch = tokens.batch, in = cell.input_dim(), hid = cell.hidden_dim(), g4 = 4 * hid;
  if (emb.dim() != in) {
    throw DimensionError("encode_sequence: embedding width " + std::to_string(emb.dim()) + " vs LSTM input " +
                         std::to_string(in));
  }
  const std::array<Tensor, 4> wx{cell.w_xi, cell.w_xf, cell.w_xo, cell.w_xc};
  const std::array<Tensor, 4> wh{cell.w_hi, cell.w_hf, cell.w_ho, cell.w_hc};
  const std::array<Tensor, 4> bias{cell.b_i, cell.b_f, cell.b_o, cell.b_c};
  const std::vector<double> w_x = stack_columns(wx), w_h = stack_columns(wh), b = stack_columns(bias);

  // Embedded inputs for every step, then one projection for all of them.
  const std::size_t rows = steps * batch;
  std::vector<double> x(rows * in);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t r = 0; r < batch; ++r) {
      const auto e = emb.weights.data().subspan(token_at(tokens, r, t) * in, in);
      std::copy(e.begin(), e.end(), x.begin() + static_cast<std::ptrdiff_t>((t * batch + r) * in));
    }
  }
  // gates holds activated i, f, o, g per step; cell_tanh holds tanh(c_t).
  auto gates = std::make_shared<std::vector<double>>(rows * g4, 0.0);
  kernels::gemm_acc(x, w_x, *gates, rows, in, g4);
  auto cells = std::make_shared<std::vector<double>>(rows * hid, 0.0);
  auto cell_tanh = std::make_shared<std::vector<double>>(rows * hid, 0.0);
  auto hs = std::make_shared<std::vector<double>>(rows * hid, 0.0);

  Tensor pooled(Shape{batch, hid});
  auto pool = pooled.data();
  for (std::size_t t = 0; t < steps; ++t) {
    double* pre = gates->data() + t * batch * g4;
    if (t > 0) {
      kernels::gemm_acc(std::span<const double>(hs->data() + (t - 1) * batch * hid, batch * hid), w_h,
                        std::span<double>(pre, batch * g4), batch, hid, g4);
    }
    for (std::size_t r = 0; r < batch; ++r) {
      double* p = pre + r * g4;
      const double* c_prev = t > 0 ? cells->data() + ((t - 1) * batch + r) * hid : nullptr;
      double* c = cells->data() + (t * batch + r) * hid;
      double* tc = cell_tanh->data() + (t * batch + r) * hid;
      double* h = hs->data() + (t * batch + r) * hid;
      const double w = pool_weight(tokens, r, t);
      for (std::size_t j = 0; j < hid; ++j) {
        const double gi = sigmoid(p[j] + b[j]);
        const double gf = sigmoid(p[hid + j] + b[hid + j]);
        const double go = sigmoid(p[2 * hid + j] + b[2 * hid + j]);
        const double gg = std::tanh(p[3 * hid + j] + b[3 * hid + j]);
        p[j] = gi;
        p[hid + j] = gf;
        p[2 * hid + j] = go;
        p[3 * hid + j] = gg;
        c[j] = (c_prev ? gf * c_prev[j] : 0.0) + gi * gg;
        tc[j] = std::tanh(c[j]);
        h[j] = go * tc[j];
        pool[r * hid + j] += w * h[j];
      }
    }
  }

  bool wanted = emb.weights.requires_grad();
  for (const auto* group : {&wx, &wh, &bias}) {
    for (const auto& p : *group) wanted = wanted || p.requires_grad();
  }
  wanted = wanted && tape.enabled();
  if (!wanted) return pooled;

  tape.record(pooled, [=, x = std::move(x), w_h = std::move(w_h), emb_w = emb.weights]() {
    const auto d_pool = pooled.grad();
    std::vector<double> d_pre(rows * g4, 0.0);
    std::vector<double> dh_next(batch * hid, 0.0), dc_next(batch * hid, 0.0);
    std::vector<double> d_wh(hid * g4, 0.0), d_b(g4, 0.0);
    for (std::size_t t = steps; t-- > 0;) {
      double* dp = d_pre.data() + t * batch * g4;
      for (std::size_t r = 0; r < batch; ++r) {
        const double w = pool_weight(tokens, r, t);
        const double* gt = gates->data() + (t * batch + r) * g4;
        const double* tc = cell_tanh->data() + (t * batch + r) * hid;
        const double* c_prev = t > 0 ? cells->data() + ((t - 1) * batch + r) * hid : nullptr;
        double* dpr = dp + r * g4;
        for (std::size_t j = 0; j < hid; ++j) {
          const double gi = gt[j], gf = gt[hid + j], go = gt[2 * hid + j], gg = gt[3 * hid + j];
          const double dhj = w * d_pool[r * hid + j] + dh_next[r * hid + j];
          const double dc = dhj * go * (1.0 - tc[j] * tc[j]) + dc_next[r * hid + j];
          dpr[j] = dc * gg * gi * (1.0 - gi);
          dpr[hid + j] = (c_prev ? dc * c_prev[j] : 0.0) * gf * (1.0 - gf);
          dpr[2 * hid + j] = dhj * tc[j] * go * (1.0 - go);
          dpr[3 * hid + j] = dc * gi * (1.0 - gg * gg);
          dc_next[r * hid + j] = dc * gf;
        }
        for (std::size_t k = 0; k < g4; ++k) d_b[k] += dpr[k];
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      if (t > 0) {
        const std::span<const double> h_prev(hs->data() + (t - 1) * batch * hid, batch * hid);
        const std::span<const double> dps(dp, batch * g4);
        kernels::gemm_a_bt_acc(dps, w_h, dh_next, batch, g4, hid);
        kernels::gemm_at_b_acc(h_prev, dps, d_wh, batch, hid, g4);
      }
    }
    std::vector<double> d_wx(in * g4, 0.0);
    kernels::gemm_at_b_acc(x, d_pre, d_wx, rows, in, g4);
    unstack_columns_acc(d_wx, wx);
    unstack_columns_acc(d_wh, wh);
    unstack_columns_acc(d_b, bias);
    if (emb_w.requires_grad()) {
      std::vector<double> d_x(rows * in, 0.0);
      std::vector<double> w_x_copy = stack_columns(wx);
      kernels::gemm_a_bt_acc(d_pre, w_x_copy, d_x, rows, g4, in);
      auto ge = emb_w.grad();
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t r = 0; r < batch; ++r) {
          const std::size_t id = token_at(tokens, r, t);
          const double* src = d_x.data() + (t * batch + r) * in;
          for (std::size_t k = 0; k < in; ++k) ge[id * in + k] += src[k];
        }
      }
    }
  });
  return pooled;
}

Tensor encode_sequence_reference(Tape& tape, const EmbeddingTable& emb, const LstmCell& cell,
                                 const TokenBatch& tokens) {
  const std::size_t longest = check_tokens(emb, tokens);
  const std::size_t batch = tokens.batch;
  const std::size_t hidden = cell.hidden_dim();
  LstmState state{Tensor(Shape{batch, hidden}), Tensor(Shape{batch, hidden})};
  Tensor pooled;
  std::vector<std::size_t> column(batch);
  std::vector<double> weight(batch);
  // Steps past the longest row contribute nothing, so they are not run at all.
  for (std::size_t t = 0; t < longest; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      column[b] = token_at(tokens, b, t);
      weight[b] = pool_weight(tokens, b, t);
    }
    Tensor x = ops::gather_rows(tape, emb.weights, column);
    state = lstm_step(tape, cell, x, state);
    Tensor contribution = ops::scale_rows(tape, state.h, weight);
    pooled = pooled.defined() ? ops::add(tape, pooled, contribution) : contribution;
  }
  return pooled;
}

DenseLayer DenseLayer::init(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer d{glorot_uniform(in, out, rng), Tensor(Shape{out}), act};
  d.w.set_requires_grad(true);
  d.b.set_requires_grad(true);
  return d;
}

void DenseLayer::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "w", w});
  out.push_back({prefix + "b", b});
}

Tensor dense_forward(Tape& tape, const DenseLayer& layer, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != layer.in()) {
    throw DimensionError("dense_forward: input " + shape_string(x.shape()) + " vs weights " +
                         shape_string(layer.w.shape()));
  }
  Tensor y = ops::add_bias(tape, ops::matmul(tape, x, layer.w), layer.b);
  switch (layer.activation) {
    case Activation::relu:
      return ops::relu(tape, y);
    case Activation::tanh:
      return ops::tanh(tape, y);
    case Activation::none:
      break;
  }
  return y;
}

Tensor dropout(Tape& tape, const Tensor& x, const DropoutSpec& spec, Rng& rng) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
    throw ArgumentError("dropout: rate must lie in [0, 1)");
  }
  if (spec.mode == Mode::eval || spec.rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - spec.rate);
  Tensor mask(x.shape());
  for (double& m : mask.data()) m = rng.uniform() < spec.rate ? 0.0 : keep_scale;
  return ops::mul_constant(tape, x, mask);
}

}  // namespace recdan::layers
