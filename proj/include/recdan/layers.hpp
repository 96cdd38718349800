#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "recdan/gradcheck.hpp"
#include "recdan/random.hpp"
#include "recdan/tensor.hpp"

namespace recdan::layers {

enum class Mode { train, eval };
enum class Activation { none, relu, tanh };

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// Square orthogonal matrix: Gram-Schmidt QR of a Gaussian matrix, with the
/// sign convention diag(R) > 0 so the result is uniquely determined by the draw.
Tensor orthogonal(std::size_t n, Rng& rng);

struct EmbeddingTable {
  Tensor weights;  // [vocab_size x dim]

  static EmbeddingTable init(std::size_t vocab_size, std::size_t dim, Rng& rng);
  std::size_t vocab_size() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// One LSTM layer. Input weights are [input_dim x hidden], recurrent weights
/// [hidden x hidden], so a batch step is x * W_x + h * W_h + b.
struct LstmCell {
  Tensor w_xi, w_hi, w_xf, w_hf, w_xo, w_ho, w_xc, w_hc;
  Tensor b_i, b_f, b_o, b_c;

  static LstmCell init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  std::size_t input_dim() const { return w_xi.rows(); }
  std::size_t hidden_dim() const { return w_hi.rows(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LstmState {
  Tensor h;  // [B x H]
  Tensor c;  // [B x H]
};

LstmState lstm_step(Tape& tape, const LstmCell& cell, const Tensor& x, const LstmState& prev);

/// Padded token ids, row-major [batch x steps], plus the valid length per row.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> lengths;

  static TokenBatch from_sequences(const std::vector<std::vector<std::size_t>>& seqs,
                                   std::size_t pad_id = 0);
};

/// Embeds the tokens, runs the LSTM from a zero state and averages h_t over
/// the first lengths[b] steps of each row. Padding never enters the mean.
Tensor encode_sequence(Tape& tape, const EmbeddingTable& emb, const LstmCell& cell,
                       const TokenBatch& tokens);
/// Same function built step by step from lstm_step and primitive ops. Slow;
/// kept as the reference the fused version is tested against.
Tensor encode_sequence_reference(Tape& tape, const EmbeddingTable& emb, const LstmCell& cell,
                                 const TokenBatch& tokens);

struct DenseLayer {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
  Activation activation = Activation::none;

  static DenseLayer init(std::size_t in, std::size_t out, Activation act, Rng& rng);
  std::size_t in() const { return w.rows(); }
  std::size_t out() const { return w.cols(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Tensor dense_forward(Tape& tape, const DenseLayer& layer, const Tensor& x);

struct DropoutSpec {
  double rate = 0.5;
  Mode mode = Mode::train;
};

/// Inverted dropout: survivors are scaled by 1 / (1 - rate) in train mode;
/// eval mode returns x itself.
Tensor dropout(Tape& tape, const Tensor& x, const DropoutSpec& spec, Rng& rng);

}  // namespace recdan::layers
