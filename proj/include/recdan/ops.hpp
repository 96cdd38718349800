#pragma once

// Differentiable primitives. Every op takes the tape it records on; with an
// inference tape, or when no input requires a gradient, nothing is recorded.

#include <cstddef>
#include <span>

#include "recdan/tensor.hpp"

namespace recdan::ops {

enum class Unary { sigmoid, tanh, relu, log, square };
enum class Binary { add, sub, mul };

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor elementwise(Tape& tape, Unary op, const Tensor& x);
Tensor elementwise(Tape& tape, Binary op, const Tensor& a, const Tensor& b);

inline Tensor add(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Binary::add, a, b); }
inline Tensor sub(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Binary::sub, a, b); }
inline Tensor mul(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Binary::mul, a, b); }
inline Tensor sigmoid(Tape& t, const Tensor& x) { return elementwise(t, Unary::sigmoid, x); }
inline Tensor tanh(Tape& t, const Tensor& x) { return elementwise(t, Unary::tanh, x); }
inline Tensor relu(Tape& t, const Tensor& x) { return elementwise(t, Unary::relu, x); }
inline Tensor log(Tape& t, const Tensor& x) { return elementwise(t, Unary::log, x); }
inline Tensor square(Tape& t, const Tensor& x) { return elementwise(t, Unary::square, x); }

/// x[B x n] + bias[n], broadcast over rows.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor scale(Tape& tape, const Tensor& x, double factor);
/// Elementwise product with a constant (non-differentiated) tensor of equal size.
Tensor mul_constant(Tape& tape, const Tensor& x, const Tensor& constant);
/// Multiplies row r of x by weights[r] (constant).
Tensor scale_rows(Tape& tape, const Tensor& x, std::span<const double> weights);

/// log(max(x, floor)); the gradient is zero where the clamp is active.
Tensor log_clamped(Tape& tape, const Tensor& x, double floor);

/// Softmax over the last dimension (each row of a matrix, or the whole vector).
Tensor softmax(Tape& tape, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
Tensor mean_squared_error(Tape& tape, const Tensor& pred, const Tensor& truth);

/// [B x n] , [B x m] -> [B x (n+m)]
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
/// Column j of a matrix as a vector of length rows.
Tensor column(Tape& tape, const Tensor& x, std::size_t j);
/// Rows table[index[i]] stacked into [len(index) x cols]. Backward scatter-adds.
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> index);

}  // namespace recdan::ops
