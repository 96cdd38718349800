#include "recdan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "recdan/errors.hpp"
#include "recdan/kernels.hpp"

namespace recdan::ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& x) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(x.shape()));
  }
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out(Shape{m, n});
  kernels::gemm_acc(a.data(), b.data(), out.data(), m, k, n);
  if (tape.wants({&a, &b})) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) kernels::gemm_a_bt_acc(g, b.data(), a.grad(), m, n, k);
      if (b.requires_grad()) kernels::gemm_at_b_acc(a.data(), g, b.grad(), m, k, n);
    });
  }
  return out;
}

Tensor elementwise(Tape& tape, Unary op, const Tensor& x) {
  Tensor out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  const std::size_t n = x.size();
  switch (op) {
    case Unary::sigmoid:
      for (std::size_t i = 0; i < n; ++i) ys[i] = sigmoid_scalar(xs[i]);
      break;
    case Unary::tanh:
      for (std::size_t i = 0; i < n; ++i) ys[i] = std::tanh(xs[i]);
      break;
    case Unary::relu:
      for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i] > 0.0 ? xs[i] : 0.0;
      break;
    case Unary::log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(xs[i] > 0.0)) {
          throw DomainError("log: non-positive input " + std::to_string(xs[i]) + " at index " +
                            std::to_string(i));
        }
        ys[i] = std::log(xs[i]);
      }
      break;
    case Unary::square:
      for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i] * xs[i];
      break;
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, op, n]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xs = x.data();
      auto ys = out.data();
      switch (op) {
        case Unary::sigmoid:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * ys[i] * (1.0 - ys[i]);
          break;
        case Unary::tanh:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - ys[i] * ys[i]);
          break;
        case Unary::relu:
          for (std::size_t i = 0; i < n; ++i) gx[i] += xs[i] > 0.0 ? g[i] : 0.0;
          break;
        case Unary::log:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / xs[i];
          break;
        case Unary::square:
          for (std::size_t i = 0; i < n; ++i) gx[i] += 2.0 * xs[i] * g[i];
          break;
      }
    });
  }
  return out;
}

Tensor elementwise(Tape& tape, Binary op, const Tensor& a, const Tensor& b) {
  require_same_shape("elementwise", a, b);
  Tensor out(a.shape());
  auto as = a.data();
  auto bs = b.data();
  auto ys = out.data();
  const std::size_t n = a.size();
  switch (op) {
    case Binary::add:
      for (std::size_t i = 0; i < n; ++i) ys[i] = as[i] + bs[i];
      break;
    case Binary::sub:
      for (std::size_t i = 0; i < n; ++i) ys[i] = as[i] - bs[i];
      break;
    case Binary::mul:
      for (std::size_t i = 0; i < n; ++i) ys[i] = as[i] * bs[i];
      break;
  }
  if (tape.wants({&a, &b})) {
    tape.record(out, [a, b, out, op, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        if (op == Binary::mul) {
          auto bs = b.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bs[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        if (op == Binary::mul) {
          auto as = a.data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * as[i];
        } else if (op == Binary::sub) {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
      }
    });
  }
  return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_matrix("add_bias", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (bias.size() != cols) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  Tensor out(x.shape());
  auto xs = x.data();
  auto bs = bias.data();
  auto ys = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) ys[r * cols + c] = xs[r * cols + c] + bs[c];
  }
  if (tape.wants({&x, &bias})) {
    tape.record(out, [x, bias, out, rows, cols]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < rows * cols; ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  Tensor out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] * factor;
  if (tape.wants({&x})) {
    tape.record(out, [x, out, factor]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor mul_constant(Tape& tape, const Tensor& x, const Tensor& constant) {
  if (x.size() != constant.size()) {
    throw DimensionError("mul_constant: shape mismatch " + shape_string(x.shape()) + " vs " +
                         shape_string(constant.shape()));
  }
  Tensor out(x.shape());
  auto xs = x.data();
  auto cs = constant.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] * cs[i];
  if (tape.wants({&x})) {
    tape.record(out, [x, constant, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto cs = constant.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * cs[i];
    });
  }
  return out;
}

Tensor scale_rows(Tape& tape, const Tensor& x, std::span<const double> weights) {
  const std::size_t rows = x.rows(), cols = x.size() / x.rows();
  if (weights.size() != rows) {
    throw DimensionError("scale_rows: " + std::to_string(weights.size()) + " weights for " +
                         shape_string(x.shape()));
  }
  Tensor out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) ys[r * cols + c] = xs[r * cols + c] * weights[r];
  }
  if (tape.wants({&x})) {
    std::vector<double> w(weights.begin(), weights.end());
    tape.record(out, [x, out, w = std::move(w), rows, cols]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c] * w[r];
      }
    });
  }
  return out;
}

Tensor log_clamped(Tape& tape, const Tensor& x, double floor) {
  Tensor out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = std::log(std::max(xs[i], floor));
  if (tape.wants({&x})) {
    tape.record(out, [x, out, floor]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xs = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xs[i] > floor) gx[i] += g[i] / xs[i];
      }
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& x) {
  const std::size_t cols = x.rank() >= 2 ? x.cols() : x.size();
  const std::size_t rows = x.size() / cols;
  Tensor out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xs.data() + r * cols;
    double* yr = ys.data() + r * cols;
    const double top = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - top);
      z += yr[c];
    }
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= z;
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, rows, cols]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto ys = out.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * ys[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          gx[r * cols + c] += ys[r * cols + c] * (g[r * cols + c] - dot);
        }
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tape.wants({&x})) {
    tape.record(out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& gx : x.grad()) gx += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean_squared_error(Tape& tape, const Tensor& pred, const Tensor& truth) {
  if (pred.size() == 0 || truth.size() == 0) throw ArgumentError("mean_squared_error: empty input");
  if (pred.size() != truth.size()) {
    throw DimensionError("mean_squared_error: " + shape_string(pred.shape()) + " vs " +
                         shape_string(truth.shape()));
  }
  const std::size_t n = pred.size();
  auto ps = pred.data();
  auto ts = truth.data();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = ps[i] - ts[i];
    s += d * d;
  }
  Tensor out = Tensor::scalar(s / static_cast<double>(n));
  if (tape.wants({&pred, &truth})) {
    tape.record(out, [pred, truth, out, n]() mutable {
      const double g = out.grad()[0] * 2.0 / static_cast<double>(n);
      auto ps = pred.data();
      auto ts = truth.data();
      if (pred.requires_grad()) {
        auto gp = pred.grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g * (ps[i] - ts[i]);
      }
      if (truth.requires_grad()) {
        auto gt = truth.grad();
        for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (ps[i] - ts[i]);
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix("concat_cols", a);
  require_matrix("concat_cols", b);
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t rows = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
  Tensor out(Shape{rows, n});
  auto as = a.data();
  auto bs = b.data();
  auto ys = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(as.data() + r * na, na, ys.data() + r * n);
    std::copy_n(bs.data() + r * nb, nb, ys.data() + r * n + na);
  }
  if (tape.wants({&a, &b})) {
    tape.record(out, [a, b, out, rows, na, nb, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < na; ++c) ga[r * na + c] += g[r * n + c];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < nb; ++c) gb[r * nb + c] += g[r * n + na + c];
        }
      }
    });
  }
  return out;
}

Tensor column(Tape& tape, const Tensor& x, std::size_t j) {
  require_matrix("column", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (j >= cols) throw DimensionError("column: index " + std::to_string(j) + " out of " + shape_string(x.shape()));
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) out[r] = x.at(r, j);
  if (tape.wants({&x})) {
    tape.record(out, [x, out, rows, cols, j]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) gx[r * cols + j] += g[r];
    });
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> index) {
  require_matrix("gather_rows", table);
  if (index.empty()) throw ArgumentError("gather_rows: empty index");
  const std::size_t rows = table.rows(), cols = table.cols();
  Tensor out(Shape{index.size(), cols});
  auto ts = table.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw DataError("gather_rows: index " + std::to_string(index[i]) + " at position " +
                      std::to_string(i) + " exceeds " + std::to_string(rows) + " rows");
    }
    std::copy_n(ts.data() + index[i] * cols, cols, ys.data() + i * cols);
  }
  if (tape.wants({&table})) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    tape.record(out, [table, out, idx = std::move(idx), cols]() mutable {
      auto g = out.grad();
      auto gt = table.grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* dst = gt.data() + idx[i] * cols;
        const double* src = g.data() + i * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

}  // namespace recdan::ops
