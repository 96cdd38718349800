#pragma once

// Dense kernels behind the tensor ops. Each kernel has a serial reference
// implementation and an OpenMP implementation. The OpenMP versions split work
// over output rows only, so every output element is reduced in the same order
// as the serial version and the two agree bitwise.

#include <cstddef>
#include <span>

namespace recdan::kernels {

enum class Backend { serial, openmp };

/// Process-wide backend selection. Defaults to openmp.
void set_backend(Backend backend);
Backend backend();

/// RAII switch of the backend for a scope (tests and benchmarks).
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

// c[m x n] += a[m x k] * b[k x n]
void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
              std::size_t m, std::size_t k, std::size_t n);
// c[k x n] += a[m x k]^T * b[m x n]
void gemm_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
// c[m x k] += a[m x n] * b[k x n]^T
void gemm_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k);

/// Sum of Euclidean distances between every row of `a` and every row of `b`
/// (rows of width d). When `same` is true, a and b are the same cloud and only
/// pairs i < j are summed.
double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                             std::size_t nb, std::size_t d, bool same);

namespace serial {
void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
              std::size_t m, std::size_t k, std::size_t n);
void gemm_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void gemm_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k);
double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                             std::size_t nb, std::size_t d, bool same);
}  // namespace serial

namespace omp {
void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
              std::size_t m, std::size_t k, std::size_t n);
void gemm_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void gemm_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k);
double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                             std::size_t nb, std::size_t d, bool same);
}  // namespace omp

}  // namespace recdan::kernels
