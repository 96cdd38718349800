#include "recdan/kernels.hpp"

#include <atomic>
#include <cmath>
#include <vector>

#include <omp.h>

namespace recdan::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::openmp};

// Below this many multiply-adds the thread start-up cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

double row_distance(const double* x, const double* y, std::size_t d) {
  double s = 0.0;
  for (std::size_t t = 0; t < d; ++t) {
    const double diff = x[t] - y[t];
    s += diff * diff;
  }
  return std::sqrt(s);
}

// Row kernels shared by both backends. Each output element receives its terms
// in ascending order of the summed index, so blocking changes speed only.

// c_i[0:n] += sum_p a_i[p] * b[p, 0:n]
void row_gemm(const double* __restrict__ ai, const double* __restrict__ b, double* __restrict__ ci,
              std::size_t k, std::size_t n) {
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const double a0 = ai[p], a1 = ai[p + 1], a2 = ai[p + 2], a3 = ai[p + 3];
    const double* b0 = b + p * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t j = 0; j < n; ++j) {
      double c = ci[j];
      c += a0 * b0[j];
      c += a1 * b1[j];
      c += a2 * b2[j];
      c += a3 * b3[j];
      ci[j] = c;
    }
  }
  for (; p < k; ++p) {
    const double ap = ai[p];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += ap * bp[j];
  }
}

// c_p[0:n] += sum_i a[i, p] * b[i, 0:n]
void row_gemm_at(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ cp,
                 std::size_t p, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double a0 = a[i * k + p], a1 = a[(i + 1) * k + p], a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
    const double* b0 = b + i * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t j = 0; j < n; ++j) {
      double c = cp[j];
      c += a0 * b0[j];
      c += a1 * b1[j];
      c += a2 * b2[j];
      c += a3 * b3[j];
      cp[j] = c;
    }
  }
  for (; i < m; ++i) {
    const double ai = a[i * k + p];
    const double* bi = b + i * n;
    for (std::size_t j = 0; j < n; ++j) cp[j] += ai * bi[j];
  }
}

// c_i[p] += dot(a_i, b_p) for every p < k
void row_gemm_bt(const double* __restrict__ ai, const double* __restrict__ b, double* __restrict__ ci,
                 std::size_t n, std::size_t k) {
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const double* b0 = b + p * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s0 += ai[j] * b0[j];
      s1 += ai[j] * b1[j];
      s2 += ai[j] * b2[j];
      s3 += ai[j] * b3[j];
    }
    ci[p] += s0;
    ci[p + 1] += s1;
    ci[p + 2] += s2;
    ci[p + 3] += s3;
  }
  for (; p < k; ++p) {
    const double* bp = b + p * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
    ci[p] += s;
  }
}
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
              std::size_t m, std::size_t k, std::size_t n) {
  if (backend() == Backend::openmp) {
    omp::gemm_acc(a, b, c, m, k, n);
  } else {
    serial::gemm_acc(a, b, c, m, k, n);
  }
}

void gemm_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  if (backend() == Backend::openmp) {
    omp::gemm_at_b_acc(a, b, c, m, k, n);
  } else {
    serial::gemm_at_b_acc(a, b, c, m, k, n);
  }
}

void gemm_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k) {
  if (backend() == Backend::openmp) {
    omp::gemm_a_bt_acc(a, b, c, m, n, k);
  } else {
    serial::gemm_a_bt_acc(a, b, c, m, n, k);
  }
}

double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                             std::size_t nb, std::size_t d, bool same) {
  if (backend() == Backend::openmp) {
    return omp::pairwise_distance_sum(a, na, b, nb, d, same);
  }
  return serial::pairwise_distance_sum(a, na, b, nb, d, same);
}

// ---------------------------------------------------------------------------
// Serial reference implementations.

namespace serial {

void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
              std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) row_gemm(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void gemm_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) row_gemm_at(a.data(), b.data(), c.data() + p * n, p, m, k, n);
}

void gemm_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) row_gemm_bt(a.data() + i * n, b.data(), c.data() + i * k, n, k);
}

double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                             std::size_t nb, std::size_t d, bool same) {
  double total = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    double row = 0.0;
    for (std::size_t j = same ? i + 1 : 0; j < nb; ++j) {
      row += row_distance(a.data() + i * d, b.data() + j * d, d);
    }
    total += row;
  }
  return total;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP implementations: rows of the output are independent, each keeps the
// serial summation order.

namespace omp {

void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
              std::size_t m, std::size_t k, std::size_t n) {
  const bool par = m * k * n >= kParallelWork;
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    row_gemm(a.data() + i * k, b.data(), c.data() + i * n, k, n);
  }
}

void gemm_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  const bool par = m * k * n >= kParallelWork;
  const auto rows = static_cast<std::ptrdiff_t>(k);
  #pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t pp = 0; pp < rows; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    row_gemm_at(a.data(), b.data(), c.data() + p * n, p, m, k, n);
  }
}

void gemm_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k) {
  const bool par = m * k * n >= kParallelWork;
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    row_gemm_bt(a.data() + i * n, b.data(), c.data() + i * k, n, k);
  }
}

double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                             std::size_t nb, std::size_t d, bool same) {
  std::vector<double> rows(na, 0.0);
  const bool par = na * nb * d >= kParallelWork;
  const auto count = static_cast<std::ptrdiff_t>(na);
#pragma omp parallel for schedule(dynamic, 8) if (par)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double row = 0.0;
    for (std::size_t j = same ? i + 1 : 0; j < nb; ++j) {
      row += row_distance(a.data() + i * d, b.data() + j * d, d);
    }
    rows[i] = row;
  }
  // Fixed-order reduction keeps the result independent of the thread count.
  double total = 0.0;
  for (double r : rows) total += r;
  return total;
}

}  // namespace omp

}  // namespace recdan::kernels
