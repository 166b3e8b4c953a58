// Built with -mavx2 -mfma. Nothing in here may run before dispatch.cpp has
// confirmed the CPU supports both extensions.

#include <immintrin.h>

#include <cmath>

#include "soup/kernels.hpp"

namespace soup::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares_avx2(const double* x, std::size_t n) {
  return dot_avx2(x, x, n);
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

void gemv_avx2(const double* a, std::size_t rows, std::size_t cols,
               const double* x, const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double acc = dot_avx2(a + r * cols, x, cols);
    y[r] = bias != nullptr ? acc + bias[r] : acc;
  }
}

void gemv_t_acc_avx2(const double* a, std::size_t rows, std::size_t cols,
                     const double* v, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (v[r] == 0.0) continue;
    axpy_avx2(v[r], a + r * cols, out, cols);
  }
}

void ger_acc_avx2(double* a, std::size_t rows, std::size_t cols,
                  const double* u, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (u[r] == 0.0) continue;
    axpy_avx2(u[r], x, a + r * cols, cols);
  }
}

void adamw_update_avx2(double* params, const double* grads, double* m,
                       double* v, std::size_t n, const AdamScalars& s) {
  const double decay = 1.0 - s.lr * s.weight_decay;
  const __m256d vdecay = _mm256_set1_pd(decay);
  const __m256d vb1 = _mm256_set1_pd(s.beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d vb2 = _mm256_set1_pd(s.beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d vbc1 = _mm256_set1_pd(s.bias_correction1);
  const __m256d vbc2 = _mm256_set1_pd(s.bias_correction2);
  const __m256d veps = _mm256_set1_pd(s.epsilon);
  const __m256d vlr = _mm256_set1_pd(s.lr);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grads + i);
    __m256d p = _mm256_mul_pd(_mm256_loadu_pd(params + i), vdecay);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(vb1c, g));
    const __m256d vi = _mm256_add_pd(
        _mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
        _mm256_mul_pd(_mm256_mul_pd(vb2c, g), g));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, vbc1);
    const __m256d denom =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_div_pd(vi, vbc2)), veps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, m_hat), denom);
    const __m256d live = _mm256_cmp_pd(denom, zero, _CMP_GT_OQ);
    p = _mm256_sub_pd(p, _mm256_and_pd(step, live));
    _mm256_storeu_pd(params + i, p);
  }
  for (; i < n; ++i) {
    const double g = grads[i];
    double p = params[i] * decay;
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = m[i] / s.bias_correction1;
    const double denom = std::sqrt(v[i] / s.bias_correction2) + s.epsilon;
    if (denom > 0.0) p -= s.lr * m_hat / denom;
    params[i] = p;
  }
}

}  // namespace

namespace detail {
const KernelTable avx2_table{
    Isa::avx2,       dot_avx2,       sum_squares_avx2,
    axpy_avx2,       scale_avx2,     gemv_avx2,
    gemv_t_acc_avx2, ger_acc_avx2,   adamw_update_avx2,
};
}  // namespace detail

}  // namespace soup::kernels
