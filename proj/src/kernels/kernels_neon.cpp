// aarch64 only; NEON with double lanes is part of the base ISA there.

#include <arm_neon.h>

#include <cmath>

#include "soup/kernels.hpp"

namespace soup::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares_neon(const double* x, std::size_t n) {
  return dot_neon(x, x, n);
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(double alpha, double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_n_f64(vld1q_f64(x + i), alpha));
  for (; i < n; ++i) x[i] *= alpha;
}

void gemv_neon(const double* a, std::size_t rows, std::size_t cols,
               const double* x, const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double acc = dot_neon(a + r * cols, x, cols);
    y[r] = bias != nullptr ? acc + bias[r] : acc;
  }
}

void gemv_t_acc_neon(const double* a, std::size_t rows, std::size_t cols,
                     const double* v, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (v[r] == 0.0) continue;
    axpy_neon(v[r], a + r * cols, out, cols);
  }
}

void ger_acc_neon(double* a, std::size_t rows, std::size_t cols,
                  const double* u, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (u[r] == 0.0) continue;
    axpy_neon(u[r], x, a + r * cols, cols);
  }
}

void adamw_update_neon(double* params, const double* grads, double* m,
                       double* v, std::size_t n, const AdamScalars& s) {
  const double decay = 1.0 - s.lr * s.weight_decay;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grads + i);
    float64x2_t p = vmulq_n_f64(vld1q_f64(params + i), decay);
    const float64x2_t mi = vaddq_f64(vmulq_n_f64(vld1q_f64(m + i), s.beta1),
                                     vmulq_n_f64(g, 1.0 - s.beta1));
    const float64x2_t vi = vaddq_f64(vmulq_n_f64(vld1q_f64(v + i), s.beta2),
                                     vmulq_f64(vmulq_n_f64(g, 1.0 - s.beta2), g));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t m_hat = vdivq_f64(mi, vdupq_n_f64(s.bias_correction1));
    const float64x2_t denom = vaddq_f64(
        vsqrtq_f64(vdivq_f64(vi, vdupq_n_f64(s.bias_correction2))),
        vdupq_n_f64(s.epsilon));
    const float64x2_t step = vdivq_f64(vmulq_n_f64(m_hat, s.lr), denom);
    const uint64x2_t live = vcgtq_f64(denom, vdupq_n_f64(0.0));
    p = vsubq_f64(p, vreinterpretq_f64_u64(
                         vandq_u64(vreinterpretq_u64_f64(step), live)));
    vst1q_f64(params + i, p);
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
const KernelTable neon_table{
    Isa::neon,       dot_neon,       sum_squares_neon,
    axpy_neon,       scale_neon,     gemv_neon,
    gemv_t_acc_neon, ger_acc_neon,   adamw_update_neon,
};
}  // namespace detail

}  // namespace soup::kernels
