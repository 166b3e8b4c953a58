#include <cmath>

#include "soup/kernels.hpp"

namespace soup::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gemv_scalar(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double acc = dot_scalar(a + r * cols, x, cols);
    y[r] = bias != nullptr ? acc + bias[r] : acc;
  }
}

void gemv_t_acc_scalar(const double* a, std::size_t rows, std::size_t cols,
                       const double* v, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (v[r] == 0.0) continue;
    axpy_scalar(v[r], a + r * cols, out, cols);
  }
}

void ger_acc_scalar(double* a, std::size_t rows, std::size_t cols,
                    const double* u, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (u[r] == 0.0) continue;
    axpy_scalar(u[r], x, a + r * cols, cols);
  }
}

void adamw_update_scalar(double* params, const double* grads, double* m,
                         double* v, std::size_t n, const AdamScalars& s) {
  const double decay = 1.0 - s.lr * s.weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
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
const KernelTable scalar_table{
    Isa::scalar,       dot_scalar,       sum_squares_scalar,
    axpy_scalar,       scale_scalar,     gemv_scalar,
    gemv_t_acc_scalar, ger_acc_scalar,   adamw_update_scalar,
};
}  // namespace detail

}  // namespace soup::kernels
