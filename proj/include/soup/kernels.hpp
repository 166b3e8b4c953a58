#pragma once

// Dense double-precision kernels used by the policy forward/backward pass
// and the optimizer. Every kernel has a portable scalar reference version;
// wider variants (AVX2+FMA on x86-64, NEON on aarch64) are compiled in
// separate translation units and picked once at runtime.
//
// Variants agree with the scalar reference up to floating-point
// reassociation (see tests/test_kernels.cpp). Within one process the
// selected table never changes unless force_isa() is called, so runs stay
// bit-reproducible on a given machine.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace soup::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

/// Scalars for one decoupled-weight-decay Adam update.
struct AdamScalars {
  double lr = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double bias_correction1 = 1.0;  // 1 - beta1^t
  double bias_correction2 = 1.0;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  // y = A x + bias, A row-major rows x cols; bias may be null
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols,
               const double* x, const double* bias, double* y);
  // out += A^T v, A row-major rows x cols
  void (*gemv_t_acc)(const double* a, std::size_t rows, std::size_t cols,
                     const double* v, double* out);
  // A += u x^T
  void (*ger_acc)(double* a, std::size_t rows, std::size_t cols,
                  const double* u, const double* x);
  void (*adamw_update)(double* params, const double* grads, double* m,
                       double* v, std::size_t n, const AdamScalars& s);
};

bool isa_supported(Isa isa);

/// Best variant for this CPU. SOUP_KERNELS=scalar|avx2|neon overrides it.
Isa detect_isa();

/// The table currently in use.
const KernelTable& active();
Isa active_isa();

/// Switch the process-wide table. Throws std::invalid_argument when the
/// variant is not compiled in or the CPU lacks it.
void force_isa(Isa isa);

const KernelTable& table_for(Isa isa);

// Convenience wrappers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double sum_squares(std::span<const double> x) {
  return active().sum_squares(x.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void scale(double alpha, std::span<double> x) {
  active().scale(alpha, x.data(), x.size());
}

namespace detail {
extern const KernelTable scalar_table;
#if defined(SOUP_HAVE_AVX2_TU)
extern const KernelTable avx2_table;
#endif
#if defined(SOUP_HAVE_NEON_TU)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace soup::kernels
