#pragma once

#include <cstddef>

// Arithmetic inner loops used by the network and the optimizer. Every kernel
// has a scalar reference implementation and, on x86-64 with AVX2+FMA, a
// vectorized variant selected at runtime. The two are equivalence-tested; the
// scalar path is the semantic definition.
namespace dcis::kernels {

enum class Backend { scalar, avx2 };

// Active backend, resolved once per process. The environment variable
// DCIS_KERNELS=scalar|avx2 overrides auto-detection.
Backend active();

// Force a backend (tests). Throws CapabilityError if unsupported on this CPU.
void force(Backend backend);

bool supported(Backend backend);
const char* backend_name(Backend backend);

// Row-major, contiguous. c[m x n] = (accumulate ? c : 0) + a[m x k] * b[k x n].
void gemm_f32(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);

// y[i] = max(x[i], 0)
void relu_f32(const float* x, float* y, std::size_t n);

// dx[i] = y[i] > 0 ? dy[i] : 0, where y is the forward output.
void relu_backward_f32(const float* y, const float* dy, float* dx, std::size_t n);

// c[i][j] += bias[i]
void add_bias_rows_f32(float* c, int m, int n, const float* bias);

// vel = momentum * vel - lr * grad;  w += vel
void sgd_momentum_f32(float* w, float* vel, const float* grad, std::size_t n,
                      float lr, float momentum);

namespace scalar {
void gemm_f32(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
void relu_f32(const float* x, float* y, std::size_t n);
void relu_backward_f32(const float* y, const float* dy, float* dx, std::size_t n);
void add_bias_rows_f32(float* c, int m, int n, const float* bias);
void sgd_momentum_f32(float* w, float* vel, const float* grad, std::size_t n,
                      float lr, float momentum);
}  // namespace scalar

#if defined(__x86_64__) || defined(__i386__)
namespace avx2 {
void gemm_f32(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
void relu_f32(const float* x, float* y, std::size_t n);
void relu_backward_f32(const float* y, const float* dy, float* dx, std::size_t n);
void add_bias_rows_f32(float* c, int m, int n, const float* bias);
void sgd_momentum_f32(float* w, float* vel, const float* grad, std::size_t n,
                      float lr, float momentum);
}  // namespace avx2
#endif

}  // namespace dcis::kernels
