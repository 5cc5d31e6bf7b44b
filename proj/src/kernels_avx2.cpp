#if defined(__x86_64__) || defined(__i386__)

#include "dcis/kernels.hpp"

#include <immintrin.h>

#define DCIS_AVX2 __attribute__((target("avx2,fma")))

namespace dcis::kernels::avx2 {

namespace {

// One output row, columns [j0, n).
DCIS_AVX2 inline void gemm_row_tail(int n, int k, const float* arow, const float* b,
                                    float* crow, int j0, bool accumulate) {
    for (int j = j0; j < n; ++j) {
        float acc = accumulate ? crow[j] : 0.0f;
        for (int kk = 0; kk < k; ++kk) acc += arow[kk] * b[static_cast<std::size_t>(kk) * n + j];
        crow[j] = acc;
    }
}

}  // namespace

DCIS_AVX2 void gemm_f32(int m, int n, int k, const float* a, const float* b, float* c,
                        bool accumulate) {
    const std::size_t lda = static_cast<std::size_t>(k);
    const std::size_t ldb = static_cast<std::size_t>(n);
    const std::size_t ldc = static_cast<std::size_t>(n);

    int i = 0;
    // 4 x 16 register tile: each B panel load is reused across four A rows.
    for (; i + 4 <= m; i += 4) {
        const float* a0 = a + (i + 0) * lda;
        const float* a1 = a + (i + 1) * lda;
        const float* a2 = a + (i + 2) * lda;
        const float* a3 = a + (i + 3) * lda;
        float* c0 = c + (i + 0) * ldc;
        float* c1 = c + (i + 1) * ldc;
        float* c2 = c + (i + 2) * ldc;
        float* c3 = c + (i + 3) * ldc;

        int j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256 r00, r01, r10, r11, r20, r21, r30, r31;
            if (accumulate) {
                r00 = _mm256_loadu_ps(c0 + j);
                r01 = _mm256_loadu_ps(c0 + j + 8);
                r10 = _mm256_loadu_ps(c1 + j);
                r11 = _mm256_loadu_ps(c1 + j + 8);
                r20 = _mm256_loadu_ps(c2 + j);
                r21 = _mm256_loadu_ps(c2 + j + 8);
                r30 = _mm256_loadu_ps(c3 + j);
                r31 = _mm256_loadu_ps(c3 + j + 8);
            } else {
                r00 = r01 = r10 = r11 = r20 = r21 = r30 = r31 = _mm256_setzero_ps();
            }
            for (int kk = 0; kk < k; ++kk) {
                const __m256 b0 = _mm256_loadu_ps(b + kk * ldb + j);
                const __m256 b1 = _mm256_loadu_ps(b + kk * ldb + j + 8);
                __m256 av;
                av = _mm256_set1_ps(a0[kk]);
                r00 = _mm256_fmadd_ps(av, b0, r00);
                r01 = _mm256_fmadd_ps(av, b1, r01);
                av = _mm256_set1_ps(a1[kk]);
                r10 = _mm256_fmadd_ps(av, b0, r10);
                r11 = _mm256_fmadd_ps(av, b1, r11);
                av = _mm256_set1_ps(a2[kk]);
                r20 = _mm256_fmadd_ps(av, b0, r20);
                r21 = _mm256_fmadd_ps(av, b1, r21);
                av = _mm256_set1_ps(a3[kk]);
                r30 = _mm256_fmadd_ps(av, b0, r30);
                r31 = _mm256_fmadd_ps(av, b1, r31);
            }
            _mm256_storeu_ps(c0 + j, r00);
            _mm256_storeu_ps(c0 + j + 8, r01);
            _mm256_storeu_ps(c1 + j, r10);
            _mm256_storeu_ps(c1 + j + 8, r11);
            _mm256_storeu_ps(c2 + j, r20);
            _mm256_storeu_ps(c2 + j + 8, r21);
            _mm256_storeu_ps(c3 + j, r30);
            _mm256_storeu_ps(c3 + j + 8, r31);
        }
        for (; j + 8 <= n; j += 8) {
            __m256 r0, r1, r2, r3;
            if (accumulate) {
                r0 = _mm256_loadu_ps(c0 + j);
                r1 = _mm256_loadu_ps(c1 + j);
                r2 = _mm256_loadu_ps(c2 + j);
                r3 = _mm256_loadu_ps(c3 + j);
            } else {
                r0 = r1 = r2 = r3 = _mm256_setzero_ps();
            }
            for (int kk = 0; kk < k; ++kk) {
                const __m256 b0 = _mm256_loadu_ps(b + kk * ldb + j);
                r0 = _mm256_fmadd_ps(_mm256_set1_ps(a0[kk]), b0, r0);
                r1 = _mm256_fmadd_ps(_mm256_set1_ps(a1[kk]), b0, r1);
                r2 = _mm256_fmadd_ps(_mm256_set1_ps(a2[kk]), b0, r2);
                r3 = _mm256_fmadd_ps(_mm256_set1_ps(a3[kk]), b0, r3);
            }
            _mm256_storeu_ps(c0 + j, r0);
            _mm256_storeu_ps(c1 + j, r1);
            _mm256_storeu_ps(c2 + j, r2);
            _mm256_storeu_ps(c3 + j, r3);
        }
        if (j < n) {
            gemm_row_tail(n, k, a0, b, c0, j, accumulate);
            gemm_row_tail(n, k, a1, b, c1, j, accumulate);
            gemm_row_tail(n, k, a2, b, c2, j, accumulate);
            gemm_row_tail(n, k, a3, b, c3, j, accumulate);
        }
    }
    for (; i < m; ++i) {
        const float* arow = a + i * lda;
        float* crow = c + i * ldc;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256 r0 = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
            for (int kk = 0; kk < k; ++kk)
                r0 = _mm256_fmadd_ps(_mm256_set1_ps(arow[kk]), _mm256_loadu_ps(b + kk * ldb + j), r0);
            _mm256_storeu_ps(crow + j, r0);
        }
        if (j < n) gemm_row_tail(n, k, arow, b, crow, j, accumulate);
    }
}

DCIS_AVX2 void relu_f32(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

DCIS_AVX2 void relu_backward_f32(const float* y, const float* dy, float* dx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_and_ps(_mm256_loadu_ps(dy + i), mask));
    }
    for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

DCIS_AVX2 void add_bias_rows_f32(float* c, int m, int n, const float* bias) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<std::size_t>(i) * n;
        const __m256 bv = _mm256_set1_ps(bias[i]);
        int j = 0;
        for (; j + 8 <= n; j += 8) _mm256_storeu_ps(crow + j, _mm256_add_ps(_mm256_loadu_ps(crow + j), bv));
        for (; j < n; ++j) crow[j] += bias[i];
    }
}

DCIS_AVX2 void sgd_momentum_f32(float* w, float* vel, const float* grad, std::size_t n,
                                float lr, float momentum) {
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 vmu = _mm256_set1_ps(momentum);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_fnmadd_ps(vlr, _mm256_loadu_ps(grad + i),
                                          _mm256_mul_ps(vmu, _mm256_loadu_ps(vel + i)));
        _mm256_storeu_ps(vel + i, v);
        _mm256_storeu_ps(w + i, _mm256_add_ps(_mm256_loadu_ps(w + i), v));
    }
    for (; i < n; ++i) {
        vel[i] = momentum * vel[i] - lr * grad[i];
        w[i] += vel[i];
    }
}

}  // namespace dcis::kernels::avx2

#endif  // x86
