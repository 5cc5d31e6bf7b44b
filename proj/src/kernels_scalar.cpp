#include "dcis/kernels.hpp"

namespace dcis::kernels::scalar {

void gemm_f32(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        }
        const float* arow = a + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = b + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void relu_f32(const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_f32(const float* y, const float* dy, float* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void add_bias_rows_f32(float* c, int m, int n, const float* bias) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<std::size_t>(i) * n;
        const float bv = bias[i];
        for (int j = 0; j < n; ++j) crow[j] += bv;
    }
}

void sgd_momentum_f32(float* w, float* vel, const float* grad, std::size_t n,
                      float lr, float momentum) {
    for (std::size_t i = 0; i < n; ++i) {
        vel[i] = momentum * vel[i] - lr * grad[i];
        w[i] += vel[i];
    }
}

}  // namespace dcis::kernels::scalar
