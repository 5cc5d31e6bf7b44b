#include "dcis/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "dcis/errors.hpp"

namespace dcis::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect() {
    if (const char* env = std::getenv("DCIS_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_has_avx2())
                throw CapabilityError("DCIS_KERNELS=avx2 requested but this CPU lacks AVX2/FMA");
            return Backend::avx2;
        }
        if (std::strcmp(env, "auto") != 0)
            throw ValidationError(std::string("unknown DCIS_KERNELS value: ") + env);
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

Backend& current() {
    static Backend backend = detect();
    return backend;
}

}  // namespace

Backend active() { return current(); }

bool supported(Backend backend) {
    return backend == Backend::scalar || cpu_has_avx2();
}

void force(Backend backend) {
    if (!supported(backend))
        throw CapabilityError("requested kernel backend is not supported on this CPU");
    current() = backend;
}

const char* backend_name(Backend backend) {
    return backend == Backend::avx2 ? "avx2" : "scalar";
}

#if defined(__x86_64__) || defined(__i386__)
#define DCIS_DISPATCH(fn, ...)                  \
    if (current() == Backend::avx2) {           \
        avx2::fn(__VA_ARGS__);                  \
    } else {                                    \
        scalar::fn(__VA_ARGS__);                \
    }
#else
#define DCIS_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

void gemm_f32(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    DCIS_DISPATCH(gemm_f32, m, n, k, a, b, c, accumulate)
}

void relu_f32(const float* x, float* y, std::size_t n) { DCIS_DISPATCH(relu_f32, x, y, n) }

void relu_backward_f32(const float* y, const float* dy, float* dx, std::size_t n) {
    DCIS_DISPATCH(relu_backward_f32, y, dy, dx, n)
}

void add_bias_rows_f32(float* c, int m, int n, const float* bias) {
    DCIS_DISPATCH(add_bias_rows_f32, c, m, n, bias)
}

void sgd_momentum_f32(float* w, float* vel, const float* grad, std::size_t n,
                      float lr, float momentum) {
    DCIS_DISPATCH(sgd_momentum_f32, w, vel, grad, n, lr, momentum)
}

#undef DCIS_DISPATCH

}  // namespace dcis::kernels
