#include <doctest.h>

#include <cmath>
#include <vector>

#include "dcis/kernels.hpp"
#include "dcis/rng.hpp"

namespace k = dcis::kernels;
using dcis::Rng;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

// reference in double precision, independent of both float paths
std::vector<double> gemm_double(int m, int n, int kk, const std::vector<float>& a,
                                const std::vector<float>& b, const std::vector<float>& c0,
                                bool accumulate) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    if (accumulate)
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = c0[i];
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = c[static_cast<std::size_t>(i) * n + j];
            for (int x = 0; x < kk; ++x)
                acc += static_cast<double>(a[static_cast<std::size_t>(i) * kk + x]) *
                       static_cast<double>(b[static_cast<std::size_t>(x) * n + j]);
            c[static_cast<std::size_t>(i) * n + j] = acc;
        }
    return c;
}

}  // namespace

TEST_CASE("scalar gemm matches a double-precision oracle") {
    Rng rng(11);
    for (int m : {1, 3, 5}) {
        for (int n : {1, 7, 33}) {
            for (int kk : {1, 9, 64}) {
                const auto a = random_vec(static_cast<std::size_t>(m) * kk, rng);
                const auto b = random_vec(static_cast<std::size_t>(kk) * n, rng);
                auto c = random_vec(static_cast<std::size_t>(m) * n, rng);
                const auto ref = gemm_double(m, n, kk, a, b, c, true);
                k::scalar::gemm_f32(m, n, kk, a.data(), b.data(), c.data(), true);
                for (std::size_t i = 0; i < c.size(); ++i)
                    CHECK(std::abs(c[i] - ref[i]) <= 1e-4 * (1.0 + std::abs(ref[i])));
            }
        }
    }
}

#if defined(__x86_64__) || defined(__i386__)
TEST_CASE("avx2 kernels agree with the scalar reference") {
    if (!k::supported(k::Backend::avx2)) {
        MESSAGE("AVX2 not available on this CPU; skipping equivalence checks");
        return;
    }
    Rng rng(12);

    SUBCASE("gemm, odd shapes and tails") {
        for (int m : {1, 2, 4, 5, 17}) {
            for (int n : {1, 7, 8, 15, 16, 33, 100}) {
                for (int kk : {1, 3, 27, 65}) {
                    for (bool acc : {false, true}) {
                        const auto a = random_vec(static_cast<std::size_t>(m) * kk, rng);
                        const auto b = random_vec(static_cast<std::size_t>(kk) * n, rng);
                        auto c1 = random_vec(static_cast<std::size_t>(m) * n, rng);
                        auto c2 = c1;
                        k::scalar::gemm_f32(m, n, kk, a.data(), b.data(), c1.data(), acc);
                        k::avx2::gemm_f32(m, n, kk, a.data(), b.data(), c2.data(), acc);
                        for (std::size_t i = 0; i < c1.size(); ++i)
                            CHECK(std::abs(c1[i] - c2[i]) <=
                                  1e-5 * (1.0 + std::abs(static_cast<double>(c1[i]))));
                    }
                }
            }
        }
    }

    SUBCASE("relu forward/backward, exact") {
        for (std::size_t n : {1u, 7u, 8u, 100u, 1001u}) {
            const auto x = random_vec(n, rng);
            std::vector<float> y1(n), y2(n), dx1(n), dx2(n);
            k::scalar::relu_f32(x.data(), y1.data(), n);
            k::avx2::relu_f32(x.data(), y2.data(), n);
            CHECK(y1 == y2);
            const auto dy = random_vec(n, rng);
            k::scalar::relu_backward_f32(y1.data(), dy.data(), dx1.data(), n);
            k::avx2::relu_backward_f32(y2.data(), dy.data(), dx2.data(), n);
            CHECK(dx1 == dx2);
        }
    }

    SUBCASE("bias add") {
        for (int m : {1, 3, 16}) {
            for (int n : {1, 9, 64, 130}) {
                auto c1 = random_vec(static_cast<std::size_t>(m) * n, rng);
                auto c2 = c1;
                const auto bias = random_vec(m, rng);
                k::scalar::add_bias_rows_f32(c1.data(), m, n, bias.data());
                k::avx2::add_bias_rows_f32(c2.data(), m, n, bias.data());
                CHECK(c1 == c2);
            }
        }
    }

    SUBCASE("sgd momentum step") {
        for (std::size_t n : {1u, 8u, 9u, 1000u}) {
            auto w1 = random_vec(n, rng);
            auto w2 = w1;
            auto v1 = random_vec(n, rng);
            auto v2 = v1;
            const auto grad = random_vec(n, rng);
            k::scalar::sgd_momentum_f32(w1.data(), v1.data(), grad.data(), n, 0.01f, 0.95f);
            k::avx2::sgd_momentum_f32(w2.data(), v2.data(), grad.data(), n, 0.01f, 0.95f);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(std::abs(w1[i] - w2[i]) <= 1e-6f * (1.0f + std::abs(w1[i])));
                CHECK(std::abs(v1[i] - v2[i]) <= 1e-6f * (1.0f + std::abs(v1[i])));
            }
        }
    }
}
#endif

TEST_CASE("backend dispatch is forceable") {
    const auto original = k::active();
    k::force(k::Backend::scalar);
    CHECK(k::active() == k::Backend::scalar);
    k::force(original);
    CHECK(k::active() == original);
}
