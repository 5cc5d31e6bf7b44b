#include "dcis/nn.hpp"

#include <cmath>
#include <cstring>

#include "dcis/errors.hpp"
#include "dcis/kernels.hpp"

namespace dcis::nn {

void ParamTensor::init(std::string name_, std::vector<int> shape_) {
    name = std::move(name_);
    shape = std::move(shape_);
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    value.assign(n, 0.0f);
    grad.assign(n, 0.0f);
    momentum.assign(n, 0.0f);
}

namespace {

// col[(ci*9 + ky*3 + kx)][y*W + x] = x[ci][y + ky - 1][x + kx - 1], zero outside.
void im2col_3x3(const Tensor& x, std::vector<float>& col) {
    const int c = x.c, h = x.h, w = x.w;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    col.assign(static_cast<std::size_t>(c) * 9 * plane, 0.0f);
    for (int ci = 0; ci < c; ++ci) {
        const float* src = x.data() + ci * plane;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                float* dst = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * plane;
                const int y_lo = std::max(0, 1 - ky), y_hi = std::min(h, h + 1 - ky);
                const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
                for (int y = y_lo; y < y_hi; ++y) {
                    const float* srow = src + static_cast<std::size_t>(y + ky - 1) * w + (x_lo + kx - 1);
                    float* drow = dst + static_cast<std::size_t>(y) * w + x_lo;
                    std::memcpy(drow, srow, static_cast<std::size_t>(x_hi - x_lo) * sizeof(float));
                }
            }
        }
    }
}

void col2im_3x3(const std::vector<float>& col, Tensor& dx) {
    const int c = dx.c, h = dx.h, w = dx.w;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::fill(dx.v.begin(), dx.v.end(), 0.0f);
    for (int ci = 0; ci < c; ++ci) {
        float* dst = dx.data() + ci * plane;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const float* src = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * plane;
                const int y_lo = std::max(0, 1 - ky), y_hi = std::min(h, h + 1 - ky);
                const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
                for (int y = y_lo; y < y_hi; ++y) {
                    float* drow = dst + static_cast<std::size_t>(y + ky - 1) * w + (x_lo + kx - 1);
                    const float* srow = src + static_cast<std::size_t>(y) * w + x_lo;
                    for (int xx = 0; xx < x_hi - x_lo; ++xx) drow[xx] += srow[xx];
                }
            }
        }
    }
}

void transpose_f32(const float* src, int rows, int cols, float* dst) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            dst[static_cast<std::size_t>(j) * rows + i] = src[static_cast<std::size_t>(i) * cols + j];
}

}  // namespace

Conv3x3::Conv3x3(const std::string& name, int in_ch, int out_ch)
    : in_ch_(in_ch), out_ch_(out_ch) {
    weight_.init(name + ".weight", {out_ch, in_ch * 9});
    bias_.init(name + ".bias", {out_ch});
}

void Conv3x3::forward(const Tensor& x, Tensor& y) {
    if (x.c != in_ch_)
        throw ValidationError("conv " + weight_.name + ": expected " + std::to_string(in_ch_) +
                              " input channels, got " + std::to_string(x.c));
    y.resize(out_ch_, x.h, x.w);
    const int n = x.h * x.w;
    const int k = in_ch_ * 9;
    im2col_3x3(x, col_);
    kernels::gemm_f32(out_ch_, n, k, weight_.value.data(), col_.data(), y.data(), false);
    kernels::add_bias_rows_f32(y.data(), out_ch_, n, bias_.value.data());
}

void Conv3x3::backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) {
    (void)y;
    const int n = x.h * x.w;
    const int k = in_ch_ * 9;

    // bias gradient: row sums of dy
    for (int oc = 0; oc < out_ch_; ++oc) {
        const float* row = dy.data() + static_cast<std::size_t>(oc) * n;
        float acc = 0.0f;
        for (int j = 0; j < n; ++j) acc += row[j];
        bias_.grad[oc] += acc;
    }

    // dW += dy (out x n) * col^T (n x k); col_ still holds this sample's forward
    scratch_.resize(static_cast<std::size_t>(n) * k);
    transpose_f32(col_.data(), k, n, scratch_.data());
    kernels::gemm_f32(out_ch_, k, n, dy.data(), scratch_.data(), weight_.grad.data(), true);

    // dcol = W^T (k x out) * dy (out x n), then scatter back to dx
    scratch_.resize(static_cast<std::size_t>(k) * out_ch_);
    transpose_f32(weight_.value.data(), out_ch_, k, scratch_.data());
    std::vector<float> dcol(static_cast<std::size_t>(k) * n);
    kernels::gemm_f32(k, n, out_ch_, scratch_.data(), dy.data(), dcol.data(), false);
    dx.resize(in_ch_, x.h, x.w);
    col2im_3x3(dcol, dx);
}

void ReLU::forward(const Tensor& x, Tensor& y) {
    y.resize(x.c, x.h, x.w);
    kernels::relu_f32(x.data(), y.data(), x.count());
}

void ReLU::backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) {
    (void)x;
    dx.resize(y.c, y.h, y.w);
    kernels::relu_backward_f32(y.data(), dy.data(), dx.data(), y.count());
}

void MaxPool2::forward(const Tensor& x, Tensor& y) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw ValidationError("maxpool2: input dims must be even, got " + std::to_string(x.h) +
                              "x" + std::to_string(x.w));
    const int oh = x.h / 2, ow = x.w / 2;
    y.resize(x.c, oh, ow);
    argmax_.assign(y.count(), 0);
    for (int c = 0; c < x.c; ++c) {
        const float* plane = x.data() + static_cast<std::size_t>(c) * x.h * x.w;
        float* out = y.data() + static_cast<std::size_t>(c) * oh * ow;
        std::uint8_t* am = argmax_.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int iy = oy * 2, ix = ox * 2;
                const float v00 = plane[static_cast<std::size_t>(iy) * x.w + ix];
                const float v01 = plane[static_cast<std::size_t>(iy) * x.w + ix + 1];
                const float v10 = plane[static_cast<std::size_t>(iy + 1) * x.w + ix];
                const float v11 = plane[static_cast<std::size_t>(iy + 1) * x.w + ix + 1];
                float best = v00;
                std::uint8_t idx = 0;
                if (v01 > best) { best = v01; idx = 1; }
                if (v10 > best) { best = v10; idx = 2; }
                if (v11 > best) { best = v11; idx = 3; }
                out[static_cast<std::size_t>(oy) * ow + ox] = best;
                am[static_cast<std::size_t>(oy) * ow + ox] = idx;
            }
        }
    }
}

void MaxPool2::backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) {
    dx.resize(x.c, x.h, x.w);
    std::fill(dx.v.begin(), dx.v.end(), 0.0f);
    const int oh = y.h, ow = y.w;
    for (int c = 0; c < x.c; ++c) {
        float* dplane = dx.data() + static_cast<std::size_t>(c) * x.h * x.w;
        const float* g = dy.data() + static_cast<std::size_t>(c) * oh * ow;
        const std::uint8_t* am = argmax_.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const std::uint8_t idx = am[static_cast<std::size_t>(oy) * ow + ox];
                const int iy = oy * 2 + (idx >> 1), ix = ox * 2 + (idx & 1);
                dplane[static_cast<std::size_t>(iy) * x.w + ix] +=
                    g[static_cast<std::size_t>(oy) * ow + ox];
            }
        }
    }
}

void GlobalAvgPool::forward(const Tensor& x, Tensor& y) {
    y.resize(x.c, 1, 1);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int c = 0; c < x.c; ++c) {
        const float* src = x.data() + c * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
        y.v[c] = static_cast<float>(acc / static_cast<double>(plane));
    }
}

void GlobalAvgPool::backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) {
    (void)y;
    dx.resize(x.c, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int c = 0; c < x.c; ++c) {
        const float g = dy.v[c] / static_cast<float>(plane);
        float* dst = dx.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = g;
    }
}

Dense::Dense(const std::string& name, int in_dim, int out_dim)
    : in_dim_(in_dim), out_dim_(out_dim) {
    weight_.init(name + ".weight", {out_dim, in_dim});
    bias_.init(name + ".bias", {out_dim});
}

void Dense::forward(const Tensor& x, Tensor& y) {
    if (static_cast<int>(x.count()) != in_dim_)
        throw ValidationError("dense " + weight_.name + ": expected input of " +
                              std::to_string(in_dim_) + " values, got " + std::to_string(x.count()));
    y.resize(out_dim_, 1, 1);
    kernels::gemm_f32(out_dim_, 1, in_dim_, weight_.value.data(), x.data(), y.data(), false);
    for (int i = 0; i < out_dim_; ++i) y.v[i] += bias_.value[i];
}

void Dense::backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) {
    (void)y;
    for (int i = 0; i < out_dim_; ++i) bias_.grad[i] += dy.v[i];
    // dW += dy (out x 1) * x^T (1 x in)
    kernels::gemm_f32(out_dim_, in_dim_, 1, dy.data(), x.data(), weight_.grad.data(), true);
    // dx = W^T (in x out) * dy (out x 1)
    wt_.resize(static_cast<std::size_t>(in_dim_) * out_dim_);
    transpose_f32(weight_.value.data(), out_dim_, in_dim_, wt_.data());
    dx.resize(x.c, x.h, x.w);
    kernels::gemm_f32(in_dim_, 1, out_dim_, wt_.data(), dy.data(), dx.data(), false);
}

void init_he_uniform(std::vector<ParamTensor*> params, Rng& rng) {
    for (ParamTensor* p : params) {
        if (p->shape.size() < 2) {
            std::fill(p->value.begin(), p->value.end(), 0.0f);  // biases
            continue;
        }
        const double fan_in = static_cast<double>(p->shape[1]);
        const double limit = std::sqrt(6.0 / fan_in);
        for (float& v : p->value) v = static_cast<float>(rng.uniform(-limit, limit));
    }
}

}  // namespace dcis::nn
