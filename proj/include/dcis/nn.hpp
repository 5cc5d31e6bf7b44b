#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dcis/rng.hpp"

namespace dcis::nn {

// Planar CHW float tensor.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) { resize(c_, h_, w_); }

    void resize(int c_, int h_, int w_) {
        c = c_;
        h = h_;
        w = w_;
        v.assign(static_cast<std::size_t>(c_) * h_ * w_, 0.0f);
    }

    std::size_t count() const { return v.size(); }
    float* data() { return v.data(); }
    const float* data() const { return v.data(); }
};

struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> value;
    std::vector<float> grad;
    std::vector<float> momentum;

    void init(std::string name_, std::vector<int> shape_);
    std::size_t count() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual void forward(const Tensor& x, Tensor& y) = 0;
    // dy -> dx; parameter gradients accumulate. x and y are the stored forward pair.
    virtual void backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) = 0;
    virtual std::vector<ParamTensor*> params() { return {}; }
    virtual const char* kind() const = 0;
};

// 3x3 convolution, stride 1, zero padding 1, via im2col + GEMM.
class Conv3x3 : public Layer {
public:
    Conv3x3(const std::string& name, int in_ch, int out_ch);
    void forward(const Tensor& x, Tensor& y) override;
    void backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) override;
    std::vector<ParamTensor*> params() override { return {&weight_, &bias_}; }
    const char* kind() const override { return "conv3x3"; }

private:
    int in_ch_, out_ch_;
    ParamTensor weight_;  // [out_ch][in_ch * 9]
    ParamTensor bias_;    // [out_ch]
    std::vector<float> col_, scratch_;
};

class ReLU : public Layer {
public:
    void forward(const Tensor& x, Tensor& y) override;
    void backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) override;
    const char* kind() const override { return "relu"; }
};

// 2x2 max pooling, stride 2. Input dims must be even.
class MaxPool2 : public Layer {
public:
    void forward(const Tensor& x, Tensor& y) override;
    void backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) override;
    const char* kind() const override { return "maxpool2"; }

private:
    std::vector<std::uint8_t> argmax_;  // 0..3 quadrant index per output cell
};

class GlobalAvgPool : public Layer {
public:
    void forward(const Tensor& x, Tensor& y) override;
    void backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) override;
    const char* kind() const override { return "gap"; }
};

// Fully connected on flattened input.
class Dense : public Layer {
public:
    Dense(const std::string& name, int in_dim, int out_dim);
    void forward(const Tensor& x, Tensor& y) override;
    void backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx) override;
    std::vector<ParamTensor*> params() override { return {&weight_, &bias_}; }
    const char* kind() const override { return "dense"; }

private:
    int in_dim_, out_dim_;
    ParamTensor weight_;  // [out][in]
    ParamTensor bias_;    // [out]
    std::vector<float> wt_;  // transposed weights, rebuilt per backward
};

// He-uniform initialization over all parameters, in declaration order.
void init_he_uniform(std::vector<ParamTensor*> params, Rng& rng);

}  // namespace dcis::nn
