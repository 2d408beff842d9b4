#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msx/random.hpp"
#include "msx/snn/lif.hpp"
#include "msx/snn/tensor.hpp"

namespace msx::snn {

// Shape of the sequence flowing through a layer: n = steps * batch items, time-major.
struct StepInfo {
    int steps = 1;
    int batch = 1;
    bool train = false;
};

// Layers are stateless between calls except for what forward caches for backward.
// backward receives the forward input and output and returns the input gradient
// (empty when need_input_grad is false), accumulating into parameter grads.
template <class Real>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) = 0;
    virtual Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                                  const StepInfo& info) = 0;
    virtual void collect(std::vector<Param<Real>*>& /*out*/) {}
    virtual std::string kind() const = 0;

    bool need_input_grad = true;
};

// 3x3-style convolution with zero padding k/2, via im2col and a GEMM.
template <class Real>
class Conv2d : public Layer<Real> {
public:
    Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, bool bias, Rng& rng);
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    void collect(std::vector<Param<Real>*>& out) override;
    std::string kind() const override { return "conv"; }

    int out_size(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }

private:
    int in_c_, out_c_, kernel_, stride_, pad_;
    bool has_bias_;
    Param<Real> weight_;
    Param<Real> bias_;
};

// Per-channel normalization over all items and positions; running statistics in eval.
template <class Real>
class BatchNorm : public Layer<Real> {
public:
    BatchNorm(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5);
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    void collect(std::vector<Param<Real>*>& out) override;
    std::string kind() const override { return "bn"; }

private:
    int channels_;
    double momentum_, eps_;
    Param<Real> gamma_, beta_, running_mean_, running_var_;
    std::vector<Real> mean_, inv_std_;
};

// Multi-step LIF layer. Backward is BPTT with the arctan surrogate, including the
// path through the reset.
template <class Real>
class Lif : public Layer<Real> {
public:
    explicit Lif(const LifParams& params) : params_(params) {}
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    std::string kind() const override { return "lif"; }

private:
    LifParams params_;
    std::vector<Real> charged_;  // h before firing, per step
};

template <class Real>
class AvgPool2 : public Layer<Real> {
public:
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    std::string kind() const override { return "pool"; }
};

// Fully connected over the flattened item; output is [n, out, 1, 1].
template <class Real>
class Linear : public Layer<Real> {
public:
    Linear(const std::string& name, int in_features, int out_features, bool bias, Rng& rng);
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    void collect(std::vector<Param<Real>*>& out) override;
    std::string kind() const override { return "linear"; }

private:
    int in_, out_;
    bool has_bias_;
    Param<Real> weight_;
    Param<Real> bias_;
};

template <class Real>
class Relu : public Layer<Real> {
public:
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    std::string kind() const override { return "relu"; }
};

// Kernel-2, stride-2 transposed convolution (exact 2x upsampling).
template <class Real>
class ConvTranspose2 : public Layer<Real> {
public:
    ConvTranspose2(const std::string& name, int in_channels, int out_channels, Rng& rng);
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    void collect(std::vector<Param<Real>*>& out) override;
    std::string kind() const override { return "convT"; }

private:
    int in_c_, out_c_;
    Param<Real> weight_;  // [in, out, 2, 2]
    Param<Real> bias_;
};

// Bilinear resize with half-pixel centers to a fixed output size.
template <class Real>
class Upsample : public Layer<Real> {
public:
    Upsample(int out_height, int out_width) : out_h_(out_height), out_w_(out_width) {}
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    std::string kind() const override { return "upsample"; }

private:
    int out_h_, out_w_;
};

// [steps * batch, C, H, W] -> [batch, steps * C, H, W].
template <class Real>
class StackSteps : public Layer<Real> {
public:
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info) override;
    Tensor<Real> backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                          const StepInfo& info) override;
    std::string kind() const override { return "stack"; }
};

template <class Real>
class Sequential {
public:
    void add(std::unique_ptr<Layer<Real>> layer) { layers_.push_back(std::move(layer)); }
    // keep = true retains activations for backward.
    Tensor<Real> forward(const Tensor<Real>& x, const StepInfo& info, bool keep);
    // Returns the gradient w.r.t. the input of the first layer (empty if it needs none).
    Tensor<Real> backward(const Tensor<Real>& dy, const StepInfo& info);
    void collect(std::vector<Param<Real>*>& out);
    void release() { acts_.clear(); }

    std::size_t size() const { return layers_.size(); }
    Layer<Real>& operator[](std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer<Real>>> layers_;
    std::vector<Tensor<Real>> acts_;
};

}  // namespace msx::snn
