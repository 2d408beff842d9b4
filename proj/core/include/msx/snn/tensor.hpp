#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

namespace msx::snn {

// Dense N x C x H x W tensor. Sequence tensors are time-major: item t * batch + b.
template <class Real>
struct Tensor {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<Real> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, Real fill = Real(0))
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t item_size() const { return static_cast<std::size_t>(c) * h * w; }
    Real* item(int i) { return data.data() + i * item_size(); }
    const Real* item(int i) const { return data.data() + i * item_size(); }

    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    std::string shape_string() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
    }
};

// A named trainable tensor (or a buffer such as BN running statistics).
template <class Real>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string name_, std::vector<int> shape_, bool trainable_ = true) : name(std::move(name_)), shape(std::move(shape_)), trainable(trainable_) {
        std::size_t count = 1;
        for (int d : shape) {
            count *= static_cast<std::size_t>(d);
        }
        value.assign(count, Real(0));
        if (trainable) {
            grad.assign(count, Real(0));
        }
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
};

}  // namespace msx::snn
