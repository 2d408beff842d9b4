#include "msx/snn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "msx/errors.hpp"

namespace msx::snn {

namespace {

template <class Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MapMat = Eigen::Map<RowMat<Real>>;
template <class Real>
using ConstMapMat = Eigen::Map<const RowMat<Real>>;

// Bound on im2col buffer elements per GEMM chunk.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

template <class Real>
void uniform_fill(std::vector<Real>& v, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Real& x : v) {
        x = static_cast<Real>(dist(rng));
    }
}

int chunk_items(std::size_t per_item, int n) {
    const std::size_t c = std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(per_item, 1));
    return static_cast<int>(std::min<std::size_t>(c, static_cast<std::size_t>(n)));
}

}  // namespace

// ---- Conv2d ----

template <class Real>
Conv2d<Real>::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, bool bias,
                     Rng& rng)
    : in_c_(in_channels),
      out_c_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(kernel / 2),
      has_bias_(bias),
      weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias_(name + ".bias", {out_channels}) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1) {
        throw DomainError("conv: bad geometry");
    }
    uniform_fill(weight_.value, 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel)), rng);
}

template <class Real>
void Conv2d<Real>::collect(std::vector<Param<Real>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) {
        out.push_back(&bias_);
    }
}

template <class Real>
Tensor<Real> Conv2d<Real>::forward(const Tensor<Real>& x, const StepInfo& /*info*/) {
    if (x.c != in_c_) {
        throw DomainError("conv: expected " + std::to_string(in_c_) + " channels, got " + x.shape_string());
    }
    const int oh = out_size(x.h);
    const int ow = out_size(x.w);
    if (oh < 1 || ow < 1) {
        throw DomainError("conv: input too small " + x.shape_string());
    }
    Tensor<Real> y(x.n, out_c_, oh, ow);
    const int K = in_c_ * kernel_ * kernel_;
    const std::size_t opix = static_cast<std::size_t>(oh) * ow;
    const int chunk = chunk_items(static_cast<std::size_t>(K) * opix, x.n);
    RowMat<Real> cols;
    RowMat<Real> out;
    ConstMapMat<Real> W(weight_.value.data(), out_c_, K);

    for (int n0 = 0; n0 < x.n; n0 += chunk) {
        const int nc = std::min(chunk, x.n - n0);
        const auto ncols = static_cast<Eigen::Index>(nc * opix);
        cols.resize(K, ncols);
        for (int i = 0; i < nc; ++i) {
            const Real* src = x.item(n0 + i);
            for (int ic = 0; ic < in_c_; ++ic) {
                const Real* plane = src + static_cast<std::size_t>(ic) * x.plane();
                for (int ky = 0; ky < kernel_; ++ky) {
                    for (int kx = 0; kx < kernel_; ++kx) {
                        Real* row = cols.data() + static_cast<std::size_t>((ic * kernel_ + ky) * kernel_ + kx) * ncols +
                                    i * opix;
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            Real* dst = row + static_cast<std::size_t>(oy) * ow;
                            if (iy < 0 || iy >= x.h) {
                                std::fill(dst, dst + ow, Real(0));
                                continue;
                            }
                            const Real* srow = plane + static_cast<std::size_t>(iy) * x.w;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                dst[ox] = (ix >= 0 && ix < x.w) ? srow[ix] : Real(0);
                            }
                        }
                    }
                }
            }
        }
        out.noalias() = W * cols;
        for (int i = 0; i < nc; ++i) {
            Real* dst = y.item(n0 + i);
            for (int o = 0; o < out_c_; ++o) {
                const Real b = has_bias_ ? bias_.value[o] : Real(0);
                const Real* srow = out.data() + static_cast<std::size_t>(o) * ncols + i * opix;
                Real* d = dst + o * opix;
                for (std::size_t p = 0; p < opix; ++p) {
                    d[p] = srow[p] + b;
                }
            }
        }
    }
    return y;
}

template <class Real>
Tensor<Real> Conv2d<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                                    const StepInfo& /*info*/) {
    const int oh = y.h;
    const int ow = y.w;
    const int K = in_c_ * kernel_ * kernel_;
    const std::size_t opix = static_cast<std::size_t>(oh) * ow;
    const int chunk = chunk_items(static_cast<std::size_t>(K) * opix, x.n);
    Tensor<Real> dx;
    if (this->need_input_grad) {
        dx = Tensor<Real>(x.n, x.c, x.h, x.w);
    }
    RowMat<Real> cols;
    RowMat<Real> dout;
    RowMat<Real> dcols;
    ConstMapMat<Real> W(weight_.value.data(), out_c_, K);
    MapMat<Real> dW(weight_.grad.data(), out_c_, K);

    for (int n0 = 0; n0 < x.n; n0 += chunk) {
        const int nc = std::min(chunk, x.n - n0);
        const auto ncols = static_cast<Eigen::Index>(nc * opix);
        cols.resize(K, ncols);
        dout.resize(out_c_, ncols);
        for (int i = 0; i < nc; ++i) {
            const Real* src = x.item(n0 + i);
            for (int ic = 0; ic < in_c_; ++ic) {
                const Real* plane = src + static_cast<std::size_t>(ic) * x.plane();
                for (int ky = 0; ky < kernel_; ++ky) {
                    for (int kx = 0; kx < kernel_; ++kx) {
                        Real* row = cols.data() + static_cast<std::size_t>((ic * kernel_ + ky) * kernel_ + kx) * ncols +
                                    i * opix;
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            Real* dst = row + static_cast<std::size_t>(oy) * ow;
                            if (iy < 0 || iy >= x.h) {
                                std::fill(dst, dst + ow, Real(0));
                                continue;
                            }
                            const Real* srow = plane + static_cast<std::size_t>(iy) * x.w;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                dst[ox] = (ix >= 0 && ix < x.w) ? srow[ix] : Real(0);
                            }
                        }
                    }
                }
            }
            const Real* g = dy.item(n0 + i);
            for (int o = 0; o < out_c_; ++o) {
                const Real* gs = g + o * opix;
                Real* d = dout.data() + static_cast<std::size_t>(o) * ncols + i * opix;
                std::copy(gs, gs + opix, d);
                if (has_bias_) {
                    Real acc = 0;
                    for (std::size_t p = 0; p < opix; ++p) {
                        acc += gs[p];
                    }
                    bias_.grad[o] += acc;
                }
            }
        }
        dW.noalias() += dout * cols.transpose();
        if (!this->need_input_grad) {
            continue;
        }
        dcols.noalias() = W.transpose() * dout;
        for (int i = 0; i < nc; ++i) {
            Real* dst = dx.item(n0 + i);
            for (int ic = 0; ic < in_c_; ++ic) {
                Real* plane = dst + static_cast<std::size_t>(ic) * x.plane();
                for (int ky = 0; ky < kernel_; ++ky) {
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const Real* row = dcols.data() +
                                          static_cast<std::size_t>((ic * kernel_ + ky) * kernel_ + kx) * ncols + i * opix;
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= x.h) {
                                continue;
                            }
                            const Real* src = row + static_cast<std::size_t>(oy) * ow;
                            Real* drow = plane + static_cast<std::size_t>(iy) * x.w;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix >= 0 && ix < x.w) {
                                    drow[ix] += src[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return dx;
}

// ---- BatchNorm ----

template <class Real>
BatchNorm<Real>::BatchNorm(const std::string& name, int channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".gamma", {channels}),
      beta_(name + ".beta", {channels}),
      running_mean_(name + ".running_mean", {channels}, false),
      running_var_(name + ".running_var", {channels}, false) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), Real(1));
    std::fill(running_var_.value.begin(), running_var_.value.end(), Real(1));
}

template <class Real>
void BatchNorm<Real>::collect(std::vector<Param<Real>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
}

template <class Real>
Tensor<Real> BatchNorm<Real>::forward(const Tensor<Real>& x, const StepInfo& info) {
    if (x.c != channels_) {
        throw DomainError("batchnorm: channel mismatch " + x.shape_string());
    }
    Tensor<Real> y(x.n, x.c, x.h, x.w);
    const std::size_t plane = x.plane();
    mean_.assign(channels_, Real(0));
    inv_std_.assign(channels_, Real(0));
    const double count = static_cast<double>(x.n) * plane;
    for (int c = 0; c < channels_; ++c) {
        double mean = 0.0;
        double var = 0.0;
        if (info.train) {
            for (int i = 0; i < x.n; ++i) {
                const Real* p = x.item(i) + c * plane;
                for (std::size_t k = 0; k < plane; ++k) {
                    mean += p[k];
                }
            }
            mean /= count;
            for (int i = 0; i < x.n; ++i) {
                const Real* p = x.item(i) + c * plane;
                for (std::size_t k = 0; k < plane; ++k) {
                    const double d = p[k] - mean;
                    var += d * d;
                }
            }
            var /= count;
            const double unbiased = count > 1 ? var * count / (count - 1) : var;
            running_mean_.value[c] = static_cast<Real>((1 - momentum_) * running_mean_.value[c] + momentum_ * mean);
            running_var_.value[c] = static_cast<Real>((1 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
        } else {
            mean = running_mean_.value[c];
            var = running_var_.value[c];
        }
        const Real m = static_cast<Real>(mean);
        const Real inv = static_cast<Real>(1.0 / std::sqrt(var + eps_));
        mean_[c] = m;
        inv_std_[c] = inv;
        const Real g = gamma_.value[c] * inv;
        const Real b = beta_.value[c];
        for (int i = 0; i < x.n; ++i) {
            const Real* p = x.item(i) + c * plane;
            Real* q = y.item(i) + c * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                q[k] = (p[k] - m) * g + b;
            }
        }
    }
    return y;
}

template <class Real>
Tensor<Real> BatchNorm<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& /*y*/, const Tensor<Real>& dy,
                                       const StepInfo& info) {
    Tensor<Real> dx(x.n, x.c, x.h, x.w);
    const std::size_t plane = x.plane();
    const double count = static_cast<double>(x.n) * plane;
    for (int c = 0; c < channels_; ++c) {
        const Real m = mean_[c];
        const Real inv = inv_std_[c];
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int i = 0; i < x.n; ++i) {
            const Real* p = x.item(i) + c * plane;
            const Real* g = dy.item(i) + c * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                sum_dy += g[k];
                sum_dy_xhat += g[k] * (p[k] - m) * inv;
            }
        }
        gamma_.grad[c] += static_cast<Real>(sum_dy_xhat);
        beta_.grad[c] += static_cast<Real>(sum_dy);
        if (!this->need_input_grad) {
            continue;
        }
        const Real gi = gamma_.value[c] * inv;
        const Real mean_dy = static_cast<Real>(sum_dy / count);
        const Real mean_dy_xhat = static_cast<Real>(sum_dy_xhat / count);
        for (int i = 0; i < x.n; ++i) {
            const Real* p = x.item(i) + c * plane;
            const Real* g = dy.item(i) + c * plane;
            Real* d = dx.item(i) + c * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                if (info.train) {
                    const Real xhat = (p[k] - m) * inv;
                    d[k] = gi * (g[k] - mean_dy - xhat * mean_dy_xhat);
                } else {
                    d[k] = gi * g[k];
                }
            }
        }
    }
    return dx;
}

// ---- Lif ----

void LifParams::validate() const {
    if (!(tau > 1.0)) {
        throw DomainError("lif: tau must be > 1");
    }
    if (!(v_threshold > v_reset)) {
        throw DomainError("lif: v_threshold must exceed v_reset");
    }
    if (!(surrogate_alpha > 0.0)) {
        throw DomainError("lif: surrogate alpha must be positive");
    }
}

template <class Real>
Tensor<Real> Lif<Real>::forward(const Tensor<Real>& x, const StepInfo& info) {
    if (x.n != info.steps * info.batch) {
        throw DomainError("lif: item count is not steps * batch");
    }
    Tensor<Real> y(x.n, x.c, x.h, x.w);
    const std::size_t step = static_cast<std::size_t>(info.batch) * x.item_size();
    std::vector<Real> v(step, static_cast<Real>(params_.v_reset));
    const Real inv_tau = Real(1) / static_cast<Real>(params_.tau);
    const auto vth = static_cast<Real>(params_.v_threshold);
    const auto vr = static_cast<Real>(params_.v_reset);
    const auto alpha = static_cast<Real>(params_.surrogate_alpha);
    if (info.train) {
        charged_.resize(x.size());
    }
    for (int t = 0; t < info.steps; ++t) {
        const Real* in = x.data.data() + t * step;
        Real* out = y.data.data() + t * step;
        Real* hs = info.train ? charged_.data() + t * step : nullptr;
        for (std::size_t i = 0; i < step; ++i) {
            const Real h = v[i] + (in[i] - (v[i] - vr)) * inv_tau;
            const Real s = params_.soft ? soft_spike(h - vth, alpha) : (h >= vth ? Real(1) : Real(0));
            out[i] = s;
            v[i] = h * (Real(1) - s) + vr * s;
            if (hs != nullptr) {
                hs[i] = h;
            }
        }
    }
    return y;
}

template <class Real>
Tensor<Real> Lif<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                                 const StepInfo& info) {
    if (charged_.size() != x.size()) {
        throw DomainError("lif: backward without a training forward pass");
    }
    Tensor<Real> dx(x.n, x.c, x.h, x.w);
    const std::size_t step = static_cast<std::size_t>(info.batch) * x.item_size();
    std::vector<Real> gv(step, Real(0));
    const Real inv_tau = Real(1) / static_cast<Real>(params_.tau);
    const auto vth = static_cast<Real>(params_.v_threshold);
    const auto vr = static_cast<Real>(params_.v_reset);
    const auto alpha = static_cast<Real>(params_.surrogate_alpha);
    for (int t = info.steps - 1; t >= 0; --t) {
        const Real* hs = charged_.data() + t * step;
        const Real* ss = y.data.data() + t * step;
        const Real* g = dy.data.data() + t * step;
        Real* d = dx.data.data() + t * step;
        for (std::size_t i = 0; i < step; ++i) {
            const Real h = hs[i];
            const Real s = ss[i];
            const Real sg = surrogate_derivative(h - vth, alpha);
            const Real dh = g[i] * sg + gv[i] * ((Real(1) - s) + (vr - h) * sg);
            d[i] = dh * inv_tau;
            gv[i] = dh * (Real(1) - inv_tau);
        }
    }
    return dx;
}

// ---- AvgPool2 ----

template <class Real>
Tensor<Real> AvgPool2<Real>::forward(const Tensor<Real>& x, const StepInfo& /*info*/) {
    const int oh = x.h / 2;
    const int ow = x.w / 2;
    if (oh < 1 || ow < 1) {
        throw DomainError("pool: input too small " + x.shape_string());
    }
    Tensor<Real> y(x.n, x.c, oh, ow);
    const std::size_t planes = static_cast<std::size_t>(x.n) * x.c;
    for (std::size_t p = 0; p < planes; ++p) {
        const Real* src = x.data.data() + p * x.plane();
        Real* dst = y.data.data() + p * y.plane();
        for (int oy = 0; oy < oh; ++oy) {
            const Real* r0 = src + static_cast<std::size_t>(2 * oy) * x.w;
            const Real* r1 = r0 + x.w;
            for (int ox = 0; ox < ow; ++ox) {
                dst[oy * ow + ox] = Real(0.25) * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
            }
        }
    }
    return y;
}

template <class Real>
Tensor<Real> AvgPool2<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                                      const StepInfo& /*info*/) {
    Tensor<Real> dx(x.n, x.c, x.h, x.w);
    const std::size_t planes = static_cast<std::size_t>(x.n) * x.c;
    for (std::size_t p = 0; p < planes; ++p) {
        const Real* g = dy.data.data() + p * y.plane();
        Real* dst = dx.data.data() + p * x.plane();
        for (int oy = 0; oy < y.h; ++oy) {
            Real* r0 = dst + static_cast<std::size_t>(2 * oy) * x.w;
            Real* r1 = r0 + x.w;
            for (int ox = 0; ox < y.w; ++ox) {
                const Real v = Real(0.25) * g[oy * y.w + ox];
                r0[2 * ox] = v;
                r0[2 * ox + 1] = v;
                r1[2 * ox] = v;
                r1[2 * ox + 1] = v;
            }
        }
    }
    return dx;
}

// ---- Linear ----

template <class Real>
Linear<Real>::Linear(const std::string& name, int in_features, int out_features, bool bias, Rng& rng)
    : in_(in_features),
      out_(out_features),
      has_bias_(bias),
      weight_(name + ".weight", {out_features, in_features}),
      bias_(name + ".bias", {out_features}) {
    if (in_features < 1 || out_features < 1) {
        throw DomainError("linear: bad geometry");
    }
    uniform_fill(weight_.value, 1.0 / std::sqrt(static_cast<double>(in_features)), rng);
}

template <class Real>
void Linear<Real>::collect(std::vector<Param<Real>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) {
        out.push_back(&bias_);
    }
}

template <class Real>
Tensor<Real> Linear<Real>::forward(const Tensor<Real>& x, const StepInfo& /*info*/) {
    if (static_cast<int>(x.item_size()) != in_) {
        throw DomainError("linear: expected " + std::to_string(in_) + " features, got " + x.shape_string());
    }
    Tensor<Real> y(x.n, out_, 1, 1);
    ConstMapMat<Real> X(x.data.data(), x.n, in_);
    ConstMapMat<Real> W(weight_.value.data(), out_, in_);
    MapMat<Real> Y(y.data.data(), x.n, out_);
    Y.noalias() = X * W.transpose();
    for (int i = 0; i < x.n && has_bias_; ++i) {
        for (int o = 0; o < out_; ++o) {
            Y(i, o) += bias_.value[o];
        }
    }
    return y;
}

template <class Real>
Tensor<Real> Linear<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& /*y*/, const Tensor<Real>& dy,
                                    const StepInfo& /*info*/) {
    ConstMapMat<Real> X(x.data.data(), x.n, in_);
    ConstMapMat<Real> W(weight_.value.data(), out_, in_);
    ConstMapMat<Real> G(dy.data.data(), x.n, out_);
    MapMat<Real> dW(weight_.grad.data(), out_, in_);
    dW.noalias() += G.transpose() * X;
    for (int i = 0; i < x.n && has_bias_; ++i) {
        for (int o = 0; o < out_; ++o) {
            bias_.grad[o] += G(i, o);
        }
    }
    Tensor<Real> dx;
    if (this->need_input_grad) {
        dx = Tensor<Real>(x.n, x.c, x.h, x.w);
        MapMat<Real> dX(dx.data.data(), x.n, in_);
        dX.noalias() = G * W;
    }
    return dx;
}

// ---- Relu ----

template <class Real>
Tensor<Real> Relu<Real>::forward(const Tensor<Real>& x, const StepInfo& /*info*/) {
    Tensor<Real> y = x;
    for (Real& v : y.data) {
        v = std::max(v, Real(0));
    }
    return y;
}

template <class Real>
Tensor<Real> Relu<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& /*y*/, const Tensor<Real>& dy,
                                  const StepInfo& /*info*/) {
    Tensor<Real> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x.data[i] <= Real(0)) {
            dx.data[i] = Real(0);
        }
    }
    return dx;
}

// ---- ConvTranspose2 ----

template <class Real>
ConvTranspose2<Real>::ConvTranspose2(const std::string& name, int in_channels, int out_channels, Rng& rng)
    : in_c_(in_channels),
      out_c_(out_channels),
      weight_(name + ".weight", {in_channels, out_channels, 2, 2}),
      bias_(name + ".bias", {out_channels}) {
    if (in_channels < 1 || out_channels < 1) {
        throw DomainError("convT: bad geometry");
    }
    uniform_fill(weight_.value, 1.0 / std::sqrt(static_cast<double>(in_channels)), rng);
}

template <class Real>
void ConvTranspose2<Real>::collect(std::vector<Param<Real>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

template <class Real>
Tensor<Real> ConvTranspose2<Real>::forward(const Tensor<Real>& x, const StepInfo& /*info*/) {
    if (x.c != in_c_) {
        throw DomainError("convT: channel mismatch " + x.shape_string());
    }
    Tensor<Real> y(x.n, out_c_, 2 * x.h, 2 * x.w);
    const std::size_t pix = x.plane();
    ConstMapMat<Real> W(weight_.value.data(), in_c_, out_c_ * 4);
    RowMat<Real> out;
    for (int i = 0; i < x.n; ++i) {
        ConstMapMat<Real> X(x.item(i), in_c_, static_cast<Eigen::Index>(pix));
        out.noalias() = W.transpose() * X;
        Real* dst = y.item(i);
        for (int o = 0; o < out_c_; ++o) {
            for (int k = 0; k < 4; ++k) {
                const int ky = k / 2;
                const int kx = k % 2;
                const Real* src = out.data() + static_cast<std::size_t>(o * 4 + k) * pix;
                for (int yy = 0; yy < x.h; ++yy) {
                    for (int xx = 0; xx < x.w; ++xx) {
                        dst[(static_cast<std::size_t>(o) * y.h + 2 * yy + ky) * y.w + 2 * xx + kx] =
                            src[yy * x.w + xx] + bias_.value[o];
                    }
                }
            }
        }
    }
    return y;
}

template <class Real>
Tensor<Real> ConvTranspose2<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& y, const Tensor<Real>& dy,
                                            const StepInfo& /*info*/) {
    const std::size_t pix = x.plane();
    ConstMapMat<Real> W(weight_.value.data(), in_c_, out_c_ * 4);
    MapMat<Real> dW(weight_.grad.data(), in_c_, out_c_ * 4);
    RowMat<Real> g(out_c_ * 4, static_cast<Eigen::Index>(pix));
    Tensor<Real> dx;
    if (this->need_input_grad) {
        dx = Tensor<Real>(x.n, x.c, x.h, x.w);
    }
    for (int i = 0; i < x.n; ++i) {
        const Real* src = dy.item(i);
        for (int o = 0; o < out_c_; ++o) {
            for (int k = 0; k < 4; ++k) {
                const int ky = k / 2;
                const int kx = k % 2;
                Real* row = g.data() + static_cast<std::size_t>(o * 4 + k) * pix;
                for (int yy = 0; yy < x.h; ++yy) {
                    for (int xx = 0; xx < x.w; ++xx) {
                        const Real v = src[(static_cast<std::size_t>(o) * y.h + 2 * yy + ky) * y.w + 2 * xx + kx];
                        row[yy * x.w + xx] = v;
                        bias_.grad[o] += v;
                    }
                }
            }
        }
        ConstMapMat<Real> X(x.item(i), in_c_, static_cast<Eigen::Index>(pix));
        dW.noalias() += X * g.transpose();
        if (this->need_input_grad) {
            MapMat<Real> dX(dx.item(i), in_c_, static_cast<Eigen::Index>(pix));
            dX.noalias() = W * g;
        }
    }
    return dx;
}

// ---- Upsample ----

namespace {

struct Taps {
    std::vector<int> i0, i1;
    std::vector<double> w1;
};

// Half-pixel-center source positions, clamped at the borders.
Taps bilinear_taps(int in, int out) {
    Taps t;
    t.i0.resize(out);
    t.i1.resize(out);
    t.w1.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        const double src = std::max(0.0, (o + 0.5) * scale - 0.5);
        const int i0 = std::min(static_cast<int>(src), in - 1);
        t.i0[o] = i0;
        t.i1[o] = std::min(i0 + 1, in - 1);
        t.w1[o] = src - i0;
    }
    return t;
}

}  // namespace

template <class Real>
Tensor<Real> Upsample<Real>::forward(const Tensor<Real>& x, const StepInfo& /*info*/) {
    Tensor<Real> y(x.n, x.c, out_h_, out_w_);
    const Taps ty = bilinear_taps(x.h, out_h_);
    const Taps tx = bilinear_taps(x.w, out_w_);
    const std::size_t planes = static_cast<std::size_t>(x.n) * x.c;
    for (std::size_t p = 0; p < planes; ++p) {
        const Real* src = x.data.data() + p * x.plane();
        Real* dst = y.data.data() + p * y.plane();
        for (int oy = 0; oy < out_h_; ++oy) {
            const auto wy = static_cast<Real>(ty.w1[oy]);
            const Real* r0 = src + static_cast<std::size_t>(ty.i0[oy]) * x.w;
            const Real* r1 = src + static_cast<std::size_t>(ty.i1[oy]) * x.w;
            for (int ox = 0; ox < out_w_; ++ox) {
                const auto wx = static_cast<Real>(tx.w1[ox]);
                const Real top = r0[tx.i0[ox]] * (Real(1) - wx) + r0[tx.i1[ox]] * wx;
                const Real bot = r1[tx.i0[ox]] * (Real(1) - wx) + r1[tx.i1[ox]] * wx;
                dst[static_cast<std::size_t>(oy) * out_w_ + ox] = top * (Real(1) - wy) + bot * wy;
            }
        }
    }
    return y;
}

template <class Real>
Tensor<Real> Upsample<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& /*y*/, const Tensor<Real>& dy,
                                      const StepInfo& /*info*/) {
    Tensor<Real> dx(x.n, x.c, x.h, x.w);
    const Taps ty = bilinear_taps(x.h, out_h_);
    const Taps tx = bilinear_taps(x.w, out_w_);
    const std::size_t planes = static_cast<std::size_t>(x.n) * x.c;
    const std::size_t out_plane = static_cast<std::size_t>(out_h_) * out_w_;
    for (std::size_t p = 0; p < planes; ++p) {
        const Real* g = dy.data.data() + p * out_plane;
        Real* dst = dx.data.data() + p * x.plane();
        for (int oy = 0; oy < out_h_; ++oy) {
            const auto wy = static_cast<Real>(ty.w1[oy]);
            Real* r0 = dst + static_cast<std::size_t>(ty.i0[oy]) * x.w;
            Real* r1 = dst + static_cast<std::size_t>(ty.i1[oy]) * x.w;
            for (int ox = 0; ox < out_w_; ++ox) {
                const auto wx = static_cast<Real>(tx.w1[ox]);
                const Real v = g[static_cast<std::size_t>(oy) * out_w_ + ox];
                r0[tx.i0[ox]] += v * (Real(1) - wy) * (Real(1) - wx);
                r0[tx.i1[ox]] += v * (Real(1) - wy) * wx;
                r1[tx.i0[ox]] += v * wy * (Real(1) - wx);
                r1[tx.i1[ox]] += v * wy * wx;
            }
        }
    }
    return dx;
}

// ---- StackSteps ----

template <class Real>
Tensor<Real> StackSteps<Real>::forward(const Tensor<Real>& x, const StepInfo& info) {
    if (x.n != info.steps * info.batch) {
        throw DomainError("stack: item count is not steps * batch");
    }
    Tensor<Real> y(info.batch, info.steps * x.c, x.h, x.w);
    const std::size_t item = x.item_size();
    for (int t = 0; t < info.steps; ++t) {
        for (int b = 0; b < info.batch; ++b) {
            const Real* src = x.item(t * info.batch + b);
            std::copy(src, src + item, y.item(b) + t * item);
        }
    }
    return y;
}

template <class Real>
Tensor<Real> StackSteps<Real>::backward(const Tensor<Real>& x, const Tensor<Real>& /*y*/, const Tensor<Real>& dy,
                                        const StepInfo& info) {
    Tensor<Real> dx(x.n, x.c, x.h, x.w);
    const std::size_t item = x.item_size();
    for (int t = 0; t < info.steps; ++t) {
        for (int b = 0; b < info.batch; ++b) {
            const Real* src = dy.item(b) + t * item;
            std::copy(src, src + item, dx.item(t * info.batch + b));
        }
    }
    return dx;
}

// ---- Sequential ----

template <class Real>
Tensor<Real> Sequential<Real>::forward(const Tensor<Real>& x, const StepInfo& info, bool keep) {
    acts_.clear();
    if (keep) {
        acts_.reserve(layers_.size() + 1);
        acts_.push_back(x);
        for (auto& layer : layers_) {
            acts_.push_back(layer->forward(acts_.back(), info));
        }
        return acts_.back();
    }
    Tensor<Real> cur = x;
    for (auto& layer : layers_) {
        cur = layer->forward(cur, info);
    }
    return cur;
}

template <class Real>
Tensor<Real> Sequential<Real>::backward(const Tensor<Real>& dy, const StepInfo& info) {
    if (acts_.size() != layers_.size() + 1) {
        throw DomainError("sequential: backward without a kept forward pass");
    }
    Tensor<Real> grad = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        grad = layers_[i]->backward(acts_[i], acts_[i + 1], grad, info);
        // Activations are no longer needed once their layer has run backward.
        acts_[i + 1] = Tensor<Real>();
        if (i > 0 && grad.size() == 0) {
            throw DomainError("sequential: interior layer returned no input gradient");
        }
    }
    acts_.clear();
    return grad;
}

template <class Real>
void Sequential<Real>::collect(std::vector<Param<Real>*>& out) {
    for (auto& layer : layers_) {
        layer->collect(out);
    }
}

#define MSX_INSTANTIATE(T)             \
    template class Conv2d<T>;          \
    template class BatchNorm<T>;       \
    template class Lif<T>;             \
    template class AvgPool2<T>;        \
    template class Linear<T>;          \
    template class Relu<T>;            \
    template class ConvTranspose2<T>;  \
    template class Upsample<T>;        \
    template class StackSteps<T>;      \
    template class Sequential<T>;

MSX_INSTANTIATE(float)
MSX_INSTANTIATE(double)

#undef MSX_INSTANTIATE

}  // namespace msx::snn
