#include "msx/farneback.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "msx/errors.hpp"

namespace msx {

namespace {

// Regularizes det(G) for frames of unit scale; equivalent to the customary 1e-3 at 8-bit
// intensity scale (1e-3 / 255^4).
constexpr double kDetEpsilon = 2.4e-13;

std::vector<float> gaussian_kernel(int half, double sigma) {
    std::vector<float> k(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
        k[i + half] = static_cast<float>(w);
        sum += w;
    }
    for (float& w : k) {
        w = static_cast<float>(w / sum);
    }
    return k;
}

// Correlation along x with clamped borders.
Plane filter_rows(const Plane& src, const std::vector<float>& kernel) {
    const int half = static_cast<int>(kernel.size() / 2);
    Plane dst(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        const float* row = &src.data[static_cast<std::size_t>(y) * src.width];
        float* out = &dst.data[static_cast<std::size_t>(y) * src.width];
        for (int x = 0; x < src.width; ++x) {
            float acc = 0.0F;
            for (int k = -half; k <= half; ++k) {
                const int xx = std::clamp(x + k, 0, src.width - 1);
                acc += kernel[k + half] * row[xx];
            }
            out[x] = acc;
        }
    }
    return dst;
}

// Correlation along y with clamped borders.
Plane filter_cols(const Plane& src, const std::vector<float>& kernel) {
    const int half = static_cast<int>(kernel.size() / 2);
    Plane dst(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        float* out = &dst.data[static_cast<std::size_t>(y) * src.width];
        for (int k = -half; k <= half; ++k) {
            const int yy = std::clamp(y + k, 0, src.height - 1);
            const float w = kernel[k + half];
            const float* row = &src.data[static_cast<std::size_t>(yy) * src.width];
            for (int x = 0; x < src.width; ++x) {
                out[x] += w * row[x];
            }
        }
    }
    return dst;
}

Plane gaussian_blur(const Plane& src, int half, double sigma) {
    const auto k = gaussian_kernel(half, sigma);
    return filter_cols(filter_rows(src, k), k);
}

Plane gaussian_blur(const Plane& src, double sigma) {
    return gaussian_blur(src, std::max(1, static_cast<int>(std::ceil(3.0 * sigma))), sigma);
}

float sample_bilinear(const Plane& p, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(p.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(p.height - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, p.width - 1);
    const int y1 = std::min(y0 + 1, p.height - 1);
    const float fx = static_cast<float>(x - x0);
    const float fy = static_cast<float>(y - y0);
    const float top = p.at(x0, y0) + fx * (p.at(x1, y0) - p.at(x0, y0));
    const float bottom = p.at(x0, y1) + fx * (p.at(x1, y1) - p.at(x0, y1));
    return top + fy * (bottom - top);
}

// Bilinear resize using pixel-center alignment.
Plane resize(const Plane& src, int w, int h) {
    Plane dst(w, h);
    const double sx = static_cast<double>(src.width) / w;
    const double sy = static_cast<double>(src.height) / h;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            dst.at(x, y) = sample_bilinear(src, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
        }
    }
    return dst;
}

// Displacement equations A d = delta_b, accumulated as normal equations.
struct NormalEquations {
    Plane g11, g12, g22, h1, h2;
};

NormalEquations update_matrices(const detail::PolyExpansion& r0, const detail::PolyExpansion& r1,
                                const FlowField& flow) {
    const int w = flow.width;
    const int h = flow.height;
    NormalEquations eq{Plane(w, h), Plane(w, h), Plane(w, h), Plane(w, h), Plane(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double dx = flow.u[i];
            const double dy = flow.v[i];
            const double px = x + dx;
            const double py = y + dy;

            const double b1a = r0.b1.data[i];
            const double b2a = r0.b2.data[i];
            const double b1b = sample_bilinear(r1.b1, px, py);
            const double b2b = sample_bilinear(r1.b2, px, py);
            const double a11 = 0.5 * (r0.a11.data[i] + sample_bilinear(r1.a11, px, py));
            const double a22 = 0.5 * (r0.a22.data[i] + sample_bilinear(r1.a22, px, py));
            const double a12 = 0.25 * (r0.a12.data[i] + sample_bilinear(r1.a12, px, py));

            // delta_b = -(b_next - b_prev) / 2 + A d_prior
            const double db1 = -0.5 * (b1b - b1a) + a11 * dx + a12 * dy;
            const double db2 = -0.5 * (b2b - b2a) + a12 * dx + a22 * dy;

            eq.g11.data[i] = static_cast<float>(a11 * a11 + a12 * a12);
            eq.g12.data[i] = static_cast<float>(a12 * (a11 + a22));
            eq.g22.data[i] = static_cast<float>(a22 * a22 + a12 * a12);
            eq.h1.data[i] = static_cast<float>(a11 * db1 + a12 * db2);
            eq.h2.data[i] = static_cast<float>(a12 * db1 + a22 * db2);
        }
    }
    return eq;
}

void solve_flow(const NormalEquations& eq, FlowField& flow) {
    for (std::size_t i = 0; i < flow.size(); ++i) {
        const double g11 = eq.g11.data[i];
        const double g12 = eq.g12.data[i];
        const double g22 = eq.g22.data[i];
        const double h1 = eq.h1.data[i];
        const double h2 = eq.h2.data[i];
        const double idet = 1.0 / (g11 * g22 - g12 * g12 + kDetEpsilon);
        flow.u[i] = static_cast<float>((g22 * h1 - g12 * h2) * idet);
        flow.v[i] = static_cast<float>((g11 * h2 - g12 * h1) * idet);
    }
}

}  // namespace

void FarnebackParams::validate() const {
    if (window_size < 1 || poly_n < 1 || !(poly_sigma > 0.0) || iterations < 1 || pyramid_levels < 1 ||
        !(pyramid_scale > 0.0 && pyramid_scale < 1.0)) {
        throw DomainError("farneback: invalid parameters");
    }
}

namespace detail {

PolyExpansion poly_expand(const Plane& frame, int poly_n, double poly_sigma) {
    const int n = poly_n;
    const std::size_t taps = 2 * n + 1;
    std::vector<float> g(taps), xg(taps), xxg(taps);
    std::vector<double> gd(taps);
    double sum = 0.0;
    for (int i = -n; i <= n; ++i) {
        gd[i + n] = std::exp(-(i * i) / (2.0 * poly_sigma * poly_sigma));
        sum += gd[i + n];
    }
    for (int i = -n; i <= n; ++i) {
        gd[i + n] /= sum;
        g[i + n] = static_cast<float>(gd[i + n]);
        xg[i + n] = static_cast<float>(i * gd[i + n]);
        xxg[i + n] = static_cast<float>(i * i * gd[i + n]);
    }

    // Gram matrix of the basis {1, x, y, x^2, y^2, xy} under the applicability g(x)g(y).
    Eigen::Matrix<double, 6, 6> gram = Eigen::Matrix<double, 6, 6>::Zero();
    for (int y = -n; y <= n; ++y) {
        for (int x = -n; x <= n; ++x) {
            const double w = gd[x + n] * gd[y + n];
            Eigen::Matrix<double, 6, 1> b;
            b << 1.0, x, y, static_cast<double>(x) * x, static_cast<double>(y) * y, static_cast<double>(x) * y;
            gram += w * b * b.transpose();
        }
    }
    const Eigen::Matrix<double, 6, 6> inv = gram.inverse();

    const Plane r_g = filter_rows(frame, g);
    const Plane r_xg = filter_rows(frame, xg);
    const Plane r_xxg = filter_rows(frame, xxg);
    const Plane m_1 = filter_cols(r_g, g);
    const Plane m_x = filter_cols(r_xg, g);
    const Plane m_y = filter_cols(r_g, xg);
    const Plane m_xx = filter_cols(r_xxg, g);
    const Plane m_yy = filter_cols(r_g, xxg);
    const Plane m_xy = filter_cols(r_xg, xg);

    const int w = frame.width;
    const int h = frame.height;
    PolyExpansion out{Plane(w, h), Plane(w, h), Plane(w, h), Plane(w, h), Plane(w, h)};
    for (std::size_t i = 0; i < frame.data.size(); ++i) {
        Eigen::Matrix<double, 6, 1> m;
        m << m_1.data[i], m_x.data[i], m_y.data[i], m_xx.data[i], m_yy.data[i], m_xy.data[i];
        const Eigen::Matrix<double, 6, 1> r = inv * m;
        out.b1.data[i] = static_cast<float>(r[1]);
        out.b2.data[i] = static_cast<float>(r[2]);
        out.a11.data[i] = static_cast<float>(r[3]);
        out.a22.data[i] = static_cast<float>(r[4]);
        out.a12.data[i] = static_cast<float>(r[5]);
    }
    return out;
}

}  // namespace detail

FlowField farneback(const Plane& frame_a, const Plane& frame_b, const FarnebackParams& params) {
    params.validate();
    if (frame_a.width != frame_b.width || frame_a.height != frame_b.height) {
        throw DomainError("farneback: frames differ in size");
    }
    if (frame_a.width < params.poly_n || frame_a.height < params.poly_n) {
        throw DomainError("farneback: frame smaller than poly_n");
    }

    // Build the pyramid, stopping before a level gets smaller than poly_n.
    std::vector<std::pair<Plane, Plane>> levels;
    levels.emplace_back(frame_a, frame_b);
    const double smooth_sigma = (1.0 / params.pyramid_scale - 1.0) * 0.5;
    for (int k = 1; k < params.pyramid_levels; ++k) {
        const double s = std::pow(params.pyramid_scale, k);
        const int w = static_cast<int>(std::lround(frame_a.width * s));
        const int h = static_cast<int>(std::lround(frame_a.height * s));
        if (w < params.poly_n || h < params.poly_n) {
            break;
        }
        const auto& prev = levels.back();
        levels.emplace_back(resize(gaussian_blur(prev.first, smooth_sigma), w, h),
                            resize(gaussian_blur(prev.second, smooth_sigma), w, h));
    }

    const int blur_half = std::max(1, params.window_size / 2);
    const double blur_sigma = 0.3 * blur_half;
    FlowField flow;
    for (int k = static_cast<int>(levels.size()) - 1; k >= 0; --k) {
        const Plane& a = levels[k].first;
        const Plane& b = levels[k].second;
        if (flow.width == 0) {
            flow = FlowField(a.width, a.height);
        } else {
            const double sx = static_cast<double>(a.width) / flow.width;
            const double sy = static_cast<double>(a.height) / flow.height;
            Plane u(flow.width, flow.height), v(flow.width, flow.height);
            u.data = flow.u;
            v.data = flow.v;
            const Plane uu = resize(u, a.width, a.height);
            const Plane vv = resize(v, a.width, a.height);
            flow = FlowField(a.width, a.height);
            for (std::size_t i = 0; i < flow.size(); ++i) {
                flow.u[i] = static_cast<float>(uu.data[i] * sx);
                flow.v[i] = static_cast<float>(vv.data[i] * sy);
            }
        }
        const detail::PolyExpansion r0 = detail::poly_expand(a, params.poly_n, params.poly_sigma);
        const detail::PolyExpansion r1 = detail::poly_expand(b, params.poly_n, params.poly_sigma);
        for (int it = 0; it < params.iterations; ++it) {
            NormalEquations eq = update_matrices(r0, r1, flow);
            eq.g11 = gaussian_blur(eq.g11, blur_half, blur_sigma);
            eq.g12 = gaussian_blur(eq.g12, blur_half, blur_sigma);
            eq.g22 = gaussian_blur(eq.g22, blur_half, blur_sigma);
            eq.h1 = gaussian_blur(eq.h1, blur_half, blur_sigma);
            eq.h2 = gaussian_blur(eq.h2, blur_half, blur_sigma);
            solve_flow(eq, flow);
        }
    }
    return flow;
}

}  // namespace msx
