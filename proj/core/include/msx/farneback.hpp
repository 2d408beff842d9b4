#pragma once

#include <vector>

#include "msx/voxel.hpp"

namespace msx {

// Dense displacement field: frame_b(x + u, y + v) ~ frame_a(x, y).
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u;
    std::vector<float> v;

    FlowField() = default;
    FlowField(int w, int h)
        : width(w), height(h), u(static_cast<std::size_t>(w) * h, 0.0F), v(static_cast<std::size_t>(w) * h, 0.0F) {}

    std::size_t size() const { return u.size(); }
};

struct FarnebackParams {
    int window_size = 9;   // Gaussian averaging of the displacement equations
    int poly_n = 5;        // half-width of the polynomial expansion neighborhood
    double poly_sigma = 1.1;
    int iterations = 3;    // per pyramid level
    int pyramid_levels = 2;  // including the full-resolution level
    double pyramid_scale = 0.5;

    void validate() const;
};

// Farneback two-frame motion estimation: quadratic polynomial expansion of each
// neighborhood, displacement from the change in the linear coefficients, refined
// coarse-to-fine with warping.
FlowField farneback(const Plane& frame_a, const Plane& frame_b, const FarnebackParams& params = {});

namespace detail {

// Per-pixel expansion f(x, y) ~ c + b1 x + b2 y + a11 x^2 + a22 y^2 + a12 x y.
struct PolyExpansion {
    Plane b1, b2, a11, a22, a12;
};

PolyExpansion poly_expand(const Plane& frame, int poly_n, double poly_sigma);

}  // namespace detail

}  // namespace msx
