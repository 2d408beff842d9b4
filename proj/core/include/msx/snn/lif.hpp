#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

namespace msx::snn {

struct LifParams {
    double tau = 2.0;
    double v_threshold = 1.0;
    double v_reset = 0.0;
    double surrogate_alpha = 2.0;
    // Forward pass uses the smooth arctan primitive instead of the step. Only for
    // gradient checking.
    bool soft = false;

    void validate() const;
};

// Derivative of the arctan-smoothed step, peak alpha / 2 at u = 0, unit area.
template <class Real>
inline Real surrogate_derivative(Real u, Real alpha) {
    const Real z = Real(std::numbers::pi / 2.0) * alpha * u;
    return alpha / (Real(2) * (Real(1) + z * z));
}

// Primitive of surrogate_derivative: atan(pi/2 alpha u) / pi + 1/2.
template <class Real>
inline Real soft_spike(Real u, Real alpha) {
    return std::atan(Real(std::numbers::pi / 2.0) * alpha * u) / Real(std::numbers::pi) + Real(0.5);
}

// One LIF update in place: charge v += (input - (v - v_reset)) / tau, fire where
// v >= v_threshold, hard reset of firing units.
template <class Real>
void lif_step(std::span<Real> v, std::span<const Real> input, std::span<Real> spikes, const LifParams& p) {
    const Real inv_tau = Real(1) / static_cast<Real>(p.tau);
    const auto vth = static_cast<Real>(p.v_threshold);
    const auto vr = static_cast<Real>(p.v_reset);
    const auto alpha = static_cast<Real>(p.surrogate_alpha);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Real h = v[i] + (input[i] - (v[i] - vr)) * inv_tau;
        const Real s = p.soft ? soft_spike(h - vth, alpha) : (h >= vth ? Real(1) : Real(0));
        spikes[i] = s;
        v[i] = h * (Real(1) - s) + vr * s;
    }
}

}  // namespace msx::snn
