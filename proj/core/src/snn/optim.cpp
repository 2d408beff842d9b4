#include "msx/snn/optim.hpp"

#include <cmath>
#include <numbers>

#include "msx/errors.hpp"

namespace msx::snn {

template <class Real>
Adam<Real>::Adam(std::vector<Param<Real>*> params, const AdamConfig& config) : config_(config) {
    for (Param<Real>* p : params) {
        if (p->trainable) {
            params_.push_back(p);
            m_.emplace_back(p->value.size(), 0.0);
            v_.emplace_back(p->value.size(), 0.0);
        }
    }
}

template <class Real>
void Adam<Real>::step(double lr) {
    if (!(lr > 0.0)) {
        throw DomainError("adam: learning rate must be positive");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Param<Real>& p = *params_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = static_cast<double>(p.grad[i]) + config_.weight_decay * p.value[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value[i] = static_cast<Real>(p.value[i] - lr * mhat / (std::sqrt(vhat) + config_.eps));
        }
    }
}

template class Adam<float>;
template class Adam<double>;

double scaled_lr(double base_lr, int batch_size, int reference_batch) {
    if (batch_size < 1 || reference_batch < 1 || !(base_lr > 0.0)) {
        throw DomainError("lr: base rate and batch sizes must be positive");
    }
    return base_lr * batch_size / reference_batch;
}

double cosine_lr(int epoch, double initial_lr, int segment_epochs) {
    if (epoch < 0 || segment_epochs < 1) {
        throw DomainError("lr: bad schedule arguments");
    }
    const int k = epoch % segment_epochs;
    return initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * k / segment_epochs));
}

}  // namespace msx::snn
