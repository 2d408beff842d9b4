#pragma once

#include <vector>

#include "msx/snn/tensor.hpp"

namespace msx::snn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  // L2, added to the gradient
};

template <class Real>
class Adam {
public:
    Adam(std::vector<Param<Real>*> params, const AdamConfig& config);
    void step(double lr);
    long steps() const { return t_; }

private:
    std::vector<Param<Real>*> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// Linear batch scaling of the base rate against a reference batch of 64.
double scaled_lr(double base_lr, int batch_size, int reference_batch = 64);

// Cosine annealing restarted every segment_epochs: full rate at each segment start.
double cosine_lr(int epoch, double initial_lr, int segment_epochs);

}  // namespace msx::snn
