#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msx/flow.hpp"
#include "msx/snn/layers.hpp"
#include "msx/voxel.hpp"

namespace msx::snn {

inline constexpr int kPoolMarker = 0;

struct ModelConfig {
    std::string preset = "vgg16s-flow";
    int steps = kDefaultBins;  // T
    int height = 75;
    int width = 110;
    int num_classes = 7;
    bool flow_head = true;
    double lambda = kDefaultFlowLambda;
    // Conv widths in order; kPoolMarker inserts a 2x2 average pool.
    std::vector<int> blocks;
    int stem_stride = 2;  // stride of the first convolution
    int hidden = 128;     // classifier hidden width
    int flow_channels = 32;
    LifParams lif;

    // vgg11s, vgg13s, vgg16s, vgg16s-flow; scaled-width VGG patterns.
    static ModelConfig from_preset(const std::string& name, int steps = kDefaultBins, int height = 75, int width = 110);

    void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Backbone of spiking conv blocks (conv, BN, LIF), a spiking classifier whose
// real-valued readout is averaged over steps, and an optional real-valued flow head
// over the step-stacked final spikes.
template <class Real>
class SpikingVgg {
public:
    struct Output {
        Tensor<Real> logits;  // [batch, classes, 1, 1]
        Tensor<Real> flow;    // [batch, 2 (T-1), H, W]; empty when not requested
    };

    SpikingVgg(const ModelConfig& config, std::uint64_t seed);

    // input: [T * batch, 2, H, W], time-major.
    Output forward(const Tensor<Real>& input, int batch, bool train, bool with_flow);
    // After a training forward. dflow may be null (classification-only step).
    void backward(const Tensor<Real>& dlogits, const Tensor<Real>* dflow);

    std::vector<Param<Real>*> parameters();
    std::size_t trainable_count();
    void zero_grad();
    const ModelConfig& config() const { return config_; }

private:
    ModelConfig config_;
    Sequential<Real> backbone_;
    Sequential<Real> classifier_;
    Sequential<Real> flow_head_;
    StepInfo info_;
    bool kept_flow_ = false;
};

// [T * batch, 2, H, W] from per-sample voxel grids.
template <class Real>
Tensor<Real> pack_grids(std::span<const VoxelGrid* const> grids);

// [batch, 2 (T-1), H, W]; channel 2f holds u of field f, 2f+1 holds v.
template <class Real>
Tensor<Real> pack_flows(std::span<const std::vector<FlowField>* const> flows);

struct LossValues {
    double total = 0.0;
    double classification = 0.0;
    double flow = 0.0;
    int correct = 0;
};

// Mean cross-entropy over the batch plus lambda times the mean squared flow error.
// Gradients are written when the output pointers are non-null.
template <class Real>
LossValues compute_loss(const Tensor<Real>& logits, std::span<const int> labels, const Tensor<Real>* flow_pred,
                        const Tensor<Real>* flow_target, double lambda, Tensor<Real>* dlogits, Tensor<Real>* dflow);

template <class Real>
std::vector<double> softmax(const Tensor<Real>& logits, int item);

}  // namespace msx::snn
