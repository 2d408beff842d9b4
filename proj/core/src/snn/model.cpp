#include "msx/snn/model.hpp"

#include <algorithm>
#include <cmath>

#include "msx/errors.hpp"

namespace msx::snn {

namespace {

constexpr int P = kPoolMarker;

std::vector<int> preset_blocks(const std::string& name) {
    if (name == "vgg11s") {
        return {16, P, 32, P, 64, 64, P, 64, 64, P, 64, 64};
    }
    if (name == "vgg13s") {
        return {16, 16, P, 32, 32, P, 64, 64, P, 64, 64, P, 64, 64};
    }
    if (name == "vgg16s" || name == "vgg16s-flow") {
        return {16, 16, P, 32, 32, P, 64, 64, 64, P, 64, 64, 64, P, 64, 64, 64};
    }
    throw DomainError("unknown model preset '" + name + "'");
}

bool is_named_preset(const std::string& name) {
    return name == "vgg11s" || name == "vgg13s" || name == "vgg16s" || name == "vgg16s-flow";
}

}  // namespace

ModelConfig ModelConfig::from_preset(const std::string& name, int steps, int height, int width) {
    ModelConfig c;
    c.preset = name;
    c.blocks = preset_blocks(name);
    c.flow_head = name == "vgg16s-flow";
    c.steps = steps;
    c.height = height;
    c.width = width;
    return c;
}

void ModelConfig::validate() const {
    if (num_classes != 7) {
        throw DomainError("model: class count must be 7");
    }
    if (steps < 1 || height < 1 || width < 1) {
        throw DomainError("model: bad input dimensions");
    }
    if (is_named_preset(preset) && flow_head != (preset == "vgg16s-flow")) {
        throw DomainError("model: flow head is enabled exactly for vgg16s-flow");
    }
    if (flow_head && steps < 2) {
        throw DomainError("model: flow head needs at least two steps");
    }
    if (blocks.empty() || blocks.front() == kPoolMarker) {
        throw DomainError("model: backbone must start with a convolution");
    }
    for (int b : blocks) {
        if (b < 0) {
            throw DomainError("model: negative block width");
        }
    }
    if (stem_stride < 1 || hidden < 1 || flow_channels < 1) {
        throw DomainError("model: bad head geometry");
    }
    if (!(lambda >= 0.0)) {
        throw DomainError("model: lambda must be >= 0");
    }
    lif.validate();
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"preset", c.preset},
            {"steps", c.steps},
            {"height", c.height},
            {"width", c.width},
            {"num_classes", c.num_classes},
            {"flow_head", c.flow_head},
            {"lambda", c.lambda},
            {"blocks", c.blocks},
            {"stem_stride", c.stem_stride},
            {"hidden", c.hidden},
            {"flow_channels", c.flow_channels},
            {"lif",
             {{"tau", c.lif.tau},
              {"v_threshold", c.lif.v_threshold},
              {"v_reset", c.lif.v_reset},
              {"surrogate_alpha", c.lif.surrogate_alpha}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    const std::string preset = j.value("preset", c.preset);
    if (is_named_preset(preset)) {
        c = ModelConfig::from_preset(preset);
    }
    c.preset = preset;
    c.steps = j.value("steps", c.steps);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.flow_head = j.value("flow_head", c.flow_head);
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("blocks")) {
        c.blocks = j.at("blocks").get<std::vector<int>>();
    }
    c.stem_stride = j.value("stem_stride", c.stem_stride);
    c.hidden = j.value("hidden", c.hidden);
    c.flow_channels = j.value("flow_channels", c.flow_channels);
    if (j.contains("lif")) {
        const auto& l = j.at("lif");
        c.lif.tau = l.value("tau", c.lif.tau);
        c.lif.v_threshold = l.value("v_threshold", c.lif.v_threshold);
        c.lif.v_reset = l.value("v_reset", c.lif.v_reset);
        c.lif.surrogate_alpha = l.value("surrogate_alpha", c.lif.surrogate_alpha);
    }
    c.validate();
    return c;
}

template <class Real>
SpikingVgg<Real>::SpikingVgg(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    int channels = 2;
    int h = config_.height;
    int w = config_.width;
    int index = 0;
    bool first = true;
    for (int b : config_.blocks) {
        const std::string name = "backbone." + std::to_string(index++);
        if (b == kPoolMarker) {
            backbone_.add(std::make_unique<AvgPool2<Real>>());
            h /= 2;
            w /= 2;
        } else {
            const int stride = first ? config_.stem_stride : 1;
            auto conv = std::make_unique<Conv2d<Real>>(name + ".conv", channels, b, 3, stride, false, rng);
            h = conv->out_size(h);
            w = conv->out_size(w);
            conv->need_input_grad = !first;
            backbone_.add(std::move(conv));
            backbone_.add(std::make_unique<BatchNorm<Real>>(name + ".bn", b));
            backbone_.add(std::make_unique<Lif<Real>>(config_.lif));
            channels = b;
            first = false;
        }
        if (h < 1 || w < 1) {
            throw DomainError("model: input " + std::to_string(config_.height) + "x" + std::to_string(config_.width) +
                              " too small for the backbone");
        }
    }
    const int features = channels * h * w;
    classifier_.add(std::make_unique<Linear<Real>>("classifier.fc1", features, config_.hidden, false, rng));
    classifier_.add(std::make_unique<BatchNorm<Real>>("classifier.bn1", config_.hidden));
    classifier_.add(std::make_unique<Lif<Real>>(config_.lif));
    classifier_.add(std::make_unique<Linear<Real>>("classifier.readout", config_.hidden, config_.num_classes, true, rng));

    if (config_.flow_head) {
        flow_head_.add(std::make_unique<StackSteps<Real>>());
        flow_head_.add(std::make_unique<ConvTranspose2<Real>>("flow.up1", config_.steps * channels,
                                                              config_.flow_channels, rng));
        flow_head_.add(std::make_unique<Relu<Real>>());
        flow_head_.add(
            std::make_unique<ConvTranspose2<Real>>("flow.up2", config_.flow_channels, 2 * (config_.steps - 1), rng));
        flow_head_.add(std::make_unique<Upsample<Real>>(config_.height, config_.width));
    }
}

template <class Real>
typename SpikingVgg<Real>::Output SpikingVgg<Real>::forward(const Tensor<Real>& input, int batch, bool train,
                                                            bool with_flow) {
    if (batch < 1 || input.n != config_.steps * batch || input.c != 2 || input.h != config_.height ||
        input.w != config_.width) {
        throw DomainError("model: input " + input.shape_string() + " does not match T=" + std::to_string(config_.steps) +
                          ", 2x" + std::to_string(config_.height) + "x" + std::to_string(config_.width));
    }
    if (with_flow && !config_.flow_head) {
        throw DomainError("model: no flow head configured");
    }
    info_ = StepInfo{config_.steps, batch, train};
    Tensor<Real> feat = backbone_.forward(input, info_, train);
    const Tensor<Real> readout = classifier_.forward(feat, info_, train);

    Output out;
    out.logits = Tensor<Real>(batch, config_.num_classes, 1, 1);
    const Real inv_steps = Real(1) / static_cast<Real>(config_.steps);
    for (int t = 0; t < config_.steps; ++t) {
        for (int b = 0; b < batch; ++b) {
            const Real* src = readout.item(t * batch + b);
            Real* dst = out.logits.item(b);
            for (int k = 0; k < config_.num_classes; ++k) {
                dst[k] += src[k] * inv_steps;
            }
        }
    }
    kept_flow_ = train && with_flow;
    if (with_flow) {
        out.flow = flow_head_.forward(feat, info_, train);
    }
    return out;
}

template <class Real>
void SpikingVgg<Real>::backward(const Tensor<Real>& dlogits, const Tensor<Real>* dflow) {
    if (!info_.train) {
        throw DomainError("model: backward after an inference forward pass");
    }
    const int batch = info_.batch;
    Tensor<Real> dreadout(config_.steps * batch, config_.num_classes, 1, 1);
    const Real inv_steps = Real(1) / static_cast<Real>(config_.steps);
    for (int t = 0; t < config_.steps; ++t) {
        for (int b = 0; b < batch; ++b) {
            const Real* src = dlogits.item(b);
            Real* dst = dreadout.item(t * batch + b);
            for (int k = 0; k < config_.num_classes; ++k) {
                dst[k] = src[k] * inv_steps;
            }
        }
    }
    Tensor<Real> dfeat = classifier_.backward(dreadout, info_);
    if (dflow != nullptr) {
        if (!kept_flow_) {
            throw DomainError("model: flow gradient without a flow forward pass");
        }
        const Tensor<Real> dfeat_flow = flow_head_.backward(*dflow, info_);
        for (std::size_t i = 0; i < dfeat.size(); ++i) {
            dfeat.data[i] += dfeat_flow.data[i];
        }
    } else if (kept_flow_) {
        flow_head_.release();
    }
    kept_flow_ = false;
    backbone_.backward(dfeat, info_);
    info_.train = false;
}

template <class Real>
std::vector<Param<Real>*> SpikingVgg<Real>::parameters() {
    std::vector<Param<Real>*> out;
    backbone_.collect(out);
    classifier_.collect(out);
    flow_head_.collect(out);
    return out;
}

template <class Real>
std::size_t SpikingVgg<Real>::trainable_count() {
    std::size_t n = 0;
    for (Param<Real>* p : parameters()) {
        if (p->trainable) {
            n += p->value.size();
        }
    }
    return n;
}

template <class Real>
void SpikingVgg<Real>::zero_grad() {
    for (Param<Real>* p : parameters()) {
        p->zero_grad();
    }
}

template <class Real>
Tensor<Real> pack_grids(std::span<const VoxelGrid* const> grids) {
    if (grids.empty()) {
        throw DomainError("pack_grids: empty batch");
    }
    const int steps = grids.front()->bins;
    const int h = grids.front()->height;
    const int w = grids.front()->width;
    const int batch = static_cast<int>(grids.size());
    Tensor<Real> x(steps * batch, 2, h, w);
    const std::size_t item = x.item_size();
    for (int b = 0; b < batch; ++b) {
        const VoxelGrid& g = *grids[b];
        if (g.bins != steps || g.height != h || g.width != w) {
            throw DomainError("pack_grids: grids differ in shape");
        }
        for (int t = 0; t < steps; ++t) {
            const float* src = g.values.data() + t * item;
            std::copy(src, src + item, x.item(t * batch + b));
        }
    }
    return x;
}

template <class Real>
Tensor<Real> pack_flows(std::span<const std::vector<FlowField>* const> flows) {
    if (flows.empty() || flows.front()->empty()) {
        throw DomainError("pack_flows: empty batch");
    }
    const int fields = static_cast<int>(flows.front()->size());
    const int h = flows.front()->front().height;
    const int w = flows.front()->front().width;
    Tensor<Real> y(static_cast<int>(flows.size()), 2 * fields, h, w);
    const std::size_t plane = y.plane();
    for (std::size_t b = 0; b < flows.size(); ++b) {
        if (static_cast<int>(flows[b]->size()) != fields) {
            throw DomainError("pack_flows: field counts differ");
        }
        Real* dst = y.item(static_cast<int>(b));
        for (int f = 0; f < fields; ++f) {
            const FlowField& ff = (*flows[b])[f];
            if (ff.width != w || ff.height != h) {
                throw DomainError("pack_flows: field sizes differ");
            }
            std::copy(ff.u.begin(), ff.u.end(), dst + (2 * f) * plane);
            std::copy(ff.v.begin(), ff.v.end(), dst + (2 * f + 1) * plane);
        }
    }
    return y;
}

template <class Real>
std::vector<double> softmax(const Tensor<Real>& logits, int item) {
    const Real* z = logits.item(item);
    const int k = logits.c;
    const double mx = *std::max_element(z, z + k);
    std::vector<double> p(k);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        p[i] = std::exp(static_cast<double>(z[i]) - mx);
        sum += p[i];
    }
    for (double& v : p) {
        v /= sum;
    }
    return p;
}

template <class Real>
LossValues compute_loss(const Tensor<Real>& logits, std::span<const int> labels, const Tensor<Real>* flow_pred,
                        const Tensor<Real>* flow_target, double lambda, Tensor<Real>* dlogits, Tensor<Real>* dflow) {
    const int batch = logits.n;
    if (static_cast<int>(labels.size()) != batch) {
        throw DomainError("loss: one label per batch item required");
    }
    LossValues out;
    if (dlogits != nullptr) {
        *dlogits = Tensor<Real>(logits.n, logits.c, 1, 1);
    }
    for (int b = 0; b < batch; ++b) {
        const int y = labels[b];
        if (y < 0 || y >= logits.c) {
            throw DomainError("loss: label out of range");
        }
        const std::vector<double> p = softmax(logits, b);
        out.classification -= std::log(std::max(p[y], 1e-300));
        if (std::max_element(p.begin(), p.end()) - p.begin() == y) {
            ++out.correct;
        }
        if (dlogits != nullptr) {
            Real* d = dlogits->item(b);
            for (int k = 0; k < logits.c; ++k) {
                d[k] = static_cast<Real>((p[k] - (k == y ? 1.0 : 0.0)) / batch);
            }
        }
    }
    out.classification /= batch;

    if (flow_pred != nullptr) {
        if (flow_target == nullptr) {
            throw DomainError("loss: flow head enabled but no flow targets given");
        }
        if (!flow_pred->same_shape(*flow_target)) {
            throw DomainError("loss: flow shape " + flow_pred->shape_string() + " vs target " +
                              flow_target->shape_string());
        }
        // Mean over batch, fields and pixels of du^2 + dv^2.
        const double norm = static_cast<double>(flow_pred->n) * (flow_pred->c / 2) * flow_pred->plane();
        double sum = 0.0;
        if (dflow != nullptr) {
            *dflow = Tensor<Real>(flow_pred->n, flow_pred->c, flow_pred->h, flow_pred->w);
        }
        for (std::size_t i = 0; i < flow_pred->size(); ++i) {
            const double d = static_cast<double>(flow_pred->data[i]) - flow_target->data[i];
            sum += d * d;
            if (dflow != nullptr) {
                dflow->data[i] = static_cast<Real>(lambda * 2.0 * d / norm);
            }
        }
        out.flow = sum / norm;
    }
    out.total = total_loss(out.classification, out.flow, lambda);
    return out;
}

#define MSX_INSTANTIATE(T)                                                                                    \
    template class SpikingVgg<T>;                                                                             \
    template Tensor<T> pack_grids<T>(std::span<const VoxelGrid* const>);                                      \
    template Tensor<T> pack_flows<T>(std::span<const std::vector<FlowField>* const>);                         \
    template std::vector<double> softmax<T>(const Tensor<T>&, int);                                           \
    template LossValues compute_loss<T>(const Tensor<T>&, std::span<const int>, const Tensor<T>*, const Tensor<T>*, \
                                        double, Tensor<T>*, Tensor<T>*);

MSX_INSTANTIATE(float)
MSX_INSTANTIATE(double)

#undef MSX_INSTANTIATE

}  // namespace msx::snn
