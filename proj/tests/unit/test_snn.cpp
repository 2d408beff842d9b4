#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>

#include <nlohmann/json.hpp>

#include "msx/dataset.hpp"
#include "msx/errors.hpp"
#include "msx/snn/checkpoint.hpp"
#include "msx/snn/layers.hpp"
#include "msx/snn/lif.hpp"
#include "msx/snn/model.hpp"
#include "msx/snn/optim.hpp"
#include "msx/snn/train.hpp"
#include "test_support.hpp"

namespace msx::snn {
namespace {

TEST(Lif, RestIsEquilibrium) {
    LifParams p;
    std::vector<double> v = {0.0, 0.0};
    const std::vector<double> in = {0.0, 0.0};
    std::vector<double> s(2);
    lif_step<double>(v, in, s, p);
    EXPECT_EQ(v, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(s, (std::vector<double>{0.0, 0.0}));
}

TEST(Lif, OneStepCrossingResets) {
    LifParams p;
    p.v_reset = -0.2;
    std::vector<double> v = {-0.2};
    const std::vector<double> in = {2.5};  // h = -0.2 + 2.5 / 2 = 1.05
    std::vector<double> s(1);
    lif_step<double>(v, in, s, p);
    EXPECT_EQ(s[0], 1.0);
    EXPECT_EQ(v[0], -0.2);
}

TEST(Lif, SubthresholdChargeMatchesUpdate) {
    LifParams p;
    p.tau = 4.0;
    std::vector<float> v = {0.5F};
    const std::vector<float> in = {0.9F};
    std::vector<float> s(1);
    lif_step<float>(v, in, s, p);
    EXPECT_EQ(s[0], 0.0F);
    EXPECT_FLOAT_EQ(v[0], 0.5F + (0.9F - 0.5F) / 4.0F);
}

// From rest with constant input I and v_reset = 0 the membrane follows
// v_k = I (1 - (1 - 1/tau)^k); first spike at the smallest k with v_k >= v_threshold.
int first_passage(double input, double tau, double vth) {
    return static_cast<int>(std::ceil(std::log(1.0 - vth / input) / std::log(1.0 - 1.0 / tau)));
}

TEST(Lif, FirstPassageMatchesClosedForm) {
    for (double tau : {1.5, 2.0, 3.0, 5.0}) {
        for (double input : {1.05, 1.3, 2.2, 4.0}) {
            LifParams p;
            p.tau = tau;
            const int expected = first_passage(input, tau, 1.0);
            std::vector<double> v = {0.0};
            const std::vector<double> in = {input};
            std::vector<double> s(1);
            int k = 0;
            while (k < 1000) {
                ++k;
                lif_step<double>(v, in, s, p);
                if (s[0] == 1.0) break;
            }
            EXPECT_EQ(k, expected) << "tau " << tau << " input " << input;
        }
    }
}

TEST(Lif, NeverFiresBelowRheobase) {
    LifParams p;
    std::vector<double> v = {0.0};
    const std::vector<double> in = {0.99};
    std::vector<double> s(1);
    for (int k = 0; k < 500; ++k) {
        lif_step<double>(v, in, s, p);
        ASSERT_EQ(s[0], 0.0);
    }
    EXPECT_NEAR(v[0], 0.99, 1e-12);
}

TEST(Lif, ParamValidation) {
    LifParams p;
    EXPECT_NO_THROW(p.validate());
    p.tau = 1.0;
    EXPECT_THROW(p.validate(), DomainError);
    p = LifParams{};
    p.v_reset = 1.0;
    EXPECT_THROW(p.validate(), DomainError);
}

TEST(Surrogate, PeakSymmetryAndUnitArea) {
    for (double alpha : {1.0, 2.0, 4.0}) {
        EXPECT_DOUBLE_EQ(surrogate_derivative(0.0, alpha), alpha / 2);
        for (double u : {0.01, 0.3, 1.7}) {
            EXPECT_EQ(surrogate_derivative(u, alpha), surrogate_derivative(-u, alpha));
            EXPECT_LT(surrogate_derivative(u, alpha), alpha / 2);
        }
        // Simpson over [-L, L]; the tails beyond L hold about 4 / (pi^2 alpha L).
        const double L = 2000.0;
        const int n = 400'000;
        const double hstep = 2 * L / n;
        double sum = surrogate_derivative(-L, alpha) + surrogate_derivative(L, alpha);
        for (int i = 1; i < n; ++i) {
            sum += (i % 2 ? 4.0 : 2.0) * surrogate_derivative(-L + i * hstep, alpha);
        }
        const double integral = sum * hstep / 3.0;
        EXPECT_NEAR(integral, 1.0, 1e-3) << alpha;
        EXPECT_NEAR(soft_spike(L, alpha) - soft_spike(-L, alpha), integral, 1e-6);
    }
}

ModelConfig tiny_config(bool flow, int steps = 3, int size = 8) {
    ModelConfig c;
    c.preset = "custom";
    c.blocks = {4, kPoolMarker, 4};
    c.stem_stride = 1;
    c.steps = steps;
    c.height = size;
    c.width = size;
    c.hidden = 8;
    c.flow_channels = 4;
    c.flow_head = flow;
    return c;
}

TEST(Model, PresetsAndValidation) {
    EXPECT_TRUE(ModelConfig::from_preset("vgg16s-flow").flow_head);
    for (const char* name : {"vgg11s", "vgg13s", "vgg16s"}) {
        const ModelConfig c = ModelConfig::from_preset(name);
        EXPECT_FALSE(c.flow_head) << name;
        EXPECT_EQ(c.num_classes, 7);
    }
    EXPECT_THROW(ModelConfig::from_preset("vgg19"), DomainError);
    ModelConfig c = ModelConfig::from_preset("vgg16s");
    c.flow_head = true;
    EXPECT_THROW(c.validate(), DomainError);
    c = ModelConfig::from_preset("vgg13s");
    c.num_classes = 5;
    EXPECT_THROW(c.validate(), DomainError);
    const ModelConfig back = model_config_from_json(to_json(ModelConfig::from_preset("vgg11s", 6, 30, 44)));
    EXPECT_EQ(back.preset, "vgg11s");
    EXPECT_EQ(back.steps, 6);
    EXPECT_EQ(back.blocks, ModelConfig::from_preset("vgg11s").blocks);
}

TEST(Model, OutputShapes) {
    ModelConfig c = ModelConfig::from_preset("vgg16s-flow", 10, 75, 110);
    SpikingVgg<float> m(c, 1);
    const int batch = 2;
    Tensor<float> x(10 * batch, 2, 75, 110);
    const auto out = m.forward(x, batch, false, true);
    EXPECT_EQ(out.logits.n, batch);
    EXPECT_EQ(out.logits.c, 7);
    EXPECT_EQ(out.flow.n, batch);
    EXPECT_EQ(out.flow.c, 2 * 9);
    EXPECT_EQ(out.flow.h, 75);
    EXPECT_EQ(out.flow.w, 110);
    EXPECT_THROW(m.forward(Tensor<float>(10 * batch, 2, 74, 110), batch, false, false), DomainError);
    EXPECT_THROW(m.forward(Tensor<float>(9 * batch, 2, 75, 110), batch, false, false), DomainError);
}

TEST(Model, ZeroInputGivesTiedLogitsAndNoFlow) {
    for (bool train : {false, true}) {
        SpikingVgg<float> m(ModelConfig::from_preset("vgg16s-flow", 4, 48, 64), 9);
        const auto out = m.forward(Tensor<float>(4 * 3, 2, 48, 64), 3, train, true);
        for (int b = 0; b < 3; ++b) {
            for (int k = 1; k < 7; ++k) {
                EXPECT_EQ(out.logits.data[b * 7 + k], out.logits.data[b * 7]);
            }
        }
        for (float f : out.flow.data) {
            EXPECT_NEAR(f, 0.0F, 1e-6F);
        }
    }
}

TEST(Model, LogitsFiniteForLargeInputs) {
    SpikingVgg<float> m(tiny_config(true), 3);
    Rng rng(1);
    std::uniform_real_distribution<float> u(0.0F, 50.0F);
    Tensor<float> x(3 * 4, 2, 8, 8);
    for (float& v : x.data) v = u(rng);
    for (bool train : {false, true}) {
        const auto out = m.forward(x, 4, train, true);
        for (float v : out.logits.data) EXPECT_TRUE(std::isfinite(v));
        for (float v : out.flow.data) EXPECT_TRUE(std::isfinite(v));
        for (int b = 0; b < 4; ++b) {
            double total = 0.0;
            for (double p : softmax(out.logits, b)) total += p;
            EXPECT_NEAR(total, 1.0, 1e-9);
        }
    }
}

TEST(Layers, LifLayerEmitsBinarySpikes) {
    Lif<float> lif(LifParams{});
    Tensor<float> x(3 * 2, 4, 3, 3);
    Rng rng(2);
    std::normal_distribution<float> g(1.0F, 2.0F);
    for (float& v : x.data) v = g(rng);
    const Tensor<float> y = lif.forward(x, StepInfo{3, 2, false});
    double rate = 0.0;
    for (float v : y.data) {
        ASSERT_TRUE(v == 0.0F || v == 1.0F);
        rate += v;
    }
    rate /= static_cast<double>(y.data.size());
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
}

TEST(Model, FlowHeadDoesNotTouchClassification) {
    SpikingVgg<float> m(tiny_config(true, 4, 12), 21);
    Rng rng(5);
    std::bernoulli_distribution on(0.3);
    Tensor<float> x(4 * 3, 2, 12, 12);
    for (float& v : x.data) v = on(rng) ? 1.0F : 0.0F;
    const auto with = m.forward(x, 3, false, true);
    const auto without = m.forward(x, 3, false, false);
    EXPECT_EQ(with.logits.data, without.logits.data);
    EXPECT_TRUE(without.flow.data.empty());
}

double loss_at(SpikingVgg<double>& m, const Tensor<double>& x, const Tensor<double>& target, std::span<const int> labels,
               int batch, bool grad) {
    m.zero_grad();
    const auto out = m.forward(x, batch, true, true);
    Tensor<double> dl;
    Tensor<double> df;
    const LossValues lv = compute_loss<double>(out.logits, labels, &out.flow, &target, 0.5, grad ? &dl : nullptr,
                                               grad ? &df : nullptr);
    if (grad) m.backward(dl, &df);
    return lv.total;
}

TEST(Gradient, SoftModeMatchesFiniteDifferences) {
    ModelConfig c = tiny_config(true, 3, 8);
    c.lif.soft = true;
    SpikingVgg<double> m(c, 7);
    const int batch = 2;
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    Tensor<double> x(3 * batch, 2, 8, 8);
    for (double& v : x.data) v = u(rng);
    Tensor<double> target(batch, 4, 8, 8);
    for (double& v : target.data) v = u(rng) - 1.0;
    const std::vector<int> labels = {1, 5};

    loss_at(m, x, target, labels, batch, true);
    std::vector<std::vector<double>> analytic;
    for (Param<double>* p : m.parameters()) analytic.push_back(p->grad);
    const double h = 1e-6;
    auto params = m.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->trainable) continue;
        double worst = 0.0;
        for (std::size_t i = 0; i < params[k]->value.size(); ++i) {
            const double keep = params[k]->value[i];
            params[k]->value[i] = keep + h;
            const double up = loss_at(m, x, target, labels, batch, false);
            params[k]->value[i] = keep - h;
            const double down = loss_at(m, x, target, labels, batch, false);
            params[k]->value[i] = keep;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[k][i];
            worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
        }
        EXPECT_LE(worst, 1e-4) << params[k]->name;
    }
}

Example random_example(int steps, int size, int label, bool flow, std::uint64_t seed) {
    Example e;
    e.grid = VoxelGrid(steps, size, size);
    Rng rng(seed);
    std::bernoulli_distribution on(0.15);
    for (float& v : e.grid.values) v = on(rng) ? 1.0F : 0.0F;
    e.label = label;
    if (flow) {
        std::normal_distribution<float> g(0.0F, 0.5F);
        e.flow.assign(steps - 1, FlowField(size, size));
        for (auto& f : e.flow) {
            for (float& v : f.u) v = g(rng);
            for (float& v : f.v) v = g(rng);
        }
    }
    e.id = "ex" + std::to_string(seed);
    return e;
}

std::vector<Example> random_set(int n, int steps, int size, bool flow, std::uint64_t seed) {
    std::vector<Example> out;
    for (int i = 0; i < n; ++i) out.push_back(random_example(steps, size, i % 7, flow, seed + i));
    return out;
}

TEST(Train, SmallStepReducesBatchLoss) {
    TrainConfig tc;
    tc.seed = 4;
    Trainer t(tiny_config(true, 3, 8), tc);
    const std::vector<Example> set = random_set(8, 3, 8, true, 100);
    std::vector<const Example*> batch;
    for (const auto& e : set) batch.push_back(&e);
    const double before = t.train_step(batch, 1e-4).total;
    const double after = t.train_step(batch, 1e-4).total;
    EXPECT_LT(after, before);
}

TEST(Train, ZeroLambdaEqualsPlainClassifier) {
    TrainConfig tc;
    tc.seed = 8;
    ModelConfig flow = tiny_config(true, 3, 8);
    flow.lambda = 0.0;
    const ModelConfig plain = tiny_config(false, 3, 8);
    Trainer a(flow, tc);
    Trainer b(plain, tc);
    const std::vector<Example> set = random_set(6, 3, 8, true, 300);
    std::vector<const Example*> batch;
    for (const auto& e : set) batch.push_back(&e);
    for (int step = 0; step < 3; ++step) {
        const LossValues la = a.train_step(batch, 5e-3);
        const LossValues lb = b.train_step(batch, 5e-3);
        EXPECT_EQ(la.classification, lb.classification);
    }
    std::map<std::string, std::vector<float>> pb;
    for (auto* p : b.model().parameters()) pb[p->name] = p->value;
    int shared = 0;
    for (auto* p : a.model().parameters()) {
        auto it = pb.find(p->name);
        if (it == pb.end()) continue;
        ++shared;
        EXPECT_EQ(p->value, it->second) << p->name;
    }
    EXPECT_EQ(static_cast<std::size_t>(shared), pb.size());
}

TEST(Train, FlowHeadRequiresTargets) {
    Trainer t(tiny_config(true, 3, 8), TrainConfig{});
    const std::vector<Example> set = random_set(2, 3, 8, false, 1);
    std::vector<const Example*> batch = {&set[0], &set[1]};
    EXPECT_THROW(t.train_step(batch, 1e-3), DomainError);
}

TEST(Schedule, ScaledCosineWithRestarts) {
    TrainConfig tc;
    EXPECT_DOUBLE_EQ(tc.initial_lr(), 0.01 * 16 / 64);
    tc.batch_size = 64;
    EXPECT_DOUBLE_EQ(tc.initial_lr(), 0.01);
    EXPECT_DOUBLE_EQ(scaled_lr(0.01, 32), 0.005);
    const double lr0 = 0.0025;
    EXPECT_DOUBLE_EQ(cosine_lr(0, lr0, 10), lr0);
    EXPECT_NEAR(cosine_lr(5, lr0, 10), lr0 / 2, 1e-15);
    for (int seg = 0; seg < 3; ++seg) {
        for (int e = 1; e < 10; ++e) {
            EXPECT_LT(cosine_lr(seg * 10 + e, lr0, 10), cosine_lr(seg * 10 + e - 1, lr0, 10));
        }
        EXPECT_DOUBLE_EQ(cosine_lr(seg * 10, lr0, 10), lr0);
    }
}

TEST(Train, ConfigValidationAndJson) {
    TrainConfig tc;
    tc.epochs = 0;
    EXPECT_THROW(tc.validate(), DomainError);
    tc = TrainConfig{};
    tc.base_lr = 0.0;
    EXPECT_THROW(tc.validate(), DomainError);
    tc = TrainConfig{};
    tc.epochs = 7;
    tc.adam.weight_decay = 0.0;
    const TrainConfig back = train_config_from_json(to_json(tc));
    EXPECT_EQ(back.epochs, 7);
    EXPECT_EQ(back.adam.weight_decay, 0.0);
    EXPECT_EQ(TrainConfig{}.adam.beta1, 0.9);
    EXPECT_EQ(TrainConfig{}.adam.beta2, 0.999);
    EXPECT_EQ(TrainConfig{}.adam.weight_decay, 1e-4);
    EXPECT_EQ(TrainConfig{}.epochs, 30);
}

TEST(Train, FitIsDeterministic) {
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.seed = 12;
    const std::vector<Example> train = random_set(10, 3, 8, true, 500);
    const std::vector<Example> val = random_set(7, 3, 8, true, 900);
    Trainer a(tiny_config(true, 3, 8), tc);
    Trainer b(tiny_config(true, 3, 8), tc);
    const auto ha = a.fit(train, val);
    const auto hb = b.fit(train, val);
    ASSERT_EQ(ha.size(), 2U);
    for (std::size_t i = 0; i < ha.size(); ++i) {
        EXPECT_EQ(ha[i].train_loss, hb[i].train_loss);
        EXPECT_EQ(ha[i].val_loss, hb[i].val_loss);
        EXPECT_EQ(ha[i].val_acc, hb[i].val_acc);
        EXPECT_EQ(ha[i].lr, cosine_lr(static_cast<int>(i), tc.initial_lr(), 10));
    }
    EXPECT_THROW(a.fit({}, val), DomainError);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
    testing::TempDir dir("ckpt");
    SpikingVgg<float> m(tiny_config(true, 3, 8), 42);
    Trainer warm(tiny_config(true, 3, 8), TrainConfig{});
    const std::vector<Example> set = random_set(4, 3, 8, true, 7);
    std::vector<const Example*> batch;
    for (const auto& e : set) batch.push_back(&e);
    warm.train_step(batch, 1e-2);  // moves BN running statistics off their defaults
    save_checkpoint(dir / "m.evck", warm.model(), {{"note", "x"}});
    const LoadedCheckpoint ck = load_checkpoint(dir / "m.evck");
    EXPECT_EQ(ck.meta.at("note"), "x");
    auto pa = warm.model().parameters();
    auto pb = ck.model->parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i]->name, pb[i]->name);
        EXPECT_EQ(pa[i]->value, pb[i]->value);
    }
    std::vector<const VoxelGrid*> grids;
    for (const auto& e : set) grids.push_back(&e.grid);
    const Tensor<float> x = pack_grids<float>(grids);
    EXPECT_EQ(warm.model().forward(x, 4, false, true).logits.data, ck.model->forward(x, 4, false, true).logits.data);

    std::filesystem::resize_file(dir / "m.evck", std::filesystem::file_size(dir / "m.evck") - 5);
    EXPECT_THROW(load_checkpoint(dir / "m.evck"), FormatError);
    EXPECT_THROW(load_checkpoint(dir / "missing.evck"), FormatError);
}

TEST(Loss, CrossEntropyAndFlowTerms) {
    Tensor<double> logits(2, 7, 1, 1);
    logits.data[3] = std::log(3.0);  // sample 0: p(3) = 3 / 9
    const std::vector<int> labels = {3, 0};
    Tensor<double> dl;
    const LossValues lv = compute_loss<double>(logits, labels, nullptr, nullptr, 0.5, &dl, nullptr);
    const double expected = 0.5 * (-std::log(3.0 / 9.0) - std::log(1.0 / 7.0));
    EXPECT_NEAR(lv.classification, expected, 1e-12);
    EXPECT_EQ(lv.total, lv.classification);
    EXPECT_EQ(lv.correct, 2);  // argmax ties resolve to the lowest index
    EXPECT_NEAR(dl.data[3], 0.5 * (3.0 / 9.0 - 1.0), 1e-12);

    Tensor<double> pred(2, 4, 3, 3);
    Tensor<double> target(2, 4, 3, 3);
    for (std::size_t i = 0; i < target.data.size(); i += 4) target.data[i] = 2.0;
    // squared error sum / (batch (T-1) H W) with T-1 = 2 fields
    const double flow = 18 * 4.0 / (2 * 2 * 9);
    const LossValues lf = compute_loss<double>(logits, labels, &pred, &target, 0.5, nullptr, nullptr);
    EXPECT_NEAR(lf.flow, flow, 1e-12);
    EXPECT_NEAR(lf.total, lv.classification + 0.5 * flow, 1e-12);
    EXPECT_THROW(compute_loss<double>(logits, labels, &pred, nullptr, 0.5, nullptr, nullptr), DomainError);
}

TEST(Train, EmptySplitRejected) {
    DatasetManifest m;
    m.roi = Roi{0, 0, 8, 8};
    ModelConfig c = tiny_config(false, 10, 8);
    testing::TempDir dir("emptysplit");
    EXPECT_THROW(train_on_manifest(c, TrainConfig{}, m, dir.path(), Eye::Left, dir / "out", ExampleOptions{}),
                 DomainError);
}

}  // namespace
}  // namespace msx::snn
