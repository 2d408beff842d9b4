#include "msx/snn/train.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "msx/digest.hpp"
#include "msx/errors.hpp"
#include "msx/evms_io.hpp"
#include "msx/flow.hpp"
#include "msx/parallel.hpp"
#include "msx/snn/checkpoint.hpp"

namespace msx::snn {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5AFF;
constexpr std::uint64_t kEpochTag = 0xE90C;
constexpr std::uint64_t kAugmentTag = 0xA06;

Example augment(const Example& e, const AugmentConfig& a, Rng& rng) {
    Example out = e;
    if (a.max_shift_px > 0) {
        std::uniform_int_distribution<int> pick(-a.max_shift_px, a.max_shift_px);
        const int k = pick(rng);
        if (k != 0) {
            const int w = e.grid.width;
            const std::size_t rows = e.grid.values.size() / w;
            for (std::size_t r = 0; r < rows; ++r) {
                const float* src = e.grid.values.data() + r * w;
                float* dst = out.grid.values.data() + r * w;
                for (int x = 0; x < w; ++x) {
                    const int sx = x - k;
                    dst[x] = (sx >= 0 && sx < w) ? src[sx] : 0.0F;
                }
            }
            for (std::size_t f = 0; f < e.flow.size(); ++f) {
                const FlowField& sf = e.flow[f];
                FlowField& df = out.flow[f];
                for (int y = 0; y < sf.height; ++y) {
                    for (int x = 0; x < sf.width; ++x) {
                        const int sx = x - k;
                        const std::size_t i = static_cast<std::size_t>(y) * sf.width + x;
                        const bool in = sx >= 0 && sx < sf.width;
                        const std::size_t j = static_cast<std::size_t>(y) * sf.width + (in ? sx : 0);
                        df.u[i] = in ? sf.u[j] : 0.0F;
                        df.v[i] = in ? sf.v[j] : 0.0F;
                    }
                }
            }
        }
    }
    if (a.drop_probability > 0.0) {
        for (float& c : out.grid.values) {
            if (c > 0.0F) {
                std::binomial_distribution<int> keep(static_cast<int>(c), 1.0 - a.drop_probability);
                c = static_cast<float>(keep(rng));
            }
        }
    }
    return out;
}

}  // namespace

void AugmentConfig::validate() const {
    if (max_shift_px < 0) {
        throw DomainError("augment: shift must be >= 0");
    }
    if (!(drop_probability >= 0.0 && drop_probability < 1.0)) {
        throw DomainError("augment: drop probability must be in [0, 1)");
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw DomainError("train: epochs must be >= 1");
    }
    if (batch_size < 1 || reference_batch < 1) {
        throw DomainError("train: batch sizes must be >= 1");
    }
    if (!(base_lr > 0.0)) {
        throw DomainError("train: learning rate must be positive");
    }
    if (cosine_segment_epochs < 1) {
        throw DomainError("train: cosine segment must be >= 1 epoch");
    }
    if (!(adam.weight_decay >= 0.0)) {
        throw DomainError("train: weight decay must be >= 0");
    }
    augment.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"base_lr", c.base_lr},
            {"reference_batch", c.reference_batch},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"adam_eps", c.adam.eps},
            {"weight_decay", c.adam.weight_decay},
            {"cosine_segment_epochs", c.cosine_segment_epochs},
            {"seed", c.seed},
            {"shuffle_labels", c.shuffle_labels},
            {"augment", {{"max_shift_px", c.augment.max_shift_px}, {"drop_probability", c.augment.drop_probability}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.reference_batch = j.value("reference_batch", c.reference_batch);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.cosine_segment_epochs = j.value("cosine_segment_epochs", c.cosine_segment_epochs);
    c.seed = j.value("seed", c.seed);
    c.shuffle_labels = j.value("shuffle_labels", c.shuffle_labels);
    if (j.contains("augment")) {
        c.augment.max_shift_px = j["augment"].value("max_shift_px", c.augment.max_shift_px);
        c.augment.drop_probability = j["augment"].value("drop_probability", c.augment.drop_probability);
    }
    c.validate();
    return c;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out << "epoch,lr,train_loss,val_loss,val_acc\n" << std::setprecision(9);
    for (const EpochRecord& r : history) {
        out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_acc << '\n';
    }
}

Evaluation evaluate_examples(SpikingVgg<float>& model, std::span<const Example> examples, int batch_size) {
    if (examples.empty()) {
        throw DomainError("evaluate: no examples");
    }
    const bool with_flow = model.config().flow_head &&
                           std::all_of(examples.begin(), examples.end(), [](const Example& e) { return !e.flow.empty(); });
    Evaluation ev;
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t b0 = 0; b0 < examples.size(); b0 += batch_size) {
        const std::size_t b1 = std::min(examples.size(), b0 + batch_size);
        std::vector<const VoxelGrid*> grids;
        std::vector<const std::vector<FlowField>*> flows;
        std::vector<int> labels;
        for (std::size_t i = b0; i < b1; ++i) {
            grids.push_back(&examples[i].grid);
            flows.push_back(&examples[i].flow);
            labels.push_back(examples[i].label);
        }
        const int batch = static_cast<int>(grids.size());
        auto out = model.forward(pack_grids<float>(grids), batch, false, with_flow);
        Tensor<float> target;
        if (with_flow) {
            target = pack_flows<float>(flows);
        }
        const LossValues lv = compute_loss<float>(out.logits, labels, with_flow ? &out.flow : nullptr,
                                                  with_flow ? &target : nullptr, model.config().lambda, nullptr, nullptr);
        loss_sum += lv.total * batch;
        correct += lv.correct;
        for (int b = 0; b < batch; ++b) {
            std::vector<double> p = softmax(out.logits, b);
            ev.predicted.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
            ev.probabilities.push_back(std::move(p));
        }
    }
    ev.loss = loss_sum / static_cast<double>(examples.size());
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
    return ev;
}

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train)
    : config_(train), model_(model, derive_seed(train.seed, 0x1A17)), adam_(model_.parameters(), train.adam) {
    config_.validate();
}

LossValues Trainer::train_step(std::span<const Example* const> batch, double lr) {
    if (batch.empty()) {
        throw DomainError("train_step: empty batch");
    }
    const bool with_flow = model_.config().flow_head;
    std::vector<const VoxelGrid*> grids;
    std::vector<const std::vector<FlowField>*> flows;
    std::vector<int> labels;
    for (const Example* e : batch) {
        if (with_flow && e->flow.empty()) {
            throw DomainError("train_step: flow head enabled but example '" + e->id + "' has no flow targets");
        }
        grids.push_back(&e->grid);
        flows.push_back(&e->flow);
        labels.push_back(e->label);
    }
    const int n = static_cast<int>(batch.size());
    model_.zero_grad();
    auto out = model_.forward(pack_grids<float>(grids), n, true, with_flow);
    Tensor<float> target;
    if (with_flow) {
        target = pack_flows<float>(flows);
    }
    Tensor<float> dlogits;
    Tensor<float> dflow;
    const LossValues lv = compute_loss<float>(out.logits, labels, with_flow ? &out.flow : nullptr,
                                              with_flow ? &target : nullptr, model_.config().lambda, &dlogits,
                                              with_flow ? &dflow : nullptr);
    model_.backward(dlogits, with_flow ? &dflow : nullptr);
    adam_.step(lr);
    return lv;
}

std::vector<EpochRecord> Trainer::fit(const std::vector<Example>& train, const std::vector<Example>& val,
                                      const std::function<void(const EpochRecord&)>& on_best) {
    if (train.empty()) {
        throw DomainError("train: empty train split");
    }
    if (val.empty()) {
        throw DomainError("train: empty validation split");
    }
    std::vector<int> train_labels(train.size());
    std::vector<Example> val_copy = val;
    for (std::size_t i = 0; i < train.size(); ++i) {
        train_labels[i] = train[i].label;
    }
    if (config_.shuffle_labels) {
        Rng rng(derive_seed(config_.seed, kShuffleTag));
        std::shuffle(train_labels.begin(), train_labels.end(), rng);
        std::vector<int> vl;
        for (const Example& e : val_copy) {
            vl.push_back(e.label);
        }
        std::shuffle(vl.begin(), vl.end(), rng);
        for (std::size_t i = 0; i < vl.size(); ++i) {
            val_copy[i].label = vl[i];
        }
    }

    std::vector<EpochRecord> history;
    double best_acc = -1.0;
    double best_loss = 0.0;
    std::vector<std::size_t> order(train.size());
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, config_.initial_lr(), config_.cosine_segment_epochs);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng order_rng(derive_seed(config_.seed, kEpochTag, epoch));
        std::shuffle(order.begin(), order.end(), order_rng);
        Rng aug_rng(derive_seed(config_.seed, kAugmentTag, epoch));

        double loss_sum = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += config_.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + config_.batch_size);
            // Copies only for augmented or relabelled examples; reserve keeps pointers stable.
            std::vector<Example> local;
            local.reserve(b1 - b0);
            std::vector<const Example*> ptrs;
            for (std::size_t i = b0; i < b1; ++i) {
                const Example& src = train[order[i]];
                const int label = train_labels[order[i]];
                if (config_.augment.enabled()) {
                    local.push_back(augment(src, config_.augment, aug_rng));
                } else if (src.label != label) {
                    local.push_back(src);
                } else {
                    ptrs.push_back(&src);
                    continue;
                }
                local.back().label = label;
                ptrs.push_back(&local.back());
            }
            const LossValues lv = train_step(ptrs, lr);
            loss_sum += lv.total * static_cast<double>(ptrs.size());
        }

        const Evaluation ev = evaluate_examples(model_, val_copy, config_.batch_size);
        EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(train.size()), ev.loss, ev.accuracy};
        history.push_back(rec);
        if (config_.verbose) {
            std::cerr << "epoch " << epoch << " lr " << lr << " train_loss " << rec.train_loss << " val_loss "
                      << rec.val_loss << " val_acc " << rec.val_acc << '\n';
        }
        if (ev.accuracy > best_acc || (ev.accuracy == best_acc && ev.loss < best_loss)) {
            best_acc = ev.accuracy;
            best_loss = ev.loss;
            best_epoch_ = epoch;
            if (on_best) {
                on_best(rec);
            }
        }
    }
    return history;
}

std::filesystem::path flow_cache_path(const std::filesystem::path& cache_dir, const SampleRecord& record,
                                      const ExampleOptions& options) {
    const FarnebackParams& f = options.farneback;
    std::ostringstream key;
    key << "fb2 " << options.bins << ' ' << options.window_ns << ' ' << f.window_size << ' ' << f.poly_n << ' '
        << f.poly_sigma << ' ' << f.iterations << ' ' << f.pyramid_levels << ' ' << f.pyramid_scale;
    return cache_dir / (record.digest + "-" + sha256_hex(key.str()).substr(0, 8) + ".evfl");
}

std::vector<Example> load_examples(const std::filesystem::path& root, std::span<const SampleRecord* const> records,
                                   const ExampleOptions& options) {
    std::vector<Example> out(records.size());
    parallel_for(records.size(), options.workers, [&](std::size_t i) {
        const SampleRecord& r = *records[i];
        const std::filesystem::path path = root / r.path;
        if (!std::filesystem::exists(path)) {
            throw IntegrityError("sample file missing: " + r.path);
        }
        if (sha256_file(path) != r.digest) {
            throw IntegrityError("sample digest mismatch: " + r.path);
        }
        const LabeledSample s = read_stream(path);
        if (s.class_id != r.class_id || s.eye != r.eye) {
            throw IntegrityError("sample header disagrees with manifest: " + r.path);
        }
        Example& e = out[i];
        e.id = r.path;
        e.label = r.class_id;
        e.grid = bin_events(s.stream, options.bins, options.window_ns);
        if (!options.with_flow) {
            return;
        }
        const bool cached = !options.flow_cache_dir.empty();
        const std::filesystem::path cache = cached ? flow_cache_path(options.flow_cache_dir, r, options) : std::filesystem::path{};
        if (cached && std::filesystem::exists(cache)) {
            e.flow = read_flow_cache(cache);
            const bool fits = static_cast<int>(e.flow.size()) == options.bins - 1 && !e.flow.empty() &&
                              e.flow.front().width == e.grid.width && e.flow.front().height == e.grid.height;
            if (fits) {
                return;
            }
        }
        e.flow = flow_targets(e.grid, options.farneback);
        if (cached) {
            write_flow_cache(e.flow, cache);
        }
    });
    return out;
}

TrainRun train_on_manifest(const ModelConfig& model, const TrainConfig& train, const DatasetManifest& manifest,
                           const std::filesystem::path& root, Eye eye, const std::filesystem::path& out_dir,
                           const ExampleOptions& options) {
    model.validate();
    train.validate();
    if (model.height != manifest.roi.height || model.width != manifest.roi.width) {
        throw DomainError("train: model input " + std::to_string(model.width) + "x" + std::to_string(model.height) +
                          " does not match the dataset ROI");
    }
    if (model.steps != options.bins) {
        throw DomainError("train: model steps differ from the binning");
    }
    const auto train_records = manifest.select(Split::Train, eye);
    const auto val_records = manifest.select(Split::Val, eye);
    if (train_records.empty() || val_records.empty()) {
        throw DomainError("train: empty train or val split for the " + std::string(to_string(eye)) + " eye");
    }
    ExampleOptions opts = options;
    opts.with_flow = model.flow_head;
    const std::vector<Example> train_set = load_examples(root, train_records, opts);
    const std::vector<Example> val_set = load_examples(root, val_records, opts);

    TrainRun run;
    run.checkpoint = out_dir / kCheckpointFileName;
    run.history_csv = out_dir / kHistoryFileName;
    std::filesystem::create_directories(out_dir);
    Trainer trainer(model, train);
    const std::string dataset_digest = manifest.content_digest();
    run.history = trainer.fit(train_set, val_set, [&](const EpochRecord& rec) {
        nlohmann::json meta = {{"eye", std::string(to_string(eye))},
                               {"seed", train.seed},
                               {"epoch", rec.epoch},
                               {"val_acc", rec.val_acc},
                               {"val_loss", rec.val_loss},
                               {"bins", options.bins},
                               {"window_ns", options.window_ns},
                               {"dataset_digest", dataset_digest},
                               {"train", to_json(train)}};
        save_checkpoint(run.checkpoint, trainer.model(), meta);
        run.best_val_acc = rec.val_acc;
    });
    run.best_epoch = trainer.best_epoch();
    write_history_csv(run.history, run.history_csv);
    return run;
}

}  // namespace msx::snn
