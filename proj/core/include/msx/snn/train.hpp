#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msx/dataset.hpp"
#include "msx/farneback.hpp"
#include "msx/snn/model.hpp"
#include "msx/snn/optim.hpp"
#include "msx/voxel.hpp"

namespace msx::snn {

// Minimal geometric augmentation: horizontal shift with zero fill (flow targets move
// along) and independent thinning of event counts.
struct AugmentConfig {
    int max_shift_px = 0;
    double drop_probability = 0.0;

    bool enabled() const { return max_shift_px > 0 || drop_probability > 0.0; }
    void validate() const;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;
    double base_lr = 0.01;  // at reference_batch
    int reference_batch = 64;
    AdamConfig adam;
    int cosine_segment_epochs = 10;
    std::uint64_t seed = 1;
    bool shuffle_labels = false;  // control run: permute train and val labels
    AugmentConfig augment;
    bool verbose = false;

    double initial_lr() const { return scaled_lr(base_lr, batch_size, reference_batch); }
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct Example {
    VoxelGrid grid;
    int label = 0;
    std::vector<FlowField> flow;  // T-1 fields; required when the model has a flow head
    std::string id;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> predicted;
    std::vector<std::vector<double>> probabilities;
};

// Eval-mode pass over the examples in order; the flow term enters the loss only
// when the model has a flow head and every example carries targets.
Evaluation evaluate_examples(SpikingVgg<float>& model, std::span<const Example> examples, int batch_size = 16);

class Trainer {
public:
    Trainer(const ModelConfig& model, const TrainConfig& train);

    // One optimizer step on the batch as given (no augmentation).
    LossValues train_step(std::span<const Example* const> batch, double lr);

    // Calls on_best whenever validation accuracy improves (ties broken by lower loss).
    std::vector<EpochRecord> fit(const std::vector<Example>& train, const std::vector<Example>& val,
                                 const std::function<void(const EpochRecord&)>& on_best = {});

    SpikingVgg<float>& model() { return model_; }
    int best_epoch() const { return best_epoch_; }

private:
    TrainConfig config_;
    SpikingVgg<float> model_;
    Adam<float> adam_;
    int best_epoch_ = -1;
};

struct ExampleOptions {
    int bins = kDefaultBins;
    std::int64_t window_ns = kDefaultWindowNs;
    bool with_flow = false;
    FarnebackParams farneback;
    std::filesystem::path flow_cache_dir;  // empty: no cache
    int workers = 1;
};

// Keyed by sample digest plus a tag of the binning and estimator settings.
std::filesystem::path flow_cache_path(const std::filesystem::path& cache_dir, const SampleRecord& record,
                                      const ExampleOptions& options);

// Reads, verifies against the manifest digest, bins, and (optionally) attaches flow
// targets from the cache, computing and storing missing ones.
std::vector<Example> load_examples(const std::filesystem::path& root, std::span<const SampleRecord* const> records,
                                   const ExampleOptions& options);

struct TrainRun {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_acc = 0.0;
    std::filesystem::path checkpoint;
    std::filesystem::path history_csv;
};

inline constexpr const char* kCheckpointFileName = "checkpoint.evck";
inline constexpr const char* kHistoryFileName = "history.csv";

// Per-eye training on the manifest's train split with val-based checkpoint selection.
TrainRun train_on_manifest(const ModelConfig& model, const TrainConfig& train, const DatasetManifest& manifest,
                           const std::filesystem::path& root, Eye eye, const std::filesystem::path& out_dir,
                           const ExampleOptions& options);

}  // namespace msx::snn
