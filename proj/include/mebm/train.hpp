#pragma once

#include <string>
#include <vector>

#include "mebm/net.hpp"
#include "mebm/windowing.hpp"

namespace mebm {

struct AdamWHyperparams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    uint64_t step_count = 0;
    AdamWHyperparams hyper;
    ModelParams first_moment;
    ModelParams second_moment;
};

OptimizerState make_optimizer(const ModelParams& params, const AdamWHyperparams& hyper = {});

// Decoupled-weight-decay Adam with bias correction; decay is applied to
// weight tensors only (Tensor::decay). Updates params and state in place.
void adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state);

// (1/T) * sum (p_t - y_t)^2.
double mse_loss(const ProbabilitySequence& p, const LabelVector& y);

// Keeps the `capacity` checkpoints with the lowest validation losses, ties
// broken by earlier epoch. Evicted checkpoint files are removed from disk.
struct CheckpointEntry {
    double validation_loss = 0.0;
    uint32_t epoch = 0;
    std::string path;
};

struct CheckpointStore {
    size_t capacity = 5;
    std::vector<CheckpointEntry> entries;  // ascending validation loss

    // Returns true when the entry was retained.
    bool offer(const CheckpointEntry& entry, bool delete_evicted = true);
};

void save_store_tsv(const CheckpointStore& store, const std::string& path);
CheckpointStore load_store_tsv(const std::string& path);

struct RunConfig {
    size_t epochs = 10;
    size_t batch_size = 8;
    uint64_t seed = 0;
    std::string checkpoint_dir;
    AdamWHyperparams optimizer;
    size_t store_capacity = 5;
};

// Training windows plus what per-epoch label re-jittering needs.
struct TrainingSet {
    std::vector<TrainingWindow> windows;  // segment-normalized signals
    EventTrack events;
    WindowingConfig wcfg;
    size_t session_frames = 0;
};

struct EpochLog {
    uint32_t epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

// Evaluation-mode mean MSE over windows (no dropout, labels as given).
double validation_loss(const ModelParams& params, const ModelConfig& cfg,
                       const std::vector<TrainingWindow>& val_windows);

// Full loop: per-epoch seeded shuffle, fresh per-epoch jittered labels,
// AdamW steps, per-epoch validation and checkpointing into the store.
CheckpointStore train(const TrainingSet& train_set, const std::vector<TrainingWindow>& val_windows,
                      const ModelConfig& cfg, const RunConfig& run,
                      std::vector<EpochLog>* log = nullptr);

}  // namespace mebm
