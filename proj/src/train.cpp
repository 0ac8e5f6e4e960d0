#include "mebm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mebm {

OptimizerState make_optimizer(const ModelParams& params, const AdamWHyperparams& hyper) {
    OptimizerState state;
    state.hyper = hyper;
    state.first_moment = zeros_like(params);
    state.second_moment = zeros_like(params);
    return state;
}

void adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state) {
    if (params.tensors.size() != grads.tensors.size())
        throw DimensionError("gradient tensor count does not match parameters");

    state.step_count += 1;
    const auto& hp = state.hyper;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step_count));

    for (size_t t = 0; t < params.tensors.size(); ++t) {
        Tensor& theta = params.tensors[t];
        const Tensor& g = grads.tensors[t];
        if (theta.name != g.name || theta.values.size() != g.values.size())
            throw DimensionError("gradient tensor mismatch for " + theta.name);
        Tensor& m = state.first_moment.tensors[t];
        Tensor& v = state.second_moment.tensors[t];
        const double wd = theta.decay ? hp.weight_decay : 0.0;
        for (size_t i = 0; i < theta.values.size(); ++i) {
            const double gi = g.values[i];
            if (!std::isfinite(gi)) throw NumericError("non-finite gradient in " + theta.name);
            m.values[i] = hp.beta1 * m.values[i] + (1.0 - hp.beta1) * gi;
            v.values[i] = hp.beta2 * v.values[i] + (1.0 - hp.beta2) * gi * gi;
            const double m_hat = m.values[i] / bc1;
            const double v_hat = v.values[i] / bc2;
            theta.values[i] -=
                hp.lr * (m_hat / (std::sqrt(v_hat) + hp.epsilon) + wd * theta.values[i]);
        }
    }
}

double mse_loss(const ProbabilitySequence& p, const LabelVector& y) {
    if (p.size() != y.size()) throw DimensionError("probability/label length mismatch");
    if (p.size() == 0) throw DimensionError("empty sequences");
    double acc = 0.0;
    for (size_t t = 0; t < p.size(); ++t) {
        const double d = p.values[t] - static_cast<double>(y.values[t]);
        acc += d * d;
    }
    return acc / static_cast<double>(p.size());
}

bool CheckpointStore::offer(const CheckpointEntry& entry, bool delete_evicted) {
    if (!std::isfinite(entry.validation_loss))
        throw NumericError("checkpoint validation loss is not finite");
    // Insert keeping ascending loss, earlier epoch first on ties.
    auto pos = std::find_if(entries.begin(), entries.end(), [&](const CheckpointEntry& e) {
        return entry.validation_loss < e.validation_loss ||
               (entry.validation_loss == e.validation_loss && entry.epoch < e.epoch);
    });
    entries.insert(pos, entry);
    if (entries.size() <= capacity) return true;

    const CheckpointEntry evicted = entries.back();
    entries.pop_back();
    if (delete_evicted && !evicted.path.empty()) {
        std::error_code ec;
        std::filesystem::remove(evicted.path, ec);
    }
    return evicted.epoch != entry.epoch;
}

void save_store_tsv(const CheckpointStore& store, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint store: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    char buf[64];
    for (const auto& e : store.entries) {
        // Checkpoints beside the store file are written by name only, so a
        // run directory is relocatable and reruns are byte-identical.
        const std::filesystem::path p(e.path);
        const std::string written = p.parent_path() == base ? p.filename().string() : e.path;
        std::snprintf(buf, sizeof(buf), "%u\t%.12g\t", e.epoch, e.validation_loss);
        out << buf << written << "\n";
    }
    if (!out) throw IoError("failed writing checkpoint store: " + path);
}

CheckpointStore load_store_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint store: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    CheckpointStore store;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        CheckpointEntry e;
        if (!(ls >> e.epoch >> e.validation_loss >> e.path))
            throw FormatError("malformed store line: " + line);
        if (std::filesystem::path(e.path).is_relative()) e.path = (base / e.path).string();
        store.entries.push_back(e);
    }
    return store;
}

double validation_loss(const ModelParams& params, const ModelConfig& cfg,
                       const std::vector<TrainingWindow>& val_windows) {
    if (val_windows.empty()) throw std::invalid_argument("validation set must be non-empty");
    double total = 0.0;
    for (const auto& w : val_windows) {
        ForwardOptions opts;
        opts.frame_rate_hz = w.labels.frame_rate_hz;
        total += mse_loss(model_forward(w.signal, params, cfg, opts), w.labels);
    }
    return total / static_cast<double>(val_windows.size());
}

namespace {

// Fisher-Yates with our own stream; std::shuffle's draws are
// implementation-defined.
void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.bounded(i)]);
}

}  // namespace

CheckpointStore train(const TrainingSet& train_set, const std::vector<TrainingWindow>& val_windows,
                      const ModelConfig& cfg, const RunConfig& run,
                      std::vector<EpochLog>* log) {
    if (train_set.windows.empty() || val_windows.empty())
        throw std::invalid_argument("training and validation sets must be non-empty");
    if (run.batch_size < 1 || run.epochs < 1)
        throw ConfigError("epochs and batch size must be >= 1");

    std::filesystem::create_directories(run.checkpoint_dir);

    ModelParams params = init_params(cfg, derive_seed(run.seed, "init"));
    OptimizerState opt = make_optimizer(params, run.optimizer);
    CheckpointStore store;
    store.capacity = run.store_capacity;

    const size_t n_windows = train_set.windows.size();
    std::vector<size_t> order(n_windows);
    std::iota(order.begin(), order.end(), 0);

    for (uint32_t epoch = 1; epoch <= run.epochs; ++epoch) {
        // Fresh jittered labels for every window, independent of shuffle
        // order: one derived stream per (epoch, window).
        std::vector<LabelVector> epoch_labels(n_windows);
        for (size_t w = 0; w < n_windows; ++w) {
            Rng jitter_rng(derive_seed(derive_seed(run.seed, "jitter", epoch), "window", w));
            const EventTrack jittered = jitter_onsets(
                train_set.events, train_set.wcfg.jitter_frames, train_set.wcfg.frame_rate_hz,
                jitter_rng);
            const LabelVector session = rasterize_labels(
                jittered, train_set.wcfg.frame_rate_hz, train_set.session_frames);
            const size_t start = train_set.windows[w].start_frame;
            const size_t t_len = train_set.windows[w].labels.size();
            epoch_labels[w].frame_rate_hz = train_set.wcfg.frame_rate_hz;
            epoch_labels[w].values.assign(
                session.values.begin() + static_cast<long>(start),
                session.values.begin() + static_cast<long>(start + t_len));
        }

        Rng shuffle_rng(derive_seed(run.seed, "shuffle", epoch));
        shuffle_indices(order, shuffle_rng);

        Rng dropout_rng(derive_seed(run.seed, "dropout", epoch));
        double epoch_loss = 0.0;
        size_t n_batches = 0;
        for (size_t begin = 0; begin < n_windows; begin += run.batch_size) {
            const size_t end = std::min(n_windows, begin + run.batch_size);
            Batch batch;
            batch.reserve(end - begin);
            for (size_t i = begin; i < end; ++i)
                batch.push_back({&train_set.windows[order[i]].signal, &epoch_labels[order[i]]});

            double batch_loss_value = 0.0;
            const ModelParams grads =
                param_gradients(batch, params, cfg, dropout_rng, &batch_loss_value);
            if (!std::isfinite(batch_loss_value))
                throw NumericError("training loss became non-finite; aborting");
            adamw_step(params, grads, opt);
            epoch_loss += batch_loss_value;
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(n_batches);

        const double val_loss = validation_loss(params, cfg, val_windows);
        if (!std::isfinite(val_loss))
            throw NumericError("validation loss became non-finite; aborting");

        const std::string path =
            (std::filesystem::path(run.checkpoint_dir) /
             ("ckpt_epoch_" + std::to_string(epoch) + ".mebm")).string();
        Checkpoint ckpt;
        ckpt.cfg = cfg;
        ckpt.params = params;
        ckpt.epoch = epoch;
        ckpt.validation_loss = val_loss;
        save_checkpoint(path, ckpt);
        store.offer({val_loss, epoch, path});

        if (log) log->push_back({epoch, epoch_loss, val_loss});
    }

    save_store_tsv(store, (std::filesystem::path(run.checkpoint_dir) / "store.tsv").string());
    return store;
}

}  // namespace mebm
