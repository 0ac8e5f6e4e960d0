#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "mebm/pipeline.hpp"
#include "mebm/synth.hpp"
#include "mebm/train.hpp"
#include "test_util.hpp"

using namespace mebm;
using testutil::TempDir;

namespace {

ModelParams scalar_param(double value) {
    ModelParams p;
    Tensor t;
    t.name = "w";
    t.shape = {1};
    t.values = {value};
    t.decay = true;
    p.tensors.push_back(t);
    return p;
}

ModelParams scalar_grad(double value) {
    ModelParams g = scalar_param(value);
    return g;
}

ProbabilitySequence probs(std::vector<double> values) {
    ProbabilitySequence p;
    p.frame_rate_hz = 100.0;
    p.values = std::move(values);
    return p;
}

LabelVector labels(std::vector<uint8_t> values) {
    LabelVector y;
    y.frame_rate_hz = 100.0;
    y.values = std::move(values);
    return y;
}

}  // namespace

TEST_CASE("mse_loss worked examples") {
    CHECK(mse_loss(probs({0.0, 1.0, 0.5}), labels({0, 1, 1})) ==
          doctest::Approx(0.25 / 3.0).epsilon(1e-12));
    CHECK(mse_loss(probs({0.0, 1.0}), labels({0, 1})) == 0.0);
    CHECK(mse_loss(probs({0.5, 0.5}), labels({0, 1})) == doctest::Approx(0.25));
    CHECK(mse_loss(probs({1.0, 0.0}), labels({0, 1})) == doctest::Approx(1.0));
    CHECK_THROWS_AS(mse_loss(probs({0.5}), labels({0, 1})), DimensionError);
}

TEST_CASE("adamw first step moves a fresh scalar by about -lr") {
    ModelParams p = scalar_param(0.0);
    AdamWHyperparams hp;
    hp.weight_decay = 0.0;
    OptimizerState state = make_optimizer(p, hp);
    adamw_step(p, scalar_grad(1.0), state);
    CHECK(p.tensors[0].values[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(state.step_count == 1);
}

TEST_CASE("adamw zero gradient leaves parameters unchanged without decay") {
    ModelParams p = scalar_param(0.7);
    AdamWHyperparams hp;
    hp.weight_decay = 0.0;
    OptimizerState state = make_optimizer(p, hp);
    adamw_step(p, scalar_grad(0.0), state);
    CHECK(p.tensors[0].values[0] == 0.7);
}

TEST_CASE("adamw zero gradient with decay is pure shrinkage") {
    ModelParams p = scalar_param(0.7);
    AdamWHyperparams hp;  // wd = 0.01, lr = 1e-3
    OptimizerState state = make_optimizer(p, hp);
    adamw_step(p, scalar_grad(0.0), state);
    CHECK(p.tensors[0].values[0] == doctest::Approx(0.7 * (1.0 - 1e-3 * 0.01)).epsilon(1e-15));

    SUBCASE("bias tensors are exempt from decay") {
        ModelParams b = scalar_param(0.7);
        b.tensors[0].decay = false;
        OptimizerState sb = make_optimizer(b, hp);
        adamw_step(b, scalar_grad(0.0), sb);
        CHECK(b.tensors[0].values[0] == 0.7);
    }
}

TEST_CASE("adamw fresh-state update direction is -sign(g)") {
    for (double g : {2.5, -0.3, 1e-3, -42.0}) {
        ModelParams p = scalar_param(0.0);
        AdamWHyperparams hp;
        hp.weight_decay = 0.0;
        OptimizerState state = make_optimizer(p, hp);
        adamw_step(p, scalar_grad(g), state);
        if (g > 0) CHECK(p.tensors[0].values[0] < 0.0);
        if (g < 0) CHECK(p.tensors[0].values[0] > 0.0);
    }
}

TEST_CASE("adamw rejects non-finite gradients with the tensor name") {
    ModelParams p = scalar_param(0.0);
    OptimizerState state = make_optimizer(p, {});
    ModelParams g = scalar_grad(std::numeric_limits<double>::infinity());
    CHECK_THROWS_WITH_AS(adamw_step(p, g, state), doctest::Contains("w"), NumericError);
}

TEST_CASE("checkpoint store keeps the five best epochs from the worked sequence") {
    const std::vector<double> losses = {0.9, 0.5, 0.7, 0.4, 0.6, 0.3, 0.8};
    CheckpointStore store;
    for (size_t e = 0; e < losses.size(); ++e)
        store.offer({losses[e], static_cast<uint32_t>(e + 1), ""}, false);

    REQUIRE(store.entries.size() == 5);
    const std::vector<uint32_t> expected_epochs = {6, 4, 2, 5, 3};
    const std::vector<double> expected_losses = {0.3, 0.4, 0.5, 0.6, 0.7};
    for (size_t i = 0; i < 5; ++i) {
        CHECK(store.entries[i].epoch == expected_epochs[i]);
        CHECK(store.entries[i].validation_loss == doctest::Approx(expected_losses[i]));
    }
}

TEST_CASE("checkpoint store retains everything under capacity and breaks ties by epoch") {
    CheckpointStore store;
    store.offer({0.5, 1, ""}, false);
    store.offer({0.4, 2, ""}, false);
    store.offer({0.5, 3, ""}, false);
    REQUIRE(store.entries.size() == 3);
    CHECK(store.entries[0].epoch == 2);
    CHECK(store.entries[1].epoch == 1);  // earlier epoch wins the 0.5 tie
    CHECK(store.entries[2].epoch == 3);
}

TEST_CASE("checkpoint store equals sort-and-truncate on random sequences") {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 1 + rng.bounded(12);
        std::vector<std::pair<double, uint32_t>> ref;
        CheckpointStore store;
        for (uint32_t e = 1; e <= n; ++e) {
            const double loss = std::round(rng.uniform() * 10.0) / 10.0;  // force ties
            ref.emplace_back(loss, e);
            store.offer({loss, e, ""}, false);
        }
        std::stable_sort(ref.begin(), ref.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        ref.resize(std::min<size_t>(5, ref.size()));
        REQUIRE(store.entries.size() == ref.size());
        for (size_t i = 0; i < ref.size(); ++i) {
            CHECK(store.entries[i].validation_loss == ref[i].first);
            CHECK(store.entries[i].epoch == ref[i].second);
        }
    }
}

TEST_CASE("store tsv round-trips") {
    TempDir dir("store");
    CheckpointStore store;
    store.offer({0.25, 3, "a.mebm"}, false);
    store.offer({0.5, 1, "b.mebm"}, false);
    const std::string path = dir.file("store.tsv");
    save_store_tsv(store, path);
    const CheckpointStore loaded = load_store_tsv(path);
    REQUIRE(loaded.entries.size() == 2);
    CHECK(loaded.entries[0].epoch == 3);
    CHECK(loaded.entries[0].validation_loss == 0.25);
    // relative entries resolve against the store's directory
    CHECK(std::filesystem::path(loaded.entries[1].path).filename() == "b.mebm");
    CHECK(std::filesystem::path(loaded.entries[1].path).parent_path() == dir.path());
}

namespace {

// Small, easily learnable setup shared by the loop tests.
struct DeskRun {
    TrainingSet train_set;
    std::vector<TrainingWindow> val_windows;
    ModelConfig mcfg;
};

DeskRun make_desk_run() {
    SynthConfig synth;
    synth.n_channels = 4;
    synth.n_informative = 2;
    synth.duration_s = 60.0;
    synth.snr = 2.0;
    synth.seed = 0;
    const auto [raw, events] = generate_session(synth);
    const Recording prepped = preprocess_session(raw, 100.0);

    WindowingConfig wcfg;
    wcfg.window_s = 2.0;
    wcfg.step_s = 1.0;
    wcfg.jitter_frames = 2;

    SynthConfig val_synth = synth;
    val_synth.seed = 1;
    val_synth.duration_s = 20.0;
    const auto [raw_val, events_val] = generate_session(val_synth);
    const Recording prepped_val = preprocess_session(raw_val, 100.0);

    DeskRun run;
    run.train_set = make_training_set(prepped, events, wcfg, "train");
    run.val_windows = windowed_session(prepped_val, events_val, wcfg, "val");
    run.mcfg.c_in = 4;
    run.mcfg.d = 8;
    run.mcfg.n_bm = 1;
    run.mcfg.n_ms = 1;
    run.mcfg.ms_kernel_sizes = {3};
    run.mcfg.lstm_hidden = 4;
    run.mcfg.pool_window = 31;
    run.mcfg.pool_stride = 15;
    return run;
}

}  // namespace

TEST_CASE("validation loss is the mean of per-window losses and is repeatable") {
    const DeskRun run = make_desk_run();
    const ModelParams params = init_params(run.mcfg, 7);
    const std::vector<TrainingWindow> two = {run.val_windows[0], run.val_windows[1]};

    const double a = validation_loss(params, run.mcfg, {run.val_windows[0]});
    const double b = validation_loss(params, run.mcfg, {run.val_windows[1]});
    const double both = validation_loss(params, run.mcfg, two);
    CHECK(both == doctest::Approx((a + b) / 2.0).epsilon(1e-15));
    CHECK(validation_loss(params, run.mcfg, two) == both);

    SUBCASE("all-zero weights predict 0.5 so every window loses 0.25") {
        ModelParams zero = init_params(run.mcfg, 0);
        for (auto& t : zero.tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
        CHECK(validation_loss(zero, run.mcfg, two) == doctest::Approx(0.25).epsilon(1e-12));
    }
}

TEST_CASE("the training loop learns, checkpoints, and reruns identically") {
    const DeskRun run = make_desk_run();
    TempDir dir_a("train_a");
    TempDir dir_b("train_b");

    RunConfig rc;
    rc.epochs = 3;
    rc.batch_size = 8;
    rc.seed = 0;
    rc.checkpoint_dir = dir_a.file("ckpts");

    std::vector<EpochLog> log_a;
    const CheckpointStore store_a = train(run.train_set, run.val_windows, run.mcfg, rc, &log_a);

    REQUIRE(log_a.size() == 3);
    CHECK(log_a[2].train_loss < log_a[0].train_loss);
    CHECK(store_a.entries.size() == 3);  // capacity 5, three epochs
    for (size_t i = 1; i < store_a.entries.size(); ++i)
        CHECK(store_a.entries[i - 1].validation_loss <= store_a.entries[i].validation_loss);

    // second run, same seed: identical trajectories and checkpoint bytes
    rc.checkpoint_dir = dir_b.file("ckpts");
    std::vector<EpochLog> log_b;
    const CheckpointStore store_b = train(run.train_set, run.val_windows, run.mcfg, rc, &log_b);
    REQUIRE(log_b.size() == log_a.size());
    for (size_t e = 0; e < log_a.size(); ++e) {
        CHECK(log_a[e].train_loss == log_b[e].train_loss);
        CHECK(log_a[e].validation_loss == log_b[e].validation_loss);
    }
    for (size_t i = 0; i < store_a.entries.size(); ++i)
        CHECK(testutil::read_bytes(store_a.entries[i].path) ==
              testutil::read_bytes(store_b.entries[i].path));

    // the store file lists ascending losses and existing paths
    const CheckpointStore reloaded =
        load_store_tsv((std::filesystem::path(rc.checkpoint_dir) / "store.tsv").string());
    REQUIRE(reloaded.entries.size() == store_b.entries.size());
    for (const auto& e : reloaded.entries) CHECK(std::filesystem::exists(e.path));
}

TEST_CASE("training aborts with a numeric error when the loss explodes") {
    const DeskRun run = make_desk_run();
    TempDir dir("train_nan");
    RunConfig rc;
    rc.epochs = 1;
    rc.batch_size = 4;
    rc.seed = 0;
    rc.checkpoint_dir = dir.file("ckpts");
    rc.optimizer.lr = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train(run.train_set, run.val_windows, run.mcfg, rc, nullptr), NumericError);
}
