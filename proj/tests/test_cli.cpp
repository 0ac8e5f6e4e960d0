#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "mebm/eval.hpp"
#include "test_util.hpp"

using testutil::TempDir;

namespace {

#ifndef MEBM_CLI_PATH
#error "MEBM_CLI_PATH must point at the mebm binary"
#endif

int run_cli(const std::string& args, const std::string& stdout_file = "/dev/null") {
    const std::string cmd = std::string(MEBM_CLI_PATH) + " " + args + " > " + stdout_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream in(path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

size_t line_count(const std::string& path) {
    std::ifstream in(path);
    size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

// Shared micro-scale flags: tiny model, 2 s windows.
const char* kTinyFlags =
    " --c_in 4 --d 4 --n_bm 1 --n_ms 1 --ms_kernels 3 --lstm_hidden 2"
    " --window_s 2 --step_s 1 --n_channels 4 --n_informative 2";

}  // namespace

TEST_CASE("synth is deterministic per seed and validates its output directory") {
    TempDir a("cli_synth_a");
    TempDir b("cli_synth_b");
    CHECK(run_cli("synth --seed 0 --duration_s 10 --out " + a.path().string()) == 0);
    CHECK(run_cli("synth --seed 0 --duration_s 10 --out " + b.path().string()) == 0);
    CHECK(testutil::read_bytes(a.file("session.megr")) ==
          testutil::read_bytes(b.file("session.megr")));
    CHECK(testutil::read_bytes(a.file("session.events")) ==
          testutil::read_bytes(b.file("session.events")));

    CHECK(run_cli("synth --seed 0 --out /nonexistent_dir_for_mebm") == 3);
    CHECK(run_cli("synth --seed 0 --snr 0 --duration_s 5 --out " + a.path().string()) == 0);
}

TEST_CASE("unknown keys are rejected with exit code 2") {
    TempDir dir("cli_unknown");
    CHECK(run_cli("synth --bogus_key 1 --out " + dir.path().string()) == 2);
    CHECK(run_cli("info --nope 3") == 2);

    std::ofstream bad(dir.file("bad.cfg"));
    bad << "not_a_key = 5\n";
    bad.close();
    CHECK(run_cli("info --config " + dir.file("bad.cfg")) == 2);
}

TEST_CASE("config precedence is defaults, then file, then flags") {
    TempDir dir("cli_prec");
    {
        std::ofstream cfg(dir.file("run.cfg"));
        cfg << "# comment line\n";
        cfg << "epochs = 4\n";
        cfg << "lr = 0.5\n";
    }

    const std::string out = dir.file("info.txt");
    CHECK(run_cli("info", out) == 0);
    auto kv = read_kv(out);
    CHECK(kv.at("epochs") == "10");  // default

    CHECK(run_cli("info --config " + dir.file("run.cfg"), out) == 0);
    kv = read_kv(out);
    CHECK(kv.at("epochs") == "4");  // file layer
    CHECK(kv.at("lr") == "0.5");

    CHECK(run_cli("info --config " + dir.file("run.cfg") + " --epochs 2", out) == 0);
    kv = read_kv(out);
    CHECK(kv.at("epochs") == "2");  // flag layer
    CHECK(kv.at("lr") == "0.5");    // file layer survives for other keys
}

TEST_CASE("info reports the default parameter count") {
    TempDir dir("cli_info");
    const std::string out = dir.file("info.txt");
    CHECK(run_cli("info", out) == 0);
    const auto kv = read_kv(out);
    CHECK(kv.at("count_params") == "10217160");
}

TEST_CASE("the full pipeline runs at micro scale and is rerun-deterministic") {
    TempDir dir("cli_pipe");
    const std::string data = dir.file("");

    // two tiny sessions: train and validation
    std::filesystem::create_directory(dir.file("train_data"));
    std::filesystem::create_directory(dir.file("val_data"));
    REQUIRE(run_cli(std::string("synth --seed 0 --duration_s 30") + kTinyFlags + " --out " +
                    dir.file("train_data")) == 0);
    REQUIRE(run_cli(std::string("synth --seed 1 --duration_s 10") + kTinyFlags + " --out " +
                    dir.file("val_data")) == 0);

    const std::string common =
        std::string(kTinyFlags) + " --rec " + dir.file("train_data/session.megr") + " --events " +
        dir.file("train_data/session.events") + " --val_rec " + dir.file("val_data/session.megr") +
        " --val_events " + dir.file("val_data/session.events");

    SUBCASE("train writes an ascending store and a loss log") {
        std::filesystem::create_directory(dir.file("run"));
        REQUIRE(run_cli("train --seed 0 --epochs 2 --batch_size 8" + common + " --out " +
                        dir.file("run")) == 0);
        CHECK(line_count(dir.file("run/train_log.tsv")) == 2);

        const mebm::CheckpointStore store = mebm::load_store_tsv(dir.file("run/store.tsv"));
        REQUIRE(store.entries.size() == 2);
        CHECK(store.entries[0].validation_loss <= store.entries[1].validation_loss);

        SUBCASE("sweep emits 99-row tables and an on-grid selection") {
            REQUIRE(run_cli("sweep" + common + " --out " + dir.file("run")) == 0);
            for (const auto& e : store.entries)
                CHECK(line_count(dir.file("run/sweep_epoch_" + std::to_string(e.epoch) +
                                          ".tsv")) == 99);
            const auto sel = read_kv(dir.file("run/selection.txt"));
            const double tau = std::stod(sel.at("threshold"));
            CHECK(tau >= 0.01);
            CHECK(tau <= 0.99);
            const double grid = std::round(tau * 100.0) / 100.0;
            CHECK(tau == doctest::Approx(grid).epsilon(1e-9));
            // selection names the checkpoint relative to the run directory
            const std::string ckpt = sel.at("checkpoint").find('/') == std::string::npos
                                         ? dir.file("run/" + sel.at("checkpoint"))
                                         : sel.at("checkpoint");

            SUBCASE("infer and eval close the loop") {
                std::filesystem::create_directory(dir.file("inf"));
                // later flags override: point --rec at the validation session
                REQUIRE(run_cli("infer" + common + " --rec " + dir.file("val_data/session.megr") +
                                " --ckpt " + ckpt + " --threshold " + sel.at("threshold") +
                                " --out " + dir.file("inf")) == 0);
                // 10 s validation session at 100 Hz -> 1000 frames + header
                const std::string trace = dir.file("inf/trace.txt");
                CHECK(line_count(trace) == 1001);
                const mebm::ProbabilitySequence p = mebm::load_prob_trace(trace);
                for (double v : p.values) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
                // segmentation contains only 0/1
                std::ifstream seg(dir.file("inf/segmentation.txt"));
                std::string line;
                std::getline(seg, line);  // header
                while (std::getline(seg, line)) CHECK((line == "0" || line == "1"));

                // resampled output rate
                std::filesystem::create_directory(dir.file("inf50"));
                REQUIRE(run_cli("infer" + common + " --rec " + dir.file("val_data/session.megr") +
                                " --ckpt " + ckpt + " --rate 50 --out " + dir.file("inf50")) == 0);
                const mebm::ProbabilitySequence p50 =
                    mebm::load_prob_trace(dir.file("inf50/trace.txt"));
                CHECK(p50.frame_rate_hz == doctest::Approx(50.0));
                // 1000 frames at 100 Hz span 9.99 s -> round(9.99*50)+1
                CHECK(p50.size() == 501);

                std::filesystem::create_directory(dir.file("ev"));
                REQUIRE(run_cli(std::string("eval --pred ") + trace + " --truth " +
                                dir.file("val_data/session.events") + " --threshold " +
                                sel.at("threshold") + " --out " + dir.file("ev")) == 0);
                const auto report = read_kv(dir.file("ev/report.txt"));
                const double f1 = std::stod(report.at("f1_macro"));
                CHECK(f1 >= 0.0);
                CHECK(f1 <= 1.0);
                // counts sum to the frame total
                const auto total = std::stoull(report.at("tp")) + std::stoull(report.at("fp")) +
                                   std::stoull(report.at("fn")) + std::stoull(report.at("tn"));
                CHECK(total == 1000);
            }
        }

        SUBCASE("a rerun with the same seed reproduces the loss log bytes") {
            std::filesystem::create_directory(dir.file("run2"));
            REQUIRE(run_cli("train --seed 0 --epochs 2 --batch_size 8" + common + " --out " +
                            dir.file("run2")) == 0);
            CHECK(testutil::read_bytes(dir.file("run/train_log.tsv")) ==
                  testutil::read_bytes(dir.file("run2/train_log.tsv")));
        }
    }

    SUBCASE("a numeric blow-up exits with code 4") {
        std::filesystem::create_directory(dir.file("run_nan"));
        CHECK(run_cli("train --seed 0 --epochs 1 --batch_size 8 --lr nan" + common + " --out " +
                      dir.file("run_nan")) == 4);
    }

    SUBCASE("eval distinguishes malformed inputs from bad configuration") {
        std::ofstream bad(dir.file("bad_trace.txt"));
        bad << "0.5\n0.5\n";  // missing header
        bad.close();
        std::filesystem::create_directory(dir.file("ev_bad"));
        CHECK(run_cli(std::string("eval --pred ") + dir.file("bad_trace.txt") + " --truth " +
                      dir.file("val_data/session.events") + " --out " + dir.file("ev_bad")) == 3);

        mebm::ProbabilitySequence p;
        p.frame_rate_hz = 100.0;
        p.values.assign(10, 0.5);
        mebm::save_prob_trace(p, dir.file("ok_trace.txt"));
        CHECK(run_cli(std::string("eval --pred ") + dir.file("ok_trace.txt") + " --truth " +
                      dir.file("val_data/session.events") + " --threshold 1.5 --out " +
                      dir.file("ev_bad")) == 2);
    }
}

TEST_CASE("eval reports perfect predictions as f1_macro=1.000000") {
    TempDir dir("cli_perfect");
    // truth: one interval covering frames 40..59 of 100
    {
        std::ofstream ev(dir.file("truth.events"));
        ev << "0.4\t0.6\n";
    }
    mebm::ProbabilitySequence p;
    p.frame_rate_hz = 100.0;
    p.values.assign(100, 0.0);
    for (size_t k = 40; k < 60; ++k) p.values[k] = 1.0;
    mebm::save_prob_trace(p, dir.file("trace.txt"));

    std::filesystem::create_directory(dir.file("out"));
    REQUIRE(run_cli(std::string("eval --pred ") + dir.file("trace.txt") + " --truth " +
                    dir.file("truth.events") + " --out " + dir.file("out")) == 0);
    const auto kv = read_kv(dir.file("out/report.txt"));
    CHECK(kv.at("f1_macro") == "1.000000");
    CHECK(kv.at("acc_macro") == "1.000000");
}
