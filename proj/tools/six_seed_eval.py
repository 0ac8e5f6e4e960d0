#!/usr/bin/env python3
"""Run the train/sweep/infer/eval pipeline for training seeds 0-5 on shared
synthetic sessions and report mean +/- std of the test metrics.

Usage:
    python3 tools/six_seed_eval.py --mebm build/tools/mebm --workdir /tmp/six [extra flags...]

Extra flags are forwarded verbatim to every mebm invocation (model and
windowing keys). Synthetic data seeds are fixed (train 0, val 1, test 2) so
only the training seed varies across runs.
"""

import argparse
import math
import pathlib
import subprocess
import sys

DESK_FLAGS = [
    "--c_in", "8", "--d", "16", "--n_bm", "2", "--n_ms", "4", "--ms_kernels", "3,5",
    "--lstm_hidden", "16", "--n_channels", "8", "--n_informative", "4", "--batch_size", "4",
]


def run(mebm, args):
    result = subprocess.run([mebm] + args, capture_output=True, text=True)
    if result.returncode != 0:
        sys.stderr.write(result.stdout + result.stderr)
        raise SystemExit(f"mebm {' '.join(args[:1])} failed with code {result.returncode}")


def read_kv(path):
    out = {}
    for line in pathlib.Path(path).read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key] = value
    return out


def mean_std(values):
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--mebm", default="build/tools/mebm")
    parser.add_argument("--workdir", default="/tmp/mebm_six_seed")
    parser.add_argument("--duration_train", default="600")
    parser.add_argument("--duration_eval", default="120")
    parser.add_argument("--snr", default="2.0")
    parser.add_argument("extra", nargs="*", help="extra flags forwarded to mebm")
    opts = parser.parse_args()

    flags = DESK_FLAGS + opts.extra
    work = pathlib.Path(opts.workdir)
    work.mkdir(parents=True, exist_ok=True)

    datasets = {"train": ("0", opts.duration_train), "val": ("1", opts.duration_eval),
                "test": ("2", opts.duration_eval)}
    for name, (seed, duration) in datasets.items():
        d = work / name
        d.mkdir(exist_ok=True)
        run(opts.mebm, ["synth", "--seed", seed, "--duration_s", duration, "--snr", opts.snr,
                        "--out", str(d)] + flags)

    io_flags = [
        "--rec", str(work / "train/session.megr"), "--events", str(work / "train/session.events"),
        "--val_rec", str(work / "val/session.megr"),
        "--val_events", str(work / "val/session.events"),
    ]

    f1s, accs = [], []
    for seed in range(6):
        run_dir = work / f"run_seed{seed}"
        run_dir.mkdir(exist_ok=True)
        run(opts.mebm, ["train", "--seed", str(seed), "--out", str(run_dir)] + flags + io_flags)
        run(opts.mebm, ["sweep", "--store", str(run_dir / "store.tsv"), "--out", str(run_dir)]
            + flags + io_flags)
        selection = read_kv(run_dir / "selection.txt")
        ckpt = selection["checkpoint"]
        if "/" not in ckpt:
            ckpt = str(run_dir / ckpt)

        infer_dir = work / f"infer_seed{seed}"
        infer_dir.mkdir(exist_ok=True)
        run(opts.mebm, ["infer", "--ckpt", ckpt, "--rec", str(work / "test/session.megr"),
                        "--out", str(infer_dir)] + flags)
        eval_dir = work / f"eval_seed{seed}"
        eval_dir.mkdir(exist_ok=True)
        run(opts.mebm, ["eval", "--pred", str(infer_dir / "trace.txt"),
                        "--truth", str(work / "test/session.events"),
                        "--threshold", selection["threshold"], "--out", str(eval_dir)])
        report = read_kv(eval_dir / "report.txt")
        f1s.append(float(report["f1_macro"]))
        accs.append(float(report["acc_macro"]))
        print(f"seed {seed}: threshold={selection['threshold']} "
              f"f1_macro={report['f1_macro']} acc_macro={report['acc_macro']}")

    f1_mean, f1_std = mean_std(f1s)
    acc_mean, acc_std = mean_std(accs)
    print(f"six-seed summary: F1_macro = {100 * f1_mean:.2f} +/- {100 * f1_std:.2f} %, "
          f"Acc_macro = {100 * acc_mean:.2f} +/- {100 * acc_std:.2f} %")


if __name__ == "__main__":
    main()
