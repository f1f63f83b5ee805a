"""Paired-seed desk protocol on two moons with 20 labels.

Each seed trains sup_only, dct and cot_only from identical data, split and
initial views, so per-seed differences come from the loss terms alone.
"""

from __future__ import annotations

import json
import os
import tempfile
import time

from .config import parse_config
from .experiment import run_experiment

DESK_DATASET = {"generator": "two-moons", "params": {"n": 2000, "noise_sd": 0.1}, "n_labeled": 20}

# lr0 sits below the generic default: with 1 labeled row per batch and momentum
# 0.9, lr0 >= 0.02 kills the relu units of the supervised-only baseline.
DESK_HYPERPARAMS = {
    "total_epochs": 150,
    "warmup_epochs": 30,
    "lr0": 0.01,
    "fgsm_epsilon": 0.03,
    "lambda_cot_max": 10.0,
    "lambda_dif_max": 5.0,
    "batch_size": 100,
}

DESK_LAYER_DIMS = [2, 32, 32, 2]

MODES = ("sup_only", "dct", "cot_only")


def protocol_config(seed, mode, output_dir, hyperparams=None, layer_dims=None):
    return parse_config({
        "dataset": {**DESK_DATASET, "seed": seed, "test_seed": seed + 100, "split_seed": seed},
        "model": {"layer_dims": list(layer_dims or DESK_LAYER_DIMS)},
        "hyperparams": dict(hyperparams or DESK_HYPERPARAMS),
        "run": {"mode": mode, "seed": seed, "output_dir": output_dir},
    })


def run_protocol(seeds=range(5), modes=MODES, root=None, hyperparams=None, layer_dims=None):
    """Final-epoch numbers per seed and mode, plus CPU seconds per mode."""
    runs = {m: [] for m in modes}
    cpu = {m: 0.0 for m in modes}
    with tempfile.TemporaryDirectory() as scratch:
        base = root or scratch
        for seed in seeds:
            for mode in modes:
                cfg = protocol_config(seed, mode, os.path.join(base, f"{mode}_seed{seed}"),
                                      hyperparams, layer_dims)
                t0 = time.process_time()
                last = run_experiment(cfg).records[-1]
                cpu[mode] += time.process_time() - t0
                runs[mode].append({
                    "seed": seed,
                    "mean_err": last.mean_err,
                    "per_view_err": last.per_view_err,
                    "collapse": last.collapse,
                    "l_dif": last.l_dif,
                })
    settings = {
        "dataset": DESK_DATASET,
        "layer_dims": list(layer_dims or DESK_LAYER_DIMS),
        "hyperparams": dict(hyperparams or DESK_HYPERPARAMS),
    }
    return {"protocol": settings, "runs": runs, "cpu_seconds": cpu}


def summarize(result):
    runs = result["runs"]
    out = {"mean_err": {m: sum(r["mean_err"] for r in rs) / len(rs) for m, rs in runs.items()}}
    if "dct" in runs and "sup_only" in runs:
        out["dct_wins"] = sum(d["mean_err"] < s["mean_err"] for d, s in zip(runs["dct"], runs["sup_only"]))
    if "dct" in runs and "cot_only" in runs:
        pairs = list(zip(runs["cot_only"], runs["dct"]))
        out["collapse_wins"] = sum(c["collapse"] > d["collapse"] for c, d in pairs)
        out["l_dif_wins"] = sum(c["l_dif"] > d["l_dif"] for c, d in pairs)
    out["n_seeds"] = len(next(iter(runs.values())))
    return out


def write_results(result, path):
    doc = {"summary": summarize(result), **result}
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
