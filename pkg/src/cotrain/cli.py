"""Command-line entry point.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage/config error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import load_views
from .config import load_config
from .data import GENERATORS, load_csv, save_csv
from .errors import ConfigError, DivergenceError, ParseError
from .experiment import diagnose, generate, run_experiment
from .protocol import run_protocol, summarize, write_results
from .trainer import evaluate

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("cotrain")


def _setup_logging():
    level = os.environ.get("COTRAIN_LOG", "info").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def cmd_gen_data(args):
    params = {"n": args.n}
    if args.generator == "two-moons":
        params["noise_sd"] = args.noise
    else:
        params.update(num_classes=args.classes, separation=args.separation, dim=args.dim)
    ds = generate(args.generator, params, args.seed)
    save_csv(ds, args.out)
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    print(f"wrote {len(ds)} rows to {args.out}")
    for k, c in enumerate(counts):
        print(f"  class {k}: {c}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    res = run_experiment(cfg, args.out)
    last = res.records[-1]
    print(f"finished epoch {last.epoch}: mean error {last.mean_err:.4f}; metrics in {res.metrics_path}")
    return 0


def cmd_eval(args):
    views = load_views(args.checkpoint_dir)
    test = load_csv(args.test_csv, num_classes=views[0].num_classes)
    res = evaluate(views, test)
    if args.json:
        print(json.dumps({"per_view": res.per_view, "mean": res.mean}))
    else:
        for i, e in enumerate(res.per_view):
            print(f"view {i}: error {e:.6f}")
        print(f"mean: {res.mean:.6f}")
    return 0


def cmd_diagnose(args):
    cfg = load_config(args.config)
    summary = diagnose(cfg, args.out)
    for mode in ("cot_only", "dct"):
        s = summary[mode]
        print(f"{mode:8s} epoch {s['final_epoch']}: collapse {s['collapse']:.4f} "
              f"mean_err {s['mean_err']:.4f} l_dif {s['l_dif']:.4f}")
    verdict = "holds" if summary["collapse_ordering_holds"] else "does not hold"
    print(f"collapse(cot_only) > collapse(dct): {verdict}")
    return 0


def cmd_protocol(args):
    result = run_protocol(range(args.seeds), root=args.runs)
    write_results(result, args.out)
    summary = summarize(result)
    for mode, err in summary["mean_err"].items():
        print(f"{mode:8s} mean error {err:.4f}")
    n = summary["n_seeds"]
    print(f"dct beats sup_only in {summary['dct_wins']}/{n} seeds")
    print(f"collapse(cot_only) > collapse(dct) in {summary['collapse_wins']}/{n} seeds")
    print(f"l_dif(cot_only) > l_dif(dct) in {summary['l_dif_wins']}/{n} seeds")
    print(f"results written to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="cotrain", description="Deep co-training on small datasets.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    g.add_argument("generator", choices=sorted(GENERATORS))
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--noise", type=float, default=0.1, help="two-moons jitter sd")
    g.add_argument("--classes", type=int, default=3, help="gaussian-blobs class count")
    g.add_argument("--separation", type=float, default=3.0)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="run a training config")
    t.add_argument("config")
    t.add_argument("--out", help="override run.output_dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate checkpoints on a labeled CSV")
    e.add_argument("checkpoint_dir")
    e.add_argument("test_csv")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("diagnose", help="compare cot_only and dct collapse")
    d.add_argument("config")
    d.add_argument("--out", help="override run.output_dir")
    d.set_defaults(func=cmd_diagnose)

    r = sub.add_parser("protocol", help="run the paired-seed two-moons protocol and write a results file")
    r.add_argument("--seeds", type=int, default=5)
    r.add_argument("--out", default="results/desk_protocol.json")
    r.add_argument("--runs", help="keep run directories here instead of a temporary directory")
    r.set_defaults(func=cmd_protocol)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
