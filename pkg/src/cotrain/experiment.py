"""Config-driven runs: data preparation, the training loop, metrics and checkpoints."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

from .checkpoint import save_views
from .config import ExperimentConfig
from .data import GENERATORS, Dataset, SplitSpec, load_csv, make_bundles, save_csv, split
from .errors import ConfigError
from .metrics import MetricsSink, probe_subset
from .nn_core import init_view
from .trainer import (
    TrainState,
    dry_losses,
    members_for,
    pretrain,
    snapshot,
    train_epoch,
)

log = logging.getLogger(__name__)


def generate(name, params, seed):
    if name not in GENERATORS:
        raise ConfigError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}",
                          field="dataset.generator")
    try:
        return GENERATORS[name](**params, seed=seed)
    except TypeError as exc:
        raise ConfigError(str(exc), field="dataset.params") from None


def build_datasets(cfg):
    """(train, test) for the dataset block; test falls back to U's shadow labels."""
    ds = cfg.dataset
    if ds.csv is not None:
        train = load_csv(ds.csv)
    else:
        train = generate(ds.generator, ds.params, ds.seed)
    if ds.test_csv is not None:
        test = load_csv(ds.test_csv, num_classes=train.num_classes)
    elif ds.csv is None:
        test = generate(ds.generator, {**ds.params, "n": ds.n_test}, ds.test_seed)
    else:
        test = None
    return train, test


@dataclass
class RunResult:
    records: list
    views: list
    output_dir: str
    metrics_path: str


def run_experiment(cfg: ExperimentConfig, output_dir=None):
    """Train per ``cfg`` and write config echo, test set, metrics and checkpoints."""
    out = output_dir or cfg.run.output_dir
    cfg = cfg.with_run(output_dir=os.path.abspath(out))
    if cfg.run.metrics_path is None or output_dir is not None:
        cfg = cfg.with_run(metrics_path=os.path.join(cfg.run.output_dir, "metrics.csv"))
    os.makedirs(cfg.run.output_dir, exist_ok=True)
    with open(os.path.join(cfg.run.output_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())

    hp = cfg.effective_hyperparams()
    train, test = build_datasets(cfg)
    if not train.fully_labeled:
        raise ConfigError("training CSV must be fully labeled before splitting", field="dataset.csv")
    sup, unl = split(train, SplitSpec(cfg.dataset.n_labeled, cfg.dataset.split_seed))
    if test is None:
        test = Dataset(unl.features, unl.shadow_labels, unl.num_classes, unl.feature_range)
    save_csv(test, os.path.join(cfg.run.output_dir, "test.csv"))

    dims = cfg.model.layer_dims
    if dims[0] != train.dim or dims[-1] != train.num_classes:
        raise ConfigError(
            f"{dims} incompatible with data (dim {train.dim}, {train.num_classes} classes)",
            field="model.layer_dims",
        )
    seeds = cfg.view_seeds()
    members = members_for([init_view(dims, s) for s in seeds], hp)
    clip = train.feature_range

    state = TrainState(seed=cfg.run.seed)
    if cfg.run.pretrain_epochs:
        log.info("pretraining %d views for %d epochs", len(members), cfg.run.pretrain_epochs)
        pretrain(members, sup, cfg.run.pretrain_epochs, hp, [s + 7919 for s in seeds], clip)
        state.warmup = False

    bundles = make_bundles(sup, unl, hp.n_views, hp.batch_size, cfg.run.seed)
    probe = probe_subset(test, cfg.run.probe_size, cfg.run.probe_seed)
    sink = MetricsSink(cfg.run.metrics_path, hp.n_views)
    ckpt_root = os.path.join(cfg.run.output_dir, "checkpoints")

    records = []
    rec = snapshot(0, members, dry_losses(members, bundles, hp, state, clip), test, probe,
                   hp.fgsm_epsilon, clip)
    sink.write(rec)
    records.append(rec)
    for _ in range(hp.total_epochs):
        losses = train_epoch(members, bundles, cfg.run.schedule, hp, state, clip, cfg.run.parallel)
        rec = snapshot(state.epoch, members, losses, test, probe, hp.fgsm_epsilon, clip)
        sink.write(rec)
        records.append(rec)
        log.info(
            "epoch %d err=%.4f l_sup=%.4f l_cot=%.4f l_dif=%.4f collapse=%.3f",
            rec.epoch, rec.mean_err, rec.l_sup, rec.l_cot, rec.l_dif, rec.collapse,
        )
        if cfg.run.checkpoint_interval and state.epoch % cfg.run.checkpoint_interval == 0:
            save_views([m.model for m in members], os.path.join(ckpt_root, f"epoch_{state.epoch:04d}"))
    save_views([m.model for m in members], os.path.join(ckpt_root, "final"))
    return RunResult(records, [m.model for m in members], cfg.run.output_dir, cfg.run.metrics_path)


def diagnose(cfg: ExperimentConfig, output_dir=None):
    """Run cot_only then dct with identical seeds; return the summary dict."""
    root = os.path.abspath(output_dir or cfg.run.output_dir)
    summary = {}
    for mode in ("cot_only", "dct"):
        sub = cfg.with_run(mode=mode, metrics_path=None)
        res = run_experiment(sub, os.path.join(root, mode))
        last = res.records[-1]
        summary[mode] = {
            "final_epoch": last.epoch,
            "collapse": last.collapse,
            "mean_err": last.mean_err,
            "l_dif": last.l_dif,
            "metrics": res.metrics_path,
        }
    summary["collapse_ordering_holds"] = summary["cot_only"]["collapse"] > summary["dct"]["collapse"]
    with open(os.path.join(root, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
