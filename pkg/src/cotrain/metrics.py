"""Per-epoch diagnostics: errors, agreement, adversarial transfer and the metrics CSV."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .adversarial import fgsm
from .errors import ConfigError, ParseError
from .nn_core import predict

TAIL_COLUMNS = ["l_sup", "l_cot", "l_dif", "agreement", "collapse", "lr", "lambda_cot", "lambda_dif"]


@dataclass
class MetricsRecord:
    epoch: int
    per_view_err: list
    mean_err: float
    l_sup: float
    l_cot: float
    l_dif: float
    agreement: float
    collapse: float
    lr: float
    lambda_cot: float
    lambda_dif: float
    transfer_matrix: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def n_views(self):
        return len(self.per_view_err)

    def row(self):
        vals = [self.mean_err, *self.per_view_err, self.l_sup, self.l_cot, self.l_dif,
                self.agreement, self.collapse, self.lr, self.lambda_cot, self.lambda_dif]
        return [str(self.epoch)] + [format(float(v), ".17g") for v in vals]


def header(n_views):
    return ["epoch", "mean_err"] + [f"err_v{i}" for i in range(n_views)] + TAIL_COLUMNS


def agreement_rate(views, x):
    """Fraction of rows on which every view predicts the same class."""
    preds = np.stack([predict(v, x) for v in views])
    return float(np.mean(np.all(preds == preds[0], axis=0)))


def transfer_matrix(views, probe, epsilon, clip=(0.0, 1.0)):
    """Entry (i, j): rate at which FGSM against view i flips view j."""
    x = probe.features if hasattr(probe, "features") else np.asarray(probe)
    n = len(views)
    out = np.zeros((n, n))
    if len(x) == 0:
        return out
    clean = [predict(v, x) for v in views]
    for i in range(n):
        # one attack per source view, scored against every victim
        adv = fgsm(views[i], x, None, epsilon, clip).x_adv
        for j in range(n):
            out[i, j] = np.mean(predict(views[j], adv) != clean[j])
    return out


def collapse_score(views, probe, epsilon, clip=(0.0, 1.0), matrix=None):
    """Mean off-diagonal transfer rate; 1 means every attack on one view fools the others."""
    n = len(views)
    if n < 2:
        raise ConfigError("collapse_score needs at least 2 views")
    m = transfer_matrix(views, probe, epsilon, clip) if matrix is None else matrix
    return float((m.sum() - np.trace(m)) / (n * (n - 1)))


def probe_subset(dataset, size=256, seed=0):
    """Fixed seeded subsample of at most ``size`` rows."""
    if len(dataset) <= size:
        return dataset
    rows = np.sort(np.random.default_rng(seed).choice(len(dataset), size, replace=False))
    return dataset.subset(rows)


class MetricsSink:
    """Append-only metrics CSV. The header is written on open."""

    def __init__(self, path, n_views):
        self.path = os.fspath(path)
        self.n_views = n_views
        try:
            with open(self.path, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerow(header(n_views))
        except OSError as exc:
            raise OSError(f"cannot write metrics to {self.path}: {exc.strerror}") from exc

    def write(self, record):
        if record.n_views != self.n_views:
            raise ConfigError(f"record has {record.n_views} views, sink expects {self.n_views}")
        try:
            with open(self.path, "a", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerow(record.row())
        except OSError as exc:
            raise OSError(f"cannot append metrics to {self.path}: {exc.strerror}") from exc


def write_metrics(record, sink):
    sink.write(record)


def read_metrics(path):
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        head = next(reader)
    except StopIteration:
        raise ParseError("missing header", line=1, path=path) from None
    n_views = sum(1 for h in head if h.startswith("err_v"))
    expected = header(n_views)
    for col in expected:
        if col not in head:
            raise ParseError(f"missing column {col!r}", line=1, path=path)
    pos = {name: k for k, name in enumerate(head)}
    records = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(head):
            raise ParseError(f"expected {len(head)} fields, got {len(row)}", line=lineno, path=path)
        try:
            get = lambda name: float(row[pos[name]])  # noqa: E731
            records.append(
                MetricsRecord(
                    epoch=int(row[pos["epoch"]]),
                    per_view_err=[get(f"err_v{i}") for i in range(n_views)],
                    mean_err=get("mean_err"),
                    l_sup=get("l_sup"),
                    l_cot=get("l_cot"),
                    l_dif=get("l_dif"),
                    agreement=get("agreement"),
                    collapse=get("collapse"),
                    lr=get("lr"),
                    lambda_cot=get("lambda_cot"),
                    lambda_dif=get("lambda_dif"),
                )
            )
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
    return records
