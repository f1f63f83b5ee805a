"""Co-training loss terms in nats.

Every log is taken of probabilities clamped to [PROB_FLOOR, 1]. Functions accept
either :class:`~cotrain.nn_core.Tensor` (gradients tracked) or plain arrays.
Rows are the batch axis and the last axis is the class axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn_core import Tensor, as_tensor, clamp, log

PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class LossBreakdown:
    l_sup: float
    l_cot: float
    l_dif: float
    total: float
    lambda_cot: float = 0.0
    lambda_dif: float = 0.0


def _safe_log(p):
    return log(clamp(p, PROB_FLOOR, 1.0))


def _check_same(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def cross_entropy(target, pred):
    """-sum_c target_c * ln(pred_c), per row. ``target`` is treated as a constant."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    pred = as_tensor(pred)
    _check_same(target, pred, "cross_entropy")
    return -(_safe_log(pred) * target).sum(axis=-1)


def entropy(p):
    """-sum_c p_c ln p_c per row, with 0 ln 0 = 0."""
    p = as_tensor(p)
    return -(p * _safe_log(p)).sum(axis=-1)


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def sup_loss(probs, labels, batch_size=None):
    """Summed cross entropy against hard labels divided by ``batch_size``.

    ``batch_size`` defaults to the number of rows (plain mean).
    """
    probs = as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.data.ndim != 2 or len(labels) != probs.shape[0]:
        raise ShapeError(f"sup_loss: {len(labels)} labels for probs of shape {probs.shape}")
    n = len(labels) if batch_size is None else batch_size
    return cross_entropy(one_hot(labels, probs.shape[1]), probs).sum() * (1.0 / n)


def cot_loss(p1, p2):
    """Batch-mean Jensen-Shannon divergence between two prediction batches."""
    p1, p2 = as_tensor(p1), as_tensor(p2)
    _check_same(p1.data, p2.data, "cot_loss")
    m = (p1 + p2) * 0.5
    jsd = entropy(m) - (entropy(p1) + entropy(p2)) * 0.5
    return jsd.mean()


def dif_loss(p1_x, p1_on_g2, p2_x, p2_on_g1):
    """View-difference loss over a batch of ``b + |b_u|`` rows.

    ``p1_x`` and ``p2_x`` (clean predictions) are fixed targets; only the
    predictions on adversarial inputs receive gradient. The sum of both
    cross entropies is divided by the row count.
    """
    p1_x = np.asarray(p1_x.data if isinstance(p1_x, Tensor) else p1_x)
    p2_x = np.asarray(p2_x.data if isinstance(p2_x, Tensor) else p2_x)
    p1_on_g2, p2_on_g1 = as_tensor(p1_on_g2), as_tensor(p2_on_g1)
    for a, b in ((p1_x, p2_on_g1.data), (p2_x, p1_on_g2.data), (p1_x, p2_x)):
        _check_same(a, b, "dif_loss")
    n = p1_x.shape[0]
    return (cross_entropy(p1_x, p2_on_g1).sum() + cross_entropy(p2_x, p1_on_g2).sum()) * (1.0 / n)


def check_lambdas(lambda_cot, lambda_dif):
    if lambda_cot < 0:
        raise ConfigError(f"must be >= 0, got {lambda_cot}", field="lambda_cot")
    if lambda_dif < 0:
        raise ConfigError(f"must be >= 0, got {lambda_dif}", field="lambda_dif")


def total_loss(l_sup, l_cot, l_dif, lambda_cot, lambda_dif):
    """l_sup + lambda_cot * l_cot + lambda_dif * l_dif.

    Zero-weighted terms are left out so they add nothing to a gradient graph.
    """
    check_lambdas(lambda_cot, lambda_dif)
    total = l_sup
    if lambda_cot:
        total = total + lambda_cot * l_cot
    if lambda_dif:
        total = total + lambda_dif * l_dif
    return total
