"""FGSM adversarial examples and cross-view transfer rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .losses import cross_entropy, one_hot
from .nn_core import Tensor, forward, predict


@dataclass
class AdvBatch:
    x_adv: np.ndarray
    source_view: int | None
    epsilon: float


def fgsm(model, x, labels=None, epsilon=0.02, clip=(0.0, 1.0), source_view=None):
    """One signed-gradient step of size ``epsilon`` that increases the model's loss.

    Rows with a label >= 0 are attacked against that label; rows with
    ``labels`` None or -1 against the model's own argmax prediction.
    The model's parameters and gradients are left untouched.
    """
    if epsilon < 0:
        raise ConfigError(f"must be >= 0, got {epsilon}", field="epsilon")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match view input dim {model.in_dim}")

    xt = Tensor(x, requires_grad=True)
    probs = forward(model, xt, track_params=False)
    target = np.argmax(probs.data, axis=1)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (len(x),):
            raise ShapeError(f"{len(labels)} labels for {len(x)} rows")
        target = np.where(labels >= 0, labels, target)
    loss = cross_entropy(one_hot(target, model.num_classes), probs).sum()
    loss.backward()

    x_adv = x + epsilon * np.sign(xt.grad)
    if clip is not None:
        x_adv = np.clip(x_adv, clip[0], clip[1])
    return AdvBatch(x_adv, source_view, float(epsilon))


def transfer_rate(attacker, victim, x, epsilon, clip=(0.0, 1.0)):
    """Fraction of rows whose victim argmax changes under FGSM built against ``attacker``."""
    if attacker.layer_dims[0] != victim.layer_dims[0] or attacker.num_classes != victim.num_classes:
        raise ShapeError("attacker and victim must share input and output dims")
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return 0.0
    adv = fgsm(attacker, x, None, epsilon, clip).x_adv
    return float(np.mean(predict(victim, adv) != predict(victim, x)))
