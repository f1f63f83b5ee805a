"""Deep co-training loop: one pair iteration, multi-view epochs, schedules and pretraining."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adversarial import fgsm
from .config import HyperParams
from .data import DataStream, Dataset, iterations_per_epoch
from .errors import ConfigError, DivergenceError
from .losses import LossBreakdown, check_lambdas, cot_loss, dif_loss, sup_loss, total_loss
from .metrics import MetricsRecord, agreement_rate, collapse_score, transfer_matrix
from .nn_core import OptimizerState, forward, predict, sgd_step

log = logging.getLogger(__name__)


def warmup_lambda(epoch, lambda_max, warmup_epochs=80):
    """lambda_max * exp(-5 (1 - T/W)^2) for T <= W, lambda_max afterwards."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}", field="epoch")
    if warmup_epochs <= 0 or epoch > warmup_epochs:
        return float(lambda_max)
    return lambda_max * math.exp(-5.0 * (1.0 - epoch / warmup_epochs) ** 2)


def cosine_lr(epoch, lr0, total_epochs):
    """lr0 * (1 + cos((T - 1) pi / total)) for epochs T = 1..total."""
    if not 1 <= epoch <= total_epochs:
        raise ConfigError(f"epoch {epoch} outside [1, {total_epochs}]", field="epoch")
    return lr0 * (1.0 + math.cos((epoch - 1) * math.pi / total_epochs))


@dataclass
class Member:
    """A view together with its optimizer state."""

    model: object
    opt: OptimizerState


def members_for(views, hp):
    return [Member(v, OptimizerState.for_model(v, hp.momentum, hp.weight_decay)) for v in views]


def _joint(x_s, x_u):
    return np.concatenate([x_s, x_u], axis=0)


def compute_losses(view_a, view_b, batches, epsilon, clip=(0.0, 1.0), track=(True, True, True)):
    """Forward pass of one co-training iteration; returns (l_sup, l_cot, l_dif) tensors.

    ``track`` selects which terms build a gradient graph through the parameters.
    Untracked terms are still evaluated so they can be logged.
    """
    ba, bb = batches
    x_u = ba.x_u
    b = len(ba.y_s)
    if len(bb.y_s) != b or not np.array_equal(bb.x_u, x_u):
        raise ConfigError("batches must come from one bundle (equal |d_s|, shared d_u)")
    unl = np.full(len(x_u), -1, dtype=np.int64)

    xa, xb = _joint(ba.x_s, x_u), _joint(bb.x_s, x_u)
    g_a = fgsm(view_a, xa, np.concatenate([ba.y_s, unl]), epsilon, clip, source_view=0).x_adv
    g_b = fgsm(view_b, xb, np.concatenate([bb.y_s, unl]), epsilon, clip, source_view=1).x_adv

    t_sup, t_cot, t_dif = track
    live = t_sup or t_cot
    pa_s = forward(view_a, ba.x_s, track_params=live) if b else None
    pb_s = forward(view_b, bb.x_s, track_params=live) if b else None
    pa_u = forward(view_a, x_u, track_params=live) if len(x_u) else None
    pb_u = forward(view_b, x_u, track_params=live) if len(x_u) else None

    l_sup = sup_loss(pa_s, ba.y_s, b) + sup_loss(pb_s, bb.y_s, b) if b else None
    l_cot = cot_loss(pa_u, pb_u) if len(x_u) else None

    def clean(ps, pu):
        return np.concatenate([p.data for p in (ps, pu) if p is not None], axis=0)

    pb_on_ga = forward(view_b, g_a, track_params=t_dif)
    pa_on_gb = forward(view_a, g_b, track_params=t_dif)
    l_dif = dif_loss(clean(pa_s, pa_u), pa_on_gb, clean(pb_s, pb_u), pb_on_ga)
    return l_sup, l_cot, l_dif


def _value(t):
    return 0.0 if t is None else float(t.data)


def train_iteration(a, b, batches, lambda_cot, lambda_dif, lr, epsilon, clip=(0.0, 1.0)):
    """One co-training step on a pair of members fed by one bundle.

    FGSM examples for both views, the three loss terms, one joint backward
    over the weighted total, then one momentum-SGD step per view.
    """
    check_lambdas(lambda_cot, lambda_dif)
    l_sup, l_cot, l_dif = compute_losses(
        a.model, b.model, batches, epsilon, clip,
        track=(True, lambda_cot > 0, lambda_dif > 0),
    )
    parts = [t for t, lam in ((l_sup, 1.0), (l_cot, lambda_cot), (l_dif, lambda_dif)) if t is not None and lam]
    a.model.zero_grad()
    b.model.zero_grad()
    if parts:
        total = total_loss(
            l_sup if l_sup is not None else 0.0,
            l_cot if l_cot is not None else 0.0,
            l_dif,
            lambda_cot,
            lambda_dif,
        )
        if not np.isfinite(total.data):
            return _breakdown(l_sup, l_cot, l_dif, lambda_cot, lambda_dif, nonfinite=True)
        total.backward()
    sgd_step(a.model, a.opt, lr)
    sgd_step(b.model, b.opt, lr)
    return _breakdown(l_sup, l_cot, l_dif, lambda_cot, lambda_dif)


def _breakdown(l_sup, l_cot, l_dif, lambda_cot, lambda_dif, nonfinite=False):
    s, c, d = _value(l_sup), _value(l_cot), _value(l_dif)
    total = s + lambda_cot * c + lambda_dif * d
    if nonfinite:
        total = float("nan")
    return LossBreakdown(s, c, d, total, lambda_cot, lambda_dif)


def supervised_step(member, x, y, lr, batch_size=None):
    """Plain supervised SGD step on one view; the reference path for lambda = 0."""
    member.model.zero_grad()
    if len(y):
        sup_loss(forward(member.model, x), y, batch_size).backward()
    sgd_step(member.model, member.opt, lr)


@dataclass
class TrainState:
    epoch: int = 0
    iteration: int = 0
    seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)
    warmup: bool = True
    pairing: list = field(default_factory=list)

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)


def draw_pairs(n_views, schedule, rng):
    """View pairs for one iteration, one per bundle.

    ``real`` shuffles all views and pairs neighbours; ``fake`` keeps (0,1), (2,3), ...
    Each pair is ordered (low, high), so the lower index takes stream s.
    """
    if schedule == "fake":
        order = np.arange(n_views)
    elif schedule == "real":
        order = rng.permutation(n_views)
    else:
        raise ConfigError(f"unknown schedule {schedule!r}", field="schedule")
    return [tuple(sorted((int(order[2 * i]), int(order[2 * i + 1])))) for i in range(n_views // 2)]


def epoch_lambdas(hp, epoch, warmup=True):
    if not warmup:
        return float(hp.lambda_cot_max), float(hp.lambda_dif_max)
    return (
        warmup_lambda(epoch, hp.lambda_cot_max, hp.warmup_epochs),
        warmup_lambda(epoch, hp.lambda_dif_max, hp.warmup_epochs),
    )


@dataclass
class EpochLosses:
    l_sup: float
    l_cot: float
    l_dif: float
    lr: float
    lambda_cot: float
    lambda_dif: float
    iterations: int


def train_epoch(members, bundles, schedule, hp, state, clip=(0.0, 1.0), parallel=False):
    """Run one epoch (``state.epoch + 1``) of multi-view co-training.

    Each iteration draws a pairing of views, then runs one pair step per
    bundle. Returns epoch-mean losses. Raises DivergenceError on a non-finite loss.
    """
    n = len(members)
    if n != hp.n_views or n != 2 * len(bundles):
        raise ConfigError(
            f"{n} views and {len(bundles)} bundles for n_views={hp.n_views}", field="n_views"
        )
    epoch = state.epoch + 1
    lr = cosine_lr(epoch, hp.lr0, hp.total_epochs)
    lam_cot, lam_dif = epoch_lambdas(hp, epoch, state.warmup)
    s0 = bundles[0].s
    iters = iterations_per_epoch(s0.n_total, n, hp.batch_size)

    sums = np.zeros(3)
    count = 0
    pool = ThreadPoolExecutor(max_workers=len(bundles)) if parallel and len(bundles) > 1 else None
    try:
        for it in range(iters):
            pairs = draw_pairs(n, schedule, state.rng)
            state.pairing = pairs
            jobs = [(members[i], members[j], bundle.next()) for (i, j), bundle in zip(pairs, bundles)]

            def run(job):
                a, b, batches = job
                return train_iteration(a, b, batches, lam_cot, lam_dif, lr, hp.fgsm_epsilon, clip)

            results = list(pool.map(run, jobs)) if pool else [run(j) for j in jobs]
            for res in results:
                if not math.isfinite(res.total):
                    raise DivergenceError(epoch, state.iteration, res.total)
                sums += (res.l_sup, res.l_cot, res.l_dif)
                count += 1
            state.iteration += 1
    finally:
        if pool:
            pool.shutdown()
    state.epoch = epoch
    means = sums / max(count, 1)
    return EpochLosses(*(float(v) for v in means), lr, lam_cot, lam_dif, iters)


def dry_losses(members, bundles, hp, state, clip=(0.0, 1.0)):
    """Loss values on the next batches without updating anything (epoch-0 logging)."""
    lam_cot, lam_dif = epoch_lambdas(hp, 0, state.warmup)
    pairs = draw_pairs(len(members), "fake", None)
    sums = np.zeros(3)
    for (i, j), bundle in zip(pairs, bundles):
        batches = (bundle.s.batch_at(bundle.s.t), bundle.s_bar.batch_at(bundle.s_bar.t))
        terms = compute_losses(members[i].model, members[j].model, batches, hp.fgsm_epsilon, clip,
                               track=(False, False, False))
        sums += [_value(t) for t in terms]
    means = sums / len(pairs)
    return EpochLosses(*(float(v) for v in means), 0.0, lam_cot, lam_dif, 0)


def pretrain(members, sup, epochs, hp, seeds, clip=(0.0, 1.0)):
    """Supervised-only training of each view on S with its own data order.

    Uses a cosine schedule over the pretraining epochs. ``seeds`` gives one
    stream seed per view. Returns the members (updated in place).
    """
    if epochs <= 0:
        return members
    empty = sup.subset(np.zeros(0, dtype=np.int64))
    b = min(hp.batch_size, len(sup))
    iters = math.ceil(len(sup) / b)
    for m, seed in zip(members, seeds):
        stream = DataStream(sup, empty, b, seed, seed)
        for epoch in range(1, epochs + 1):
            lr = cosine_lr(epoch, hp.lr0, epochs)
            for _ in range(iters):
                batch = stream.next_batch()
                supervised_step(m, batch.x_s, batch.y_s, lr)
    return members


@dataclass
class EvalResult:
    per_view: list
    mean: float


def evaluate(views, test):
    """Per-view argmax error and their unweighted mean (no ensembling)."""
    if not isinstance(test, Dataset):
        raise ConfigError("evaluate needs a Dataset")
    if not test.fully_labeled:
        raise ConfigError("test set must be fully labeled")
    errs = [float(np.mean(predict(v, test.features) != test.labels)) for v in views]
    return EvalResult(errs, float(np.mean(errs)))


def snapshot(epoch, members, losses, test, probe, epsilon, clip=(0.0, 1.0)):
    """Assemble the MetricsRecord for the current view parameters."""
    views = [m.model for m in members]
    ev = evaluate(views, test)
    tm = transfer_matrix(views, probe, epsilon, clip)
    return MetricsRecord(
        epoch=epoch,
        per_view_err=ev.per_view,
        mean_err=ev.mean,
        l_sup=losses.l_sup,
        l_cot=losses.l_cot,
        l_dif=losses.l_dif,
        agreement=agreement_rate(views, test.features),
        collapse=collapse_score(views, probe, epsilon, clip, matrix=tm),
        lr=losses.lr,
        lambda_cot=losses.lambda_cot,
        lambda_dif=losses.lambda_dif,
        transfer_matrix=tm,
    )
