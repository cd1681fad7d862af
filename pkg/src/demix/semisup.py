"""Confidence-thresholded pseudo-labeling with asymmetric decoupled mixing.

The unsupervised block is gated by ``unlabeled_weight``: setting it to zero
makes a run reproduce plain supervised training on the labeled set exactly
(the RNG streams for labeled shuffling and init are shared with
:func:`demix.network.train_supervised`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import LossResult, LossSpec, asymmetric_dm_loss, batch_loss, mce_loss, softmax
from .mixers import Lambda, MixedTarget, asymmetric_pair, sample_lambda
from .network import (
    Parameters,
    TrainConfig,
    adapt_inputs,
    backward,
    forward,
    init_params,
    plain_targets,
    sgd_step,
    zeros_like_params,
)

CE_SPEC = LossSpec(kind="mce")


@dataclass(frozen=True)
class SSLConfig:
    tau: float = 0.95
    unlabeled_weight: float = 1.0
    eta: float = 0.1
    alpha: float = 0.2
    steps: int = 2000
    asymmetric_mixing: bool = True
    labeled_batch: int = 0  # 0 = the whole labeled set every step
    unlabeled_batch: int = 64
    eval_interval: int = 100

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")
        if self.unlabeled_weight < 0 or self.eta < 0:
            raise ValueError("weights must be nonnegative")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.steps < 1:
            raise ValueError("steps must be positive")


@dataclass(frozen=True)
class PseudoLabel:
    class_index: int
    confidence: float
    accepted: bool


def pseudo_label(logits: np.ndarray, tau: float) -> PseudoLabel:
    """Argmax class with its softmax confidence; accepted iff conf >= tau."""
    p = softmax(np.asarray(logits, dtype=float))
    c = int(np.argmax(p))
    conf = float(p[c])
    return PseudoLabel(c, conf, conf >= tau)


def pseudo_label_batch(
    logits: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = softmax(np.asarray(logits, dtype=float))
    classes = np.argmax(p, axis=1)
    conf = p[np.arange(len(p)), classes]
    return classes, conf, conf >= tau


class _BatchCycler:
    """Epoch-shuffled cycling batches, reshuffled by its own generator."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        self.n = n
        self.batch = min(batch, n) if batch > 0 else n
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos >= self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos : self.pos + self.batch]
        self.pos += self.batch
        return idx


def ssl_step(
    params: Parameters,
    labeled: tuple[np.ndarray, np.ndarray],
    unlabeled_x: np.ndarray,
    config: SSLConfig,
    train_config: TrainConfig,
    rng: np.random.Generator,
    velocity: Parameters | None = None,
    step: int = 0,
    total_steps: int = 1,
) -> tuple[Parameters, dict]:
    """One combined update.

    loss = CE(labeled)
         + w_u * [ CE(accepted pseudo-labels)
                   + mixed CE on asymmetric labeled/unlabeled pairs
                   + eta * one-directional decoupled term on those pairs ]

    The mixing coefficient of the labeled sample is clamped to <= 0.5 and the
    decoupled term skips pairs whose pseudo class equals the labeled class.
    """
    if velocity is None:
        velocity = zeros_like_params(params)
    x_l, y_l = labeled
    if len(x_l) == 0 or len(unlabeled_x) == 0:
        raise ValueError("both batches must be nonempty")
    specs = params.specs

    z_l, cache_l = forward(params, adapt_inputs(specs, x_l))
    res_l = batch_loss(z_l, plain_targets(y_l), CE_SPEC)
    grads, _ = backward(params, cache_l, res_l.grad_logits)

    metrics = {
        "loss_labeled": res_l.value,
        "loss_pseudo": 0.0,
        "loss_mix": 0.0,
        "accepted_frac": 0.0,
    }

    z_u, cache_u = forward(params, adapt_inputs(specs, unlabeled_x))
    classes, conf, accepted = pseudo_label_batch(z_u, config.tau)
    n_u = len(unlabeled_x)
    metrics["accepted_frac"] = float(accepted.mean())

    w_u = config.unlabeled_weight
    if w_u > 0.0 and accepted.any():
        # Masked-sum CE over the full unlabeled batch (accepted rows only).
        grad_u = np.zeros_like(z_u)
        pseudo_value = 0.0
        for i in np.flatnonzero(accepted):
            r = mce_loss(z_u[i], MixedTarget(int(classes[i]), int(classes[i]), Lambda(1.0)))
            pseudo_value += r.value
            grad_u[i] = r.grad_logits
        pseudo_value /= n_u
        g_u, _ = backward(params, cache_u, grad_u / n_u)
        _accumulate(grads, g_u, w_u)
        metrics["loss_pseudo"] = pseudo_value

        if config.asymmetric_mixing:
            acc_idx = np.flatnonzero(accepted)
            partners = rng.choice(acc_idx, size=len(x_l), replace=True)
            mixed = np.empty_like(np.asarray(x_l, dtype=float))
            targets = []
            for i, j in enumerate(partners):
                lam = sample_lambda(config.alpha, rng)
                mixed[i], eff = asymmetric_pair(x_l[i], unlabeled_x[j], lam)
                targets.append(MixedTarget(int(y_l[i]), int(classes[j]), eff))
            z_m, cache_m = forward(params, adapt_inputs(specs, mixed))
            res_m = batch_loss(z_m, targets, CE_SPEC)
            grad_m = res_m.grad_logits.copy()
            mix_value = res_m.value
            if config.eta > 0.0:
                n_m = len(mixed)
                dm_value = 0.0
                for i, t in enumerate(targets):
                    r = asymmetric_dm_loss(z_m[i], t.class_a, t.class_b)
                    dm_value += r.value
                    grad_m[i] += config.eta * r.grad_logits / n_m
                mix_value += config.eta * dm_value / n_m
            g_m, _ = backward(params, cache_m, grad_m)
            _accumulate(grads, g_m, w_u)
            metrics["loss_mix"] = mix_value

    sgd_step(params, grads, velocity, step, total_steps, config=train_config)
    return params, metrics


def _accumulate(into: Parameters, other: Parameters, weight: float) -> None:
    for i in range(len(into.specs)):
        if into.weights[i] is None:
            continue
        into.weights[i] += weight * other.weights[i]
        into.biases[i] += weight * other.biases[i]


def train_ssl(
    labeled_ds,
    unlabeled_x: np.ndarray,
    test_ds,
    specs,
    config: SSLConfig,
    train_config: TrainConfig,
) -> tuple[Parameters, list[tuple[str, int, float]]]:
    """Pseudo-labeling loop; deterministic given ``train_config.seed``.

    Logs ("test_top1" | "accepted_frac", step, value) every
    ``config.eval_interval`` steps (interval-mean for the accepted fraction).
    An empty unlabeled pool degenerates to supervised training.
    """
    present = set(np.unique(labeled_ds.y).tolist())
    if present != set(range(labeled_ds.num_classes)):
        missing = sorted(set(range(labeled_ds.num_classes)) - present)
        raise ValueError(f"labeled set is missing classes {missing}")

    ss = np.random.SeedSequence(train_config.seed)
    init_seq, shuffle_seq, _mix_seq, unlab_seq, pair_seq = ss.spawn(5)
    init_rng = np.random.default_rng(init_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    unlab_rng = np.random.default_rng(unlab_seq)
    pair_rng = np.random.default_rng(pair_seq)

    params = init_params(tuple(specs), init_rng)
    velocity = zeros_like_params(params)
    labeled_batches = _BatchCycler(len(labeled_ds), config.labeled_batch, shuffle_rng)
    have_unlabeled = len(unlabeled_x) > 0
    if have_unlabeled:
        unlabeled_batches = _BatchCycler(
            len(unlabeled_x), config.unlabeled_batch, unlab_rng
        )

    log: list[tuple[str, int, float]] = []
    window: list[float] = []
    for step in range(config.steps):
        idx_l = labeled_batches.next()
        batch_l = (labeled_ds.x[idx_l], labeled_ds.y[idx_l])
        if have_unlabeled:
            idx_u = unlabeled_batches.next()
            params, metrics = ssl_step(
                params,
                batch_l,
                unlabeled_x[idx_u],
                config,
                train_config,
                pair_rng,
                velocity=velocity,
                step=step,
                total_steps=config.steps,
            )
            window.append(metrics["accepted_frac"])
        else:
            z, cache = forward(params, adapt_inputs(params.specs, batch_l[0]))
            res = batch_loss(z, plain_targets(batch_l[1]), CE_SPEC)
            grads, _ = backward(params, cache, res.grad_logits)
            sgd_step(params, grads, velocity, step, config.steps, train_config)
            window.append(0.0)
        if (step + 1) % config.eval_interval == 0:
            z_t, _ = forward(params, adapt_inputs(params.specs, test_ds.x))
            acc = float(np.mean(np.argmax(z_t, axis=1) == test_ds.y))
            log.append(("test_top1", step, acc))
            log.append(("accepted_frac", step, float(np.mean(window))))
            window = []
    return params, log
