"""Training objectives for mixed samples.

Each loss takes a logit vector ``z`` of length C and returns a
:class:`LossResult` carrying the scalar value and the analytic gradient with
respect to the logits. All log-ratios are evaluated in log space
(``z_i - logsumexp``) so confident predictions never hit ``log(1 - p)``
cancellation. Everything here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mixers import Lambda, MixedTarget

BCE_TARGET_MODES = ("one", "two", "rescaled")
LOSS_KINDS = ("mce", "dm_ce", "mbce_one", "mbce_two", "dm_bce")


@dataclass(frozen=True, eq=False)
class LossResult:
    """Scalar loss plus d(loss)/d(logits): the contract every loss fulfills."""

    value: float
    grad_logits: np.ndarray


@dataclass(frozen=True)
class DMConfig:
    """Trade-off weight of the decoupled regularizer on top of the mixed CE."""

    eta: float = 0.1

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass(frozen=True)
class RescaleParams:
    """Exponent t and truncation threshold xi of the label rescaling curve."""

    t: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if not (0.0 <= self.xi <= 1.0):
            raise ValueError("xi must lie in [0, 1]")


@dataclass(frozen=True)
class LossSpec:
    """Selects one objective; carried around by the trainer and the harness."""

    kind: str = "mce"
    dm: DMConfig = field(default_factory=DMConfig)
    rescale: RescaleParams = field(default_factory=RescaleParams)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")


def _logsumexp(z: np.ndarray) -> float:
    m = float(np.max(z))
    return m + float(np.log(np.sum(np.exp(z - m))))


def softmax(z: np.ndarray) -> np.ndarray:
    """Standard softmax over the last axis, with max-subtraction."""
    z = np.asarray(z, dtype=float)
    m = np.max(z, axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    m = np.max(z, axis=-1, keepdims=True)
    return z - m - np.log(np.sum(np.exp(z - m), axis=-1, keepdims=True))


def _logsumexp_excluding(z: np.ndarray, j: int) -> float:
    keep = np.ones(len(z), dtype=bool)
    keep[j] = False
    return _logsumexp(z[keep])


def decoupled_softmax(z: np.ndarray, excluded: int) -> np.ndarray:
    """Softmax scores with one competitor removed from the normalizer.

    Component i is exp(z_i) / sum_{c != excluded} exp(z_c) for every i; the
    excluded component itself is reported too (callers ignore it). Removing a
    competitor strictly enlarges every other score versus plain softmax.
    """
    z = np.asarray(z, dtype=float)
    if not 0 <= excluded < len(z):
        raise IndexError(f"excluded class {excluded} out of range for C={len(z)}")
    return np.exp(z - _logsumexp_excluding(z, excluded))


def mce_loss(z: np.ndarray, target: MixedTarget) -> LossResult:
    """Mixed cross-entropy: -(lam*log p_a + (1-lam)*log p_b).

    Gradient is softmax(z) minus the soft label (lam at a, 1-lam at b), so
    minimizing regresses the two class probabilities onto the mixing ratio.
    """
    z = np.asarray(z, dtype=float)
    a, b, lam = target.class_a, target.class_b, target.lam
    logp = log_softmax(z)
    value = -(lam.value * logp[a] + lam.complement * logp[b])
    grad = np.exp(logp)
    grad[a] -= lam.value
    grad[b] -= lam.complement
    return LossResult(float(value), grad)


def dm_regularizer(z: np.ndarray, a: int, b: int) -> LossResult:
    """Decoupled confidence booster: -(log phi(z)^{a,b} + log phi(z)^{b,a}).

    phi is the decoupled softmax, so each mixed class is scored with the
    other removed from the normalizer. Independent of the mixing ratio. A
    degenerate same-class pair contributes exactly zero.
    """
    z = np.asarray(z, dtype=float)
    c = len(z)
    if not (0 <= a < c and 0 <= b < c):
        raise IndexError("class index out of range")
    if a == b:
        return LossResult(0.0, np.zeros_like(z))
    lse_no_a = _logsumexp_excluding(z, a)
    lse_no_b = _logsumexp_excluding(z, b)
    value = -((z[a] - lse_no_b) + (z[b] - lse_no_a))
    phi_no_a = np.exp(z - lse_no_a)
    phi_no_b = np.exp(z - lse_no_b)
    grad = phi_no_a + phi_no_b
    grad[a] = phi_no_b[a] - 1.0
    grad[b] = phi_no_a[b] - 1.0
    return LossResult(float(value), grad)


def dm_ce_loss(z: np.ndarray, target: MixedTarget, config: DMConfig) -> LossResult:
    """Mixed CE plus eta times the decoupled regularizer."""
    base = mce_loss(z, target)
    if config.eta == 0.0 or target.class_a == target.class_b:
        return base
    reg = dm_regularizer(z, target.class_a, target.class_b)
    return LossResult(
        base.value + config.eta * reg.value,
        base.grad_logits + config.eta * reg.grad_logits,
    )


def asymmetric_dm_loss(z: np.ndarray, labeled_class: int, pseudo_class: int) -> LossResult:
    """One-directional decoupled term: -log phi(z)^{labeled, pseudo}.

    Only the trusted labeled class is scored; the pseudo-label class is
    removed from the normalizer but never rewarded itself.
    """
    z = np.asarray(z, dtype=float)
    c = len(z)
    if not (0 <= labeled_class < c and 0 <= pseudo_class < c):
        raise IndexError("class index out of range")
    if labeled_class == pseudo_class:
        return LossResult(0.0, np.zeros_like(z))
    lse = _logsumexp_excluding(z, pseudo_class)
    value = -(z[labeled_class] - lse)
    grad = np.exp(z - lse)
    grad[labeled_class] -= 1.0
    grad[pseudo_class] = 0.0
    return LossResult(float(value), grad)


def rescale(lam: Lambda, params: RescaleParams) -> float:
    """Label rescaling min((lam/xi)^t, 1), saturating at 1 above xi.

    Corner conventions: xi=0 or t=0 map every positive ratio to 1 (two-hot
    behaviour) and ratio 0 to 0; t=1, xi=1 is the identity.
    """
    v = lam.value
    if v == 0.0:
        return 0.0
    if params.xi == 0.0 or params.t == 0.0:
        return 1.0
    return min((v / params.xi) ** params.t, 1.0)


def build_mixed_bce_targets(
    target: MixedTarget,
    num_classes: int,
    mode: str,
    params: RescaleParams | None = None,
) -> np.ndarray:
    """Per-class sigmoid targets for a mixed sample.

    `one`: lam at a and 1-lam at b. `two`: 1 at both. `rescaled`: the
    rescaling curve applied to each coefficient. A same-class pair gets a
    single 1 (mode `one` reaches it by summing the two coefficients).
    """
    if mode not in BCE_TARGET_MODES:
        raise ValueError(f"unknown BCE target mode {mode!r}")
    a, b, lam = target.class_a, target.class_b, target.lam
    if not (0 <= a < num_classes and 0 <= b < num_classes):
        raise IndexError("class index out of range")
    out = np.zeros(num_classes, dtype=float)
    if mode == "one":
        out[a] += lam.value
        out[b] += lam.complement
    elif a == b:
        out[a] = 1.0
    elif mode == "two":
        out[a] = 1.0
        out[b] = 1.0
    else:
        assert params is not None, "rescaled mode needs RescaleParams"
        out[a] = rescale(lam, params)
        out[b] = rescale(Lambda(lam.complement), params)
    return out


def mbce_loss(z: np.ndarray, targets: np.ndarray) -> LossResult:
    """One-vs-all binary cross-entropy summed over classes.

    Uses the stable max(z,0) - z*t + log1p(exp(-|z|)) form; the gradient per
    class is sigmoid(z_c) - t_c.
    """
    z = np.asarray(z, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if z.shape != targets.shape:
        raise ValueError("targets must match the logit vector")
    if targets.min() < 0.0 or targets.max() > 1.0:
        raise ValueError("BCE targets must lie in [0, 1]")
    value = np.sum(np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z))))
    sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
    return LossResult(float(value), sig - targets)


def per_sample_loss(z: np.ndarray, target: MixedTarget, spec: LossSpec) -> LossResult:
    """Dispatch one sample through the objective selected by ``spec``."""
    if spec.kind == "mce":
        return mce_loss(z, target)
    if spec.kind == "dm_ce":
        return dm_ce_loss(z, target, spec.dm)
    num_classes = len(z)
    if spec.kind == "mbce_one":
        return mbce_loss(z, build_mixed_bce_targets(target, num_classes, "one"))
    if spec.kind == "mbce_two":
        return mbce_loss(z, build_mixed_bce_targets(target, num_classes, "two"))
    # dm_bce: rescaled-target BCE; the eta hook stays off unless configured.
    vec = build_mixed_bce_targets(target, num_classes, "rescaled", spec.rescale)
    res = mbce_loss(z, vec)
    if spec.dm.eta > 0.0 and target.class_a != target.class_b:
        reg = dm_regularizer(z, target.class_a, target.class_b)
        res = LossResult(
            res.value + spec.dm.eta * reg.value,
            res.grad_logits + spec.dm.eta * reg.grad_logits,
        )
    return res


def batch_loss(
    z_batch: np.ndarray, targets: list[MixedTarget], spec: LossSpec
) -> LossResult:
    """Mean-reduced loss over a batch; gradient rows are scaled by 1/batch."""
    z_batch = np.asarray(z_batch, dtype=float)
    n = len(z_batch)
    if n == 0:
        raise ValueError("empty batch")
    if len(targets) != n:
        raise ValueError("one target per sample required")
    grads = np.empty_like(z_batch)
    total = 0.0
    for i in range(n):
        res = per_sample_loss(z_batch[i], targets[i], spec)
        total += res.value
        grads[i] = res.grad_logits
    return LossResult(total / n, grads / n)
