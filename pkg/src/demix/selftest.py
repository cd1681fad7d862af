"""Built-in verification suites: gradient oracles, stationarity, equivalences.

These run from the CLI (``demix selftest``) without any test framework; each
suite returns (name, passed, detail) triples.
"""

from __future__ import annotations

import numpy as np

from .losses import (
    DMConfig,
    dm_regularizer,
    mce_loss,
    softmax,
)
from .mixers import Lambda, MixedTarget


def _central_diff(f, z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(z)
    for i in range(len(z)):
        zp = z.copy()
        zp[i] += h
        zm = z.copy()
        zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2.0 * h)
    return g


def _mce_closed_form(z: np.ndarray, a: int, b: int, lam: float) -> np.ndarray:
    # Softmax probability minus the soft label, written out naively.
    e = np.exp(z)
    p = e / e.sum()
    g = p.copy()
    g[a] -= lam
    g[b] -= 1.0 - lam
    return g


def _dm_closed_form(z: np.ndarray, a: int, b: int) -> np.ndarray:
    e = np.exp(z)
    no_a = e.sum() - e[a]
    no_b = e.sum() - e[b]
    g = e / no_a + e / no_b
    g[a] = -1.0 + e[a] / no_b
    g[b] = -1.0 + e[b] / no_a
    return g


def gradient_oracle_suite(cases: int = 120, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Analytic gradients vs closed forms (1e-12) and central differences (1e-6)."""
    rng = np.random.default_rng(seed)
    worst_closed = 0.0
    worst_fd = 0.0
    for k in range(cases):
        c = int(rng.choice([2, 3, 10]))
        z = rng.normal(scale=2.0, size=c)
        a, b = rng.choice(c, size=2, replace=False)
        lam = float(rng.uniform())
        target = MixedTarget(int(a), int(b), Lambda(lam))

        res = mce_loss(z, target)
        closed = _mce_closed_form(z, int(a), int(b), lam)
        fd = _central_diff(lambda v: mce_loss(v, target).value, z)
        worst_closed = max(worst_closed, float(np.abs(res.grad_logits - closed).max()))
        scale = np.maximum(np.abs(res.grad_logits), 1.0)
        worst_fd = max(worst_fd, float((np.abs(res.grad_logits - fd) / scale).max()))

        reg = dm_regularizer(z, int(a), int(b))
        closed = _dm_closed_form(z, int(a), int(b))
        fd = _central_diff(lambda v: dm_regularizer(v, int(a), int(b)).value, z)
        worst_closed = max(worst_closed, float(np.abs(reg.grad_logits - closed).max()))
        scale = np.maximum(np.abs(reg.grad_logits), 1.0)
        worst_fd = max(worst_fd, float((np.abs(reg.grad_logits - fd) / scale).max()))
    return [
        (
            "gradient_closed_forms",
            worst_closed < 1e-12,
            f"max |analytic - closed| = {worst_closed:.3e} over {cases} cases",
        ),
        (
            "gradient_finite_differences",
            worst_fd < 1e-6,
            f"max relative FD error = {worst_fd:.3e} over {cases} cases",
        ),
    ]


def mce_stationarity_suite() -> list[tuple[str, bool, str]]:
    """Descent on free logits drives (p_a, p_b) onto (lam, 1-lam)."""
    results = []
    for lam in (0.1, 0.3, 0.5, 0.7, 0.9):
        target = MixedTarget(0, 1, Lambda(lam))
        z = np.zeros(3)
        for _ in range(4000):
            z -= 0.5 * mce_loss(z, target).grad_logits
        p = softmax(z)
        ok = abs(p[0] - lam) < 1e-3 and abs(p[1] - (1.0 - lam)) < 1e-3
        results.append(
            (
                f"mce_stationarity_lam_{lam}",
                ok,
                f"p_a={p[0]:.6f} (want {lam}), p_b={p[1]:.6f}",
            )
        )
    return results


def dm_mutual_boost_suite() -> list[tuple[str, bool, str]]:
    """Descent under the regularizer alone pushes p_a + p_b above 0.999,
    with a trajectory that cannot depend on the mixing ratio."""
    trajectories = []
    for lam in (0.1, 0.5, 0.9):
        z = np.array([0.0, 0.0, 0.0, 0.0])
        values = []
        for _ in range(1500):
            res = dm_regularizer(z, 0, 1)
            values.append(res.value)
            z -= 0.8 * res.grad_logits
        trajectories.append((lam, values, softmax(z)))
    _, ref_values, ref_p = trajectories[0]
    identical = all(vals == ref_values for _, vals, _ in trajectories[1:])
    boosted = all(p[0] + p[1] > 0.999 for _, _, p in trajectories)
    psum = ref_p[0] + ref_p[1]
    return [
        ("dm_mutual_boost", boosted, f"p_a + p_b = {psum:.6f} after descent"),
        (
            "dm_lambda_independence",
            identical,
            "value trajectories bit-identical across mixing ratios",
        ),
    ]


def dm_form_equivalence_suite(
    count: int = 10_000, seed: int = 1
) -> list[tuple[str, bool, str]]:
    """The decoupled form equals the probability-ratio form within 1e-12."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        c = int(rng.integers(2, 12))
        z = rng.normal(scale=2.0, size=c)
        a, b = rng.choice(c, size=2, replace=False)
        via_phi = dm_regularizer(z, int(a), int(b)).value
        p = softmax(z)
        via_ratio = -(
            np.log(p[a] / (1.0 - p[b])) + np.log(p[b] / (1.0 - p[a]))
        )
        worst = max(worst, abs(via_phi - via_ratio))
    return [
        (
            "dm_form_equivalence",
            worst < 1e-12,
            f"max |phi-form - ratio-form| = {worst:.3e} over {count} draws",
        )
    ]


def run_all(verbose: bool = True) -> bool:
    suites = (
        gradient_oracle_suite()
        + mce_stationarity_suite()
        + dm_mutual_boost_suite()
        + dm_form_equivalence_suite()
    )
    ok = True
    for name, passed, detail in suites:
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok
