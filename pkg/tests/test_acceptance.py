"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The supervised-trend fixtures train 25 small models (about two minutes);
everything else is seconds. Run with ``pytest tests/test_acceptance.py -v -s``
to see the per-criterion lines.
"""

import struct
import time

import numpy as np
import pytest

from demix import data as dd
from demix import evaluation as deval
from demix import network as net
from demix.config import parse_config, serialize_config
from demix.experiment import run_experiment
from demix.losses import (
    DMConfig,
    RescaleParams,
    dm_regularizer,
    mce_loss,
    rescale,
    softmax,
)
from demix.mixers import Lambda, MixConfig, MixedTarget
from demix.semisup import SSLConfig, train_ssl

SEEDS = (1, 2, 3, 4, 5)


def report(criterion, ok, detail):
    line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


def central_diff(f, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(len(z)):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# Shared supervised-trend fixture: the glyph dataset written to and read back
# from IDX files, plus the 25 trained models used by criteria 6, 7 and 9.
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def image_bundle(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("idx")
    raw = dd.make_image_classes(2000, noise=0.25, shift=3, blobs_per_class=5, seed=0)
    dd.save_idx(raw.x, raw.y, tmp / "images.idx", tmp / "labels.idx")
    full = dd.load_idx(tmp / "images.idx", tmp / "labels.idx")
    train, val = dd.split(full, (1000, 1000), 0)
    specs = net.make_mlp(784, 256, 10)

    def train_arm(policy, kind, eta):
        accs, models = [], []
        for seed in SEEDS:
            cfg = net.TrainConfig(
                base_lr=0.1, min_lr=0.001, epochs=50, batch_size=100, seed=seed
            )
            from demix.losses import LossSpec

            params, log = net.train_supervised(
                train, val, specs, MixConfig(policy, 0.2), LossSpec(kind, DMConfig(eta)), cfg
            )
            curve = [v for m, _, v in log if m == "val_top1"]
            accs.append(float(np.median(curve[-10:])))
            models.append(params)
        return accs, models

    arms = {
        ("linear", "mce"): train_arm("linear", "mce", 0.0),
        ("linear", "dm_ce"): train_arm("linear", "dm_ce", 0.1),
        ("cutmix", "mce"): train_arm("cutmix", "mce", 0.0),
        ("cutmix", "dm_ce"): train_arm("cutmix", "dm_ce", 0.1),
        ("cutmix", "dm_ce_strong"): train_arm("cutmix", "dm_ce", 1.0),
    }
    return {"train": train, "val": val, "arms": arms}


# ---------------------------------------------------------------------------
# 1. Gradient oracle suite
# ---------------------------------------------------------------------------


def test_criterion_01_gradient_oracles():
    start = time.monotonic()
    rng = np.random.default_rng(0)
    worst_closed = 0.0
    worst_fd = 0.0
    cases = 0
    for c in (2, 3, 10):
        for _ in range(40):
            z = rng.normal(scale=2.0, size=c)
            a, b = (int(v) for v in rng.choice(c, size=2, replace=False))
            lam = float(rng.uniform())
            target = MixedTarget(a, b, Lambda(lam))

            # naive closed forms, written straight from the definitions
            e = np.exp(z)
            p = e / e.sum()
            mce_closed = p.copy()
            mce_closed[a] -= lam
            mce_closed[b] -= 1.0 - lam
            no_a, no_b = e.sum() - e[a], e.sum() - e[b]
            dm_closed = e / no_a + e / no_b
            dm_closed[a] = -1.0 + e[a] / no_b
            dm_closed[b] = -1.0 + e[b] / no_a

            res = mce_loss(z, target)
            reg = dm_regularizer(z, a, b)
            worst_closed = max(
                worst_closed,
                float(np.abs(res.grad_logits - mce_closed).max()),
                float(np.abs(reg.grad_logits - dm_closed).max()),
            )
            fd_m = central_diff(lambda v: mce_loss(v, target).value, z)
            fd_d = central_diff(lambda v: dm_regularizer(v, a, b).value, z)
            scale_m = np.maximum(np.abs(res.grad_logits), 1.0)
            scale_d = np.maximum(np.abs(reg.grad_logits), 1.0)
            worst_fd = max(
                worst_fd,
                float((np.abs(res.grad_logits - fd_m) / scale_m).max()),
                float((np.abs(reg.grad_logits - fd_d) / scale_d).max()),
            )
            cases += 1
    elapsed = time.monotonic() - start
    report(
        1,
        worst_closed < 1e-12 and worst_fd < 1e-6 and cases >= 100 and elapsed < 5.0,
        f"{cases} cases: closed-form dev {worst_closed:.2e}, "
        f"FD rel dev {worst_fd:.2e}, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# 2. Mixed-CE stationarity
# ---------------------------------------------------------------------------


def test_criterion_02_mce_stationarity():
    start = time.monotonic()
    worst = 0.0
    for lam in (0.1, 0.3, 0.5, 0.7, 0.9):
        target = MixedTarget(0, 1, Lambda(lam))
        z = np.zeros(3)
        for _ in range(4000):
            z -= 0.5 * mce_loss(z, target).grad_logits
        p = softmax(z)
        worst = max(worst, abs(p[0] - lam), abs(p[1] - (1.0 - lam)))
    elapsed = time.monotonic() - start
    report(
        2,
        worst < 1e-3 and elapsed < 1.0,
        f"max |p - target weight| = {worst:.2e} over five ratios, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# 3. Decoupled-regularizer mutual boost and ratio independence
# ---------------------------------------------------------------------------


def test_criterion_03_dm_mutual_boost():
    start = time.monotonic()
    trajectories = []
    for lam in (0.1, 0.3, 0.5, 0.7, 0.9):
        z = np.zeros(4)
        values, grads = [], []
        for _ in range(1500):
            res = dm_regularizer(z, 0, 1)
            values.append(res.value)
            grads.append(res.grad_logits.tobytes())
            z -= 0.8 * res.grad_logits
        trajectories.append((values, grads, softmax(z)))
    ref_v, ref_g, _ = trajectories[0]
    identical = all(v == ref_v and g == ref_g for v, g, _ in trajectories[1:])
    boost = min(p[0] + p[1] for _, _, p in trajectories)
    elapsed = time.monotonic() - start
    report(
        3,
        boost > 0.999 and identical and elapsed < 1.0,
        f"p_a + p_b = {boost:.6f}, trajectories bit-identical across ratios, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# 4. Equivalence of the two regularizer forms
# ---------------------------------------------------------------------------


def test_criterion_04_form_equivalence():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10_000):
        c = int(rng.integers(2, 12))
        z = rng.normal(scale=2.0, size=c)
        a, b = (int(v) for v in rng.choice(c, size=2, replace=False))
        p = softmax(z)
        ratio_form = -(np.log(p[a] / (1 - p[b])) + np.log(p[b] / (1 - p[a])))
        worst = max(worst, abs(dm_regularizer(z, a, b).value - ratio_form))
    report(4, worst < 1e-12, f"max form deviation {worst:.2e} over 10000 draws")


# ---------------------------------------------------------------------------
# 5. Rescaling-curve anchors
# ---------------------------------------------------------------------------


def test_criterion_05_rescale_curve():
    lams = np.linspace(0.0, 1.0, 201)
    identity_dev = max(
        abs(rescale(Lambda(v), RescaleParams(1.0, 1.0)) - v) for v in lams
    )
    threshold_ok = all(
        rescale(Lambda(xi), RescaleParams(t, xi)) == 1.0
        for t in (0.3, 0.5, 1.0, 2.0)
        for xi in (0.2, 0.5, 0.8, 1.0)
    )
    two_hot_ok = all(
        rescale(Lambda(v), RescaleParams(0.0, 0.0)) == 1.0 for v in lams if v > 0
    ) and rescale(Lambda(0.0), RescaleParams(0.0, 0.0)) == 0.0
    monotone_ok = True
    for t in (0.3, 0.5, 1.0, 2.0):
        for xi in (0.2, 0.8, 1.0):
            vals = [rescale(Lambda(v), RescaleParams(t, xi)) for v in lams]
            monotone_ok &= all(b >= a for a, b in zip(vals, vals[1:]))
    report(
        5,
        identity_dev <= 1e-15 and threshold_ok and two_hot_ok and monotone_ok,
        f"identity dev {identity_dev:.1e}; threshold, two-hot and monotonicity anchors hold",
    )


# ---------------------------------------------------------------------------
# 6. Supervised trend at the recommended operating point
# ---------------------------------------------------------------------------


def test_criterion_06_supervised_trend(image_bundle):
    lines = []
    ok = True
    for policy in ("linear", "cutmix"):
        mce_accs, _ = image_bundle["arms"][(policy, "mce")]
        dm_accs, _ = image_bundle["arms"][(policy, "dm_ce")]
        deltas = [d - m for d, m in zip(dm_accs, mce_accs)]
        mean_pp = float(np.mean(deltas)) * 100
        wins = sum(1 for d in deltas if d > 0)
        ok &= mean_pp >= -0.1 and wins >= 3
        lines.append(f"{policy}: mean {mean_pp:+.2f}pp, wins {wins}/5")
    report(6, ok, "; ".join(lines))


# ---------------------------------------------------------------------------
# 7. Hard-sample trend on balanced cut mixes
# ---------------------------------------------------------------------------


def test_criterion_07_hard_sample_trend(image_bundle):
    rng = np.random.default_rng(123)
    hard = deval.make_hard_mixed_set(
        image_bundle["val"], 1000, rng, lam=0.5, area_band=(0.35, 0.65)
    )
    _, mce_models = image_bundle["arms"][("cutmix", "mce")]
    _, dm_models = image_bundle["arms"][("cutmix", "dm_ce_strong")]
    r_mce = [deval.mixed_pair_eval(p, hard) for p in mce_models]
    r_dm = [deval.mixed_pair_eval(p, hard) for p in dm_models]
    m2 = float(np.mean([r.top2_pair_acc for r in r_mce]))
    d2 = float(np.mean([r.top2_pair_acc for r in r_dm]))
    mc = float(np.mean([r.mean_max_confidence for r in r_mce]))
    dc = float(np.mean([r.mean_max_confidence for r in r_dm]))
    report(
        7,
        d2 > m2 and dc > mc,
        f"top2 pair {m2:.4f} -> {d2:.4f}; mean max confidence {mc:.4f} -> {dc:.4f}",
    )


# ---------------------------------------------------------------------------
# 8. Semi-supervised trend on two moons
# ---------------------------------------------------------------------------


def test_criterion_08_ssl_trend():
    start = time.monotonic()
    train = dd.make_synthetic("two_moons", 1000, 0.15, seed=0)
    test = dd.make_synthetic("two_moons", 1000, 0.15, seed=1)
    labeled, rest = dd.stratified_take(train, 10, seed=0)
    assert len(rest) == 990
    specs = net.make_mlp(2, 32, 2)

    def best(cfg, seed):
        tcfg = net.TrainConfig(base_lr=0.3, min_lr=0.003, epochs=1, batch_size=10, seed=seed)
        _, log = train_ssl(labeled, rest.x, test, specs, cfg, tcfg)
        return max(v for m, _, v in log if m == "test_top1")

    supervised = SSLConfig(
        tau=0.95, unlabeled_weight=0.0, eta=0.0, alpha=0.2, steps=2000,
        asymmetric_mixing=False, eval_interval=100,
    )
    plain_pl = SSLConfig(
        tau=0.95, unlabeled_weight=1.0, eta=0.0, alpha=0.2, steps=2000,
        asymmetric_mixing=False, eval_interval=100,
    )
    with_dm = SSLConfig(
        tau=0.95, unlabeled_weight=1.0, eta=0.1, alpha=0.2, steps=2000,
        asymmetric_mixing=True, eval_interval=100,
    )
    acc_sup = [best(supervised, s) for s in SEEDS]
    acc_pl = [best(plain_pl, s) for s in SEEDS]
    acc_dm = [best(with_dm, s) for s in SEEDS]
    gain_sup = (np.mean(acc_dm) - np.mean(acc_sup)) * 100
    gain_pl = (np.mean(acc_dm) - np.mean(acc_pl)) * 100
    elapsed = time.monotonic() - start
    report(
        8,
        gain_sup > 2.0 and gain_pl > 0.0 and elapsed < 120.0,
        f"supervised {np.mean(acc_sup):.4f}, pseudo-label {np.mean(acc_pl):.4f}, "
        f"with mixing+decoupling {np.mean(acc_dm):.4f} "
        f"(+{gain_sup:.1f}pp / +{gain_pl:.1f}pp), {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 9. Robustness protocol sanity
# ---------------------------------------------------------------------------


def test_criterion_09_robustness_sanity(image_bundle):
    params = image_bundle["arms"][("cutmix", "dm_ce")][1][0]
    val = image_bundle["val"]
    clean = deval.top1_accuracy(params, val)
    fgsm0, _ = deval.fgsm_attack(params, val, deval.AttackConfig(epsilon=0.0))
    ratios = (0.0, 0.25, 0.5, 0.75, 1.0)
    curves = []
    for mask_seed in range(5):
        rng = np.random.default_rng(1000 + mask_seed)
        curve = deval.occlusion_eval(params, val, deval.OcclusionConfig(4, ratios), rng)
        curves.append([acc for _, acc in curve])
    mean_curve = np.mean(curves, axis=0)
    zero_exact = all(c[0] == clean for c in curves)
    steps_ok = all(
        mean_curve[i + 1] <= mean_curve[i] + 0.02 for i in range(len(ratios) - 1)
    )
    report(
        9,
        fgsm0 == clean and zero_exact and steps_ok,
        f"fgsm(0) == clean == {clean:.4f}; occlusion curve "
        f"{[round(float(v), 3) for v in mean_curve]} non-increasing within 2pp",
    )


# ---------------------------------------------------------------------------
# 10. Plumbing exactness
# ---------------------------------------------------------------------------

TINY_RUN = """
dataset.source = blobs
dataset.size = 90
dataset.val_size = 60
dataset.num_classes = 3
dataset.noise = 0.5
mixer.policy = linear
loss.kind = {kind}
loss.eta = {eta}
train.epochs = 4
train.batch_size = 30
train.base_lr = 0.05
network.hidden = 16
run.seeds = 1,2
run.name = {name}
eval.fgsm = true
"""


def test_criterion_10_plumbing_exactness(tmp_path):
    # IDX round trip through a hand-assembled two-image fixture
    images = np.zeros((2, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    images[1, 14, 14] = 128
    labels = np.array([7, 2], dtype=np.uint8)
    (tmp_path / "img.idx").write_bytes(
        struct.pack(">iiii", 0x803, 2, 28, 28) + images.tobytes()
    )
    (tmp_path / "lbl.idx").write_bytes(struct.pack(">ii", 0x801, 2) + labels.tobytes())
    ds = dd.load_idx(tmp_path / "img.idx", tmp_path / "lbl.idx")
    dd.save_idx(ds.x, ds.y, tmp_path / "img2.idx", tmp_path / "lbl2.idx")
    idx_ok = (tmp_path / "img2.idx").read_bytes() == (tmp_path / "img.idx").read_bytes()
    idx_ok &= (tmp_path / "lbl2.idx").read_bytes() == (tmp_path / "lbl.idx").read_bytes()
    idx_ok &= ds.x[0, 0, 0] == 1.0 and np.array_equal(ds.y, [7, 2])

    # degenerate-eta equivalence: dm_ce at eta 0 produces the mce metric log
    cfg_m = parse_config(TINY_RUN.format(kind="mce", eta="0.5", name="m"))
    cfg_d = parse_config(TINY_RUN.format(kind="dm_ce", eta="0.0", name="d"))
    run_experiment(cfg_m, tmp_path / "m")
    run_experiment(cfg_d, tmp_path / "d")
    strip = lambda p: [
        line.split(",", 1)[1] for line in (p / "metrics.csv").read_text().splitlines()[1:]
    ]
    eta_ok = strip(tmp_path / "m") == strip(tmp_path / "d")

    # config round trip is the identity
    cfg_ok = parse_config(serialize_config(cfg_m)) == cfg_m

    # repeated seeded runs are byte-identical
    run_experiment(cfg_m, tmp_path / "m2")
    repeat_ok = (tmp_path / "m/metrics.csv").read_bytes() == (
        tmp_path / "m2/metrics.csv"
    ).read_bytes() and (tmp_path / "m/summary.json").read_bytes() == (
        tmp_path / "m2/summary.json"
    ).read_bytes()

    report(
        10,
        idx_ok and eta_ok and cfg_ok and repeat_ok,
        f"idx round-trip {idx_ok}, eta-0 equivalence {eta_ok}, "
        f"config round-trip {cfg_ok}, repeat determinism {repeat_ok}",
    )
