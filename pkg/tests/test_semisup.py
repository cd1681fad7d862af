import numpy as np
import pytest

from demix import data as dd
from demix.losses import LossSpec
from demix.network import TrainConfig, make_mlp, train_supervised
from demix.semisup import (
    SSLConfig,
    pseudo_label,
    pseudo_label_batch,
    ssl_step,
    train_ssl,
)
from demix.network import init_params


def _moons(n, seed, noise=0.1):
    return dd.make_synthetic("two_moons", n, noise, seed)


class TestPseudoLabel:
    def test_confident_accepted(self):
        logits = np.log(np.array([0.96, 0.02, 0.02]))
        pl = pseudo_label(logits, tau=0.95)
        assert pl.class_index == 0
        assert pl.accepted
        assert pl.confidence == pytest.approx(0.96)

    def test_unconfident_rejected(self):
        logits = np.log(np.array([0.5, 0.3, 0.2]))
        pl = pseudo_label(logits, tau=0.95)
        assert pl.class_index == 0
        assert not pl.accepted

    def test_tau_one_rejects_nondegenerate(self):
        pl = pseudo_label(np.array([2.0, 1.0, 0.0]), tau=1.0)
        assert not pl.accepted

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(20, 4))
        classes, conf, acc = pseudo_label_batch(z, 0.6)
        for i in range(20):
            pl = pseudo_label(z[i], 0.6)
            assert classes[i] == pl.class_index
            assert conf[i] == pytest.approx(pl.confidence)
            assert acc[i] == pl.accepted

    def test_accepted_implies_threshold(self):
        rng = np.random.default_rng(1)
        z = rng.normal(scale=3, size=(200, 3))
        _, conf, acc = pseudo_label_batch(z, 0.9)
        assert np.all(conf[acc] >= 0.9)


class TestSslStep:
    def test_no_accepted_reduces_to_supervised_step(self):
        specs = make_mlp(2, 8, 2)
        labeled = _moons(20, 0)
        unlabeled = _moons(30, 1).x
        cfg = SSLConfig(tau=1.0, unlabeled_weight=1.0, eta=0.1, steps=10)
        tcfg = TrainConfig(base_lr=0.1, epochs=1, batch_size=20, seed=0)

        p1 = init_params(specs, np.random.default_rng(7))
        p2 = p1.copy()
        ssl_step(
            p1, (labeled.x, labeled.y), unlabeled, cfg, tcfg,
            np.random.default_rng(0), step=0, total_steps=10,
        )
        # manual supervised CE step
        from demix.network import backward, forward, sgd_step, zeros_like_params, plain_targets, adapt_inputs
        from demix.losses import batch_loss

        z, cache = forward(p2, adapt_inputs(specs, labeled.x))
        res = batch_loss(z, plain_targets(labeled.y), LossSpec("mce"))
        grads, _ = backward(p2, cache, res.grad_logits)
        sgd_step(p2, grads, zeros_like_params(p2), 0, 10, tcfg)
        for a, b in zip(p1.arrays(), p2.arrays()):
            assert np.array_equal(a, b)

    def test_empty_batches_rejected(self):
        specs = make_mlp(2, 4, 2)
        params = init_params(specs, np.random.default_rng(0))
        cfg = SSLConfig()
        tcfg = TrainConfig(epochs=1, seed=0)
        with pytest.raises(ValueError):
            ssl_step(params, (np.empty((0, 2)), np.empty(0)), np.ones((3, 2)), cfg, tcfg, np.random.default_rng(0))


class TestTrainSsl:
    def test_missing_class_rejected(self):
        ds = _moons(40, 0)
        only_zero = ds.subset(np.flatnonzero(ds.y == 0))
        with pytest.raises(ValueError, match="missing classes"):
            train_ssl(
                only_zero, ds.x, ds, make_mlp(2, 4, 2), SSLConfig(steps=5), TrainConfig(seed=0)
            )

    def test_unlabeled_weight_zero_equals_supervised(self):
        train = _moons(60, 5)
        test = _moons(100, 6)
        specs = make_mlp(2, 16, 2)
        tcfg = TrainConfig(base_lr=0.1, min_lr=0.001, epochs=5, batch_size=20, seed=11)
        _, log_sup = train_supervised(train, test, specs, None, LossSpec("mce"), tcfg)
        sup_curve = [v for m, _, v in log_sup if m == "val_top1"]

        spe = 3
        cfg = SSLConfig(
            tau=0.95, unlabeled_weight=0.0, eta=0.0, steps=5 * spe,
            labeled_batch=20, unlabeled_batch=8, eval_interval=spe,
        )
        _, log_ssl = train_ssl(train, _moons(40, 9).x, test, specs, cfg, tcfg)
        ssl_curve = [v for m, _, v in log_ssl if m == "test_top1"]
        assert ssl_curve == sup_curve

    def test_empty_unlabeled_pool_equals_supervised(self):
        train = _moons(60, 5)
        test = _moons(100, 6)
        specs = make_mlp(2, 16, 2)
        tcfg = TrainConfig(base_lr=0.1, min_lr=0.001, epochs=5, batch_size=20, seed=11)
        _, log_sup = train_supervised(train, test, specs, None, LossSpec("mce"), tcfg)
        spe = 3
        cfg = SSLConfig(steps=5 * spe, labeled_batch=20, eval_interval=spe)
        _, log_ssl = train_ssl(train, np.empty((0, 2)), test, specs, cfg, tcfg)
        assert [v for m, _, v in log_ssl if m == "test_top1"] == [
            v for m, _, v in log_sup if m == "val_top1"
        ]

    def test_tau_one_matches_supervised_plus_rejections(self):
        train = _moons(60, 5)
        test = _moons(80, 6)
        specs = make_mlp(2, 8, 2)
        tcfg = TrainConfig(epochs=1, batch_size=20, seed=3)
        cfg = SSLConfig(tau=1.0, steps=9, labeled_batch=20, eval_interval=3)
        _, log = train_ssl(train, _moons(50, 7).x, test, specs, cfg, tcfg)
        accepted = [v for m, _, v in log if m == "accepted_frac"]
        assert accepted == [0.0, 0.0, 0.0]

    def test_deterministic(self):
        train = _moons(60, 5)
        test = _moons(80, 6)
        labeled, rest = dd.stratified_take(train, 10, seed=0)
        specs = make_mlp(2, 8, 2)
        tcfg = TrainConfig(base_lr=0.2, epochs=1, batch_size=10, seed=21)
        cfg = SSLConfig(steps=60, eval_interval=20)
        _, log1 = train_ssl(labeled, rest.x, test, specs, cfg, tcfg)
        _, log2 = train_ssl(labeled, rest.x, test, specs, cfg, tcfg)
        assert log1 == log2

    def test_ssl_improves_over_supervised_smoke(self):
        # single-seed smoke version of the paired trend
        train = _moons(1000, 0, noise=0.15)
        test = _moons(1000, 1, noise=0.15)
        labeled, rest = dd.stratified_take(train, 10, seed=0)
        specs = make_mlp(2, 32, 2)
        tcfg = TrainConfig(base_lr=0.3, min_lr=0.003, epochs=1, batch_size=10, seed=1)
        base = SSLConfig(tau=0.95, unlabeled_weight=0.0, eta=0.0, steps=800,
                         asymmetric_mixing=False, eval_interval=100)
        full = SSLConfig(tau=0.95, unlabeled_weight=1.0, eta=0.1, alpha=0.2,
                         steps=800, asymmetric_mixing=True, eval_interval=100)
        _, log_b = train_ssl(labeled, rest.x, test, specs, base, tcfg)
        _, log_f = train_ssl(labeled, rest.x, test, specs, full, tcfg)
        best_b = max(v for m, _, v in log_b if m == "test_top1")
        best_f = max(v for m, _, v in log_f if m == "test_top1")
        assert best_f > best_b
