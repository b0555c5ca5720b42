"""Optimizer state machine and fully-synchronized baselines."""

import threading

import numpy as np
import pytest

import oracles
from demopt.dct import BasisCache, dct_forward_blocks
from demopt.chunking import clamp_chunk_shape, chunk
from demopt.errors import ShapeMismatchError
from demopt.optim import (
    AdamW,
    DemoConfig,
    DemoOptimizer,
    DemoStepStats,
    SgdMomentum,
    Signum,
    sign,
)
from demopt.transport import InMemoryHub
from demopt.wire import component_bytes


def run_workers(world_size, fn, join_timeout=60.0):
    """Run fn(rank) concurrently; returns (results, errors) indexed by rank."""
    results = [None] * world_size
    errors = [None] * world_size

    def target(r):
        try:
            results[r] = fn(r)
        except BaseException as err:  # noqa: BLE001 - tests inspect the error
            errors[r] = err

    threads = [threading.Thread(target=target, args=(r,), daemon=True)
               for r in range(world_size)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=join_timeout)
        assert not t.is_alive(), "worker thread hung"
    return results, errors


class TestSign:
    def test_examples(self):
        np.testing.assert_array_equal(
            sign(np.array([-3.0, 0.0, 2.5])), [-1.0, 0.0, 1.0])

    def test_idempotent(self, rng):
        x = rng.normal(size=50)
        np.testing.assert_array_equal(sign(sign(x)), sign(x))

    def test_odd(self, rng):
        x = rng.normal(size=50)
        np.testing.assert_array_equal(sign(-x), -sign(x))


def _demo(params, world_size=1, **cfg_kwargs):
    cfg_kwargs.setdefault("lr", 0.1)
    cfg = DemoConfig(**cfg_kwargs)
    hub = InMemoryHub(world_size)
    return DemoOptimizer(params, cfg, hub.collective(0)), hub, cfg


class TestDemoOptimizer:
    def test_zero_gradient_is_absorbing(self):
        p = np.full((8, 8), 1.5, dtype=np.float32)
        opt, _, _ = _demo([p], chunk_request=8, topk=4, signum=True)
        before = p.copy()
        for _ in range(3):
            stats = opt.step([np.zeros_like(p)])
        np.testing.assert_array_equal(p, before)
        np.testing.assert_array_equal(opt.momenta[0], np.zeros_like(p))
        assert stats.update_norm == 0.0

    def test_single_worker_full_extraction_matches_plain_sgd(self, rng):
        """Full extraction flushes the whole momentum each step, so without
        the sign the update degenerates to the bare local gradient."""
        a = rng.normal(size=(16, 16))
        spd = np.eye(16) + a @ a.T / 16

        def grad_fn(x):
            return spd @ x

        x0 = rng.normal(size=(16, 8))
        p = x0.astype(np.float32).copy()
        opt, _, _ = _demo([p], lr=0.05, chunk_request=8, topk=64, signum=False)
        for _ in range(100):
            opt.step([grad_fn(p.astype(np.float64)).astype(np.float32)])
        expected = oracles.sgd_plain(x0, grad_fn, lr=0.05, steps=100)
        np.testing.assert_allclose(p, expected, atol=1e-5)

    def test_four_workers_full_extraction_signum_is_sign_of_mean(self, rng):
        world = 4
        shape = (12, 6)
        steps = 5
        # per-step worker gradients with a known, sign-stable mean
        means, offsets = [], []
        for _ in range(steps):
            mag = rng.uniform(0.5, 1.5, size=shape)
            mean = mag * np.where(rng.random(shape) < 0.5, -1.0, 1.0)
            off = rng.normal(size=(world,) + shape) * 0.3
            off -= off.mean(axis=0)
            means.append(mean)
            offsets.append(off)

        hub = InMemoryHub(world)
        cfg = DemoConfig(lr=0.01, chunk_request=6, topk=36, signum=True)
        params = [np.zeros(shape, dtype=np.float32) for _ in range(world)]
        opts = [DemoOptimizer([params[r]], cfg, hub.collective(r))
                for r in range(world)]

        expected = np.zeros(shape, dtype=np.float64)
        for t in range(steps):
            grads = [(means[t] + offsets[t][r]).astype(np.float32)
                     for r in range(world)]
            _, errors = run_workers(world, lambda r: opts[r].step([grads[r]]))
            assert errors == [None] * world
            expected = oracles.sign_of_mean_grad_step(expected, grads, lr=0.01)
            for r in range(world):
                np.testing.assert_allclose(params[r], expected, atol=1e-6)

    def test_constant_gradient_slow_transmission(self, cache):
        """k=1 on a multi-bin spectrum transmits one coefficient per step;
        the rest keep accumulating locally until they win the top spot."""
        ghat = np.zeros(16)
        ghat[:4] = [2.0, -1.5, 1.0, 0.5]
        g = oracles.naive_dct3_1d(ghat).astype(np.float32)
        beta, lr, steps = 0.9, 0.1, 12

        p = np.zeros(16, dtype=np.float32)
        opt, _, _ = _demo([p], lr=lr, momentum_decay=beta, chunk_request=16,
                          topk=1, signum=False)
        for _ in range(steps):
            opt.step([g])

        sent, residual = oracles.simulate_coeff_flush(ghat, beta, 1, steps)
        expected = -lr * sum(oracles.naive_dct3_1d(q) for q in sent)
        np.testing.assert_allclose(p, expected, atol=1e-5)
        # the local residual spectrum matches the oracle's
        geom = clamp_chunk_shape((16,), 16)
        mhat = dct_forward_blocks(chunk(opt.momenta[0], geom), cache)[0]
        np.testing.assert_allclose(mhat, residual, atol=1e-4)

    def test_full_extraction_flushes_momentum(self, rng):
        p = rng.normal(size=(8, 8)).astype(np.float32)
        opt, _, _ = _demo([p], chunk_request=4, topk=16, signum=True)
        for _ in range(5):
            opt.step([rng.normal(size=(8, 8)).astype(np.float32)])
            assert float(np.abs(opt.momenta[0]).max()) < 1e-5

    def test_parameters_identical_momenta_diverge(self, rng):
        world = 2
        shape = (16, 16)
        hub = InMemoryHub(world)
        cfg = DemoConfig(lr=0.02, chunk_request=8, topk=4)
        params = [np.ones(shape, dtype=np.float32) for _ in range(world)]
        opts = [DemoOptimizer([params[r]], cfg, hub.collective(r))
                for r in range(world)]
        grads = [rng.normal(size=(world,) + shape).astype(np.float32)
                 for _ in range(10)]
        for t in range(10):
            _, errors = run_workers(world, lambda r: opts[r].step([grads[t][r]]))
            assert errors == [None] * world
            np.testing.assert_array_equal(params[0], params[1])
        assert not np.array_equal(opts[0].momenta[0], opts[1].momenta[0])

    def test_decoupled_weight_decay_without_gradient_signal(self):
        p = np.full((4, 4), 2.0, dtype=np.float32)
        opt, _, _ = _demo([p], lr=0.1, weight_decay=0.5, chunk_request=4,
                          topk=1, signum=True)
        opt.step([np.zeros_like(p)])
        np.testing.assert_allclose(p, np.full((4, 4), 2.0 * 0.95), rtol=1e-6)

    def test_state_and_payload_accounting(self, rng):
        shapes = [(64, 32), (32,)]
        params = [rng.normal(size=s).astype(np.float32) for s in shapes]
        opt, _, cfg = _demo(params, chunk_request=16, topk=8)
        total = sum(p.size for p in params)
        assert opt.aux_state_floats() == total
        analytic = sum(component_bytes(g, cfg.topk) for g in opt.geometries)
        assert opt.payload_bytes_per_step() == analytic
        stats = opt.step([np.zeros_like(p) for p in params])
        assert isinstance(stats, DemoStepStats)
        assert stats.payload_bytes == analytic

    def test_optimizer_state_is_half_of_adamw(self, rng):
        params = [rng.normal(size=(32, 16)).astype(np.float32)]
        opt, _, _ = _demo([params[0].copy()], chunk_request=16, topk=8)
        adamw = AdamW([params[0].copy()], lr=0.1)
        assert 2 * opt.aux_state_floats() == adamw.aux_state_floats()

    def test_topk_exceeding_chunk_volume_rejected(self, rng):
        p = rng.normal(size=(8,)).astype(np.float32)
        hub = InMemoryHub(1)
        with pytest.raises(ValueError):
            DemoOptimizer([p], DemoConfig(lr=0.1, chunk_request=4, topk=5),
                          hub.collective(0))

    def test_gradient_shape_mismatch_rejected(self, rng):
        p = rng.normal(size=(8,)).astype(np.float32)
        opt, _, _ = _demo([p], chunk_request=4, topk=2)
        with pytest.raises(ShapeMismatchError):
            opt.step([np.zeros((4,), dtype=np.float32)])
        with pytest.raises(ShapeMismatchError):
            opt.step([])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DemoConfig(lr=-0.1)
        with pytest.raises(ValueError):
            DemoConfig(lr=0.1, momentum_decay=1.0)
        with pytest.raises(ValueError):
            DemoConfig(lr=0.1, momentum_decay=0.0)
        with pytest.raises(ValueError):
            DemoConfig(lr=0.1, topk=0)
        with pytest.raises(ValueError):
            DemoConfig(lr=0.1, merge_rule="median")
        with pytest.raises(ValueError):
            DemoConfig(lr=0.1, weight_decay=-1e-3)


class TestBaselines:
    def test_sgd_momentum_matches_recurrence(self, rng):
        x0 = rng.normal(size=(10,))
        grad_seq = [rng.normal(size=(10,)) for _ in range(20)]
        p = x0.copy()
        opt = SgdMomentum([p], lr=0.05, momentum=0.9)
        for g in grad_seq:
            opt.step([g])
        expected = oracles.sgd_momentum_steps(x0, grad_seq, 0.05, 0.9)[-1]
        np.testing.assert_allclose(p, expected, atol=1e-12)

    def test_sgd_zero_momentum_is_plain_sgd(self, rng):
        a = rng.normal(size=(6, 6))
        spd = np.eye(6) + a @ a.T / 6

        def grad_fn(x):
            return spd @ x

        x0 = rng.normal(size=(6,))
        p = x0.copy()
        opt = SgdMomentum([p], lr=0.1, momentum=0.0)
        for _ in range(30):
            opt.step([grad_fn(p)])
        np.testing.assert_allclose(p, oracles.sgd_plain(x0, grad_fn, 0.1, 30),
                                   atol=1e-12)

    def test_signum_zero_momentum_is_sign_of_gradient(self, rng):
        p = np.zeros(8)
        opt = Signum([p], lr=0.5, momentum=0.0)
        g = rng.normal(size=(8,))
        opt.step([g])
        np.testing.assert_allclose(p, -0.5 * np.sign(g), atol=1e-15)

    def test_signum_uses_momentum_sign(self):
        p = np.zeros(1)
        opt = Signum([p], lr=1.0, momentum=0.9)
        opt.step([np.array([1.0])])    # v = 1.0, x -> -1
        opt.step([np.array([-0.5])])   # v = 0.4, still positive
        np.testing.assert_allclose(p, [-2.0])

    def test_adamw_first_step_is_lr_sized(self):
        p = np.zeros(4)
        opt = AdamW([p], lr=0.01, weight_decay=0.0)
        opt.step([np.ones(4)])
        np.testing.assert_allclose(p, np.full(4, -0.01), rtol=1e-6)

    def test_adamw_matches_recurrence(self, rng):
        x0 = rng.normal(size=(12,))
        grad_seq = [rng.normal(size=(12,)) for _ in range(15)]
        p = x0.copy()
        opt = AdamW([p], lr=0.003, beta1=0.9, beta2=0.95, eps=1e-8,
                    weight_decay=0.1)
        for g in grad_seq:
            opt.step([g])
        expected = oracles.adamw_steps(x0, grad_seq, 0.003, 0.9, 0.95, 1e-8, 0.1)[-1]
        np.testing.assert_allclose(p, expected, atol=1e-10)

    def test_weight_decay_is_decoupled_from_gradient(self):
        """Decay scales parameters before the update, independent of g."""
        p = np.array([2.0])
        opt = SgdMomentum([p], lr=0.1, momentum=0.0, weight_decay=0.5)
        opt.step([np.array([0.0])])
        np.testing.assert_allclose(p, [2.0 * (1 - 0.1 * 0.5)])

    def test_baseline_state_sizes(self, rng):
        params = [rng.normal(size=(8, 4)), rng.normal(size=(4,))]
        assert SgdMomentum([p.copy() for p in params], lr=0.1).aux_state_floats() == 36
        assert Signum([p.copy() for p in params], lr=0.1).aux_state_floats() == 36
        assert AdamW([p.copy() for p in params], lr=0.1).aux_state_floats() == 72
