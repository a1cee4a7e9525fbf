"""Unit tests for the local training loop and its configuration."""

import numpy as np
import pytest

from fedasync.data import gen_regression, partition_non_iid, sample_minibatch, worker_rng
from fedasync.numerics import QuadraticObjective
from fedasync.worker import (
    DivergenceError,
    LocalUpdate,
    WorkerConfig,
    choose_steps,
    local_train,
)


def _shard(n=80, dim=2, seed=0):
    ds = gen_regression(n, dim, 0.1, seed=seed)
    return partition_non_iid(ds, 1, 0, seed=seed)[0]


class TestWorkerConfig:
    def test_defaults_valid(self):
        cfg = WorkerConfig(gamma=0.1)
        assert cfg.rho == 0.0
        assert (cfg.h_min, cfg.h_max) == (1, 1)
        assert cfg.batch_size is None

    def test_step_imbalance(self):
        assert WorkerConfig(gamma=0.1, h_min=5, h_max=15).step_imbalance == 3.0
        assert WorkerConfig(gamma=0.1, h_min=7, h_max=7).step_imbalance == 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"gamma": -0.1},
            {"gamma": float("nan")},
            {"gamma": 0.1, "rho": -1.0},
            {"gamma": 0.1, "h_min": 0},
            {"gamma": 0.1, "h_min": 5, "h_max": 4},
            {"gamma": 0.1, "batch_size": 0},
        ],
    )
    def test_invalid_config_rejected(self, kwargs):
        with pytest.raises(ValueError):
            WorkerConfig(**kwargs)


class TestChooseSteps:
    def test_degenerate_range(self):
        cfg = WorkerConfig(gamma=0.1, h_min=10, h_max=10)
        assert choose_steps(cfg, np.random.default_rng(0)) == 10

    def test_draw_consumed_even_when_range_degenerate(self):
        # stream position must not depend on whether h_min == h_max
        cfg = WorkerConfig(gamma=0.1, h_min=10, h_max=10)
        rng_a = np.random.default_rng(3)
        choose_steps(cfg, rng_a)
        rng_b = np.random.default_rng(3)
        rng_b.integers(10, 11)
        np.testing.assert_array_equal(
            rng_a.standard_normal(4), rng_b.standard_normal(4)
        )

    def test_uniform_over_inclusive_range(self):
        cfg = WorkerConfig(gamma=0.1, h_min=5, h_max=20)
        rng = np.random.default_rng(17)
        draws = np.array([choose_steps(cfg, rng) for _ in range(100_000)])
        assert draws.min() == 5
        assert draws.max() == 20
        # U{5..20}: mean 12.5, var (16^2 - 1)/12; 3 sigma of the sample mean
        sigma_mean = np.sqrt(255.0 / 12.0 / 100_000)
        assert abs(draws.mean() - 12.5) < 3.0 * sigma_mean


class TestLocalTrain:
    def test_zero_gamma_freezes_iterate(self):
        shard = _shard()
        obj = QuadraticObjective(2)
        anchor = np.array([1.0, -2.0])
        cfg = WorkerConfig(gamma=0.0, rho=0.01, h_min=3, h_max=9, batch_size=8)
        upd = local_train(obj, shard, anchor, tau=5, cfg=cfg, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(upd.params, anchor)
        assert 3 <= upd.local_iters <= 9
        assert upd.tau == 5

    def test_single_full_batch_step_is_plain_gradient_descent(self):
        shard = _shard()
        obj = QuadraticObjective(2)
        anchor = np.array([0.5, 0.5])
        cfg = WorkerConfig(gamma=0.2, rho=0.0, h_min=1, h_max=1, batch_size=None)
        upd = local_train(obj, shard, anchor, tau=0, cfg=cfg, rng=np.random.default_rng(1))
        expected = anchor - 0.2 * obj.grad(anchor, shard.features, shard.targets)
        np.testing.assert_array_equal(upd.params, expected)
        assert upd.local_iters == 1

    def test_five_step_replay_matches_scripted_recursion(self):
        # independent re-execution of the documented draw law and update
        shard = _shard(seed=3)
        obj = QuadraticObjective(2)
        anchor = np.array([2.0, -1.0])
        cfg = WorkerConfig(gamma=0.1, rho=0.01, h_min=5, h_max=5, batch_size=4)
        upd = local_train(obj, shard, anchor, tau=2, cfg=cfg, rng=np.random.default_rng(9))

        rng = np.random.default_rng(9)
        steps = int(rng.integers(5, 6))
        x = anchor.copy()
        for _ in range(steps):
            batch = sample_minibatch(shard, 4, rng)
            g = obj.grad(x, batch.features, batch.targets) + 0.01 * (x - anchor)
            x = x - 0.1 * g
        np.testing.assert_allclose(upd.params, x, atol=1e-12, rtol=0.0)

    def test_full_batch_consumes_only_the_step_draw(self):
        shard = _shard()
        obj = QuadraticObjective(2)
        cfg = WorkerConfig(gamma=0.05, rho=0.0, h_min=4, h_max=4, batch_size=None)
        rng_a = np.random.default_rng(11)
        local_train(obj, shard, np.zeros(2), tau=0, cfg=cfg, rng=rng_a)
        rng_b = np.random.default_rng(11)
        rng_b.integers(4, 5)
        np.testing.assert_array_equal(
            rng_a.standard_normal(3), rng_b.standard_normal(3)
        )

    def test_stronger_pull_ends_closer_to_anchor(self):
        # larger rho contracts the local run toward its starting point
        shard = _shard(seed=4)
        obj = QuadraticObjective(2)
        anchor = np.array([3.0, 3.0])
        dists = []
        for rho in (0.0, 0.1, 1.0, 10.0):
            cfg = WorkerConfig(gamma=0.05, rho=rho, h_min=10, h_max=10, batch_size=8)
            upd = local_train(
                obj, shard, anchor, tau=0, cfg=cfg, rng=np.random.default_rng(21)
            )
            dists.append(float(np.linalg.norm(upd.params - anchor)))
        assert dists == sorted(dists, reverse=True)

    def test_anchor_not_mutated(self):
        shard = _shard()
        obj = QuadraticObjective(2)
        anchor = np.array([1.0, 1.0])
        cfg = WorkerConfig(gamma=0.1, rho=0.5, h_min=3, h_max=3, batch_size=4)
        local_train(obj, shard, anchor, tau=0, cfg=cfg, rng=np.random.default_rng(2))
        np.testing.assert_array_equal(anchor, [1.0, 1.0])

    def test_divergent_step_size_raises_with_iteration(self):
        shard = _shard(seed=5)
        obj = QuadraticObjective(2)
        cfg = WorkerConfig(gamma=1e6, rho=0.0, h_min=300, h_max=300, batch_size=None)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergenceError) as err:
                local_train(
                    obj, shard, np.ones(2), tau=0, cfg=cfg, rng=np.random.default_rng(0)
                )
        assert 0 <= err.value.iteration < 300

    def test_empty_shard_rejected(self):
        shard = _shard()
        empty = type(shard)(
            device_id=0,
            features=shard.features[:0],
            targets=shard.targets[:0],
            indices=shard.indices[:0],
        )
        obj = QuadraticObjective(2)
        cfg = WorkerConfig(gamma=0.1)
        with pytest.raises(ValueError, match="empty"):
            local_train(obj, empty, np.zeros(2), tau=0, cfg=cfg, rng=np.random.default_rng(0))


class TestLocalUpdate:
    def test_params_are_read_only(self):
        upd = LocalUpdate(params=np.zeros(3), tau=0, worker_id=1, local_iters=2)
        with pytest.raises(ValueError):
            upd.params[0] = 1.0

    def test_gradients_computed_equals_local_iters(self):
        upd = LocalUpdate(params=np.zeros(3), tau=0, worker_id=1, local_iters=7)
        assert upd.gradients_computed == 7

    def test_worker_stream_reproducibility(self):
        shard = _shard(seed=6)
        obj = QuadraticObjective(2)
        cfg = WorkerConfig(gamma=0.1, rho=0.005, h_min=2, h_max=6, batch_size=4)
        a = local_train(obj, shard, np.zeros(2), tau=0, cfg=cfg, rng=worker_rng(0, 3))
        b = local_train(obj, shard, np.zeros(2), tau=0, cfg=cfg, rng=worker_rng(0, 3))
        np.testing.assert_array_equal(a.params, b.params)
        assert a.local_iters == b.local_iters
