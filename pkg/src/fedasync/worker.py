"""Local training loop run by each device.

A worker pulls the current global model, runs a random number of
regularized SGD steps on its own shard, and sends back the resulting
parameters together with the epoch the pull happened at. The same
function drives the in-process simulators and the TCP worker process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedasync.data import MiniBatch, Shard, sample_minibatch
from fedasync.numerics import Objective


class DivergenceError(RuntimeError):
    """Raised when a local step produces a non-finite gradient or iterate."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite value at local step {iteration}")
        self.iteration = iteration


@dataclass
class WorkerConfig:
    """Hyperparameters of the local solver.

    Attributes
    ----------
    gamma : float
        Local SGD step size, >= 0 (0 freezes the iterate, occasionally
        useful as a control).
    rho : float
        Weight of the proximal pull toward the pulled global model, >= 0.
    h_min, h_max : int
        Bounds on the number of local steps; each run draws the count
        uniformly from ``{h_min, ..., h_max}``.
    batch_size : int or None
        Minibatch size (>= 1, sampled with replacement); None means every
        step uses the whole shard deterministically, with no draw from
        the sampling stream.
    """

    gamma: float
    rho: float = 0.0
    h_min: int = 1
    h_max: int = 1
    batch_size: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0.0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma!r}")
        if not np.isfinite(self.rho) or self.rho < 0.0:
            raise ValueError(f"rho must be finite and >= 0, got {self.rho!r}")
        if not 1 <= self.h_min <= self.h_max:
            raise ValueError(
                f"need 1 <= h_min <= h_max, got ({self.h_min}, {self.h_max})"
            )
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(
                f"batch_size must be None or >= 1, got {self.batch_size}"
            )

    @property
    def step_imbalance(self) -> float:
        """Ratio of the largest to smallest possible local step count."""
        return self.h_max / self.h_min


@dataclass
class LocalUpdate:
    """Result of one local run, as pushed back to the server.

    ``tau`` is the server epoch at which the model was pulled;
    ``params`` is marked read-only because the server mixes it into
    shared state.
    """

    params: np.ndarray
    tau: int
    worker_id: int
    local_iters: int

    def __post_init__(self):
        self.params.setflags(write=False)

    @property
    def gradients_computed(self) -> int:
        """One gradient per local step; the cost bookkeeping source."""
        return self.local_iters


def choose_steps(cfg: WorkerConfig, rng: np.random.Generator) -> int:
    """Number of local steps: one ``rng.integers(h_min, h_max + 1)`` draw.

    The draw happens even when ``h_min == h_max`` so the stream position
    never depends on the configured bounds.
    """
    return int(rng.integers(cfg.h_min, cfg.h_max + 1))


def local_train(
    objective: Objective,
    shard: Shard,
    anchor: np.ndarray,
    tau: int,
    cfg: WorkerConfig,
    rng: np.random.Generator,
    worker_id: int = 0,
) -> LocalUpdate:
    """Run one regularized local SGD pass starting from ``anchor``.

    Each step takes a minibatch gradient plus ``rho * (x - anchor)``, the
    anchor staying fixed at the pulled model for the whole run. Draw law:
    one step-count draw, then one minibatch draw per step (none when
    ``batch_size`` is None).

    Raises
    ------
    DivergenceError
        If the gradient or the iterate stops being finite.
    """
    if len(shard) == 0:
        raise ValueError("cannot train on an empty shard")
    x = np.array(anchor, dtype=np.float64)
    steps = choose_steps(cfg, rng)
    full: MiniBatch | None = None
    if cfg.batch_size is None:
        full = MiniBatch(features=shard.features, targets=shard.targets)
    for h in range(steps):
        batch = full if full is not None else sample_minibatch(shard, cfg.batch_size, rng)
        g = objective.grad(x, batch.features, batch.targets)
        if cfg.rho != 0.0:
            g = g + cfg.rho * (x - anchor)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(h)
        x -= cfg.gamma * g
        if not np.all(np.isfinite(x)):
            raise DivergenceError(h)
    return LocalUpdate(params=x, tau=tau, worker_id=worker_id, local_iters=steps)
