"""Deterministic in-process execution of the asynchronous protocol.

Two modes share all of the numeric machinery and differ only in how
staleness arises:

* ``sampled``: each epoch trains one uniformly chosen worker from a model
  drawn ``staleness`` epochs back out of the server's history, with
  ``staleness ~ U{0..min(max_staleness, epoch)}``. Cheap, and gives exact
  control over the staleness distribution.
* ``latency``: a discrete-event loop where each dispatched task finishes
  after per-worker compute plus network delays; staleness emerges from
  the overlap. Events are ordered by ``(time, sequence)`` so runs are
  reproducible tie for tie.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from fedasync.data import (
    Dataset,
    SERVER_DOMAIN,
    INIT_DOMAIN,
    Shard,
    delay_rng,
    domain_rng,
    gen_classification,
    gen_regression,
    partition_non_iid,
    train_eval_split,
    worker_rng,
)
from fedasync.metrics import MetricsRecord
from fedasync.numerics import (
    LogisticObjective,
    MlpObjective,
    Objective,
    QuadraticObjective,
)
from fedasync.server import (
    ServerConfig,
    ServerState,
    StaleUpdateError,
    apply_update,
    plan_triggers,
)
from fedasync.worker import DivergenceError, WorkerConfig, local_train

TASKS = ("quadratic", "logistic", "mlp")
MODES = ("sampled", "latency")


class RunFailure(RuntimeError):
    """A run aborted mid-stream (numeric divergence).

    Carries the metrics gathered before the failure so callers can
    persist partial output with a failure marker.
    """

    def __init__(self, records, epoch: int, cause: BaseException):
        super().__init__(f"run failed at epoch {epoch}: {cause}")
        self.records = records
        self.epoch = epoch
        self.cause = cause


DELAY_KINDS = ("constant", "uniform", "exponential")


@dataclass
class DelayModel:
    """Per-task latency: compute component plus network component.

    ``compute_means`` is either one shared mean or a per-worker list;
    ``kind`` selects the law both components follow: ``constant``
    (exactly the mean, no randomness), ``uniform`` (uniform on
    ``[0, 2 * mean]``), or ``exponential``. A mean of 0 makes that
    component identically zero. Each dispatch draws compute then
    network from the worker's delay stream; the constant law draws
    nothing.
    """

    compute_means: float | list[float] = 1.0
    network_mean: float = 0.1
    kind: str = "exponential"

    def __post_init__(self):
        if self.kind not in DELAY_KINDS:
            raise ValueError(
                f"unknown delay kind {self.kind!r}; expected one of {DELAY_KINDS}"
            )
        means = (
            list(self.compute_means)
            if isinstance(self.compute_means, (list, tuple))
            else [self.compute_means]
        )
        for m in means + [self.network_mean]:
            if not np.isfinite(m) or m < 0.0:
                raise ValueError(f"delay means must be finite and >= 0, got {m!r}")

    def compute_mean_for(self, worker_id: int) -> float:
        if isinstance(self.compute_means, (list, tuple)):
            return float(self.compute_means[worker_id % len(self.compute_means)])
        return float(self.compute_means)

    def _component(self, mean: float, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return mean
        if self.kind == "uniform":
            return float(rng.uniform(0.0, 2.0 * mean))
        return float(rng.exponential(mean))

    def draw(self, worker_id: int, rng: np.random.Generator) -> float:
        compute = self._component(self.compute_mean_for(worker_id), rng)
        network = self._component(self.network_mean, rng)
        return compute + network


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run from a seed."""

    task: str
    n_workers: int
    total_epochs: int
    server: ServerConfig
    worker: WorkerConfig
    mode: str = "sampled"
    n_samples: int = 1000
    dim: int = 10
    n_classes: int = 2
    sep: float = 3.0
    noise_std: float = 0.1
    hidden: int = 16
    eval_frac: float = 0.2
    classes_per_device: int = 0
    seed: int = 0
    eval_every: int = 1
    delay: DelayModel = field(default_factory=DelayModel)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.n_workers < 1:
            raise ValueError(f"need n_workers >= 1, got {self.n_workers}")
        if self.total_epochs < 1:
            raise ValueError(f"need total_epochs >= 1, got {self.total_epochs}")
        if self.eval_every < 1:
            raise ValueError(f"need eval_every >= 1, got {self.eval_every}")
        if self.task == "logistic" and self.n_classes != 2:
            raise ValueError("logistic task is binary; set n_classes=2")


@dataclass
class Problem:
    """Materialized task: objective, splits, device shards, start point."""

    objective: Objective
    train: Dataset
    eval_set: Dataset
    shards: list[Shard]
    x0: np.ndarray


@dataclass
class RunResult:
    records: list[MetricsRecord]
    final_params: np.ndarray
    state: ServerState
    trajectory: list[np.ndarray] | None = None
    # (worker_id, staleness) per applied update; latency mode only
    apply_log: list[tuple[int, int]] | None = None


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Generate data, split it, shard it, and pick the start point.

    The evaluation split is carved off before sharding so every device
    trains only on training rows. ``classes_per_device = 0`` means no
    skew for any task (mapped to the uniform split). Start point: zeros
    for the convex tasks, small seeded Gaussian weights for the network
    (zeros would freeze all hidden units into one).
    """
    if cfg.task == "quadratic":
        full = gen_regression(cfg.n_samples, cfg.dim, cfg.noise_std, cfg.seed)
        objective: Objective = QuadraticObjective(cfg.dim)
    elif cfg.task == "logistic":
        full = gen_classification(cfg.n_samples, cfg.dim, 2, cfg.sep, cfg.seed)
        objective = LogisticObjective(cfg.dim)
    else:
        full = gen_classification(
            cfg.n_samples, cfg.dim, cfg.n_classes, cfg.sep, cfg.seed
        )
        objective = MlpObjective(cfg.dim, cfg.hidden, cfg.n_classes)
    train, eval_set = train_eval_split(full, cfg.eval_frac, cfg.seed)
    cpd = cfg.classes_per_device
    if cpd == 0 and full.task == "classification":
        cpd = full.n_classes
    shards = partition_non_iid(train, cfg.n_workers, cpd, cfg.seed)
    if cfg.task == "mlp":
        x0 = domain_rng(cfg.seed, INIT_DOMAIN).standard_normal(objective.dim) * 0.1
    else:
        x0 = np.zeros(objective.dim)
    return Problem(objective=objective, train=train, eval_set=eval_set, shards=shards, x0=x0)


def make_record(
    problem: Problem,
    params: np.ndarray,
    *,
    epoch: int,
    gradients: int,
    alpha_t: float,
    staleness: int,
    sim_time: float,
) -> MetricsRecord:
    """Evaluate ``params``: loss and gradient norm on the full training
    split, accuracy on the held-out split."""
    obj = problem.objective
    loss = obj.loss(params, problem.train.features, problem.train.targets)
    g = obj.grad(params, problem.train.features, problem.train.targets)
    try:
        acc = obj.accuracy(params, problem.eval_set.features, problem.eval_set.targets)
    except NotImplementedError:
        acc = None
    return MetricsRecord(
        epoch=epoch,
        gradients=gradients,
        loss=loss,
        grad_norm_sq=float(np.dot(g, g)),
        accuracy=acc,
        alpha_t=alpha_t,
        staleness=staleness,
        sim_time=sim_time,
    )


def _baseline_record(problem: Problem) -> MetricsRecord:
    return make_record(
        problem,
        problem.x0,
        epoch=0,
        gradients=0,
        alpha_t=0.0,
        staleness=0,
        sim_time=0.0,
    )


def run_fedasync_sampled(
    cfg: ExperimentConfig,
    problem: Problem | None = None,
    record_trajectory: bool = False,
) -> RunResult:
    """Sampled-staleness mode.

    Per epoch the server stream draws the staleness
    ``s ~ U{0..min(max_staleness, epoch)}``, then the device uniformly
    (both draws always happen, keeping the stream position
    config-independent). The device trains from the historical model
    ``s`` epochs back, so the update's staleness at application is
    exactly ``s``.
    """
    if problem is None:
        problem = build_problem(cfg)
    state = ServerState.create(problem.x0)
    server_stream = domain_rng(cfg.seed, SERVER_DOMAIN)
    worker_streams = [worker_rng(cfg.seed, w) for w in range(cfg.n_workers)]
    records = [_baseline_record(problem)]
    trajectory: list[np.ndarray] | None = [] if record_trajectory else None
    try:
        for _ in range(cfg.total_epochs):
            hi = min(cfg.server.max_staleness, state.epoch)
            s = int(server_stream.integers(0, hi + 1))
            w = int(server_stream.integers(0, cfg.n_workers))
            base_epoch = state.epoch - s
            upd = local_train(
                problem.objective,
                problem.shards[w],
                state.history[base_epoch],
                base_epoch,
                cfg.worker,
                worker_streams[w],
                worker_id=w,
            )
            alpha_t = apply_update(state, cfg.server, upd)
            if trajectory is not None:
                trajectory.append(state.params.copy())
            if state.epoch % cfg.eval_every == 0 or state.epoch == cfg.total_epochs:
                records.append(
                    make_record(
                        problem,
                        state.params,
                        epoch=state.epoch,
                        gradients=state.n_gradients,
                        alpha_t=alpha_t,
                        staleness=state.last_staleness,
                        sim_time=0.0,
                    )
                )
    except DivergenceError as exc:
        raise RunFailure(records, state.epoch, exc) from exc
    return RunResult(
        records=records,
        final_params=state.params.copy(),
        state=state,
        trajectory=trajectory,
    )


def run_fedasync_latency(
    cfg: ExperimentConfig,
    problem: Problem | None = None,
    record_trajectory: bool = False,
) -> RunResult:
    """Discrete-event mode.

    Dispatch keeps at most ``max_staleness + 1`` tasks in flight. A task
    pulls and trains at dispatch time and its push lands after the drawn
    delay; pushes apply in ``(time, sequence)`` order. A push staler than
    the bound is dropped (counted on the server) and the worker is simply
    dispatched again, so rejected work never creates an epoch.
    """
    if problem is None:
        problem = build_problem(cfg)
    state = ServerState.create(problem.x0)
    worker_streams = [worker_rng(cfg.seed, w) for w in range(cfg.n_workers)]
    delay_streams = [delay_rng(cfg.seed, w) for w in range(cfg.n_workers)]
    records = [_baseline_record(problem)]
    trajectory: list[np.ndarray] | None = [] if record_trajectory else None

    heap: list[tuple[float, int, int, object]] = []
    seq = 0
    idle = set(range(cfg.n_workers))
    in_flight = 0
    cursor = 0
    apply_log: list[tuple[int, int]] = []

    def dispatch(now: float):
        nonlocal seq, in_flight, cursor
        chosen, cursor = plan_triggers(
            sorted(idle), in_flight, cfg.server.max_staleness, cursor
        )
        for w in chosen:
            idle.discard(w)
            in_flight += 1
            tau, params = state.pull()
            upd = local_train(
                problem.objective,
                problem.shards[w],
                params,
                tau,
                cfg.worker,
                worker_streams[w],
                worker_id=w,
            )
            done = now + cfg.delay.draw(w, delay_streams[w])
            heapq.heappush(heap, (done, seq, w, upd))
            seq += 1

    try:
        dispatch(0.0)
        while heap and state.epoch < cfg.total_epochs:
            now, _, w, upd = heapq.heappop(heap)
            in_flight -= 1
            idle.add(w)
            try:
                alpha_t = apply_update(state, cfg.server, upd)
            except StaleUpdateError:
                dispatch(now)
                continue
            apply_log.append((w, state.last_staleness))
            if trajectory is not None:
                trajectory.append(state.params.copy())
            if state.epoch % cfg.eval_every == 0 or state.epoch == cfg.total_epochs:
                records.append(
                    make_record(
                        problem,
                        state.params,
                        epoch=state.epoch,
                        gradients=state.n_gradients,
                        alpha_t=alpha_t,
                        staleness=state.last_staleness,
                        sim_time=now,
                    )
                )
            if state.epoch < cfg.total_epochs:
                dispatch(now)
    except DivergenceError as exc:
        raise RunFailure(records, state.epoch, exc) from exc
    return RunResult(
        records=records,
        final_params=state.params.copy(),
        state=state,
        trajectory=trajectory,
        apply_log=apply_log,
    )


def run_fedasync(
    cfg: ExperimentConfig,
    problem: Problem | None = None,
    record_trajectory: bool = False,
) -> RunResult:
    """Run the asynchronous protocol in the configured mode."""
    if cfg.mode == "sampled":
        return run_fedasync_sampled(cfg, problem, record_trajectory)
    return run_fedasync_latency(cfg, problem, record_trajectory)
