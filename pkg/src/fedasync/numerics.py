"""Objective functions and the small numeric kernel used everywhere else.

Parameter vectors are plain 1-D float64 numpy arrays. Every objective
exposes the same four entry points (``loss``, ``grad``, ``predict``,
``accuracy``) over a feature matrix ``X`` and a target vector ``y`` so the
training loops never branch on the model family.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np


def _as_params(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"parameter vector must be 1-D, got shape {x.shape}")
    return x


def mix(current: np.ndarray, incoming: np.ndarray, alpha: float) -> np.ndarray:
    """Convex combination ``(1 - alpha) * current + alpha * incoming``.

    Parameters
    ----------
    current, incoming : ndarray
        Parameter vectors of identical length.
    alpha : float
        Mixing weight in ``[0, 1]``. ``alpha=0`` returns a copy of
        ``current``; ``alpha=1`` a copy of ``incoming``.

    Returns
    -------
    ndarray
        New float64 vector; inputs are never modified.
    """
    current = _as_params(current)
    incoming = _as_params(incoming)
    if current.shape != incoming.shape:
        raise ValueError(
            f"dimension mismatch: {current.shape[0]} vs {incoming.shape[0]}"
        )
    if not np.isfinite(alpha) or not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha!r}")
    return (1.0 - alpha) * current + alpha * incoming


def reg_grad(
    objective: "Objective",
    params: np.ndarray,
    anchor: np.ndarray,
    rho: float,
    X: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """Gradient of the proximally regularized local objective.

    Adds ``rho * (params - anchor)`` to the data gradient, pulling the
    local iterate back toward the anchor (the global model the worker
    started from).
    """
    params = _as_params(params)
    anchor = _as_params(anchor)
    if params.shape != anchor.shape:
        raise ValueError(
            f"dimension mismatch: {params.shape[0]} vs {anchor.shape[0]}"
        )
    if not np.isfinite(rho) or rho < 0.0:
        raise ValueError(f"rho must be a finite nonnegative float, got {rho!r}")
    return objective.grad(params, X, y) + rho * (params - anchor)


def finite_diff_grad(
    objective: "Objective",
    params: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    eps: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient estimate, one coordinate at a time.

    Slow by construction; used as an independent check on the analytic
    gradients, never inside a training loop.
    """
    params = _as_params(params)
    if not np.isfinite(eps) or eps <= 0.0:
        raise ValueError(f"eps must be a positive float, got {eps!r}")
    out = np.empty_like(params)
    probe = params.copy()
    for i in range(params.shape[0]):
        orig = probe[i]
        probe[i] = orig + eps
        hi = objective.loss(probe, X, y)
        probe[i] = orig - eps
        lo = objective.loss(probe, X, y)
        probe[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return out


class Objective(ABC):
    """Differentiable objective over (features, targets) batches.

    Attributes
    ----------
    dim : int
        Length of the parameter vector the objective expects.
    """

    dim: int

    @abstractmethod
    def loss(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        """Mean loss of ``params`` on the batch."""

    @abstractmethod
    def grad(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gradient of :meth:`loss` with respect to ``params``."""

    @abstractmethod
    def predict(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Point predictions for each row of ``X``."""

    def accuracy(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        """Fraction of exact prediction matches (classification only)."""
        raise NotImplementedError(f"{type(self).__name__} has no accuracy metric")

    def _check(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        params = _as_params(params)
        if params.shape[0] != self.dim:
            raise ValueError(
                f"expected {self.dim} parameters, got {params.shape[0]}"
            )
        if X.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
        return params


class QuadraticObjective(Objective):
    """Least-squares regression: ``loss = ||X @ w - y||^2 / (2 m)``.

    Convex and smooth, so it is the workhorse for convergence checks
    where the optimum is known in closed form.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)

    def loss(self, params, X, y):
        params = self._check(params, X)
        r = X @ params - y
        return float(0.5 * np.dot(r, r) / X.shape[0])

    def grad(self, params, X, y):
        params = self._check(params, X)
        return X.T @ (X @ params - y) / X.shape[0]

    def predict(self, params, X):
        params = self._check(params, X)
        return X @ params


class LogisticObjective(Objective):
    """Binary logistic regression over labels in ``{0, 1}``.

    ``loss = mean(log(1 + exp(-s * (X @ w)))) + l2/2 * ||w||^2`` where
    ``s = 2 y - 1``. The log-sum is evaluated via ``logaddexp`` so large
    margins never overflow.
    """

    def __init__(self, dim: int, l2: float = 0.0):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if not np.isfinite(l2) or l2 < 0.0:
            raise ValueError(f"l2 must be a finite nonnegative float, got {l2!r}")
        self.dim = int(dim)
        self.l2 = float(l2)

    def _signs(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return 2.0 * y - 1.0

    def loss(self, params, X, y):
        params = self._check(params, X)
        margins = self._signs(y) * (X @ params)
        data = float(np.mean(np.logaddexp(0.0, -margins)))
        return data + 0.5 * self.l2 * float(np.dot(params, params))

    def grad(self, params, X, y):
        params = self._check(params, X)
        s = self._signs(y)
        margins = s * (X @ params)
        # d/dm log(1 + e^{-m}) = -sigmoid(-m); exponentiate only the
        # nonpositive branch so huge margins cannot overflow
        sig = np.empty_like(margins)
        pos = margins >= 0
        e = np.exp(-margins[pos])
        sig[pos] = e / (1.0 + e)
        sig[~pos] = 1.0 / (1.0 + np.exp(margins[~pos]))
        return -(X.T @ (s * sig)) / X.shape[0] + self.l2 * params

    def predict(self, params, X):
        params = self._check(params, X)
        return (X @ params > 0.0).astype(np.int64)

    def accuracy(self, params, X, y):
        pred = self.predict(params, X)
        return float(np.mean(pred == np.asarray(y).astype(np.int64)))


class MlpObjective(Objective):
    """One-hidden-layer tanh network with softmax cross-entropy.

    The parameter vector is the flat concatenation, in row-major order,
    of ``W1 (d_in x hidden)``, ``b1 (hidden)``, ``W2 (hidden x classes)``
    and ``b2 (classes)``. Targets are integer class ids in
    ``[0, classes)``.
    """

    def __init__(self, d_in: int, hidden: int, classes: int):
        if d_in < 1 or hidden < 1 or classes < 2:
            raise ValueError(
                f"need d_in >= 1, hidden >= 1, classes >= 2; "
                f"got ({d_in}, {hidden}, {classes})"
            )
        self.d_in = int(d_in)
        self.hidden = int(hidden)
        self.classes = int(classes)
        self.dim = d_in * hidden + hidden + hidden * classes + classes

    def _unpack(self, params: np.ndarray):
        d, h, c = self.d_in, self.hidden, self.classes
        i = 0
        W1 = params[i : i + d * h].reshape(d, h)
        i += d * h
        b1 = params[i : i + h]
        i += h
        W2 = params[i : i + h * c].reshape(h, c)
        i += h * c
        b2 = params[i : i + c]
        return W1, b1, W2, b2

    def _forward(self, params, X):
        W1, b1, W2, b2 = self._unpack(params)
        A1 = np.tanh(X @ W1 + b1)
        logits = A1 @ W2 + b2
        return A1, logits

    @staticmethod
    def _log_softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def loss(self, params, X, y):
        params = self._check(params, X)
        _, logits = self._forward(params, X)
        logp = self._log_softmax(logits)
        idx = np.asarray(y).astype(np.int64)
        return float(-np.mean(logp[np.arange(X.shape[0]), idx]))

    def grad(self, params, X, y):
        params = self._check(params, X)
        W1, b1, W2, b2 = self._unpack(params)
        m = X.shape[0]
        A1 = np.tanh(X @ W1 + b1)
        logits = A1 @ W2 + b2
        logp = self._log_softmax(logits)
        P = np.exp(logp)
        idx = np.asarray(y).astype(np.int64)
        P[np.arange(m), idx] -= 1.0
        P /= m
        gW2 = A1.T @ P
        gb2 = P.sum(axis=0)
        dA1 = P @ W2.T
        dZ1 = dA1 * (1.0 - A1 * A1)
        gW1 = X.T @ dZ1
        gb1 = dZ1.sum(axis=0)
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])

    def predict(self, params, X):
        params = self._check(params, X)
        _, logits = self._forward(params, X)
        return logits.argmax(axis=1)

    def accuracy(self, params, X, y):
        pred = self.predict(params, X)
        return float(np.mean(pred == np.asarray(y).astype(np.int64)))
