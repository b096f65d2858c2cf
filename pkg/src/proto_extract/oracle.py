"""Target model and the query protocol an extractor is allowed to use.

A query returns the target's label; inputs predicted as class 0 also come back
with a counterfactual that the target classifies as 1. Nothing else about the
target is visible through this interface.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import CounterfactualError, ModelError

__all__ = [
    "LinearModel",
    "QueryResponse",
    "QueryCounter",
    "Oracle",
    "train_logistic",
    "predict_proba",
    "predict_label",
    "query",
    "sigmoid",
    "logit",
]


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ModelError("model weights and bias must be finite and non-empty")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise ModelError(f"input has dimension {X.shape[-1]}, model expects {self.dim}")
        return X @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearModel":
        try:
            return cls(np.asarray(doc["weights"], dtype=np.float64), float(doc["bias"]))
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "LinearModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict_proba(model: LinearModel, x):
    """Sigmoid score; scalar for a single point, array for a batch."""
    return sigmoid(model.decision(x))


def predict_label(model: LinearModel, x):
    """1 iff the score is at least 0.5 (a score of exactly 0.5 is class 1)."""
    p = predict_proba(model, x)
    if np.ndim(p) == 0:
        return int(p >= 0.5)
    return (p >= 0.5).astype(np.int64)


def train_logistic(features, labels, l2: float = 1e-2, max_iters: int = 100,
                   tol: float = 1e-8, seed: int = 0) -> LinearModel:
    """L2-regularised logistic regression by damped Newton steps from zero.

    Minimises ``mean(log-loss) + l2/2 * |w|^2`` (the bias is not penalised).
    Deterministic: starts at zero and uses full-batch updates, so ``seed``
    only exists for interface symmetry with stochastic trainers.
    """
    del seed
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ModelError("features must be (N, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ModelError("features contain non-finite values")
    if not np.all((y == 0) | (y == 1)):
        raise ModelError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ModelError("training data contains a single class")
    if l2 < 0:
        raise ModelError("l2 must be non-negative")

    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    reg = np.full(d + 1, l2)
    reg[-1] = 0.0
    theta = np.zeros(d + 1)

    def loss(t):
        z = Xb @ t
        # log(1 + e^z) - y z, stable
        return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(reg * t * t))

    current = loss(theta)
    for _ in range(max_iters):
        p = sigmoid(Xb @ theta)
        grad = Xb.T @ (p - y) / n + reg * theta
        if np.linalg.norm(grad) <= tol:
            break
        hess = (Xb * (p * (1 - p))[:, None]).T @ Xb / n + np.diag(reg)
        hess[np.diag_indices_from(hess)] += 1e-12
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            val = loss(cand)
            if val <= current - 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        else:
            break
        theta, current = cand, val
    return LinearModel(theta[:d], float(theta[d]))


@dataclass(frozen=True)
class QueryResponse:
    label: int
    counterfactual: np.ndarray | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if (self.counterfactual is not None) != (self.label == 0):
            raise ValueError("a counterfactual must accompany exactly the class-0 responses")


class QueryCounter:
    """Thread-safe tally of issued queries."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self) -> int:
        with self._lock:
            self._count += 1
            return self._count

    @property
    def count(self) -> int:
        return self._count


CfGenerator = Callable[[LinearModel, np.ndarray], np.ndarray]


def query(model: LinearModel, cf_generator: CfGenerator, x, counter: QueryCounter) -> QueryResponse:
    """Issue one query: the target's label, plus a counterfactual for class 0."""
    x = np.asarray(x, dtype=np.float64).ravel()
    label = int(predict_label(model, x))
    counter.increment()
    if label == 1:
        return QueryResponse(1)
    try:
        cf = np.asarray(cf_generator(model, x), dtype=np.float64).ravel()
    except CounterfactualError as exc:
        if exc.x is None:
            exc.x = x
        raise
    if cf.shape != x.shape or not np.all(np.isfinite(cf)):
        raise CounterfactualError("counterfactual generator returned a malformed point", x)
    if predict_label(model, cf) != 1:
        raise CounterfactualError(
            f"counterfactual is not valid: target score {predict_proba(model, cf):.6f} < 0.5", x
        )
    return QueryResponse(0, cf)


class Oracle:
    """Query-only handle on a target model.

    Extraction code receives an ``Oracle`` and nothing else about the target.
    """

    def __init__(self, model: LinearModel, cf_generator: CfGenerator):
        self._model = model
        self._cf_generator = cf_generator
        self.counter = QueryCounter()

    @property
    def dim(self) -> int:
        return self._model.dim

    @property
    def n_queries(self) -> int:
        return self.counter.count

    def query(self, x) -> QueryResponse:
        return query(self._model, self._cf_generator, x, self.counter)

    def query_many(self, X) -> list[tuple[np.ndarray, QueryResponse]]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return [(x, self.query(x)) for x in X]
