"""Surrogate models fitted from query responses, and the fidelity metric."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .barycenter import PrototypeFitConfig, PrototypePair, fit_prototypes
from .errors import ModelError
from .oracle import LinearModel, QueryResponse, predict_label, train_logistic
from .ot_core import DiscreteDistribution, dirac_distances_sq

__all__ = [
    "QueryDataset",
    "PrototypeSurrogate",
    "build_query_dataset",
    "fit_prototype_surrogate",
    "predict_prototype",
    "fit_baseline1",
    "fidelity",
]

CF_LABEL = 0.5


@dataclass
class QueryDataset:
    """Query points split by response: class 0, class 1 and counterfactuals (soft label 0.5)."""

    d0: np.ndarray
    d1: np.ndarray
    d_cf: np.ndarray

    @property
    def n_queries(self) -> int:
        return self.d0.shape[0] + self.d1.shape[0]

    @property
    def dim(self) -> int:
        return self.d0.shape[1]

    def labelled(self) -> tuple[np.ndarray, np.ndarray]:
        """All points with labels in {0, 0.5, 1}."""
        X = np.vstack([self.d0, self.d1, self.d_cf])
        y = np.concatenate([
            np.zeros(self.d0.shape[0]),
            np.ones(self.d1.shape[0]),
            np.full(self.d_cf.shape[0], CF_LABEL),
        ])
        return X, y


def build_query_dataset(responses: Iterable[tuple[np.ndarray, QueryResponse]], dim: int | None = None) -> QueryDataset:
    """Sort ``(x, response)`` pairs into class-0, class-1 and counterfactual sets."""
    d0, d1, d_cf = [], [], []
    for x, resp in responses:
        x = np.asarray(x, dtype=np.float64).ravel()
        if dim is None:
            dim = x.shape[0]
        if resp.label == 0:
            if resp.counterfactual is None:
                raise ModelError("class-0 response without a counterfactual")
            d0.append(x)
            d_cf.append(np.asarray(resp.counterfactual, dtype=np.float64).ravel())
        elif resp.label == 1:
            d1.append(x)
        else:
            raise ModelError(f"unexpected label {resp.label!r}")
    if dim is None:
        raise ModelError("no responses and no dimension given")

    def stack(rows):
        return np.array(rows, dtype=np.float64).reshape(len(rows), dim)

    return QueryDataset(stack(d0), stack(d1), stack(d_cf))


@dataclass
class PrototypeSurrogate:
    """Classifies a point by its W2 distance to each class prototype."""

    prototypes: PrototypePair
    tau: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def dim(self) -> int:
        return self.prototypes.q0.dim

    def distances(self, X) -> tuple[np.ndarray, np.ndarray]:
        """``W2(delta_x, q0)`` and ``W2(delta_x, q1)`` for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ModelError(f"input has dimension {X.shape[1]}, surrogate expects {self.dim}")
        a = np.sqrt(dirac_distances_sq(X, self.prototypes.q0))
        b = np.sqrt(dirac_distances_sq(X, self.prototypes.q1))
        return a, b

    def predict_many(self, X) -> np.ndarray:
        a, b = self.distances(X)
        out = np.where(b <= a, 1, 0)
        out[a < b - self.tau] = 0
        out[b < a - self.tau] = 1
        return out.astype(np.int64)

    def predict(self, x) -> int:
        return int(self.predict_many(np.asarray(x, dtype=np.float64).ravel()[None, :])[0])

    def in_margin(self, X) -> np.ndarray:
        """Rows that fall in the ``|a - b| <= tau`` band."""
        a, b = self.distances(X)
        return np.abs(a - b) <= self.tau

    def linear_equivalent(self) -> tuple[np.ndarray, float]:
        """``(w, b)`` with ``w.x + b >= 0`` exactly when ``x`` is at least as close to ``q1``.

        Squared W2 to a fixed measure is ``|x|^2 - 2 x.mean + E|y|^2``, so the
        comparison is affine in ``x``.
        """
        q0, q1 = self.prototypes.q0, self.prototypes.q1
        m0, m1 = q0.weights @ q0.support, q1.weights @ q1.support
        s0 = float(q0.weights @ (q0.support ** 2).sum(1))
        s1 = float(q1.weights @ (q1.support ** 2).sum(1))
        return 2.0 * (m1 - m0), s0 - s1

    def to_dict(self) -> dict:
        def dist(q: DiscreteDistribution):
            return {"support": q.support.tolist(), "weights": q.weights.tolist()}

        return {
            "kind": "prototype",
            "tau": self.tau,
            "q0": dist(self.prototypes.q0),
            "q1": dist(self.prototypes.q1),
            "objective_trace": list(self.prototypes.objective_trace),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PrototypeSurrogate":
        pair = PrototypePair(
            q0=DiscreteDistribution(doc["q0"]["support"], doc["q0"]["weights"]),
            q1=DiscreteDistribution(doc["q1"]["support"], doc["q1"]["weights"]),
            objective_trace=list(doc.get("objective_trace", [])),
        )
        return cls(pair, float(doc.get("tau", 0.0)), dict(doc.get("meta", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PrototypeSurrogate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict_prototype(s: PrototypeSurrogate, x) -> int:
    """Prototype decision for one point.

    0 if ``W2(x, q0) < W2(x, q1) - tau``, 1 if ``W2(x, q1) < W2(x, q0) - tau``;
    inside the band the nearer prototype wins, with ties going to class 1.
    """
    return s.predict(x)


def fit_prototype_surrogate(qd: QueryDataset, cfg: PrototypeFitConfig | None = None,
                            tau: float = 0.0) -> PrototypeSurrogate:
    pair = fit_prototypes(qd.d0, qd.d1, qd.d_cf, cfg)
    return PrototypeSurrogate(pair, tau)


def fit_baseline1(qd: QueryDataset, l2: float = 1e-2, max_iters: int = 100, tol: float = 1e-8) -> LinearModel:
    """Logistic regression with counterfactuals relabelled as class 1."""
    X = np.vstack([qd.d0, qd.d1, qd.d_cf])
    y = np.concatenate([np.zeros(qd.d0.shape[0]), np.ones(qd.d1.shape[0] + qd.d_cf.shape[0])])
    if qd.d0.shape[0] == 0 or y.sum() == 0:
        raise ModelError("baseline 1 needs at least one sample of each class")
    return train_logistic(X, y, l2=l2, max_iters=max_iters, tol=tol)


def fidelity(target: LinearModel, surrogate_predict: Callable, d_ref, batched: bool = False) -> float:
    """Fraction of reference points on which surrogate and target agree.

    ``surrogate_predict`` maps one point to 0/1, or, with ``batched=True``,
    an (N, d) array to N labels.
    """
    d_ref = np.atleast_2d(np.asarray(d_ref, dtype=np.float64))
    if d_ref.shape[0] == 0 or d_ref.size == 0:
        raise ModelError("reference set is empty")
    truth = np.asarray(predict_label(target, d_ref)).reshape(-1)
    if batched:
        pred = np.asarray(surrogate_predict(d_ref)).reshape(-1)
    else:
        pred = np.array([surrogate_predict(x) for x in d_ref])
    agree = int(np.sum(truth == pred))
    return agree / d_ref.shape[0]
