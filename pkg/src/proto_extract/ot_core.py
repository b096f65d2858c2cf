"""Exact discrete optimal transport between weighted point clouds in R^d.

The ground cost is always the squared Euclidean distance. The heavy lifting
is done by a transportation simplex, compiled when available::

    >>> from proto_extract import ot_core
    >>> ot_core.BACKEND in {"cython", "python"}
    True

Set ``PROTO_EXTRACT_PURE_PYTHON=1`` before import to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import TransportError

if os.environ.get("PROTO_EXTRACT_PURE_PYTHON"):
    from ._simplex_py import solve as _solve
    BACKEND = "python"
else:
    try:
        from ._simplex import solve as _solve
        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._simplex_py import solve as _solve
        BACKEND = "python"

WEIGHT_TOL = 1e-9

__all__ = [
    "BACKEND",
    "DiscreteDistribution",
    "TransportPlan",
    "solve_exact_transport",
    "wasserstein2_sq",
    "dirac_distance_sq",
    "barycentric_projection",
    "dirac_distances_sq",
    "sq_distances",
    "uniform",
    "dirac",
]


@dataclass(frozen=True)
class DiscreteDistribution:
    """Weighted point cloud; ``support`` is (n, d), ``weights`` is (n,)."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=np.float64)
        if support.ndim == 1:
            support = support[:, None]
        weights = np.array(self.weights, dtype=np.float64).ravel()
        if support.ndim != 2 or support.shape[0] < 1 or support.shape[1] < 1:
            raise TransportError(f"support must be a non-empty (n, d) array, got shape {support.shape}")
        if weights.shape[0] != support.shape[0]:
            raise TransportError(
                f"support has {support.shape[0]} points but {weights.shape[0]} weights"
            )
        if not np.all(np.isfinite(support)):
            raise TransportError("support contains non-finite coordinates")
        if not np.all(np.isfinite(weights)):
            raise TransportError("weights contain NaN or inf")
        if np.any(weights <= 0.0):
            raise TransportError("weights must be strictly positive (zero-weight atoms are rejected)")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise TransportError(f"weights sum to {weights.sum()!r}, expected 1")
        support.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def __len__(self) -> int:
        return self.support.shape[0]


@dataclass(frozen=True)
class TransportPlan:
    matrix: np.ndarray
    cost: float


def uniform(points) -> DiscreteDistribution:
    """Empirical measure with weight ``1/n`` on each point."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    return DiscreteDistribution(points, np.full(n, 1.0 / n) if n else np.empty(0))


def dirac(x) -> DiscreteDistribution:
    x = np.asarray(x, dtype=np.float64).ravel()
    return DiscreteDistribution(x[None, :], np.ones(1))


def sq_distances(x, y) -> np.ndarray:
    """Pairwise squared Euclidean distances."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)


def _check_dims(src: DiscreteDistribution, dst: DiscreteDistribution) -> None:
    if src.dim != dst.dim:
        raise TransportError(f"dimension mismatch: {src.dim} vs {dst.dim}")


def solve_exact_transport(src: DiscreteDistribution, dst: DiscreteDistribution) -> TransportPlan:
    """Optimal coupling of ``src`` and ``dst`` under squared Euclidean cost.

    Solved exactly by the transportation simplex; the plan need not be
    unique, but its cost is the minimum.
    """
    if not isinstance(src, DiscreteDistribution) or not isinstance(dst, DiscreteDistribution):
        raise TransportError("solve_exact_transport expects DiscreteDistribution arguments")
    _check_dims(src, dst)
    C = sq_distances(src.support, dst.support)
    if len(src) == 1 or len(dst) == 1:
        # the product measure is the only coupling
        matrix = np.outer(src.weights, dst.weights)
    else:
        # rescale so both marginals sum to exactly the same float
        b = dst.weights * (src.weights.sum() / dst.weights.sum())
        matrix, _, _ = _solve(src.weights, b, C)
    cost = float(np.sum(matrix * C))
    return TransportPlan(matrix=matrix, cost=max(cost, 0.0))


def wasserstein2_sq(src: DiscreteDistribution, dst: DiscreteDistribution) -> float:
    """Squared 2-Wasserstein distance."""
    return solve_exact_transport(src, dst).cost


def dirac_distance_sq(x, q: DiscreteDistribution) -> float:
    """``W2^2(delta_x, q)``, i.e. the weighted mean squared distance from ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != q.dim:
        raise TransportError(f"dimension mismatch: point has {x.shape[0]}, distribution has {q.dim}")
    return float(q.weights @ ((q.support - x) ** 2).sum(1))


def dirac_distances_sq(X, q: DiscreteDistribution) -> np.ndarray:
    """Vectorised :func:`dirac_distance_sq` over the rows of ``X``.

    Uses ``|x|^2 - 2 x.m + E|y|^2`` with ``m`` the mean of ``q``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != q.dim:
        raise TransportError(f"dimension mismatch: points have {X.shape[1]}, distribution has {q.dim}")
    mean = q.weights @ q.support
    second = float(q.weights @ (q.support ** 2).sum(1))
    return np.maximum((X ** 2).sum(1) - 2.0 * X @ mean + second, 0.0)


def barycentric_projection(plan, dst: DiscreteDistribution, src_weights, src_support=None) -> np.ndarray:
    """Map every source atom to the plan-weighted mean of its destinations.

    Rows whose source weight is below ``1e-12`` keep their original point
    (taken from ``src_support``; NaN if that is not given).
    """
    matrix = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    src_weights = np.asarray(src_weights, dtype=np.float64).ravel()
    if matrix.shape != (src_weights.shape[0], len(dst)):
        raise TransportError(
            f"plan shape {matrix.shape} does not match ({src_weights.shape[0]}, {len(dst)})"
        )
    out = np.full((matrix.shape[0], dst.dim), np.nan)
    ok = src_weights >= 1e-12
    out[ok] = (matrix[ok] @ dst.support) / src_weights[ok, None]
    if src_support is not None:
        src_support = np.asarray(src_support, dtype=np.float64).reshape(out.shape)
        out[~ok] = src_support[~ok]
    return out
