"""Counterfactual-aware Wasserstein-barycenter class prototypes.

Each class prototype ``q_c`` is a free-support measure with ``k`` uniformly
weighted atoms. Fitting minimises

    sum_c [ W2^2(q_c, P_c) + lambda_c * W2^2(q_c, P_cf) ]
        + gamma * (W2(q_0, P_cf) - W2(q_1, P_cf))^2

by alternating a free-support fixed-point step per class with a gradient step
on the symmetry term.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PrototypeFitError
from .ot_core import (
    DiscreteDistribution,
    TransportPlan,
    barycentric_projection,
    solve_exact_transport,
    sq_distances,
    uniform,
)

logger = logging.getLogger(__name__)

# W2 values below this make the symmetry gradient undefined; use zero
_W_FLOOR = 1e-9


@dataclass
class PrototypeFitConfig:
    """Knobs of :func:`fit_prototypes`.

    ``k=None`` means ``min(50, N_c)`` atoms per class. ``lambda_c`` may be a
    single value shared by both classes or a ``(lambda_0, lambda_1)`` pair.
    """

    k: int | None = None
    lambda_c: float | tuple[float, float] = 0.5
    gamma: float = 0.3
    max_outer_iters: int = 100
    tol: float = 1e-5
    reg_step: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.reg_step <= 0:
            raise ValueError("reg_step must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if min(self.lambdas) < 0:
            raise ValueError("lambda_c must be >= 0")

    @property
    def lambdas(self) -> tuple[float, float]:
        lam = self.lambda_c
        if isinstance(lam, (int, float)):
            return float(lam), float(lam)
        lam0, lam1 = lam
        return float(lam0), float(lam1)

    def atoms_for(self, n_samples: int) -> int:
        k = 50 if self.k is None else self.k
        return min(k, n_samples)


@dataclass
class PrototypePair:
    q0: DiscreteDistribution
    q1: DiscreteDistribution
    objective_trace: list[float] = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return len(self.objective_trace)


def _as_points(samples) -> np.ndarray:
    pts = np.asarray(samples, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def init_support(samples, k: int, seed) -> DiscreteDistribution:
    """Pick ``k`` starting atoms by k-means++ seeding (all samples if ``k >= n``)."""
    pts = _as_points(samples)
    n = pts.shape[0]
    if n == 0:
        raise PrototypeFitError("cannot initialise a prototype from an empty sample set")
    if k >= n:
        return uniform(pts)

    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    closest = sq_distances(pts, pts[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every remaining point duplicates a centre; draw among the unused ones
            unused = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(unused))
        else:
            idx = int(rng.choice(n, p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, sq_distances(pts, pts[idx][None, :])[:, 0])
    return uniform(pts[chosen])


def class_objective(q: DiscreteDistribution, p_class: DiscreteDistribution,
                    p_cf: DiscreteDistribution | None, lambda_c: float) -> float:
    """``W2^2(q, p_class) + lambda_c * W2^2(q, p_cf)``; the second term is 0 without counterfactuals."""
    value = solve_exact_transport(q, p_class).cost
    if p_cf is not None:
        value += lambda_c * solve_exact_transport(q, p_cf).cost
    return value


def _penalty_from_plans(q0, q1, p_cf, plan0: TransportPlan, plan1: TransportPlan):
    w0 = math.sqrt(plan0.cost)
    w1 = math.sqrt(plan1.cost)
    diff = w0 - w1
    grads = []
    for q, plan, w, sign in ((q0, plan0, w0, 1.0), (q1, plan1, w1, -1.0)):
        if w < _W_FLOOR or w0 < _W_FLOOR or w1 < _W_FLOOR:
            grads.append(np.zeros_like(q.support))
            continue
        # d W_c^2 / d x_j = 2 (a_j x_j - sum_k plan[j, k] y_k), plan held fixed
        half_grad_sq = q.weights[:, None] * q.support - plan.matrix @ p_cf.support
        grads.append(2.0 * diff * sign * half_grad_sq / w)
    return diff * diff, grads[0], grads[1]


def symmetry_penalty(q0: DiscreteDistribution, q1: DiscreteDistribution, p_cf: DiscreteDistribution):
    """Squared gap between ``W2(q0, p_cf)`` and ``W2(q1, p_cf)`` and its gradients.

    Returns ``(value, grad0, grad1)`` where ``grad_c`` has the shape of
    ``q_c.support``. Gradients use the envelope theorem with the optimal plans
    held fixed; they are zero if either distance is (numerically) zero.
    """
    if p_cf is None or len(p_cf) == 0:
        raise PrototypeFitError("symmetry penalty needs a non-empty counterfactual distribution")
    plan0 = solve_exact_transport(q0, p_cf)
    plan1 = solve_exact_transport(q1, p_cf)
    return _penalty_from_plans(q0, q1, p_cf, plan0, plan1)


def joint_objective(q0, q1, p0, p1, p_cf, lambdas=(0.5, 0.5), gamma: float = 0.3) -> float:
    """Full two-class objective (class terms plus weighted symmetry penalty)."""
    return _evaluate(q0, q1, p0, p1, p_cf, lambdas, gamma)[0]


def _evaluate(q0, q1, p0, p1, p_cf, lambdas, gamma):
    plans_cls = (solve_exact_transport(q0, p0), solve_exact_transport(q1, p1))
    value = plans_cls[0].cost + plans_cls[1].cost
    plans_cf = (None, None)
    if p_cf is not None:
        plans_cf = (solve_exact_transport(q0, p_cf), solve_exact_transport(q1, p_cf))
        value += lambdas[0] * plans_cf[0].cost + lambdas[1] * plans_cf[1].cost
        if gamma > 0:
            gap = math.sqrt(plans_cf[0].cost) - math.sqrt(plans_cf[1].cost)
            value += gamma * gap * gap
    return value, plans_cls, plans_cf


def fit_prototypes(d0, d1, d_cf, cfg: PrototypeFitConfig | None = None) -> PrototypePair:
    """Fit the pair of class prototypes from class samples and counterfactuals.

    Parameters
    ----------
    d0, d1 : array_like, shape (N_c, d)
        Query points labelled 0 and 1. Both must be non-empty.
    d_cf : array_like, shape (N_cf, d)
        Counterfactual points (soft label 0.5). May be empty, in which case
        each prototype is a plain free-support barycenter of its class.
    cfg : PrototypeFitConfig, optional

    Returns
    -------
    PrototypePair
        The prototypes with the lowest objective seen, and the objective
        value after every outer iteration.
    """
    cfg = cfg or PrototypeFitConfig()
    pts = [_as_points(d0), _as_points(d1)]
    for c, p in enumerate(pts):
        if p.shape[0] == 0:
            raise PrototypeFitError(f"class {c} has no samples")
    cf_pts = _as_points(d_cf)
    has_cf = cf_pts.shape[0] > 0
    if has_cf and cf_pts.shape[1] != pts[0].shape[1]:
        raise PrototypeFitError("counterfactual dimension differs from class samples")
    if pts[0].shape[1] != pts[1].shape[1]:
        raise PrototypeFitError("class sample dimensions differ")

    p_cls = (uniform(pts[0]), uniform(pts[1]))
    p_cf = uniform(cf_pts) if has_cf else None
    lambdas = cfg.lambdas
    gamma = cfg.gamma if has_cf else 0.0

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    supports = [
        init_support(pts[c], cfg.atoms_for(pts[c].shape[0]), np.random.default_rng(seeds[c])).support.copy()
        for c in (0, 1)
    ]

    q = [uniform(s) for s in supports]
    value, plans_cls, plans_cf = _evaluate(q[0], q[1], *p_cls, p_cf, lambdas, gamma)
    best = (value, q[0], q[1])
    trace: list[float] = []
    prev = value

    for it in range(cfg.max_outer_iters):
        for c in (0, 1):
            proj = barycentric_projection(plans_cls[c], p_cls[c], q[c].weights, q[c].support)
            if has_cf:
                proj_cf = barycentric_projection(plans_cf[c], p_cf, q[c].weights, q[c].support)
                proj = (proj + lambdas[c] * proj_cf) / (1.0 + lambdas[c])
            supports[c] = proj

        if gamma > 0:
            q = [uniform(s) for s in supports]
            _, g0, g1 = symmetry_penalty(q[0], q[1], p_cf)
            with np.errstate(over="ignore", invalid="ignore"):  # caught by the finiteness check
                supports[0] = supports[0] - cfg.reg_step * gamma * g0
                supports[1] = supports[1] - cfg.reg_step * gamma * g1

        if not (np.all(np.isfinite(supports[0])) and np.all(np.isfinite(supports[1]))):
            raise PrototypeFitError(
                f"non-finite prototype support at iteration {it}; reg_step={cfg.reg_step} is likely too large"
            )
        q = [uniform(s) for s in supports]
        value, plans_cls, plans_cf = _evaluate(q[0], q[1], *p_cls, p_cf, lambdas, gamma)
        trace.append(value)
        if value < best[0]:
            best = (value, q[0], q[1])
        if abs(prev - value) <= cfg.tol * abs(prev):
            break
        prev = value

    if best[0] < trace[-1]:
        # the gamma step can overshoot; hand back the best iterate seen
        logger.debug("restoring best prototypes (%.6g < %.6g)", best[0], trace[-1])
        trace.append(best[0])
    return PrototypePair(q0=best[1], q1=best[2], objective_trace=trace)
