"""Counterfactual generators for inputs the target rejects.

``mccf_l2`` is the exact minimum-L2 move for a linear target. ``mccf_iterative``
solves the penalised objective ``(f(x') - 1)^2 + lambda * d(x, x')`` by
(proximal) gradient descent while shrinking ``lambda``, and supports an L1
cost. ``nearest_neighbor_cf`` returns the closest accepted point from a pool.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .errors import CounterfactualError
from .oracle import LinearModel, logit, predict_label, predict_proba, sigmoid

COSTS = ("l2", "l1", "nearest_neighbor")

# cf_method names accepted by the harness -> (generator, cost)
METHODS = ("mccf_l2", "mccf_l2_iterative", "mccf_l1", "nearest_neighbor")


@dataclass
class CfConfig:
    cost: str = "l2"
    target_margin: float = 0.05
    lambda_init: float = 1.0
    lambda_mult: float = 2.0
    max_rounds: int = 60
    max_iters: int = 2000
    step_size: float = 1.0
    proba_tol: float = 1e-7
    clip: bool = False
    neighbor_pool: np.ndarray | None = None

    def __post_init__(self):
        if self.cost not in COSTS:
            raise ValueError(f"cost must be one of {COSTS}, got {self.cost!r}")
        if not 0.0 < self.target_margin < 0.5:
            raise ValueError("target_margin must lie in (0, 0.5)")
        if self.lambda_mult <= 1.0:
            raise ValueError("lambda_mult must be > 1")
        if self.lambda_init <= 0 or self.step_size <= 0:
            raise ValueError("lambda_init and step_size must be positive")

    @property
    def target_proba(self) -> float:
        return 0.5 + self.target_margin


def _finish(model: LinearModel, x_cf: np.ndarray, x: np.ndarray, cfg: CfConfig) -> np.ndarray:
    if cfg.clip:
        x_cf = np.clip(x_cf, 0.0, 1.0)
    if predict_label(model, x_cf) != 1:
        raise CounterfactualError("counterfactual lost validity (after clipping)", x)
    return x_cf


def mccf_l2(model: LinearModel, x, cfg: CfConfig | None = None) -> np.ndarray:
    """Closest point (Euclidean) at which the target scores ``0.5 + target_margin``.

    Raises if ``x`` is already strictly past that level.
    """
    cfg = cfg or CfConfig()
    x = np.asarray(x, dtype=np.float64).ravel()
    w = model.weights
    norm_sq = float(w @ w)
    if norm_sq < 1e-24:
        raise CounterfactualError("degenerate model: |w| is zero", x)
    target = logit(cfg.target_proba)
    gap = target - float(model.decision(x))
    if gap < 0.0:
        raise CounterfactualError("input is already classified beyond the target margin", x)
    return _finish(model, x + (gap / norm_sq) * w, x, cfg)


def _score_grad(model: LinearModel, x: np.ndarray):
    """Score ``f(x)`` and its gradient."""
    p = float(sigmoid(model.decision(x)))
    return p, p * (1.0 - p) * model.weights


def _smooth(model, x_cf, x, lam, l2_cost):
    """Smooth part of the objective and its gradient at ``x_cf``."""
    p, dp = _score_grad(model, x_cf)
    val = (p - 1.0) ** 2
    grad = 2.0 * (p - 1.0) * dp
    if l2_cost:
        diff = x_cf - x
        val += lam * float(diff @ diff)
        grad = grad + 2.0 * lam * diff
    return val, grad


def _minimise(model, x, start, lam, cfg: CfConfig):
    """Backtracking (proximal) gradient descent on the penalised objective."""
    l2_cost = cfg.cost == "l2"
    cur = start.copy()
    step = cfg.step_size
    val, grad = _smooth(model, cur, x, lam, l2_cost)
    for _ in range(cfg.max_iters):
        while True:
            cand = cur - step * grad
            if not l2_cost:
                # prox of step * lam * |. - x|_1
                shift = cand - x
                cand = x + np.sign(shift) * np.maximum(np.abs(shift) - step * lam, 0.0)
            move = cand - cur
            cval, cgrad = _smooth(model, cand, x, lam, l2_cost)
            # sufficient decrease for the smooth part (standard ISTA test)
            if cval <= val + float(grad @ move) + float(move @ move) / (2.0 * step) or step < 1e-14:
                break
            step *= 0.5
        cur, val, grad = cand, cval, cgrad
        if float(np.abs(move).max()) < 1e-13:
            break
        step *= 2.0
    return cur


def mccf_iterative(model: LinearModel, x, cfg: CfConfig | None = None) -> np.ndarray:
    """Penalised gradient search for a counterfactual with L2 or L1 cost.

    ``lambda`` is divided by ``lambda_mult`` until the minimiser reaches the
    target score; the move is then shortened by bisection along its own
    direction to just past the target score.
    """
    cfg = cfg or CfConfig()
    if cfg.cost not in ("l2", "l1"):
        raise ValueError("mccf_iterative supports the l2 and l1 costs")
    x = np.asarray(x, dtype=np.float64).ravel()
    if predict_label(model, x) != 0:
        raise CounterfactualError("input is already classified as 1", x)
    target = cfg.target_proba

    lam = cfg.lambda_init
    cur = x.copy()
    for _ in range(cfg.max_rounds):
        cur = _minimise(model, x, cur, lam, cfg)
        if predict_proba(model, cur) >= target:
            break
        lam /= cfg.lambda_mult
    else:
        raise CounterfactualError(
            f"no valid counterfactual after {cfg.max_rounds} lambda rounds (lambda={lam:.3g})", x
        )

    # the minimiser can jump past the target score as lambda shrinks; pull it
    # back along the segment from x to the smallest move that stays valid
    lo, hi = 0.0, 1.0
    direction = cur - x
    for _ in range(200):
        if hi - lo <= 1e-15:
            break
        mid = 0.5 * (lo + hi)
        if predict_proba(model, x + mid * direction) >= target:
            hi = mid
        else:
            lo = mid
        if predict_proba(model, x + hi * direction) - target <= cfg.proba_tol:
            break
    return _finish(model, x + hi * direction, x, cfg)


def nearest_neighbor_cf(x, pool) -> np.ndarray:
    """Closest pool point to ``x`` (lowest index wins ties)."""
    pool = np.atleast_2d(np.asarray(pool, dtype=np.float64))
    if pool.size == 0:
        raise CounterfactualError("nearest-neighbour pool is empty", x)
    x = np.asarray(x, dtype=np.float64).ravel()
    return pool[int(np.argmin(((pool - x) ** 2).sum(1)))].copy()


def _nn_generator(model, x, pool, cfg):
    return _finish(model, nearest_neighbor_cf(x, pool), x, cfg)


def make_generator(method: str, cfg: CfConfig | None = None, pool=None):
    """Generator ``(model, x) -> x'`` for one of :data:`METHODS`."""
    cfg = cfg or CfConfig()
    if method == "mccf_l2":
        return partial(mccf_l2, cfg=cfg)
    if method == "mccf_l2_iterative":
        return partial(mccf_iterative, cfg=replace(cfg, cost="l2"))
    if method == "mccf_l1":
        return partial(mccf_iterative, cfg=replace(cfg, cost="l1"))
    if method == "nearest_neighbor":
        pool = cfg.neighbor_pool if pool is None else pool
        if pool is None or len(pool) == 0:
            raise CounterfactualError("nearest_neighbor needs a non-empty pool of accepted points")
        return partial(_nn_generator, pool=np.asarray(pool, dtype=np.float64), cfg=cfg)
    raise ValueError(f"unknown counterfactual method {method!r}; expected one of {METHODS}")
