"""Closed-form checks runnable from an installed package (``proto-extract selftest``)."""

from __future__ import annotations

import math
import sys

import numpy as np

from .barycenter import PrototypeFitConfig, fit_prototypes
from .counterfactual import CfConfig, mccf_l2
from .oracle import LinearModel, predict_proba
from .ot_core import dirac, dirac_distance_sq, uniform, wasserstein2_sq

# hand-derived reference values
EXPECTED = {
    "dirac_transport": 25.0,             # |(0,0) - (3,4)|^2
    "dirac_vs_pair": 1.0,                # 0.5 * 1 + 0.5 * 1
    "sorted_matching_1d": 0.25,          # {0,1} -> {0.5,1.5}
    "symmetric_fixed_point": 2.0 / 3.0,  # (1 * 1 + 0.5 * 0) / 1.5
    "mccf_projection": math.log(0.55 / 0.45),
}
TOL = 1e-9


def _dirac_transport():
    return wasserstein2_sq(dirac([0.0, 0.0]), dirac([3.0, 4.0]))


def _dirac_vs_pair():
    return dirac_distance_sq([1.0, 0.0], uniform([[0.0, 0.0], [2.0, 0.0]]))


def _sorted_matching():
    return wasserstein2_sq(uniform([[0.0], [1.0]]), uniform([[0.5], [1.5]]))


def _symmetric_fixed_point():
    pair = fit_prototypes([[-1.0, 0.0]], [[1.0, 0.0]], [[0.0, 0.0]], PrototypeFitConfig(k=1))
    x0 = pair.q0.support[0]
    x1 = pair.q1.support[0]
    # report the distance of both atoms from the origin; they must agree
    if abs(x0[0] + x1[0]) > TOL or abs(x0[1]) > TOL or abs(x1[1]) > TOL:
        return float("nan")
    return float(-x0[0])


def _mccf_projection():
    model = LinearModel(np.array([1.0, 0.0]), 0.0)
    cf = mccf_l2(model, np.array([-2.0, 0.0]), CfConfig(target_margin=0.05))
    if abs(predict_proba(model, cf) - 0.55) > 1e-12:
        return float("nan")
    return float(cf[0])


CHECKS = {
    "dirac_transport": _dirac_transport,
    "dirac_vs_pair": _dirac_vs_pair,
    "sorted_matching_1d": _sorted_matching,
    "symmetric_fixed_point": _symmetric_fixed_point,
    "mccf_projection": _mccf_projection,
}


def run_selftest(out=None) -> bool:
    """Run every check, print one line each, return True iff all pass."""
    out = out or sys.stdout
    ok_all = True
    for name, fn in CHECKS.items():
        try:
            got = fn()
            ok = abs(got - EXPECTED[name]) <= TOL * max(1.0, abs(EXPECTED[name]))
            detail = f"got {got!r}, expected {EXPECTED[name]!r}"
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", file=out)
    return ok_all
