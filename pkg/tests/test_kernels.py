import os
import subprocess
import sys

import numpy as np
import pytest

from proto_extract import _simplex_py
from tests.conftest import SOLVERS

needs_ext = pytest.mark.skipif("cython" not in SOLVERS, reason="compiled kernel not built")


def problem(rng, n, m, d=3):
    a = rng.random(n) + 0.1
    b = rng.random(m) + 0.1
    x, y = rng.random((n, d)), rng.random((m, d))
    C = ((x[:, None] - y[None]) ** 2).sum(-1)
    return a / a.sum(), b / b.sum(), C


@needs_ext
@pytest.mark.parametrize("shape", [(2, 2), (5, 9), (20, 13), (50, 150)])
def test_backends_agree_exactly(shape, rng):
    for _ in range(5):
        a, b, C = problem(rng, *shape)
        p_py, c_py, it_py = _simplex_py.solve(a, b, C)
        p_c, c_c, it_c = SOLVERS["cython"](a, b, C)
        assert it_py == it_c
        np.testing.assert_allclose(p_py, p_c, atol=1e-14)
        assert c_py == pytest.approx(c_c, abs=1e-12)


@needs_ext
def test_backends_agree_on_degenerate_problem():
    # equal uniform marginals on a lattice: many ties and degenerate pivots
    pts = np.array([[i, j] for i in range(4) for j in range(4)], dtype=float)
    C = ((pts[:, None] - pts[None, ::-1]) ** 2).sum(-1)
    a = np.full(16, 1 / 16)
    p_py, c_py, it_py = _simplex_py.solve(a, a, C)
    p_c, c_c, it_c = SOLVERS["cython"](a, a, C)
    assert it_py == it_c and c_py == pytest.approx(c_c, abs=1e-12)


def test_iteration_limit_raises(rng):
    a, b, C = problem(rng, 30, 30)
    with pytest.raises(RuntimeError):
        _simplex_py.solve(a, b, C, max_iter=1)


def _backend_in_subprocess(env_extra):
    env = {k: v for k, v in os.environ.items() if k != "PROTO_EXTRACT_PURE_PYTHON"}
    env.update(env_extra)
    out = subprocess.run([sys.executable, "-c", "from proto_extract import ot_core; print(ot_core.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    return out.stdout.strip()


def test_pure_python_switch():
    assert _backend_in_subprocess({"PROTO_EXTRACT_PURE_PYTHON": "1"}) == "python"


@needs_ext
def test_compiled_backend_is_default():
    assert _backend_in_subprocess({}) == "cython"
