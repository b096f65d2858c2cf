import numpy as np
import pytest

from proto_extract import _simplex_py, ot_core

try:
    from proto_extract import _simplex as _simplex_c
except ImportError:  # extension not built
    _simplex_c = None

SOLVERS = {"python": _simplex_py.solve}
if _simplex_c is not None:
    SOLVERS["cython"] = _simplex_c.solve

# criterion name -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(params=sorted(SOLVERS))
def backend(request, monkeypatch):
    """Run the test once per available transport kernel."""
    monkeypatch.setattr(ot_core, "_solve", SOLVERS[request.param])
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0].rstrip("."))):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
