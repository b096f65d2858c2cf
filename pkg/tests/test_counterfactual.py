import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proto_extract.counterfactual import (
    METHODS,
    CfConfig,
    make_generator,
    mccf_iterative,
    mccf_l2,
    nearest_neighbor_cf,
)
from proto_extract.errors import CounterfactualError
from proto_extract.oracle import LinearModel, logit, predict_label, predict_proba

AXIS = LinearModel([1.0, 0.0], 0.0)


def random_rejected(rng, d=3):
    model = LinearModel(rng.normal(size=d), float(rng.normal()))
    while True:
        x = rng.normal(size=d) * 2
        if predict_label(model, x) == 0:
            return model, x


# ---------------------------------------------------------------- closed form

def test_axis_example():
    cf = mccf_l2(AXIS, [-2.0, 0.0])
    assert logit(0.55) == pytest.approx(math.log(0.55 / 0.45))
    np.testing.assert_allclose(cf, [logit(0.55), 0.0], atol=1e-15)
    assert cf[0] == pytest.approx(0.2007, abs=1e-4)


def test_point_on_margin_line_unchanged():
    x = np.array([logit(0.55), 3.0])
    np.testing.assert_allclose(mccf_l2(AXIS, x), x, atol=1e-15)


def test_grid_search_minimality():
    model = LinearModel([0.7, -1.3], 0.2)
    x = np.array([-1.0, 1.0])
    cf = mccf_l2(model, x)
    g = np.linspace(-4, 4, 801)
    grid = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    valid = grid[predict_proba(model, grid) >= 0.55]
    best = np.sqrt(((valid - x) ** 2).sum(1)).min()
    dist = np.linalg.norm(cf - x)
    assert dist <= best + 1e-12
    assert best - dist < 0.01  # grid spacing


def test_degenerate_model():
    with pytest.raises(CounterfactualError):
        mccf_l2(LinearModel([0.0, 0.0], -1.0), [0.0, 0.0])


def test_input_past_margin():
    with pytest.raises(CounterfactualError):
        mccf_l2(AXIS, [5.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.45), st.floats(0.01, 0.45), st.floats(-5, -0.1))
def test_margin_monotone(m1, m2, x0):
    lo, hi = sorted((m1, m2))
    x = np.array([x0, 1.0])
    d_lo = np.linalg.norm(mccf_l2(AXIS, x, CfConfig(target_margin=lo)) - x)
    d_hi = np.linalg.norm(mccf_l2(AXIS, x, CfConfig(target_margin=hi)) - x)
    assert d_lo <= d_hi + 1e-12


@pytest.mark.parametrize("method", ["mccf_l2", "mccf_l2_iterative", "mccf_l1"])
def test_no_valid_point_strictly_inside_segment(method, rng):
    gen = make_generator(method)
    for _ in range(10):
        model, x = random_rejected(rng)
        cf = gen(model, x)
        t = np.linspace(0, 1, 201)[:-1]
        inner = x + t[:, None] * (cf - x)
        assert np.all(predict_proba(model, inner) < 0.55 + 1e-6)
        assert predict_label(model, cf) == 1
        assert predict_proba(model, cf) >= 0.55 - 1e-12  # closed form lands on the line up to rounding


# ---------------------------------------------------------------- iterative

def test_iterative_matches_closed_form(rng):
    cfg = CfConfig()
    for _ in range(20):
        model, x = random_rejected(rng)
        np.testing.assert_allclose(mccf_iterative(model, x, cfg), mccf_l2(model, x, cfg), atol=1e-3)


def test_l1_is_sparse():
    cf = mccf_iterative(AXIS, [-2.0, 0.7], CfConfig(cost="l1"))
    assert abs(cf[1] - 0.7) <= 1e-6
    assert predict_label(AXIS, cf) == 1


def test_l1_moves_fewer_coordinates(rng):
    model = LinearModel([3.0, 0.5, 0.2], -1.0)
    x = np.zeros(3)
    cf = mccf_iterative(model, x, CfConfig(cost="l1"))
    assert np.sum(np.abs(cf - x) > 1e-6) == 1


def test_iterative_rejects_accepted_input():
    with pytest.raises(CounterfactualError):
        mccf_iterative(AXIS, [1.0, 0.0])


def test_iterative_rejects_nn_cost():
    with pytest.raises(ValueError):
        mccf_iterative(AXIS, [-1.0, 0.0], CfConfig(cost="nearest_neighbor"))


def test_schedule_exhaustion_is_reported():
    cfg = CfConfig(max_rounds=1, lambda_init=1e6)
    with pytest.raises(CounterfactualError):
        mccf_iterative(AXIS, [-5.0, 0.0], cfg)


# ---------------------------------------------------------------- nearest neighbour

def test_nn_examples():
    np.testing.assert_array_equal(nearest_neighbor_cf([0, 0], [[5, 5]]), [5, 5])
    np.testing.assert_array_equal(nearest_neighbor_cf([0, 0], [[1, 0], [0, 2]]), [1, 0])


def test_nn_tie_lowest_index():
    pool = [[0, 1], [1, 0], [-1, 0]]
    for _ in range(3):
        np.testing.assert_array_equal(nearest_neighbor_cf([0, 0], pool), [0, 1])


def test_nn_empty_pool():
    with pytest.raises(CounterfactualError):
        nearest_neighbor_cf([0, 0], np.empty((0, 2)))
    with pytest.raises(CounterfactualError):
        make_generator("nearest_neighbor")


def test_nn_generator_checks_validity():
    gen = make_generator("nearest_neighbor", pool=[[-3.0, 0.0]])
    with pytest.raises(CounterfactualError):
        gen(AXIS, [-2.0, 0.0])


# ---------------------------------------------------------------- config

def test_clipping_rechecks_validity():
    model = LinearModel([1.0], -1.5)  # boundary outside the unit interval
    with pytest.raises(CounterfactualError):
        mccf_l2(model, [0.2], CfConfig(clip=True))
    np.testing.assert_array_less(1.0, mccf_l2(model, [0.2]))


def test_unknown_method():
    with pytest.raises(ValueError):
        make_generator("dice")
    assert "mccf_l2" in METHODS


@pytest.mark.parametrize("kwargs", [{"cost": "l3"}, {"target_margin": 0.0}, {"target_margin": 0.5},
                                    {"lambda_mult": 1.0}, {"step_size": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        CfConfig(**kwargs)
