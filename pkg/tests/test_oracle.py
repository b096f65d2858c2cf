import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from proto_extract.counterfactual import CfConfig, make_generator
from proto_extract.errors import CounterfactualError, ModelError
from proto_extract.oracle import (
    LinearModel,
    Oracle,
    QueryCounter,
    QueryResponse,
    predict_label,
    predict_proba,
    query,
    sigmoid,
    train_logistic,
)

MCCF = make_generator("mccf_l2", CfConfig())


# ---------------------------------------------------------------- training

def test_symmetric_data_gives_zero_bias():
    m = train_logistic([[-1.0], [1.0]], [0, 1], l2=0.1)
    assert m.weights[0] > 0
    assert predict_proba(m, [0.0]) == pytest.approx(0.5, abs=1e-10)


def test_separable_blobs(rng):
    X = np.vstack([rng.normal(-3, 0.5, (50, 2)), rng.normal(3, 0.5, (50, 2))])
    y = np.r_[np.zeros(50), np.ones(50)].astype(int)
    m = train_logistic(X, y, l2=0.01)
    assert np.mean(predict_label(m, X) == y) == 1.0


def test_duplicated_rows_same_minimiser(rng):
    X = rng.normal(size=(40, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=40) > 0).astype(int)
    a = train_logistic(X, y)
    b = train_logistic(np.vstack([X, X]), np.r_[y, y])
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-8)
    assert a.bias == pytest.approx(b.bias, abs=1e-8)


def test_gradient_vanishes_at_solution(rng):
    X = rng.normal(size=(60, 2))
    y = (X @ [1.0, -2.0] + rng.normal(size=60) > 0).astype(int)
    l2 = 0.05
    m = train_logistic(X, y, l2=l2)
    p = predict_proba(m, X)
    grad_w = X.T @ (p - y) / len(y) + l2 * m.weights
    grad_b = np.mean(p - y)
    assert np.linalg.norm(np.r_[grad_w, grad_b]) < 1e-7


@pytest.mark.parametrize("X, y", [
    ([[0.0], [1.0]], [1, 1]),
    ([[np.nan], [1.0]], [0, 1]),
    ([[0.0], [1.0]], [0, 2]),
    ([[0.0], [1.0]], [0]),
])
def test_training_errors(X, y):
    with pytest.raises(ModelError):
        train_logistic(X, y)


# ---------------------------------------------------------------- prediction

def test_predict_examples():
    assert predict_proba(LinearModel([0.0, 0.0], 0.0), [3.0, -1.0]) == 0.5
    assert predict_proba(LinearModel([1.0], 0.0), [0.0]) == 0.5
    assert predict_proba(LinearModel([1.0], 0.0), [math.log(3)]) == pytest.approx(0.75, abs=1e-15)


def test_tie_maps_to_class_one():
    assert predict_label(LinearModel([1.0], 0.0), [0.0]) == 1
    assert predict_label(LinearModel([1.0], 0.0), [math.log(0.49 / 0.51)]) == 0
    assert predict_label(LinearModel([1.0], 0.0), [math.log(0.51 / 0.49)]) == 1


def test_batch_prediction():
    m = LinearModel([1.0, 1.0], -1.0)
    np.testing.assert_array_equal(predict_label(m, [[0, 0], [1, 1], [0.5, 0.5]]), [0, 1, 1])


def test_dimension_mismatch():
    with pytest.raises(ModelError):
        predict_proba(LinearModel([1.0, 2.0], 0.0), [1.0])


def test_sigmoid_is_stable():
    assert sigmoid(-800.0) == 0.0 and sigmoid(800.0) == 1.0


def test_model_rejects_non_finite():
    with pytest.raises(ModelError):
        LinearModel([np.inf], 0.0)


def test_json_round_trip(tmp_path):
    m = LinearModel([0.1, -2.5, 1e-17], 0.3)
    m.save(tmp_path / "m.json")
    back = LinearModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.weights, m.weights)
    assert back.bias == m.bias


def test_malformed_document():
    with pytest.raises(ModelError):
        LinearModel.from_dict({"weights": [1.0]})


# ---------------------------------------------------------------- protocol

def test_query_class_one_has_no_counterfactual():
    model = LinearModel([1.0], 0.0)
    counter = QueryCounter()
    resp = query(model, MCCF, [math.log(9)], counter)
    assert resp.label == 1 and resp.counterfactual is None and counter.count == 1


def test_query_class_zero_has_valid_counterfactual():
    model = LinearModel([1.0], 0.0)
    resp = query(model, MCCF, [-math.log(9)], QueryCounter())
    assert resp.label == 0
    assert predict_label(model, resp.counterfactual) == 1


def test_counter_counts_every_query(rng):
    oracle = Oracle(LinearModel([1.0, -1.0], 0.0), MCCF)
    responses = oracle.query_many(rng.normal(size=(500, 2)))
    assert oracle.n_queries == 500
    # one-sidedness
    for _, r in responses:
        assert (r.counterfactual is None) == (r.label == 1)


def test_concurrent_counting(rng):
    oracle = Oracle(LinearModel([1.0, -1.0], 0.0), MCCF)
    X = rng.normal(size=(400, 2))
    with ThreadPoolExecutor(8) as pool:
        list(pool.map(oracle.query, X))
    assert oracle.n_queries == 400


def test_invalid_counterfactual_is_rejected():
    model = LinearModel([1.0], 0.0)
    with pytest.raises(CounterfactualError) as info:
        query(model, lambda m, x: x, [-1.0], QueryCounter())
    np.testing.assert_array_equal(info.value.x, [-1.0])


def test_generator_failure_carries_input():
    def broken(m, x):
        raise CounterfactualError("no convergence")

    with pytest.raises(CounterfactualError) as info:
        query(LinearModel([1.0], 0.0), broken, [-2.0], QueryCounter())
    np.testing.assert_array_equal(info.value.x, [-2.0])


def test_response_invariant():
    with pytest.raises(ValueError):
        QueryResponse(1, np.zeros(2))
    with pytest.raises(ValueError):
        QueryResponse(0)
