import json

import numpy as np
import pytest

from proto_extract.data import (
    Dataset,
    SplitSpec,
    SyntheticSpec,
    balance_classes,
    load_csv,
    load_schema,
    make_synthetic,
    min_max_scale,
    split,
)
from proto_extract.errors import DataError


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


def toy(n0, n1, d=2):
    X = np.arange((n0 + n1) * d, dtype=float).reshape(-1, d)
    return Dataset(X, np.r_[np.zeros(n0), np.ones(n1)].astype(int), [f"f{i}" for i in range(d)], np.zeros(d))


# ---------------------------------------------------------------- loading

def test_min_max_examples():
    out, lo, hi = min_max_scale(np.array([[10.0, 7.0], [20.0, 7.0], [30.0, 7.0]]))
    np.testing.assert_array_equal(out[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(out[:, 1], [0.0, 0.0, 0.0])
    assert lo.tolist() == [10.0, 7.0] and hi.tolist() == [30.0, 7.0]


def test_load_csv_encodes_and_scales(tmp_path, capsys):
    path = write_csv(tmp_path / "d.csv", ["age", "job", "y"],
                     [[10, "a", 0], [20, "b", 1], [30, "a", 1], [40, "c", 0]])
    ds = load_csv(path, {"target": "y", "categorical": ["job"]})
    np.testing.assert_allclose(ds.features[:, 0], [0, 1 / 3, 2 / 3, 1])
    np.testing.assert_allclose(ds.features[:, 1], [0, 0.5, 0, 1])  # codes a=0, b=1, c=2
    assert ds.labels.tolist() == [0, 1, 1, 0]
    assert ds.categorical_mask.tolist() == [False, True]
    report = json.loads(capsys.readouterr().err.split("[load] ", 1)[1])
    assert report["rows_kept"] == 4


def test_load_csv_positive_label_and_drop(tmp_path):
    path = write_csv(tmp_path / "d.csv", ["id", "x", "income"],
                     [[1, 0.0, "<=50K"], [2, 1.0, ">50K"], [3, 2.0, " >50K"]])
    ds = load_csv(path, {"target": "income", "positive": ">50K", "drop": ["id"]})
    assert ds.feature_names == ["x"] and ds.labels.tolist() == [0, 1, 1]


def test_missing_rows_dropped(tmp_path):
    path = write_csv(tmp_path / "d.csv", ["a", "y"], [[1, 0], ["?", 1], [3, 1], ["", 0], [5, 0]])
    ds = load_csv(path, {"target": "y"})
    assert len(ds) == 3
    assert ds.meta["load_report"]["dropped_missing"] == 2


def test_too_many_unparseable_rows(tmp_path):
    rows = [[i, i % 2] for i in range(20)] + [["abc", 0], ["def", 1]]
    with pytest.raises(DataError, match="5%"):
        load_csv(write_csv(tmp_path / "d.csv", ["a", "y"], rows), {"target": "y"})


def test_few_unparseable_rows_tolerated(tmp_path):
    rows = [[i, i % 2] for i in range(40)] + [["abc", 0]]
    assert len(load_csv(write_csv(tmp_path / "d.csv", ["a", "y"], rows), {"target": "y"})) == 40


def test_missing_target(tmp_path):
    with pytest.raises(DataError, match="target"):
        load_csv(write_csv(tmp_path / "d.csv", ["a", "b"], [[1, 2]]), {"target": "y"})


def test_empty_file(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(DataError):
        load_csv(tmp_path / "e.csv", {"target": "y"})
    (tmp_path / "h.csv").write_text("a,y\n")
    with pytest.raises(DataError):
        load_csv(tmp_path / "h.csv", {"target": "y"})


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", {"target": "y"})


@pytest.mark.parametrize("name", ["adult", "compas", "dccc", "heloc"])
def test_builtin_schemas(name):
    assert "target" in load_schema(name)


def test_post_load_range(tmp_path, rng):
    rows = [[*np.round(rng.normal(size=3), 3), int(rng.integers(2))] for _ in range(50)]
    ds = load_csv(write_csv(tmp_path / "d.csv", ["a", "b", "c", "y"], rows), {"target": "y"})
    np.testing.assert_array_equal(ds.features.min(0), 0.0)
    np.testing.assert_array_equal(ds.features.max(0), 1.0)


# ---------------------------------------------------------------- balancing

def test_balance_100_vs_40():
    out = balance_classes(toy(100, 40), seed=0)
    assert out.class_counts() == (40, 40)


def test_balance_already_balanced():
    ds = toy(30, 30)
    out = balance_classes(ds, seed=0)
    np.testing.assert_array_equal(out.features, ds.features)


def test_balance_adult_sized():
    # Adult has 24,720 rows with income <=50K and 7,841 with >50K
    out = balance_classes(toy(24_720, 7_841, d=1), seed=3)
    assert len(out) == 15_682 and out.class_counts() == (7_841, 7_841)


def test_balance_deterministic_and_without_replacement():
    a, b = balance_classes(toy(100, 40), seed=5), balance_classes(toy(100, 40), seed=5)
    np.testing.assert_array_equal(a.features, b.features)
    assert len({tuple(r) for r in a.features}) == 80


def test_balance_single_class():
    with pytest.raises(DataError):
        balance_classes(toy(5, 0), seed=0)


# ---------------------------------------------------------------- split

def test_split_sizes():
    parts = split(toy(50, 50), SplitSpec(0.6, 0.2, 0.2, seed=1))
    assert [len(p) for p in parts] == [60, 20, 20]
    rows = np.vstack([p.features for p in parts])
    assert len({tuple(r) for r in rows}) == 100


def test_split_deterministic():
    a = split(toy(50, 50), SplitSpec(seed=4))
    b = split(toy(50, 50), SplitSpec(seed=4))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.features, y.features)


@pytest.mark.parametrize("fracs", [(1.0, 0.0, 0.0), (0.5, 0.5, 0.5), (-0.1, 0.6, 0.5)])
def test_split_invalid(fracs):
    with pytest.raises(DataError):
        SplitSpec(*fracs)


def test_split_empty_part():
    with pytest.raises(DataError):
        split(toy(1, 2), SplitSpec(0.5, 0.3, 0.2))


# ---------------------------------------------------------------- synthetic

def test_blobs_bayes_rule():
    ds = make_synthetic(SyntheticSpec("gaussian_blobs", n=1000, d=3, separation=6, seed=0))
    rule = ds.meta["rule"]
    pred = (ds.features @ np.array(rule["weights"]) + rule["bias"] > 0).astype(int)
    assert np.mean(pred == ds.labels) > 0.99
    assert ds.features.min() == 0.0 and ds.features.max() == 1.0


def test_synthetic_deterministic():
    a = make_synthetic({"kind": "linear_margin", "n": 200, "d": 3, "separation": 0.1, "seed": 9})
    b = make_synthetic({"kind": "linear_margin", "n": 200, "d": 3, "separation": 0.1, "seed": 9})
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_linear_margin_1d():
    ds = make_synthetic(SyntheticSpec("linear_margin", n=300, d=1, separation=0.2, seed=2))
    x = ds.features[:, 0]
    np.testing.assert_array_equal(ds.labels, (x > 0.5).astype(int))
    assert np.all(np.abs(x - 0.5) >= 0.1)
    assert len(ds) == 300


@pytest.mark.parametrize("kwargs", [{"kind": "moons"}, {"n": 2}, {"d": 0}, {"separation": -1}])
def test_synthetic_invalid(kwargs):
    with pytest.raises(DataError):
        SyntheticSpec(**kwargs)


def test_margin_too_wide():
    with pytest.raises(DataError):
        make_synthetic(SyntheticSpec("linear_margin", n=10, d=2, separation=5.0))


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan]]), [0], ["a"], [False])
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [0], ["a"], [False])
