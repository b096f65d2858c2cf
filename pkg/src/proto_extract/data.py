"""Tabular dataset loading, preprocessing, splitting and synthetic generators.

All features end up in ``[0, 1]``: categorical columns are integer-encoded in
order of first appearance, then every column is min-max scaled (constant
columns become 0).
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

MISSING = {"", "?", "na", "nan", "null", "none", "n/a"}
MAX_UNPARSEABLE = 0.05

BUILTIN_SCHEMAS = ("adult", "compas", "dccc", "heloc")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    categorical_mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        self.categorical_mask = np.asarray(self.categorical_mask, dtype=bool).ravel()
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DataError("dataset must contain at least one row")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError("features and labels differ in length")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain NaN or inf")
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature_names does not match the number of columns")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], list(self.feature_names),
                       self.categorical_mask.copy(), dict(self.meta))

    def class_counts(self) -> tuple[int, int]:
        n1 = int(self.labels.sum())
        return len(self) - n1, n1


@dataclass
class SplitSpec:
    train_frac: float = 0.5
    query_frac: float = 0.3
    ref_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.query_frac, self.ref_frac)
        if min(fracs) <= 0:
            raise DataError(f"split fractions must all be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {sum(fracs)}")


@dataclass
class SyntheticSpec:
    kind: str = "gaussian_blobs"
    n: int = 4000
    d: int = 5
    separation: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian_blobs", "linear_margin"):
            raise DataError(f"unknown synthetic kind {self.kind!r}")
        if self.n < 4 or self.d < 1:
            raise DataError("synthetic data needs n >= 4 and d >= 1")
        if self.separation < 0:
            raise DataError("separation must be >= 0")


def min_max_scale(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale columns to [0, 1]; constant columns map to 0. Returns ``(scaled, lo, hi)``."""
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    out = np.zeros_like(X)
    ok = span > 0
    out[:, ok] = (X[:, ok] - lo[ok]) / span[ok]
    return out, lo, hi


def load_schema(schema) -> dict:
    """Schema from a dict, a JSON path, or one of the bundled dataset names."""
    if isinstance(schema, dict):
        doc = dict(schema)
    elif isinstance(schema, str) and schema in BUILTIN_SCHEMAS:
        text = resources.files("proto_extract").joinpath(f"schemas/{schema}.json").read_text()
        doc = json.loads(text)
    else:
        path = Path(schema)
        if not path.exists():
            raise DataError(f"schema file not found: {path}")
        doc = json.loads(path.read_text())
    if "target" not in doc:
        raise DataError("schema must name a target column")
    return doc


def _target_to_label(raw: str, positive: set[str] | None) -> int | None:
    if positive is not None:
        return int(raw in positive)
    try:
        val = float(raw)
    except ValueError:
        return None
    if val in (0.0, 1.0):
        return int(val)
    return None


def load_csv(path, schema) -> Dataset:
    """Read a headed CSV file and preprocess it per ``schema``.

    Schema keys: ``target`` (required), ``positive`` (target values meaning
    class 1; otherwise the target must already be 0/1), ``categorical``,
    ``features`` (default: every other column), ``drop``, ``name``.
    Rows with missing values are dropped; rows that fail to parse are dropped
    too unless they exceed 5% of the file, which is an error.
    """
    schema = load_schema(schema)
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        header = [h.strip() for h in header]
        rows = list(reader)
    if not rows:
        raise DataError(f"{path} has a header but no rows")

    target = schema["target"]
    if target not in header:
        raise DataError(f"target column {target!r} missing from {path}")
    drop = set(schema.get("drop", []))
    features = schema.get("features") or [h for h in header if h != target and h not in drop]
    missing_cols = [f for f in features if f not in header]
    if missing_cols:
        raise DataError(f"columns {missing_cols} listed in schema are missing from {path}")
    categorical = set(schema.get("categorical", []))
    unknown_cat = categorical - set(features)
    if unknown_cat:
        logger.warning("categorical columns %s are not among the features; ignoring", sorted(unknown_cat))
    positive = schema.get("positive")
    if positive is not None:
        positive = {str(p).strip() for p in (positive if isinstance(positive, list) else [positive])}

    col_idx = [header.index(f) for f in features]
    t_idx = header.index(target)
    is_cat = [f in categorical for f in features]
    codes: list[dict[str, int]] = [{} for _ in features]
    X, y = [], []
    n_missing = n_bad = 0
    for row in rows:
        if len(row) != len(header):
            n_bad += 1
            continue
        cells = [row[i].strip() for i in col_idx]
        traw = row[t_idx].strip()
        if traw.lower() in MISSING or any(c.lower() in MISSING for c in cells):
            n_missing += 1
            continue
        label = _target_to_label(traw, positive)
        if label is None:
            n_bad += 1
            continue
        vals = []
        try:
            for c, cat, table in zip(cells, is_cat, codes):
                vals.append(float(table.setdefault(c, len(table))) if cat else float(c))
        except ValueError:
            n_bad += 1
            continue
        X.append(vals)
        y.append(label)

    if n_bad > MAX_UNPARSEABLE * len(rows):
        raise DataError(f"{n_bad} of {len(rows)} rows in {path} could not be parsed (limit 5%)")
    if not X:
        raise DataError(f"no usable rows in {path}")
    scaled, lo, hi = min_max_scale(np.array(X, dtype=np.float64))
    report = {
        "path": str(path),
        "rows_read": len(rows),
        "rows_kept": len(X),
        "dropped_missing": n_missing,
        "dropped_unparseable": n_bad,
        "class_counts": [len(y) - int(sum(y)), int(sum(y))],
    }
    print(f"[load] {json.dumps(report)}", file=sys.stderr)
    if schema.get("warning"):
        logger.warning("%s: %s", schema.get("name", path.stem), schema["warning"])
    return Dataset(
        scaled,
        np.array(y),
        list(features),
        np.array(is_cat),
        meta={"name": schema.get("name", path.stem), "load_report": report,
              "min": lo.tolist(), "max": hi.tolist(), "categories": {
                  f: list(t) for f, t, c in zip(features, codes, is_cat) if c}},
    )


def balance_classes(ds: Dataset, seed) -> Dataset:
    """Subsample the majority class (without replacement) down to the minority size."""
    n0, n1 = ds.class_counts()
    if n0 == 0 or n1 == 0:
        raise DataError("cannot balance a single-class dataset")
    if n0 == n1:
        return ds
    rng = np.random.default_rng(seed)
    major = 0 if n0 > n1 else 1
    major_idx = np.flatnonzero(ds.labels == major)
    minor_idx = np.flatnonzero(ds.labels != major)
    keep = rng.choice(major_idx, size=minor_idx.shape[0], replace=False)
    return ds.subset(np.sort(np.concatenate([keep, minor_idx])))


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint (train, query pool, reference) partition of shuffled rows."""
    n = len(ds)
    n_train = int(round(n * spec.train_frac))
    n_query = int(round(n * spec.query_frac))
    n_ref = n - n_train - n_query
    if min(n_train, n_query, n_ref) <= 0:
        raise DataError(f"split of {n} rows leaves an empty part ({n_train}/{n_query}/{n_ref})")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return (
        ds.subset(perm[:n_train]),
        ds.subset(perm[n_train:n_train + n_query]),
        ds.subset(perm[n_train + n_query:]),
    )


def make_synthetic(spec: SyntheticSpec | dict) -> Dataset:
    """Desk-scale substrates.

    ``gaussian_blobs``: unit-variance Gaussians centred at ``+-separation/2``
    along the first axis, min-max scaled afterwards. ``linear_margin``:
    uniform points in the unit cube labelled by the hyperplane through its
    centre with normal ``(1, ..., 1)``, minus a band of width ``separation``
    around it. ``meta["rule"]`` holds the generating hyperplane ``(w, b)`` in
    the returned coordinates (class 1 iff ``w.x + b > 0``).
    """
    if isinstance(spec, dict):
        spec = SyntheticSpec(**spec)
    rng = np.random.default_rng(spec.seed)
    names = [f"x{i}" for i in range(spec.d)]
    if spec.kind == "gaussian_blobs":
        n1 = spec.n // 2
        labels = np.r_[np.zeros(spec.n - n1, dtype=np.int64), np.ones(n1, dtype=np.int64)]
        X = rng.standard_normal((spec.n, spec.d))
        X[:, 0] += np.where(labels == 1, 0.5, -0.5) * spec.separation
        perm = rng.permutation(spec.n)
        X, labels = X[perm], labels[perm]
        X, lo, hi = min_max_scale(X)
        w = np.zeros(spec.d)
        w[0] = 1.0
        b = -(0.0 - lo[0]) / (hi[0] - lo[0]) if hi[0] > lo[0] else 0.0
    else:
        w = np.ones(spec.d) / np.sqrt(spec.d)
        b = -0.5 * np.sqrt(spec.d)
        half = spec.separation / 2.0
        kept: list[np.ndarray] = []
        total = 0
        for _ in range(1000):
            batch = rng.random((max(spec.n, 64), spec.d))
            batch = batch[np.abs(batch @ w + b) >= half]
            kept.append(batch)
            total += batch.shape[0]
            if total >= spec.n:
                break
        else:
            raise DataError("margin band is too wide; no points survive")
        X = np.vstack(kept)[:spec.n]
        labels = (X @ w + b > 0).astype(np.int64)
    meta = {"name": f"synthetic-{spec.kind}", "rule": {"weights": w.tolist(), "bias": float(b)},
            "synthetic": {"kind": spec.kind, "n": spec.n, "d": spec.d,
                          "separation": spec.separation, "seed": spec.seed}}
    return Dataset(X, labels, names, np.zeros(spec.d, dtype=bool), meta)
