"""Extraction experiments: train a target, query it, fit surrogates, score fidelity.

A config is a single JSON document; see :class:`ExperimentConfig`. Each trial
derives its seeds from ``master_seed`` and its trial index only, so any trial
can be rerun on its own and trial scheduling never changes the report.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import ot_core
from .barycenter import PrototypeFitConfig
from .counterfactual import METHODS as CF_METHODS
from .counterfactual import CfConfig, make_generator
from .data import Dataset, SplitSpec, SyntheticSpec, balance_classes, load_csv, load_schema, make_synthetic, split
from .errors import ConfigError, ProtoExtractError
from .oracle import Oracle, predict_label, train_logistic
from .surrogate import build_query_dataset, fidelity, fit_baseline1, fit_prototype_surrogate

logger = logging.getLogger(__name__)

SURROGATE_METHODS = ("prototype", "baseline1")

# Published mean (std) fidelity in percent, keyed by dataset, method, budget.
PUBLISHED_FIDELITY = {
    "adult": {"baseline1": {500: (91, 3.2), 400: (89, 3.5), 300: (87, 3.8)},
              "prototype": {500: (96, 2.5), 400: (94, 2.8), 300: (93, 3.2)}},
    "compas": {"baseline1": {500: (92, 3.2), 400: (90, 3.5), 300: (88, 3.8)},
               "prototype": {500: (96, 2.3), 400: (94, 2.6), 300: (94, 3.0)}},
    "dccc": {"baseline1": {500: (89, 8.9), 400: (87, 9.2), 300: (85, 9.5)},
             "prototype": {500: (97, 1.5), 400: (95, 1.8), 300: (93, 2.1)}},
    "heloc": {"baseline1": {500: (91, 4.7), 400: (89, 5.0), 300: (87, 5.3)},
              "prototype": {500: (95, 2.0), 400: (93, 2.3), 300: (93, 2.6)}},
}
PUBLISHED_BAND = 5.0


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class DatasetConfig:
    csv: str | None = None
    schema: Any = None
    balance: bool | None = None
    synthetic: SyntheticSpec | None = None


@dataclass
class SplitConfig:
    train_frac: float = 0.5
    query_frac: float = 0.3
    ref_frac: float = 0.2


@dataclass
class LogisticConfig:
    l2: float = 1e-2
    max_iters: int = 100
    tol: float = 1e-8


@dataclass
class PrototypeSection:
    k: int | None = None
    lambda_c: Any = 0.5
    gamma: float = 0.3
    max_outer_iters: int = 100
    tol: float = 1e-5
    reg_step: float = 0.05


@dataclass
class CfSection:
    target_margin: float = 0.05
    lambda_init: float = 1.0
    lambda_mult: float = 2.0
    max_rounds: int = 60
    max_iters: int = 2000
    step_size: float = 1.0
    proba_tol: float = 1e-7
    clip: bool = False


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=lambda: DatasetConfig(synthetic=SyntheticSpec()))
    split: SplitConfig = field(default_factory=SplitConfig)
    query_budgets: list[int] = field(default_factory=lambda: [500, 400, 300])
    n_trials: int = 10
    methods: list[str] = field(default_factory=lambda: list(SURROGATE_METHODS))
    cf_method: Any = "mccf_l2"
    taus: list[float] = field(default_factory=lambda: [0.0])
    prototype: PrototypeSection = field(default_factory=PrototypeSection)
    counterfactual: CfSection = field(default_factory=CfSection)
    target: LogisticConfig = field(default_factory=LogisticConfig)
    baseline1: LogisticConfig = field(default_factory=LogisticConfig)
    master_seed: int = 0

    @property
    def cf_methods(self) -> list[str]:
        return [self.cf_method] if isinstance(self.cf_method, str) else list(self.cf_method)

    def validate(self) -> "ExperimentConfig":
        ds = self.dataset
        if (ds.csv is None) == (ds.synthetic is None):
            raise ConfigError("dataset needs exactly one of 'csv' or 'synthetic'", "dataset")
        if ds.csv is not None and ds.schema is None:
            raise ConfigError("a csv dataset needs a schema", "dataset.schema")
        if not self.query_budgets or any(int(b) < 1 for b in self.query_budgets):
            raise ConfigError("query budgets must be positive integers", "query_budgets")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1", "n_trials")
        bad = [m for m in self.methods if m not in SURROGATE_METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {SURROGATE_METHODS}", "methods")
        bad = [m for m in self.cf_methods if m not in CF_METHODS]
        if bad or not self.cf_methods:
            raise ConfigError(f"cf_method must be drawn from {CF_METHODS}, got {bad}", "cf_method")
        if not self.taus or any(t < 0 for t in self.taus):
            raise ConfigError("taus must be a non-empty list of non-negative values", "taus")
        try:
            SplitSpec(self.split.train_frac, self.split.query_frac, self.split.ref_frac)
            self.prototype_config(0)
            self.cf_config()
        except (ValueError, ProtoExtractError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def prototype_config(self, seed: int) -> PrototypeFitConfig:
        lam = self.prototype.lambda_c
        lam = tuple(lam) if isinstance(lam, list) else lam
        return PrototypeFitConfig(**{**asdict(self.prototype), "lambda_c": lam, "seed": seed})

    def cf_config(self) -> CfConfig:
        return CfConfig(**asdict(self.counterfactual))

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, doc, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"expected an object at {path or 'top level'}", path or None)
    known = {f.name: f for f in fields(cls)}
    for key in doc:
        if key not in known:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key {where!r}", where)
    kwargs = {}
    nested = {"dataset": DatasetConfig, "split": SplitConfig, "prototype": PrototypeSection,
              "counterfactual": CfSection, "target": LogisticConfig, "baseline1": LogisticConfig,
              "synthetic": SyntheticSpec}
    for key, val in doc.items():
        where = f"{path}.{key}" if path else key
        if key in nested and val is not None and cls in (ExperimentConfig, DatasetConfig):
            kwargs[key] = _build(nested[key], val, where)
        else:
            kwargs[key] = val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value under {path or 'top level'}: {exc}", path or None) from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate a config; unknown keys raise :class:`ConfigError` naming their path."""
    doc = dict(doc)
    if "dataset" in doc and isinstance(doc["dataset"], dict) and "synthetic" not in doc["dataset"]:
        doc["dataset"] = {**doc["dataset"], "synthetic": None}
    return _build(ExperimentConfig, doc, "").validate()


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply one dotted ``key=value`` override; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override inside non-object key {part!r}", key)
    node[parts[-1]] = value
    return doc


# --------------------------------------------------------------------------
# trials
# --------------------------------------------------------------------------

def trial_seeds(master_seed: int, trial: int) -> dict[str, int]:
    """Independent per-purpose seeds for one trial."""
    state = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial),)).generate_state(3)
    return {"split": int(state[0]), "queries": int(state[1]), "prototype": int(state[2])}


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    ds_cfg = cfg.dataset
    if ds_cfg.synthetic is not None:
        return make_synthetic(ds_cfg.synthetic)
    schema = load_schema(ds_cfg.schema)
    ds = load_csv(ds_cfg.csv, schema)
    balance = schema.get("balance", False) if ds_cfg.balance is None else ds_cfg.balance
    if balance:
        ds = balance_classes(ds, cfg.master_seed)
    return ds


def cell_key(method: str, cf_method: str, budget: int, tau: float | None) -> str:
    tau_part = "" if tau is None else f"|tau={tau:g}"
    return f"{method}|{cf_method}|{budget}{tau_part}"


def _cells(cfg: ExperimentConfig):
    for cf_method in cfg.cf_methods:
        for budget in sorted({int(b) for b in cfg.query_budgets}, reverse=True):
            for method in cfg.methods:
                taus = cfg.taus if method == "prototype" else [None]
                for tau in taus:
                    yield method, cf_method, budget, tau


def run_trial(cfg: ExperimentConfig, trial: int, dataset: Dataset | None = None) -> dict:
    """One trial over every (method, cf_method, budget, tau) cell.

    Query sets are nested: the first ``b`` queries of the largest budget form
    the budget-``b`` set, so budgets within a trial are paired.
    """
    seeds = trial_seeds(cfg.master_seed, trial)
    ds = dataset if dataset is not None else load_dataset(cfg)
    sp = cfg.split
    train, pool, ref = split(ds, SplitSpec(sp.train_frac, sp.query_frac, sp.ref_frac, seeds["split"]))
    budgets = sorted({int(b) for b in cfg.query_budgets})
    if budgets[-1] > len(pool):
        raise ConfigError(f"query budget {budgets[-1]} exceeds the query pool of {len(pool)} rows",
                          "query_budgets")

    t0 = time.perf_counter()
    target = train_logistic(train.features, train.labels, **asdict(cfg.target))
    order = np.random.default_rng(seeds["queries"]).permutation(len(pool))[:budgets[-1]]
    X_query = pool.features[order]
    accepted = train.features[predict_label(target, train.features) == 1]

    values: dict[str, float | None] = {}
    failures: dict[str, str] = {}
    n_queries: dict[str, int] = {}
    for cf_method in cfg.cf_methods:
        try:
            oracle = Oracle(target, make_generator(cf_method, cfg.cf_config(), pool=accepted))
            responses = oracle.query_many(X_query)
            n_queries[cf_method] = oracle.n_queries
        except ProtoExtractError as exc:
            for method, cfm, budget, tau in _cells(cfg):
                if cfm == cf_method:
                    key = cell_key(method, cfm, budget, tau)
                    values[key] = None
                    failures[key] = f"querying failed: {exc}"
            continue
        for budget in budgets:
            qd = build_query_dataset(responses[:budget], dim=ds.dim)
            for method in cfg.methods:
                taus = cfg.taus if method == "prototype" else [None]
                try:
                    if method == "prototype":
                        sur = fit_prototype_surrogate(qd, cfg.prototype_config(seeds["prototype"]))
                        for tau in taus:
                            sur.tau = float(tau)
                            values[cell_key(method, cf_method, budget, tau)] = fidelity(
                                target, sur.predict_many, ref.features, batched=True)
                    else:
                        model = fit_baseline1(qd, **asdict(cfg.baseline1))
                        values[cell_key(method, cf_method, budget, None)] = fidelity(
                            target, lambda X, m=model: predict_label(m, X), ref.features, batched=True)
                except ProtoExtractError as exc:
                    for tau in taus:
                        key = cell_key(method, cf_method, budget, tau)
                        values[key] = None
                        failures[key] = f"{type(exc).__name__}: {exc}"
    return {
        "trial": trial,
        "seeds": seeds,
        "n_queries": n_queries,
        "values": values,
        "failures": failures,
        "wall_time": time.perf_counter() - t0,
    }


def _run_trial_job(args):
    cfg_doc, trial = args
    cfg = config_from_dict(cfg_doc)
    return run_trial(cfg, trial)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Run ``n_trials`` trials and aggregate mean and sample std per cell."""
    cfg.validate()
    t0 = time.perf_counter()
    ds = load_dataset(cfg)
    pool_size = int(round(len(ds) * cfg.split.query_frac))
    if max(cfg.query_budgets) > pool_size:
        raise ConfigError(f"query budget {max(cfg.query_budgets)} exceeds the query pool of "
                          f"about {pool_size} rows", "query_budgets")
    if jobs > 1:
        doc = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            trials = list(ex.map(_run_trial_job, [(doc, t) for t in range(cfg.n_trials)]))
    else:
        trials = [run_trial(cfg, t, ds) for t in range(cfg.n_trials)]
    trials.sort(key=lambda r: r["trial"])

    cells = []
    for method, cf_method, budget, tau in _cells(cfg):
        key = cell_key(method, cf_method, budget, tau)
        raw = [t["values"].get(key) for t in trials]
        vals = [v for v in raw if v is not None]
        cell = {
            "key": key,
            "method": method,
            "cf_method": cf_method,
            "budget": budget,
            "tau": tau,
            "values": raw,
            "n_trials": len(vals),
            "n_failed": len(raw) - len(vals),
            "query_count": budget,
        }
        if vals:
            cell["mean"] = float(np.mean(vals))
            cell["std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        else:
            cell["mean"] = cell["std"] = None
            reasons = sorted({t["failures"].get(key, "") for t in trials} - {""})
            cell["absent_reason"] = "; ".join(reasons) or "all trials failed"
        cells.append(cell)

    name = ds.meta.get("name", "dataset")
    report = {
        "dataset": name,
        "backend": ot_core.BACKEND,
        "config": cfg.to_dict(),
        "cells": cells,
        "trials": [{k: v for k, v in t.items() if k != "wall_time"} for t in trials],
        "timing": {"total_seconds": time.perf_counter() - t0,
                   "trial_seconds": [t["wall_time"] for t in trials]},
    }
    comparison = published_comparison(name, cells)
    if comparison:
        report["published_comparison"] = comparison
    return report


def published_comparison(dataset: str, cells: list[dict]) -> list[dict]:
    """Informational (never gating) comparison with the published fidelity table."""
    ref = PUBLISHED_FIDELITY.get(str(dataset).lower())
    if not ref:
        return []
    rows = []
    for cell in cells:
        published = ref.get(cell["method"], {}).get(cell["budget"])
        if published is None or cell["mean"] is None or cell["cf_method"] != "mccf_l2":
            continue
        ours = 100.0 * cell["mean"]
        rows.append({"key": cell["key"], "ours_percent": ours, "published_percent": published[0],
                     "published_std": published[1],
                     "within_band": abs(ours - published[0]) <= PUBLISHED_BAND})
    return rows


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "method", "cf_method", "budget", "tau", "mean", "std", "n_trials"])
    for c in report["cells"]:
        writer.writerow([
            report["dataset"], c["method"], c["cf_method"], c["budget"],
            "" if c["tau"] is None else c["tau"],
            "" if c["mean"] is None else repr(c["mean"]),
            "" if c["std"] is None else repr(c["std"]),
            c["n_trials"],
        ])
    return buf.getvalue()


def _label(cell: dict, multi_tau: bool) -> str:
    if cell["method"] == "prototype" and multi_tau:
        return f"prototype(tau={cell['tau']:g})"
    return cell["method"]


def report_table(report: dict) -> str:
    """Plain-text table: one row per counterfactual method, budget groups across."""
    cells = report["cells"]
    multi_tau = len({c["tau"] for c in cells if c["method"] == "prototype"}) > 1
    budgets = sorted({c["budget"] for c in cells}, reverse=True)
    labels = list(dict.fromkeys(_label(c, multi_tau) for c in cells))
    header = ["", *[f"{lab} @{b}" for b in budgets for lab in labels]]
    rows = [header]
    for cf_method in dict.fromkeys(c["cf_method"] for c in cells):
        row = [f"{report['dataset']} [{cf_method}]"]
        for b in budgets:
            for lab in labels:
                match = [c for c in cells if c["budget"] == b and c["cf_method"] == cf_method
                         and _label(c, multi_tau) == lab]
                if not match or match[0]["mean"] is None:
                    row.append("n/a")
                else:
                    row.append(f"{100 * match[0]['mean']:.1f} ± {100 * match[0]['std']:.1f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json", out / "report.csv", out / "table.txt"]
    paths[0].write_text(report_json(report))
    paths[1].write_text(report_csv(report))
    paths[2].write_text(report_table(report))
    return paths

