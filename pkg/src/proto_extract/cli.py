"""Command-line entry point: ``proto-extract <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .counterfactual import make_generator
from .data import SplitSpec, split
from .errors import ConfigError, CounterfactualError, DataError, ModelError, ProtoExtractError
from .harness import (
    ExperimentConfig,
    apply_override,
    config_from_dict,
    load_dataset,
    run_experiment,
    trial_seeds,
    write_report,
)
from .oracle import LinearModel, Oracle, predict_label, train_logistic
from .selftest import run_selftest
from .surrogate import PrototypeSurrogate, build_query_dataset, fidelity, fit_baseline1, fit_prototype_surrogate

logger = logging.getLogger("proto_extract")

SEED_ENV = "PROTO_EXTRACT_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _read_config(path: str | None, overrides: list[str]) -> ExperimentConfig:
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{p}: the config must be a JSON object")
    for assignment in overrides or []:
        apply_override(doc, assignment)
    if os.environ.get(SEED_ENV):
        try:
            doc["master_seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    return config_from_dict(doc)


def _write_resolved(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _read_points(path) -> tuple[list[str], np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"input file not found: {p}")
    with p.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{p} needs a header and at least one row")
    try:
        return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{p}: non-numeric value ({exc})") from exc


def _write_points(path: Path, header: list[str], X: np.ndarray, extra: dict | None = None) -> None:
    extra = extra or {}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*header, *extra])
        for i, row in enumerate(X):
            w.writerow([*(repr(float(v)) for v in row), *(col[i] for col in extra.values())])


def _trial_parts(cfg: ExperimentConfig):
    ds = load_dataset(cfg)
    seeds = trial_seeds(cfg.master_seed, 0)
    sp = cfg.split
    parts = split(ds, SplitSpec(sp.train_frac, sp.query_frac, sp.ref_frac, seeds["split"]))
    return ds, seeds, parts


def cmd_train_target(args) -> int:
    cfg = _read_config(args.config, args.override)
    out = Path(args.out)
    _write_resolved(cfg, out)
    ds, _, (train, pool, ref) = _trial_parts(cfg)
    model = train_logistic(train.features, train.labels, l2=cfg.target.l2,
                           max_iters=cfg.target.max_iters, tol=cfg.target.tol)
    model.save(out / "target.json")
    _write_points(out / "query_pool.csv", ds.feature_names, pool.features)
    _write_points(out / "ref.csv", ds.feature_names, ref.features)
    acc = float(np.mean(predict_label(model, ref.features) == ref.labels))
    print(f"target trained on {len(train)} rows; reference accuracy {acc:.4f}")
    return 0


def cmd_gen_cf(args) -> int:
    cfg = _read_config(args.config, args.override)
    out = Path(args.out)
    _write_resolved(cfg, out)
    if not args.target or not args.input:
        raise UsageError("gen-cf needs --target and --input")
    model = LinearModel.load(args.target)
    header, X = _read_points(args.input)
    pool = None
    if "nearest_neighbor" in cfg.cf_methods:
        ds = load_dataset(cfg)
        pool = ds.features[predict_label(model, ds.features) == 1]
    method = cfg.cf_methods[0]
    gen = make_generator(method, cfg.cf_config(), pool=pool)
    labels = predict_label(model, X)
    cfs = np.full_like(X, np.nan)
    for i, x in enumerate(X):
        if labels[i] == 0:
            cfs[i] = gen(model, x)
    _write_points(out / "counterfactuals.csv", [f"cf_{h}" for h in header], cfs,
                  {"label": [int(v) for v in labels]})
    print(f"{int((labels == 0).sum())} counterfactuals generated with {method}")
    return 0


def cmd_extract(args) -> int:
    cfg = _read_config(args.config, args.override)
    out = Path(args.out)
    _write_resolved(cfg, out)
    ds, seeds, (train, pool, ref) = _trial_parts(cfg)
    if args.target:
        target = LinearModel.load(args.target)
    else:
        target = train_logistic(train.features, train.labels, l2=cfg.target.l2,
                                max_iters=cfg.target.max_iters, tol=cfg.target.tol)
    target.save(out / "target.json")
    budget = max(cfg.query_budgets)
    if budget > len(pool):
        raise ConfigError(f"query budget {budget} exceeds the query pool of {len(pool)} rows", "query_budgets")
    order = np.random.default_rng(seeds["queries"]).permutation(len(pool))[:budget]
    accepted = train.features[predict_label(target, train.features) == 1]
    oracle = Oracle(target, make_generator(cfg.cf_methods[0], cfg.cf_config(), pool=accepted))
    qd = build_query_dataset(oracle.query_many(pool.features[order]), dim=ds.dim)

    summary = {"budget": budget, "n_queries": oracle.n_queries, "n_class0": int(qd.d0.shape[0]),
               "n_class1": int(qd.d1.shape[0]), "fidelity": {}}
    if "prototype" in cfg.methods:
        sur = fit_prototype_surrogate(qd, cfg.prototype_config(seeds["prototype"]), tau=cfg.taus[0])
        sur.save(out / "prototype.json")
        summary["fidelity"]["prototype"] = fidelity(target, sur.predict_many, ref.features, batched=True)
    if "baseline1" in cfg.methods:
        b1 = fit_baseline1(qd, l2=cfg.baseline1.l2, max_iters=cfg.baseline1.max_iters, tol=cfg.baseline1.tol)
        b1.save(out / "baseline1.json")
        summary["fidelity"]["baseline1"] = fidelity(
            target, lambda X: predict_label(b1, X), ref.features, batched=True)
    _write_points(out / "ref.csv", ds.feature_names, ref.features)
    (out / "extract_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name, fid in summary["fidelity"].items():
        print(f"{name}: fidelity {fid:.4f} with {budget} queries")
    return 0


def _load_surrogate(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") == "prototype":
        sur = PrototypeSurrogate.from_dict(doc)
        return sur.predict_many
    model = LinearModel.from_dict(doc)
    return lambda X: predict_label(model, X)


def cmd_evaluate(args) -> int:
    if not args.target or not args.surrogate or not args.input:
        raise UsageError("evaluate needs --target, --surrogate and --input")
    target = LinearModel.load(args.target)
    predict = _load_surrogate(args.surrogate)
    _, X = _read_points(args.input)
    fid = fidelity(target, predict, X, batched=True)
    print(f"fidelity {fid:.6f} over {X.shape[0]} points")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.json").write_text(json.dumps({"fidelity": fid, "n": int(X.shape[0])}, indent=2) + "\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = _read_config(args.config, args.override)
    out = Path(args.out)
    _write_resolved(cfg, out)
    report = run_experiment(cfg, jobs=args.jobs)
    paths = write_report(report, out)
    print((out / "table.txt").read_text(), end="")
    for p in paths:
        logger.info("wrote %s", p)
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest() else 2


COMMANDS = {
    "train-target": cmd_train_target,
    "gen-cf": cmd_gen_cf,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proto-extract", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "selftest":
            continue
        p.add_argument("--config", required=name in ("sweep", "train-target", "extract", "gen-cf"))
        p.add_argument("--out", required=name != "evaluate")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("-v", "--verbose", action="count", default=0)
        p.add_argument("--target", help="saved target model (JSON)")
        p.add_argument("--surrogate", help="saved surrogate (JSON)")
        p.add_argument("--input", help="CSV of feature rows with a header")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = {0: logging.WARNING, 1: logging.INFO}.get(getattr(args, "verbose", 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        where = f" [{exc.path}]" if getattr(exc, "path", None) else ""
        print(f"proto-extract: configuration error{where}: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"proto-extract: data error: {exc}", file=sys.stderr)
        return 1
    except (CounterfactualError, ModelError, ProtoExtractError, FloatingPointError, RuntimeError) as exc:
        print(f"proto-extract: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
