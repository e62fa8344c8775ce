"""``ccinls`` command-line front end.

Subcommands: ``fit``, ``predict``, ``simulate`` and ``apply``.  Each writes
its outputs plus one ``manifest.json`` into ``--out``.

Exit codes: 0 ok, 2 usage or input error, 3 numerical or solver failure,
4 boundary repair exhausted.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .anchors import AnchorSet, CentroidStat, Strategy, extract_anchors, step_predict
from .data import DataError, Dataset, load_csv
from .inls import fit_inls
from .opt import BACKENDS
from .predictor import (FORMULATIONS, CcError, CcModelConfig, CcPredictor, InfeasiblePoint,
                        RepairExhausted, elasticity, marginal_products)
from .simulation import (ESTIMATORS, NOISE, ScenarioConfig, ScenarioError, TABLE_COLUMNS,
                         TARGETS, load_scenario_file, parse_form, run_scenario_detailed,
                         table_rows)

log = logging.getLogger("ccinls")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_REPAIR = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__
    started: float = field(default_factory=time.time)
    seconds: float = 0.0

    def add_input(self, path: str) -> None:
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
        self.inputs[os.path.abspath(path)] = "sha256:" + h.hexdigest()

    def write(self, out_dir: str) -> str:
        self.seconds = time.time() - self.started
        path = os.path.join(out_dir, "manifest.json")
        doc = {"subcommand": self.subcommand, "config": self.config, "inputs": self.inputs,
               "tool_version": self.version, "started_unix": self.started,
               "wall_clock_seconds": self.seconds, "outputs": sorted(self.outputs)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return path


def _write_text(path: str, text: str, manifest: RunManifest) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    manifest.outputs.append(os.path.basename(path))


def _write_csv(path: str, header: Sequence[str], rows, manifest: RunManifest) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    manifest.outputs.append(os.path.basename(path))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _cc_config(args) -> CcModelConfig:
    return CcModelConfig(
        big_M=getattr(args, "big_m", None),
        infeasible_policy=getattr(args, "policy", "floor"),
        formulation=getattr(args, "formulation", "single_level"),
        backend=getattr(args, "backend", "highs"),
        max_repair_rounds=getattr(args, "max_repair_rounds", 10),
        dump_lp=getattr(args, "dump_lp", None),
    )


def _threads(args) -> int:
    n = getattr(args, "threads", None)
    return max(1, int(n if n else (os.cpu_count() or 1)))


# --- parallel prediction -------------------------------------------------

def _predict_chunk(job):
    anchors_doc, cfg, pts, record = job
    predictor = CcPredictor(AnchorSet.from_dict(anchors_doc), cfg)
    out = []
    for p in pts:
        try:
            out.append((predictor.predict(p), None))
        except (RepairExhausted, CcError) as exc:
            if not record:
                raise
            out.append((None, f"{type(exc).__name__}: {exc}"))
    return out


def predict_points(anchors: AnchorSet, cfg: CcModelConfig, points: np.ndarray, threads: int = 1,
                   record_errors: bool = False):
    """``(Prediction | None, error | None)`` per point, order preserved."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return []
    doc = anchors.to_dict()
    if threads <= 1 or len(points) < 2 or cfg.dump_lp:
        return _predict_chunk((doc, cfg, points, record_errors))
    chunks = np.array_split(points, min(threads, len(points)))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(_predict_chunk, [(doc, cfg, c, record_errors) for c in chunks])
        return [r for part in parts for r in part]


# --- fit -------------------------------------------------------------------

def _csv_header(path: str) -> list[str]:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return next(csv.reader(fh), [])


def _features(args, header) -> list[str]:
    if args.features:
        return [c.strip() for c in args.features.split(",") if c.strip()]
    skip = {args.response, getattr(args, "id_column", None)}
    cols = [c for c in header if c not in skip]
    if not cols:
        raise DataError("no feature columns")
    return cols


def cmd_fit(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    header = _csv_header(args.data)
    feats = _features(args, header)
    data = load_csv(args.data, args.response, feats, args.id_column)
    man = RunManifest("fit", {"data": args.data, "response": args.response, "features": feats,
                              "strategy": args.strategy, "centroid_stat": args.centroid_stat,
                              "method": args.method})
    man.add_input(args.data)
    fit = fit_inls(data, method=args.method)
    doc = fit.to_dict()
    doc["features"] = feats
    doc["response"] = args.response
    _write_text(os.path.join(args.out, "fit.json"), json.dumps(doc, indent=2) + "\n", man)
    strategies = ["vertices", "centroids"] if args.strategy == "both" else [args.strategy]
    sets = {st: extract_anchors(data, fit.blocks, st, args.centroid_stat) for st in strategies}
    if len(sets) == 1:
        (only,) = sets.values()
        anchors_doc = only.to_dict()
    else:
        anchors_doc = {"variants": {k: v.to_dict() for k, v in sets.items()}}
    anchors_doc["features"] = feats
    _write_text(os.path.join(args.out, "anchors.json"), json.dumps(anchors_doc, indent=2) + "\n", man)
    rows = []
    s = data.s
    for st, a in sets.items():
        for xk, ak in zip(a.x, a.alpha):
            rows.append(([st] if len(sets) > 1 else []) + [_fmt(v) for v in xk] + [_fmt(ak)])
    header = (["strategy"] if len(sets) > 1 else []) + [f"x{r + 1}" for r in range(s)] + ["alpha"]
    _write_csv(os.path.join(args.out, "anchors.csv"), header, rows, man)
    man.write(args.out)
    log.info("fit: %d observations, %d blocks", data.n, fit.blocks.m)
    return EXIT_OK


# --- predict -----------------------------------------------------------------

def load_anchor_file(path: str, variant: str | None = None) -> AnchorSet:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "variants" in doc:
        variants = doc["variants"]
        key = variant or ("vertices" if "vertices" in variants else next(iter(variants)))
        if key not in variants:
            raise DataError(f"anchor file has no {key!r} variant (available: {', '.join(variants)})")
        return AnchorSet.from_dict(variants[key])
    if "anchors" not in doc:
        raise DataError(f"{path}: not an anchor file")
    return AnchorSet.from_dict(doc)


def _read_points(path: str, columns: list[str] | None, s: int) -> np.ndarray:
    header = _csv_header(path)
    cols = columns or header
    if len(cols) != s:
        raise DataError(f"query file needs {s} input column(s), selected {len(cols)}: {cols}")
    data = load_csv(path, cols[0], cols)  # response is ignored
    return np.asarray(data.X)


def cmd_predict(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    anchors = load_anchor_file(args.anchors, args.variant)
    cols = [c.strip() for c in args.columns.split(",")] if args.columns else None
    pts = _read_points(args.points, cols, anchors.s)
    cfg = _cc_config(args)
    man = RunManifest("predict", {"anchors": args.anchors, "points": args.points,
                                  "variant": args.variant, "policy": cfg.infeasible_policy.value,
                                  "formulation": cfg.formulation, "backend": cfg.backend,
                                  "big_M": cfg.big_M, "on_error": args.on_error,
                                  "threads": _threads(args)})
    man.add_input(args.anchors)
    man.add_input(args.points)
    results = predict_points(anchors, cfg, pts, _threads(args), args.on_error == "record")
    s = anchors.s
    header = ([f"x{r + 1}" for r in range(s)] + ["theta"] + [f"grad{r + 1}" for r in range(s)]
              + [f"elas{r + 1}" for r in range(s)] + ["extrapolated"])
    record = args.on_error == "record"
    if record:
        header.append("error")
    rows = []
    for x, (pred, err) in zip(pts, results):
        if pred is None:
            rows.append([_fmt(v) for v in x] + [""] * (1 + 2 * s) + [""] + [err])
            continue
        grad = marginal_products(pred)
        if len(grad) != s:
            grad = np.zeros(s)
        elas = elasticity(pred) if pred.theta != 0 else np.full(s, np.nan)
        row = ([_fmt(v) for v in x] + [_fmt(pred.theta)] + [_fmt(v) for v in grad]
               + [_fmt(v) for v in elas] + [_fmt(pred.extrapolated)])
        if record:
            row.append("")
        rows.append(row)
    _write_csv(os.path.join(args.out, "predictions.csv"), header, rows, man)
    man.write(args.out)
    return EXIT_OK


# --- simulate ----------------------------------------------------------------

def _split_list(text: str | None, conv=str) -> list:
    if text is None:
        return []
    return [conv(t.strip()) for t in str(text).split(",") if t.strip()]


def _scenarios(args) -> list[ScenarioConfig]:
    seed = args.seed
    if args.config:
        base = load_scenario_file(args.config)
        if seed is not None:
            base = ScenarioConfig(**{**base.__dict__, "rng_seed": seed})
        return [base]
    form = parse_form(args.form)
    out = []
    sigmas = _split_list(args.sigma, float)
    noise = _split_list(args.noise) or ["low"]
    levels = [(f"sigma={x:g}", x) for x in sigmas] if sigmas else [(n, NOISE[(form, n)]) for n in noise]
    for _, sigma in levels:
        for n_in in _split_list(args.n_in, int) or [25]:
            out.append(ScenarioConfig(functional_form=form, s=args.s, sigma_eps=sigma, n_in=n_in,
                                      n_out=args.n_out, replications=args.reps,
                                      rng_seed=0 if seed is None else seed, target=args.target))
    return out


def cmd_simulate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    scenarios = _scenarios(args)
    estimators = _split_list(args.estimators) or list(ESTIMATORS)
    cfg = _cc_config(args)
    man = RunManifest("simulate", {"scenarios": [c.to_dict() for c in scenarios],
                                   "estimators": estimators, "formulation": cfg.formulation,
                                   "backend": cfg.backend, "threads": _threads(args)})
    if args.config:
        man.add_input(args.config)
    results = []
    for sc in scenarios:
        log.info("running %s", sc.scenario_id)
        results.append(run_scenario_detailed(sc, estimators, cfg, workers=_threads(args)))
    long_rows = [r for res in results for r in table_rows(res)]
    _write_csv(os.path.join(args.out, "metrics.csv"), TABLE_COLUMNS,
               [[_fmt(row[c]) for c in TABLE_COLUMNS] for row in long_rows], man)
    # wide layout: one row per estimator, one column per (noise, n_in)
    cells = sorted({(row["noise"], row["n_in"]) for row in long_rows},
                   key=lambda t: (t[0] != "low", t[0], t[1]))
    header = ["form", "s", "estimator"] + [f"{noise}:n_in={n}" for noise, n in cells]
    wide = []
    for est in estimators:
        vals = {(r["noise"], r["n_in"]): r["rmse"] for r in long_rows if r["estimator"] == est}
        wide.append([scenarios[0].functional_form.value, scenarios[0].s, est]
                    + [_fmt(vals[c]) if c in vals else "" for c in cells])
    _write_csv(os.path.join(args.out, "table.csv"), header, wide, man)
    detail = {"scenarios": [r.detail() for r in results]}
    _write_text(os.path.join(args.out, "detail.json"), json.dumps(detail, indent=2) + "\n", man)
    man.write(args.out)
    return EXIT_OK


# --- apply -------------------------------------------------------------------

def _years(text: str) -> set[int]:
    out: set[int] = set()
    for part in _split_list(text):
        if "-" in part:
            a, b = part.split("-", 1)
            out.update(range(int(a), int(b) + 1))
        else:
            out.add(int(part))
    if not out:
        raise UsageError(f"empty year specification {text!r}")
    return out


@dataclass
class Panel:
    ids: list[str]
    years: np.ndarray
    columns: dict[str, np.ndarray]


def load_panel(path: str, id_col: str, year_col: str, needed: Sequence[str]) -> Panel:
    header = _csv_header(path)
    missing = [c for c in [id_col, year_col, *needed] if c not in header]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")
    ids, years, cols = [], [], {c: [] for c in needed}
    with open(path, newline="", encoding="utf-8") as fh:
        for r, rec in enumerate(csv.DictReader(fh), start=1):
            ids.append(rec[id_col])
            try:
                years.append(int(float(rec[year_col])))
                for c in needed:
                    v = float(rec[c])
                    if not math.isfinite(v):
                        raise ValueError
                    cols[c].append(v)
            except ValueError:
                raise DataError(f"row {r}: non-numeric or non-finite value") from None
    if not ids:
        raise DataError("empty dataset")
    return Panel(ids, np.array(years), {c: np.array(v) for c, v in cols.items()})


def build_training_set(panel: Panel, response: str, features: Sequence[str], train_years: set[int],
                       min_population: float | None, population_col: str,
                       exclude: Sequence[str]) -> tuple[Dataset, dict]:
    """Per-id averages over the training years, then the population filter and exclusions."""
    in_train = np.isin(panel.years, sorted(train_years))
    ids = np.array(panel.ids)
    kept, X, y, dropped_small = [], [], [], []
    excluded = [i for i in dict.fromkeys(ids[in_train]) if i in set(exclude)]
    for i in dict.fromkeys(ids[in_train]):
        if i in set(exclude):
            continue
        mask = in_train & (ids == i)
        pop = panel.columns[population_col][mask].mean()
        if min_population is not None and pop < min_population:
            dropped_small.append(i)
            continue
        kept.append(i)
        X.append([panel.columns[f][mask].mean() for f in features])
        y.append(panel.columns[response][mask].mean())
    if not kept:
        raise DataError("training split is empty after filtering")
    summary = {"n_train": len(kept), "ids": kept, "excluded": excluded,
               "dropped_below_min_population": dropped_small,
               "train_years": sorted(train_years)}
    return Dataset(np.array(X), np.array(y), names=tuple(features), ids=tuple(kept)), summary


def cmd_apply(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    features = [f.strip() for f in args.feature.split(",")]
    needed = list(dict.fromkeys([args.response, *features, args.population_column]))
    panel = load_panel(args.data, args.id_column, args.year_column, needed)
    train_years, test_years = _years(args.train_years), _years(args.test_years)
    exclude = _split_list(args.exclude)
    train, summary = build_training_set(panel, args.response, features, train_years,
                                        args.min_population, args.population_column, exclude)
    ids = np.array(panel.ids)
    test_mask = np.isin(panel.years, sorted(test_years)) & np.isin(ids, list(train.ids))
    if not test_mask.any():
        raise DataError("test split is empty")
    Xt = np.column_stack([panel.columns[f][test_mask] for f in features])
    yt = panel.columns[args.response][test_mask]
    cfg = _cc_config(args)
    man = RunManifest("apply", {"data": args.data, "response": args.response, "features": features,
                                "train_years": sorted(train_years), "test_years": sorted(test_years),
                                "min_population": args.min_population, "exclude": exclude,
                                "formulation": cfg.formulation, "backend": cfg.backend,
                                "grid_points": args.grid_points, "thousands": args.thousands_divisor})
    man.add_input(args.data)

    fit = fit_inls(train)
    sets = {"vertices": extract_anchors(train, fit.blocks, Strategy.VERTICES),
            "centroids": extract_anchors(train, fit.blocks, Strategy.CENTROIDS, CentroidStat.MEAN)}
    threads = _threads(args)
    test_pred = {"inls": step_predict(sets["vertices"], Xt)}
    for name, a in sets.items():
        res = predict_points(a, cfg, Xt, threads)
        test_pred[f"cc_{name}"] = np.array([p.theta for p, _ in res])
    rmse = {k: float(np.sqrt(np.mean((v - yt) ** 2))) for k, v in test_pred.items()}

    summary.update({"n_test": int(test_mask.sum()), "test_years": sorted(test_years),
                    "response": args.response, "features": features, "sse": fit.sse,
                    "blocks": fit.blocks.m,
                    "anchors": {k: v.to_dict() for k, v in sets.items()}})
    _write_text(os.path.join(args.out, "train_summary.json"), json.dumps(summary, indent=2) + "\n", man)
    test_ids = ids[test_mask]
    test_years_arr = panel.years[test_mask]
    header = ["id", "year", *features, args.response, *test_pred]
    rows = [[test_ids[i], int(test_years_arr[i]), *[_fmt(v) for v in Xt[i]], _fmt(yt[i]),
             *[_fmt(test_pred[k][i]) for k in test_pred]] for i in range(len(yt))]
    _write_csv(os.path.join(args.out, "test_predictions.csv"), header, rows, man)
    div = args.thousands_divisor
    lines = [f"{k}\traw={v:.6g}\tthousands={v / div:.6g}" for k, v in rmse.items()]
    _write_text(os.path.join(args.out, "rmse.txt"), "estimator\trmse\n" + "\n".join(lines) + "\n", man)
    if train.s == 1:
        lo, hi = float(train.X.min()), float(train.X.max())
        grid = np.unique(np.concatenate([np.linspace(lo, hi, args.grid_points),
                                         sets["vertices"].x[:, 0], sets["centroids"].x[:, 0]]))
        curve = {"inls": step_predict(sets["vertices"], grid[:, None])}
        for name, a in sets.items():
            curve[f"cc_{name}"] = np.array([p.theta for p, _ in predict_points(a, cfg, grid[:, None], threads)])
        _write_csv(os.path.join(args.out, "curve.csv"), [features[0], *curve],
                   [[_fmt(g), *[_fmt(curve[k][i]) for k in curve]] for i, g in enumerate(grid)], man)
    else:
        log.warning("curve.csv is only written for a single feature")
    man.write(args.out)
    for k, v in rmse.items():
        log.info("%s RMSE %.6g", k, v)
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--formulation", choices=FORMULATIONS, default="single_level")
    p.add_argument("--backend", choices=BACKENDS, default="highs")
    p.add_argument("--big-m", type=float, default=None, dest="big_m")
    p.add_argument("--policy", choices=["floor", "error"], default="floor",
                   help="behaviour below every anchor")
    p.add_argument("--max-repair-rounds", type=int, default=10)
    p.add_argument("--dump-lp", default=None, metavar="DIR", help="write each assembled model as LP text")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccinls", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"ccinls {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="INLS fit and anchor extraction")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--features", default=None, help="comma-separated; default: all other columns")
    p.add_argument("--id-column", default=None)
    p.add_argument("--strategy", choices=["vertices", "centroids", "both"], default="vertices")
    p.add_argument("--centroid-stat", choices=["mean", "median"], default="mean")
    p.add_argument("--method", choices=["mincut", "active_set"], default="mincut")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="CC-INLS predictions, marginal products and elasticities")
    p.add_argument("--anchors", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--columns", default=None, help="comma-separated input columns of --points")
    p.add_argument("--variant", choices=["vertices", "centroids"], default=None)
    p.add_argument("--on-error", choices=["abort", "record"], default="abort")
    p.add_argument("--out", default=".")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo scenarios")
    p.add_argument("--config", default=None, help="key = value scenario file")
    p.add_argument("--form", default="logistic", help="logistic | cobb")
    p.add_argument("--s", type=int, default=1, choices=[1, 2])
    p.add_argument("--noise", default=None, help="low | high (comma list allowed)")
    p.add_argument("--sigma", default=None, help="explicit sigma_eps (comma list allowed)")
    p.add_argument("--n-in", default="25", help="comma list allowed")
    p.add_argument("--n-out", type=int, default=100)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--target", choices=TARGETS, default="noiseless")
    p.add_argument("--estimators", default=None, help=f"comma list from {', '.join(ESTIMATORS)}")
    p.add_argument("--out", default=".")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_simulate, formulation="enumerate")

    p = sub.add_parser("apply", parents=[common], help="panel workflow: average, filter, fit, evaluate")
    p.add_argument("--data", required=True)
    p.add_argument("--id-column", default="id")
    p.add_argument("--year-column", default="year")
    p.add_argument("--population-column", default="population")
    p.add_argument("--response", default="population")
    p.add_argument("--feature", default="jobs", help="comma-separated explanatory column(s)")
    p.add_argument("--train-years", required=True, help="e.g. 2012-2016")
    p.add_argument("--test-years", required=True, help="e.g. 2017-2021")
    p.add_argument("--min-population", type=float, default=None)
    p.add_argument("--exclude", default="", help="comma-separated ids")
    p.add_argument("--grid-points", type=int, default=200)
    p.add_argument("--thousands-divisor", type=float, default=1000.0)
    p.add_argument("--out", default=".")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_apply, formulation="enumerate")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    env_seed = os.environ.get("CCINLS_SEED")
    if env_seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env_seed)
        except ValueError:
            print(f"ccinls: error: CCINLS_SEED must be an integer, got {env_seed!r}", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except RepairExhausted as exc:
        print(f"ccinls: repair exhausted: {exc}", file=sys.stderr)
        return EXIT_REPAIR
    except (DataError, UsageError, ValueError, KeyError, OSError) as exc:
        print(f"ccinls: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CcError, InfeasiblePoint, ScenarioError, np.linalg.LinAlgError) as exc:
        cause = exc.__cause__
        if isinstance(cause, RepairExhausted):
            print(f"ccinls: repair exhausted: {exc}", file=sys.stderr)
            return EXIT_REPAIR
        print(f"ccinls: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
