"""Replicated solver runs persisted as CSV, plus the analyses that read them."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ConfigurationError
from ..solver import Trace, run
from .analysis import check_as_tail, check_sample_complexity, fit_rate
from .config import ExperimentConfig

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("K", "replication", "seed", "R", "residual_norm", "residual_sq", "residual_se",
                   "total_evals", "measurement_evals", "status")


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _header(fh, cfg_hash, seed, extra=""):
    fh.write(f"# config_hash={cfg_hash} seed={seed}{extra}\n")


def trace_filename(K, rep):
    return f"trace_K{K}_rep{rep:03d}.csv"


def _run_one(args):
    """Worker: one (horizon, replication) run streamed to its CSV."""
    raw, K, rep, seed, out_dir = args
    cfg = ExperimentConfig.from_dict(raw)
    problem = cfg.make_problem()
    scfg = cfg.solver_config(K, seed)
    x0 = cfg.initial_point(problem)
    path = Path(out_dir) / "traces" / trace_filename(K, rep)
    cfg_hash = cfg.config_hash()
    with open(path, "w", newline="") as fh:
        _header(fh, cfg_hash, seed, f" K={K} replication={rep}")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(Trace.CSV_COLUMNS)

        def sink(row):
            writer.writerow([_fmt(row[c]) for c in Trace.CSV_COLUMNS])

        try:
            trace = run(scfg, problem, problem.feasible, x0, row_sink=sink)
        except Exception as exc:  # recorded per replication; siblings keep running
            trace = getattr(exc, "trace", None)
            return {"K": K, "replication": rep, "seed": seed, "R": getattr(trace, "R", None),
                    "residual_norm": None, "residual_sq": None, "residual_se": None,
                    "total_evals": getattr(trace, "total_evals", None), "measurement_evals": None,
                    "status": f"failed: {type(exc).__name__}: {exc}", "checkpoints": {}, "x_final": None}
    rep_ = trace.report
    return {
        "K": K, "replication": rep, "seed": seed, "R": trace.R,
        "residual_norm": rep_.norm, "residual_sq": rep_.norm**2, "residual_se": rep_.grad_se,
        "total_evals": trace.total_evals, "measurement_evals": trace.measurement_evals, "status": "ok",
        "checkpoints": {int(k): list(v) for k, v in trace.checkpoints.items()},
        "x_final": trace.x_final.tolist(),
    }


def run_experiment(config: ExperimentConfig, out_dir=None) -> Path:
    """Run every (horizon, replication) pair and write the artifact directory.

    Layout: ``metadata.json``, ``traces/trace_K{K}_rep{r}.csv``,
    ``summary.csv`` and, when enabled, ``rate_fit.json``, ``complexity.json``
    and ``as_tail.json``.
    """
    out = Path(out_dir) if out_dir is not None else config.output_path()
    try:
        (out / "traces").mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {out} is not writable: {exc}") from None

    cfg_hash = config.config_hash()
    problem = config.make_problem()
    meta = {
        "config": config.raw,
        "config_hash": cfg_hash,
        "seed": config.seed,
        "replication_seeds": config.replication_seeds(),
        "version": __version__,
        "problem": problem.describe(),
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    jobs = [(config.raw, K, rep, seed, str(out))
            for K in config.horizon_list()
            for rep, seed in enumerate(config.replication_seeds())]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    with open(out / "summary.csv", "w", newline="") as fh:
        _header(fh, cfg_hash, config.seed)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in results:
            w.writerow([_fmt(r[c]) for c in SUMMARY_COLUMNS])
    for r in results:
        if r["status"] != "ok":
            log.warning("K=%s replication %s: %s", r["K"], r["replication"], r["status"])

    _analyse(config, out, results)
    return out


def _analyse(config, out, results):
    a = config.analysis
    ok = [r for r in results if r["status"] == "ok"]
    if a.get("rate_fit"):
        fit = fit_rate(summaries_by_horizon(ok), resamples=int(a.get("bootstrap_resamples", 1000)))
        _write_json(out / "rate_fit.json", fit.to_dict())
    if a.get("epsilon_targets"):
        K = max(config.horizon_list())
        cps = [r["checkpoints"] for r in ok if r["K"] == K]
        if cps:
            table = check_sample_complexity(cps, a["epsilon_targets"])
            _write_json(out / "complexity.json", table)
    if a.get("as_tail"):
        ratio = float(a.get("as_ratio", 0.5))
        reports = [dict(check_as_tail(r["checkpoints"], ratio), K=r["K"], replication=r["replication"])
                   for r in ok]
        _write_json(out / "as_tail.json", {"ratio": ratio, "runs": reports,
                                           "all_passed": all(x["passed"] for x in reports)})


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def summaries_by_horizon(results, column="residual_sq"):
    by = {}
    for r in results:
        by.setdefault(int(r["K"]), []).append(float(r[column]))
    return by


def read_summary(run_dir):
    """Rows of a run directory's summary.csv as dicts (numbers parsed)."""
    path = Path(run_dir) / "summary.csv"
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for row in csv.DictReader(lines):
        for key in ("K", "replication", "seed", "R", "total_evals", "measurement_evals"):
            row[key] = int(row[key]) if row[key] else None
        for key in ("residual_norm", "residual_sq", "residual_se"):
            row[key] = float(row[key]) if row[key] else None
        rows.append(row)
    return rows


def fit_rate_dir(run_dirs, resamples=1000):
    """Fit the rate law over one or more run directories."""
    if isinstance(run_dirs, (str, os.PathLike)):
        run_dirs = [run_dirs]
    rows = [r for d in run_dirs for r in read_summary(d) if r["status"] == "ok"]
    return fit_rate(summaries_by_horizon(rows), resamples=resamples)


def read_trace_csv(path):
    """(comment header, column names, rows of strings) of a trace CSV."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        cols = next(reader)
        return header, cols, list(reader)
