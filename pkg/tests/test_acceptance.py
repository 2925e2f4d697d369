"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are collected in
the terminal summary under "acceptance criteria" (add ``-s`` to also see them
as each test finishes). Configurations and seeds are fixed up front.
"""
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import ACCEPTANCE_LINES
from zoblock.geometry import Ball, BlockStructure, Box, FeasibleSet, Halfspace, Simplex
from zoblock.harness import ExperimentConfig, check_as_tail, check_sample_complexity, fit_rate, run_experiment
from zoblock.harness.analysis import rate_bound
from zoblock.oracle import smoothed_value_estimate
from zoblock.problems import Abs1D, Quad
from zoblock.residual import check_residual_inequality
from zoblock.sampling import RngStreams
from zoblock.solver import AlmostSureMode, RateMode, SolverConfig, SolverState, decompose_errors, moment_bounds, run, step


def report(number, ok, detail, started):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail} ({time.perf_counter() - started:.1f}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --- 1 projections ----------------------------------------------------------

def _qp_oracle(S, y):
    """Nearest point by a general constrained solver (SLSQP)."""
    dim = y.size
    cons, bounds = [], None
    if isinstance(S, Box):
        bounds = list(zip(S.lower, S.upper))
    elif isinstance(S, Ball):
        cons = [{"type": "ineq", "fun": lambda z: S.radius**2 - np.sum((z - S.center) ** 2),
                 "jac": lambda z: -2 * (z - S.center)}]
    elif isinstance(S, Halfspace):
        cons = [{"type": "ineq", "fun": lambda z: S.c - S.a @ z, "jac": lambda z: -S.a}]
    z0 = np.clip(y, S.lower, S.upper) if isinstance(S, Box) else np.zeros(dim)
    if isinstance(S, Ball):
        z0 = S.center.copy()
    if isinstance(S, Halfspace):
        z0 = S.a * min(0.0, S.c) / (S.a @ S.a)
    res = minimize(lambda z: 0.5 * np.sum((z - y) ** 2), z0, jac=lambda z: z - y, method="SLSQP",
                   bounds=bounds, constraints=cons, options={"ftol": 1e-14, "maxiter": 500})
    return res.x


def _simplex_kkt(y, s):
    best, best_d = None, np.inf
    for size in range(1, y.size + 1):
        for supp in itertools.combinations(range(y.size), size):
            supp = list(supp)
            w = np.zeros(y.size)
            w[supp] = y[supp] - (y[supp].sum() - s) / size
            if np.all(w >= -1e-12) and np.linalg.norm(w - y) < best_d:
                best, best_d = np.maximum(w, 0), np.linalg.norm(w - y)
    return best


def _random_set(kind, dim, rng):
    if kind == "box":
        lo = rng.uniform(-1, 0.5, size=dim)
        return Box(lo, lo + rng.uniform(0.05, 1.5, size=dim))
    if kind == "ball":
        return Ball(rng.uniform(-0.5, 0.5, size=dim), rng.uniform(0.2, 1.5))
    if kind == "simplex":
        return Simplex(dim, rng.uniform(0.2, 2.0))
    return Halfspace(rng.normal(size=dim), rng.uniform(-1, 1))


def test_criterion_01_projection_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst = {}
    worst_prop = 0.0
    for kind in ("box", "ball", "simplex", "halfspace"):
        err = 0.0
        for _ in range(1000):
            dim = int(rng.integers(1, 4))
            S = _random_set(kind, dim, rng)
            y = rng.normal(scale=2, size=dim)
            p = S.project(y)
            ref = _simplex_kkt(y, S.radius) if kind == "simplex" else _qp_oracle(S, y)
            err = max(err, float(np.linalg.norm(p - ref)))
            z = rng.normal(scale=2, size=dim)
            worst_prop = max(worst_prop,
                             float(np.max(np.abs(S.project(p) - p))),
                             float(np.linalg.norm(p - S.project(z)) - np.linalg.norm(y - z)))
        worst[kind] = err
    ok = all(e <= 1e-6 for e in worst.values()) and worst_prop <= 1e-10
    detail = ", ".join(f"{k} max dev {v:.1e}" for k, v in worst.items())
    report(1, ok, f"projections vs QP/KKT oracles ({detail}); idempotence/nonexpansiveness slack {worst_prop:.1e}", t0)


# --- 2 smoothing values --------------------------------------------------------

def test_criterion_02_smoothing_value_law():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_z, worst_gap = 0.0, -np.inf
    for p, eta in ((Abs1D(eta0=0.2), 0.2), (Quad(n=4, b=2, eta0=0.25), 0.25)):
        for x in p.sample_points(rng, 100):
            m, se = smoothed_value_estimate(p, x, eta, 20_000, rng)
            exact = p.smoothed(x, eta)
            worst_z = max(worst_z, abs(m - exact) / se)
            worst_gap = max(worst_gap, abs(exact - float(p.value(x[None])[0])) - p.L0 * eta)
    ok = worst_z <= 4 and worst_gap <= 0
    report(2, ok, f"Monte Carlo vs closed form worst |z| {worst_z:.2f} (<= 4); gap excess over L0*eta {worst_gap:.3g} (<= 0)", t0)


# --- 3 estimator moments ---------------------------------------------------------

def test_criterion_03_estimator_moments():
    t0 = time.perf_counter()
    eta, N, probes = 0.1, 5, 1000
    p = Quad(n=4, b=2, eta0=eta, noise={"kind": "affine", "nu": 0.1})
    c = SolverConfig(eta=eta, K=10, schedule=RateMode(0), checkpoints=False)
    gamma = c.resolved_gamma(p, p.blocks)
    x = np.array([0.5, -0.3, 0.2, 0.8])
    E, T, D = [], [], []
    for r in range(probes):
        streams = RngStreams(r)
        # iteration k=3 has N_3 = ceil(1 + 4) = 5
        _, probe = step(SolverState(x, k=N - 2), c, p, p.feasible, streams, gamma, keep_draws=True)
        assert probe.N == N
        dec = decompose_errors(probe, p, p.blocks, eta)
        E.append(dec.e), T.append(dec.theta), D.append(dec.delta)
    worst_mean_z = 0.0
    moments = {}
    bounds = moment_bounds(p, p.blocks, eta, N)
    moment_ok = True
    for name, arr in (("e", np.array(E)), ("theta", np.array(T)), ("delta", np.array(D))):
        se = arr.std(axis=0, ddof=1) / math.sqrt(probes)
        worst_mean_z = max(worst_mean_z, float(np.max(np.abs(arr.mean(axis=0)) / se)))
        sq = np.sum(arr * arr, axis=1)
        m2, m2_se = sq.mean(), sq.std(ddof=1) / math.sqrt(probes)
        moments[name] = (m2, bounds[name])
        moment_ok &= m2 <= bounds[name] + 4 * m2_se

    # noiseless: every single-sample estimate obeys |g|^2 <= L0^2 n^2
    q = Quad(n=4, b=2, eta0=eta)
    V = np.random.default_rng(5).normal(size=(20_000, 4))
    V = eta * V / np.linalg.norm(V, axis=1, keepdims=True)
    pts = q.sample_points(np.random.default_rng(6), 20_000)
    d = 4 * (q.value(pts + V) - q.value(pts)) / (eta * eta)
    g2_max = float(np.max(d * d * eta * eta))
    ok = worst_mean_z <= 4 and moment_ok and g2_max <= q.L0**2 * 16
    detail = "; ".join(f"E|{k}|^2 {m:.3g} vs {b:.3g}" for k, (m, b) in moments.items())
    report(3, ok, f"means worst |z| {worst_mean_z:.2f}; {detail}; max |g|^2 {g2_max:.3g} <= {q.L0**2 * 16:.3g}", t0)


# --- 4 compact update --------------------------------------------------------------

def test_criterion_04_compact_update():
    t0 = time.perf_counter()
    p = Quad(n=4, b=2, eta0=0.1, noise={"kind": "affine", "nu": 0.1})
    tr = run(SolverConfig(eta=0.1, K=100, seed=4, monitor_compact=True, checkpoints=False, residual_samples=10),
             p, p.feasible, np.ones(4))
    dev = max(d for _, d in tr.compact_dev)
    report(4, len(tr.compact_dev) == 100 and dev <= 1e-12, f"blockwise vs compact update max deviation {dev:.1e} over 100 iterations", t0)


# --- 5 residual inequality ----------------------------------------------------------

def test_criterion_05_residual_inequality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    kinds = ("box", "ball", "simplex", "halfspace")
    fails, worst = 0, -np.inf
    for t in range(10_000):
        sizes = [int(s) for s in rng.integers(1, 4, size=int(rng.integers(1, 4)))]
        blocks = BlockStructure(sizes)
        X = FeasibleSet(blocks, tuple(_random_set(kinds[int(rng.integers(4))], s, rng) for s in sizes))
        x = X.project(rng.normal(scale=2, size=blocks.n))
        grad = rng.normal(scale=3, size=blocks.n)
        e = -grad if t % 10 == 0 else rng.normal(scale=rng.exponential(), size=blocks.n)
        ok, lhs, rhs = check_residual_inequality(X, x, 0.1, float(rng.uniform(0.1, 20)), grad, e)
        fails += not ok
        worst = max(worst, lhs - rhs)
    report(5, fails == 0, f"{fails} violations in 10^4 instances (max lhs - rhs {worst:.3g})", t0)


# --- 6 per-iteration descent inequality ------------------------------------------------

def test_criterion_06_descent_inequality():
    t0 = time.perf_counter()
    checked, bad, worst = 0, 0, -np.inf
    cases = ((Abs1D(eta0=0.1), 0.1, [1.0]),
             (Quad(n=4, b=2, eta0=0.25, noise={"kind": "affine", "nu": 0.1}), 0.25, [1.0, 1.0, 1.0, 1.0]))
    for p, eta, x0 in cases:
        for seed in range(5):
            tr = run(SolverConfig(eta=eta, K=300, seed=seed, monitor_descent=True, checkpoints=False,
                                  residual_samples=10), p, p.feasible, x0)
            for _, lhs, rhs in tr.descent:
                checked += 1
                bad += lhs > rhs + 1e-12
                worst = max(worst, lhs - rhs)
    report(6, bad == 0, f"{bad} violations over {checked} monitored iterations (max lhs - rhs {worst:.3g})", t0)


# --- 7 rate law ------------------------------------------------------------------------

RATE_CONFIG = {
    "problem": {"name": "quad", "n": 4, "b": 2, "radius": 1.0, "eta0": 0.25},
    "solver": {"eta": 0.25, "lam": 0.5, "schedule": {"mode": "rate", "a": 0}, "checkpoints": False,
               "store": "none"},
    "x0": [0.0, 0.0, 0.0, 0.0],
    "horizons": [64, 128, 256, 512, 1024],
    "replications": 20,
    "seed": 0,
    "analysis": {"rate_fit": True},
    "workers": 4,
}


def test_criterion_07_rate_law(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict(RATE_CONFIG)
    out = run_experiment(cfg, tmp_path / "rate")
    fit = json.loads((out / "rate_fit.json").read_text())
    p = cfg.make_problem()
    gamma = cfg.solver_config(64, 0).resolved_gamma(p, p.blocks)
    bound = rate_bound(p, 0.25, gamma, 1024, 0.5, 0, 0.0)
    slope = fit["slope"]
    ok = -1.3 <= slope <= -0.7
    report(7, ok, f"log-log slope {slope:.3f} in [-1.3, -0.7] (bootstrap CI {fit['slope_ci'][0]:.2f}..{fit['slope_ci'][1]:.2f}; "
                  f"mean at K=1024 {fit['means'][-1]:.3g}, analytic bound {bound:.3g})", t0)


# --- 8 sample complexity --------------------------------------------------------------

COMPLEXITY_CONFIG = {
    "problem": {"name": "quad", "n": 2, "b": 2, "radius": 0.25, "eta0": 0.5},
    "solver": {"eta": 0.5, "K": 2000, "schedule": {"mode": "rate", "a": 0}, "checkpoint_ratio": 1.05,
               "store": "none"},
    "x0": [0.25, 0.25],
    "replications": 20,
    "seed": 0,
    "analysis": {"epsilon_targets": [0.01, 0.005]},
    "workers": 4,
}


def test_criterion_08_sample_complexity(tmp_path):
    t0 = time.perf_counter()
    out = run_experiment(ExperimentConfig.from_dict(COMPLEXITY_CONFIG), tmp_path / "cx")
    table = json.loads((out / "complexity.json").read_text())
    ratio = table["ratios"][0]
    hits = ", ".join(f"eps {r['epsilon']:g}: {r['first_evals']} evals" for r in table["rows"])
    ok = ratio is not None and 8 <= ratio <= 32
    report(8, ok, f"halving eps multiplies evaluations by {ratio if ratio is None else round(ratio, 2)} (in [8, 32]; {hits})", t0)


# --- 9 almost-sure mode ----------------------------------------------------------------

def test_criterion_09_almost_sure_mode():
    t0 = time.perf_counter()
    eta = 0.002
    p = Abs1D(radius=1.0, eta0=eta)
    rows, ok = [], True
    for seed in range(5):
        c = SolverConfig(eta=eta, K=2000, seed=seed, schedule=AlmostSureMode(0.5), store="none",
                         checkpoint_ratio=1.05)
        tr = run(c, p, p.feasible, [1.0])
        tail = check_as_tail(tr, ratio=0.5)
        near = abs(float(tr.x_final[0])) <= 2 * eta
        ok &= tail["passed"] and near
        rows.append(f"seed {seed}: ratio {tail['ratio']:.3g}, |x_K| {abs(tr.x_final[0]):.2g}")
    report(9, ok, "tail max halves and |x_K| <= 2 eta on all seeds (" + "; ".join(rows) + ")", t0)


# --- 10 determinism ---------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict({
        "problem": {"name": "quad", "n": 4, "b": 2, "eta0": 0.1, "noise": {"kind": "affine", "nu": 0.1}},
        "solver": {"eta": 0.1, "K": 50, "schedule": {"mode": "rate", "a": 0}, "residual_samples": 1000},
        "horizons": [25, 50],
        "replications": 3,
        "seed": 11,
    })
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    names = sorted(q.name for q in (a / "traces").iterdir())
    same = all((a / "traces" / n).read_bytes() == (b / "traces" / n).read_bytes() for n in names)
    same &= (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
    report(10, same and len(names) == 6, f"{len(names)} trace files and summary byte-identical across reruns", t0)
