"""Command line entry point: ``zoblock {run,rate,verify,decompose}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from ..errors import AnalysisError, ConfigurationError
from ..problems import verify_constants
from ..residual import check_residual_inequality
from ..oracle import smoothed_value_estimate
from ..sampling import RngStreams
from ..solver import decompose_errors, moment_bounds, run
from .config import ExperimentConfig
from .experiment import fit_rate_dir, run_experiment


def _load(args):
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_overrides(seed=args.seed, replications=args.replications, output_dir=args.out)


def cmd_run(args):
    cfg = _load(args)
    out = run_experiment(cfg)
    print(f"wrote {out} (config_hash={cfg.config_hash()} seed={cfg.seed})")
    for name in ("rate_fit.json", "complexity.json", "as_tail.json"):
        path = out / name
        if path.exists():
            print(f"{name}: {path.read_text().strip()[:400]}")
    return 0


def cmd_rate(args):
    fit = fit_rate_dir(args.dirs, resamples=args.resamples)
    print(json.dumps(fit.to_dict(), indent=2))
    if not fit.decays:
        print("no decay: slope interval includes 0")
    return 0


def _line(ok, text):
    print(f"[{'PASS' if ok else 'FAIL'}] {text}")
    return ok


def cmd_verify(args):
    cfg = _load(args)
    problem = cfg.make_problem()
    eta = float(cfg.solver["eta"])
    streams = RngStreams(cfg.seed)
    rng = streams.evaluation(0)
    results = []

    rep = verify_constants(problem, args.samples, rng)
    results.append(_line(rep["lipschitz_ok"], f"Lipschitz: sampled {rep['lipschitz_hat']:.6g} <= L0 {rep['L0']:.6g}"))
    results.append(_line(rep["noise_ok"], f"noise moment: {rep['nu2_hat']:.6g} (se {rep['nu2_se']:.2g}) <= nu^2 {rep['nu'] ** 2:.6g}"))

    worst = -np.inf
    for x in problem.sample_points(rng, 100):
        fx = float(problem.value(x[None, :])[0])
        fe = problem.smoothed(x, eta)
        slack = 0.0
        if fe is None:
            fe, se = smoothed_value_estimate(problem, x, eta, args.samples, rng)
            slack = 4 * se
        worst = max(worst, abs(fe - fx) - slack - problem.L0 * eta)
    results.append(_line(worst <= 1e-12, f"smoothing gap |f_eta - f| <= L0*eta at 100 points (worst excess {worst:.3g})"))

    beta = problem.blocks.b / cfg.solver_config(cfg.horizon_list()[0], cfg.seed).resolved_gamma(problem, problem.blocks)
    fails = 0
    for _ in range(args.inequality_instances):
        x = problem.feasible.project(rng.normal(size=problem.n) * 2 * problem.radius)
        grad = rng.normal(size=problem.n) * problem.L0
        e = rng.normal(size=problem.n) * rng.exponential()
        ok, _, _ = check_residual_inequality(problem.feasible, x, eta, beta, grad, e)
        fails += not ok
    results.append(_line(fails == 0, f"residual inequality on {args.inequality_instances} random instances ({fails} failures)"))
    return 0 if all(results) else 1


def cmd_decompose(args):
    cfg = _load(args)
    problem = cfg.make_problem()
    K = cfg.horizon_list()[0]
    scfg = cfg.solver_config(K, cfg.seed)
    probes = scfg.probe_iterations or tuple(sorted({0, K // 2, K - 1}))
    scfg.probe_iterations = probes
    trace = run(scfg, problem, problem.feasible, cfg.initial_point(problem))
    streams = RngStreams(cfg.seed)
    print("k  block  N  |e|^2  |theta|^2  |delta|^2  (bounds e / theta / delta)")
    for k in probes:
        dec = decompose_errors(trace.probes[k], problem, problem.blocks, scfg.eta, rng=streams.evaluation(10**6 + k))
        bounds = moment_bounds(problem, problem.blocks, scfg.eta, dec.N)
        sq = [float(v @ v) for v in (dec.e, dec.theta, dec.delta)]
        print(f"{k} {dec.block} {dec.N} {sq[0]:.4g} {sq[1]:.4g} {sq[2]:.4g}  "
              f"({bounds['e']:.4g} / {bounds['theta']:.4g} / {bounds['delta'] if bounds['delta'] is None else format(bounds['delta'], '.4g')})")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="zoblock", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="experiment JSON file")
        sp.add_argument("--seed", type=int, default=None, help="override the base seed")
        sp.add_argument("--out", default=None, help="override the output directory")
        sp.add_argument("--replications", type=int, default=None)

    sp = sub.add_parser("run", help="run a replicated experiment")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("rate", help="fit the rate law over run directories")
    sp.add_argument("dirs", nargs="+")
    sp.add_argument("--resamples", type=int, default=1000)
    sp.set_defaults(func=cmd_rate)

    sp = sub.add_parser("verify", help="check declared constants and the residual inequality")
    common(sp)
    sp.add_argument("--samples", type=int, default=20_000)
    sp.add_argument("--inequality-instances", type=int, default=10_000)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("decompose", help="print gradient error decompositions at probe iterations")
    common(sp)
    sp.set_defaults(func=cmd_decompose)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
