"""Post-run analysis: rate fits, sample-complexity tables and tail checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import AnalysisError


@dataclass
class RateFit:
    horizons: list
    means: list
    slope: float
    intercept: float
    ci: tuple
    replications: list = field(default_factory=list)

    @property
    def decays(self):
        """False when the bootstrap interval does not exclude a flat curve."""
        return self.ci[1] < 0

    def to_dict(self):
        return {
            "horizons": list(self.horizons),
            "means": [float(m) for m in self.means],
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_ci": list(self.ci),
            "decays": self.decays,
            "replications": list(self.replications),
        }


def _loglog_fit(K, y):
    slope, intercept = np.polyfit(np.log(K), np.log(y), 1)
    return float(slope), float(intercept)


def fit_rate(summaries, resamples=1000, seed=0, min_horizons=4, min_replications=10) -> RateFit:
    """Least-squares slope of log mean(value) against log K, with a bootstrap CI.

    ``summaries`` maps each horizon K to the per-replication values (for the
    rate experiment, squared residual norms at x_R). The bootstrap resamples
    replications independently within each horizon.
    """
    if len(summaries) < min_horizons:
        raise AnalysisError(f"need at least {min_horizons} horizons, got {len(summaries)}")
    Ks = sorted(summaries)
    vals = [np.asarray(summaries[K], dtype=float) for K in Ks]
    if any(v.size < min_replications for v in vals):
        raise AnalysisError(f"need at least {min_replications} replications per horizon")
    means = np.array([v.mean() for v in vals])
    if np.any(means <= 0):
        raise AnalysisError("log-log fit needs positive means")
    slope, intercept = _loglog_fit(Ks, means)
    rng = np.random.default_rng(seed)
    boot = np.empty(resamples)
    for r in range(resamples):
        bm = np.array([v[rng.integers(v.size, size=v.size)].mean() for v in vals])
        boot[r] = _loglog_fit(Ks, np.maximum(bm, np.finfo(float).tiny))[0]
    ci = (float(np.quantile(boot, 0.025)), float(np.quantile(boot, 0.975)))
    return RateFit(list(Ks), list(means), slope, intercept, ci, [int(v.size) for v in vals])


def first_hits(ks, evals, curve, epsilon_targets):
    """First checkpoint at which ``curve`` drops to each target.

    ``curve`` is the replication-mean residual norm at checkpoints ``ks``;
    ``evals`` the matching cumulative evaluation counts. Targets that are
    never reached come back censored.
    """
    ks = np.asarray(ks)
    evals = np.asarray(evals)
    curve = np.asarray(curve, dtype=float)
    rows = []
    for eps in epsilon_targets:
        hit = np.nonzero(curve <= eps)[0]
        if hit.size == 0:
            rows.append({"epsilon": float(eps), "first_k": None, "first_evals": None, "censored": True})
        else:
            j = int(hit[0])
            rows.append({"epsilon": float(eps), "first_k": int(ks[j]), "first_evals": int(evals[j]),
                         "censored": False})
    return rows


def check_sample_complexity(traces, epsilon_targets):
    """Sample-complexity table from replicated checkpoint traces.

    ``traces`` is a list of solver traces (or ``{k: (evals, norm, ...)}``
    checkpoint dicts) sharing the same checkpoints. Returns the hit table,
    the fitted log-log exponent of evaluations against epsilon (None with
    fewer than two uncensored targets) and the ratio of evaluations between
    consecutive targets.
    """
    cps = [t.checkpoints if hasattr(t, "checkpoints") else t for t in traces]
    if not cps:
        raise AnalysisError("no traces given")
    ks = sorted(cps[0])
    if any(sorted(c) != ks for c in cps):
        raise AnalysisError("traces do not share checkpoints")
    evals = [cps[0][k][0] for k in ks]
    curve = np.mean([[c[k][1] for k in ks] for c in cps], axis=0)
    rows = first_hits(ks, evals, curve, epsilon_targets)
    done = [r for r in rows if not r["censored"] and r["first_evals"] > 0]
    exponent = None
    if len(done) >= 2:
        exponent = _loglog_fit([r["epsilon"] for r in done], [r["first_evals"] for r in done])[0]
    ratios = []
    for a, b in zip(rows, rows[1:]):
        ok = not (a["censored"] or b["censored"]) and a["first_evals"] > 0
        ratios.append(b["first_evals"] / a["first_evals"] if ok else None)
    return {"rows": rows, "exponent": exponent, "ratios": ratios,
            "checkpoints": ks, "evals": evals, "mean_residual": [float(c) for c in curve]}


def window_max(ks, values, t, frac=2 / 3):
    """Largest value among checkpoints in [frac*t, t]."""
    ks = np.asarray(ks)
    sel = (ks >= frac * t) & (ks <= t)
    if not np.any(sel):
        raise AnalysisError(f"no checkpoint in [{frac * t:g}, {t}]")
    return float(np.asarray(values, dtype=float)[sel].max())


def check_as_tail(trace_or_checkpoints, ratio=0.5, min_checkpoints=4):
    """Tail-decay check for almost-sure runs.

    At a checkpoint t the tail running maximum is the largest residual norm
    over checkpoints in the last third of [0, t]. The check passes when that
    maximum at the final checkpoint is at most ``ratio`` times its value at the
    first checkpoint past one third of the run.
    """
    cp = getattr(trace_or_checkpoints, "checkpoints", trace_or_checkpoints)
    if isinstance(cp, dict):
        ks = sorted(cp)
        vals = [cp[k][1] if isinstance(cp[k], (tuple, list)) else cp[k] for k in ks]
    else:
        ks, vals = cp
        ks, vals = list(ks), list(vals)
    if len(ks) < min_checkpoints:
        raise AnalysisError(f"need at least {min_checkpoints} checkpoints, got {len(ks)}")
    K = ks[-1]
    third = next(k for k in ks if k >= K / 3)
    early = window_max(ks, vals, third)
    late = window_max(ks, vals, K)
    return {
        "third_checkpoint": int(third),
        "final_checkpoint": int(K),
        "tail_max_third": early,
        "tail_max_final": late,
        "ratio": late / early if early > 0 else (0.0 if late == 0 else math.inf),
        "passed": late <= ratio * early,
    }


def rate_bound(problem, eta, gamma, K, lam, a, f_gap):
    """Upper bound on E|G(x_R)|^2 for the rate-mode schedule.

    ``f_gap`` bounds E[f(x_l)] - f*. Requires K > 2/(1 - lam).
    """
    n, b, L0, nu = problem.n, problem.blocks.b, problem.L0, problem.nu
    f_hat = problem.f_hat
    if f_hat is None:
        raise AnalysisError("bound needs a declared f_hat")
    if not K > 2 / (1 - lam):
        raise AnalysisError("bound needs K > 2/(1 - lambda)")
    lead = (1 - n * L0 * gamma / (b * eta)) * gamma / (4 * b) * (1 - lam) * K
    noise = 3 * n**2 * ((3 * b - 2) * (nu**2 + L0**2 * eta**2) + 3 * (b - 1) * f_hat**2)
    return (f_gap + 2 * L0 * eta + noise * (0.5 - math.log(lam)) * eta ** (a - 2)) / lead
