"""Variance-reduced randomized block zeroth-order method (VR-RB-ZO).

Each iteration draws one block uniformly at random, estimates that block of
the smoothed gradient from a mini-batch of two-point samples, and takes a
projected step on the block alone. The returned point is the iterate at a
uniformly random index R in {ceil(lam*K), ..., K}.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError, DiagnosticUnavailable, NumericalError
from .oracle import minibatch_block_gradient, smoothed_gradient_reference, smoothed_value_estimate
from .residual import ResidualReport, measure_residual, residual_map
from .sampling import RngStreams, output_range, sample_block, sample_output_index

log = logging.getLogger(__name__)

DEFAULT_BATCH_CAP = 1_000_000


@dataclass(frozen=True)
class RateMode:
    """N_k = ceil(1 + (k+1) / eta^a)."""

    a: float = 0.0

    def __post_init__(self):
        if self.a < 0:
            raise ConfigurationError(f"rate-mode exponent a must be >= 0, got {self.a}")

    def batch_size(self, k, eta):
        raw = 1.0 + (k + 1) / eta**self.a
        # shave rounding noise so exact integers are not bumped up by one
        return max(1, math.ceil(raw - 1e-9 * raw))

    def to_dict(self):
        return {"mode": "rate", "a": self.a}


@dataclass(frozen=True)
class AlmostSureMode:
    """N_k = ceil((k+1)^(1+delta))."""

    delta: float = 0.5

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigurationError(f"almost-sure mode needs delta > 0, got {self.delta}")

    def batch_size(self, k, eta):
        raw = float(k + 1) ** (1.0 + self.delta)
        return max(1, math.ceil(raw - 1e-9 * raw))

    def to_dict(self):
        return {"mode": "as", "delta": self.delta}


def schedule_from_dict(d):
    d = dict(d)
    mode = d.pop("mode", None)
    try:
        if mode == "rate":
            return RateMode(**d)
        if mode in ("as", "almost_sure"):
            return AlmostSureMode(**d)
    except TypeError as exc:
        raise ConfigurationError(f"bad batch schedule fields: {exc}") from None
    raise ConfigurationError(f"unknown batch schedule mode {mode!r}; expected 'rate' or 'as'")


@dataclass
class SolverConfig:
    """Algorithm parameters. ``gamma=None`` means b*eta/(2*n*L0)."""

    eta: float
    K: int
    gamma: float | None = None
    lam: float = 0.5
    schedule: RateMode | AlmostSureMode = field(default_factory=RateMode)
    seed: int = 0
    store: str = "window"  # "window", "all" or "none"
    batch_cap: int = DEFAULT_BATCH_CAP
    checkpoint_ratio: float = 1.5
    residual_samples: int = 100_000
    value_samples: int = 10_000
    checkpoints: bool = True
    monitor_compact: bool = False
    monitor_descent: bool = False
    probe_iterations: tuple = ()

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigurationError(f"horizon K must be an integer >= 1, got {self.K}")
        self.K = int(self.K)
        try:
            output_range(self.K, self.lam)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.store not in ("window", "all", "none"):
            raise ConfigurationError(f"store must be 'window', 'all' or 'none', got {self.store!r}")
        if self.batch_cap < 1:
            raise ConfigurationError("batch cap must be at least 1")
        if self.checkpoint_ratio <= 1:
            raise ConfigurationError("checkpoint ratio must exceed 1")
        self.probe_iterations = tuple(int(k) for k in self.probe_iterations)

    def resolved_gamma(self, oracle, blocks):
        """Stepsize after defaulting; rejects values outside (0, b*eta/(n*L0))."""
        if self.eta > oracle.eta0 * (1 + 1e-12):
            raise ConfigurationError(f"eta={self.eta} exceeds the problem's eta0={oracle.eta0}")
        limit = blocks.b * self.eta / (blocks.n * oracle.L0)
        gamma = 0.5 * limit if self.gamma is None else float(self.gamma)
        if not 0 < gamma < limit:
            raise ConfigurationError(f"gamma={gamma} outside (0, b*eta/(n*L0)) = (0, {limit})")
        return gamma

    def batch_size(self, k):
        N = self.schedule.batch_size(k, self.eta)
        return min(N, self.batch_cap)

    def to_dict(self):
        d = asdict(self)
        d["schedule"] = self.schedule.to_dict()
        d["probe_iterations"] = list(self.probe_iterations)
        return d


def checkpoint_indices(K, ratio=1.5):
    """Geometrically spaced iterations in 0..K, always including 0 and K."""
    ks = {0, K}
    t = 1.0
    while t < K:
        ks.add(int(t))
        t *= ratio
    return sorted(ks)


@dataclass
class ErrorDecomposition:
    """Sampled gradient errors at one iteration, per sample and batch-averaged.

    e: smoothed-noisy gradient minus smoothed gradient
    theta: two-point estimate minus smoothed-noisy gradient
    delta: b * embedded block estimate minus full estimate
    """

    k: int
    block: int
    N: int
    grad: np.ndarray
    e_samples: np.ndarray
    theta_samples: np.ndarray
    delta_samples: np.ndarray
    grad_se: float = 0.0

    @property
    def e(self):
        return self.e_samples.mean(axis=0)

    @property
    def theta(self):
        return self.theta_samples.mean(axis=0)

    @property
    def delta(self):
        return self.delta_samples.mean(axis=0)

    @property
    def total(self):
        return self.e + self.theta + self.delta


@dataclass
class Probe:
    """Everything needed to reconstruct one iteration's estimate."""

    k: int
    x: np.ndarray
    block: int
    N: int
    V: np.ndarray
    omega: np.ndarray
    d: np.ndarray
    g_block: np.ndarray


def decompose_errors(probe: Probe, oracle, blocks, eta, rng=None, reference_samples=100_000, noisy_samples=2_000):
    """Split b*U_i*g - grad f_eta at a probed iteration into e, theta and delta.

    Uses the oracle's analytic smoothed gradients when declared; otherwise falls
    back to Monte Carlo references drawn from ``rng`` (a measurement stream).
    """
    if probe is None or probe.V is None:
        raise DiagnosticUnavailable("probe samples were not retained for this iteration")
    x, V, d = probe.x, probe.V, probe.d
    G = d[:, None] * V  # full two-point samples
    grad_se = 0.0
    grad = oracle.smoothed_gradient(x, eta)
    if grad is None:
        if rng is None:
            raise DiagnosticUnavailable("no analytic smoothed gradient and no measurement stream given")
        ref = smoothed_gradient_reference(oracle, x, eta, reference_samples, rng, use_analytic=False)
        grad, grad_se = ref.g, float(ref.se.max())
    grad = np.asarray(grad, dtype=float)
    if oracle.nu == 0:
        noisy = np.broadcast_to(grad, G.shape)
    else:
        noisy = oracle.noisy_smoothed_gradient(x, eta, probe.omega)
        if noisy is None:
            if rng is None:
                raise DiagnosticUnavailable("noisy smoothed gradients need a measurement stream")
            noisy = _noisy_reference(oracle, x, eta, probe.omega, noisy_samples, rng)
    i = probe.block
    blockG = np.zeros_like(G)
    blockG[:, blocks.slice(i)] = G[:, blocks.slice(i)]
    return ErrorDecomposition(
        k=probe.k, block=i, N=probe.N, grad=grad,
        e_samples=noisy - grad,
        theta_samples=G - noisy,
        delta_samples=blocks.b * blockG - G,
        grad_se=grad_se,
    )


def _noisy_reference(oracle, x, eta, omega, M, rng):
    from .sampling import sample_sphere

    out = np.empty((omega.shape[0], x.size))
    for j, w in enumerate(omega):
        V = sample_sphere(rng, x.size, eta, size=M)
        W = np.broadcast_to(w, (M, w.size))
        base = oracle.evaluate(np.broadcast_to(x, (M, x.size)), W, purpose="measurement")
        vals = oracle.evaluate(x + V, W, purpose="measurement") - base
        out[j] = (x.size / eta) * (vals[:, None] * V / eta).mean(axis=0)
    return out


@dataclass
class SolverState:
    x: np.ndarray
    k: int = 0
    evals: int = 0


@dataclass
class Trace:
    """Per-iteration records and the returned point.

    ``rows[k]`` describes iterate x_k: the block and batch used to leave it,
    the evaluations spent to reach it, and (at checkpoints) its measured
    smoothed value and residual.
    """

    config: dict
    gamma: float
    beta: float
    rows: list = field(default_factory=list)
    iterates: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict)
    compact_dev: list = field(default_factory=list)
    descent: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)
    R: int | None = None
    x_R: np.ndarray | None = None
    report: ResidualReport | None = None
    x_final: np.ndarray | None = None
    total_evals: int = 0
    measurement_evals: int = 0
    error: str | None = None

    CSV_COLUMNS = ("k", "i_k", "N_k", "cum_evals", "f_val_estimate", "residual_norm", "residual_se")

    def csv_rows(self):
        for r in self.rows:
            yield [r[c] for c in self.CSV_COLUMNS]


def step(state: SolverState, config: SolverConfig, oracle, feasible, streams: RngStreams, gamma, keep_draws=False):
    """One block update; returns (next state, probe)."""
    blocks = feasible.blocks
    k = state.k
    i = sample_block(streams.block, blocks.b)
    N = config.batch_size(k)
    est = minibatch_block_gradient(oracle, blocks, state.x, config.eta, i, N,
                                   streams.direction(k), streams.noise(k), keep_draws=keep_draws)
    x_new = state.x.copy()
    sl = blocks.slice(i)
    x_new[sl] = feasible.project_block(i, state.x[sl] - gamma * est.g)
    if not np.all(np.isfinite(x_new)):
        raise NumericalError(f"non-finite iterate at k={k + 1}")
    draws = est.draws or {}
    probe = Probe(k, state.x, i, N, draws.get("V"), draws.get("omega"), draws.get("d"), est.g)
    return SolverState(x_new, k + 1, state.evals + 2 * N), probe


def compact_update(feasible, x, gamma, b, grad, total_error):
    """P_X[x - (gamma/b) * (grad f_eta(x) + e + theta + delta)]."""
    return feasible.project(x - (gamma / b) * (grad + total_error))


def descent_sides(oracle, feasible, x, x_next, eta, gamma, total_error):
    """Both sides of the per-iteration descent inequality on an analytic f_eta."""
    blocks = feasible.blocks
    n, b, L0 = blocks.n, blocks.b, oracle.L0
    grad = oracle.smoothed_gradient(x, eta)
    f0, f1 = oracle.smoothed(x, eta), oracle.smoothed(x_next, eta)
    if grad is None or f0 is None or f1 is None:
        raise DiagnosticUnavailable("the descent inequality needs analytic f_eta and its gradient")
    G = residual_map(feasible, x, b / gamma, grad)
    lhs = (1 - n * L0 * gamma / (b * eta)) * gamma / (4 * b) * float(G @ G)
    rhs = f0 - f1 + (1 - n * L0 * gamma / (2 * b * eta)) * gamma / b * float(total_error @ total_error)
    return lhs, rhs


def _measure(trace, oracle, feasible, x, k, config, streams, beta):
    rng = streams.evaluation(k)
    rep = measure_residual(oracle, feasible, x, config.eta, beta, config.residual_samples, rng)
    fv = oracle.smoothed(x, config.eta)
    if fv is None:
        fv, _ = smoothed_value_estimate(oracle, x, config.eta, config.value_samples, streams.evaluation(k, 1))
    return rep, float(fv)


def run(config: SolverConfig, oracle, feasible, x0, row_sink=None) -> Trace:
    """Run K iterations and return the trace with x_R and its residual report.

    ``row_sink`` (optional) receives each finished trace row as it is produced.
    On a numerical or oracle failure the partial trace is attached to the
    raised exception as ``exc.trace``.
    """
    blocks = feasible.blocks
    gamma = config.resolved_gamma(oracle, blocks)
    beta = blocks.b / gamma
    streams = RngStreams(config.seed)
    R = sample_output_index(streams.output, config.K, config.lam)
    lo, _ = output_range(config.K, config.lam)
    trace = Trace(config=config.to_dict(), gamma=gamma, beta=beta, R=R)
    measured_before = oracle.evals["measurement"]

    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != blocks.n:
        raise ConfigurationError(f"x0 has dimension {x0.size}, expected {blocks.n}")
    state = SolverState(feasible.project(x0))
    checkpoints = set(checkpoint_indices(config.K, config.checkpoint_ratio)) if config.checkpoints else set()
    probes = set(config.probe_iterations)
    want_draws = config.monitor_compact or bool(probes)
    capped_warned = False

    def keep(k, x):
        if k == R or config.store == "all" or (config.store == "window" and k >= lo):
            trace.iterates[k] = x.copy()

    try:
        for k in range(config.K):
            keep(k, state.x)
            row = {"k": k, "i_k": None, "N_k": None, "cum_evals": state.evals,
                   "f_val_estimate": "", "residual_norm": "", "residual_se": ""}
            if k in checkpoints:
                rep, fv = _measure(trace, oracle, feasible, state.x, k, config, streams, beta)
                trace.checkpoints[k] = (state.evals, rep.norm, rep.grad_se, fv)
                row.update(f_val_estimate=fv, residual_norm=rep.norm, residual_se=rep.grad_se)
            if not capped_warned and config.schedule.batch_size(k, config.eta) > config.batch_cap:
                log.warning("batch size capped at %d from iteration %d on", config.batch_cap, k)
                capped_warned = True

            x_k = state.x
            state, probe = step(state, config, oracle, feasible, streams, gamma,
                                keep_draws=want_draws or k in probes)
            row["i_k"], row["N_k"] = probe.block, probe.N

            total = None
            if config.monitor_compact or config.monitor_descent:
                grad = oracle.smoothed_gradient(x_k, config.eta)
                if grad is None:
                    raise DiagnosticUnavailable("iteration monitors need an analytic smoothed gradient")
                total = blocks.b * blocks.embed(probe.block, probe.g_block) - grad
                if config.monitor_compact:
                    dec = decompose_errors(probe, oracle, blocks, config.eta)
                    compact = compact_update(feasible, x_k, gamma, blocks.b, dec.grad, dec.total)
                    trace.compact_dev.append((k, float(np.max(np.abs(compact - state.x)))))
                if config.monitor_descent:
                    lhs, rhs = descent_sides(oracle, feasible, x_k, state.x, config.eta, gamma, total)
                    trace.descent.append((k, lhs, rhs))
            if k in probes:
                trace.probes[k] = probe
            trace.rows.append(row)
            if row_sink is not None:
                row_sink(row)
    except Exception as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.total_evals = state.evals
        exc.trace = trace
        raise

    keep(config.K, state.x)
    trace.x_final = state.x.copy()
    trace.total_evals = state.evals
    if config.K in checkpoints:
        rep, fv = _measure(trace, oracle, feasible, state.x, config.K, config, streams, beta)
        trace.checkpoints[config.K] = (state.evals, rep.norm, rep.grad_se, fv)
    trace.x_R = trace.iterates[R]
    trace.report = measure_residual(oracle, feasible, trace.x_R, config.eta, beta,
                                        config.residual_samples, streams.evaluation(config.K + 1))
    trace.measurement_evals = oracle.evals["measurement"] - measured_before
    return trace


def moment_bounds(oracle, blocks, eta, N):
    """Second-moment bounds for the batch-averaged e, theta and delta at batch size N."""
    n, b = blocks.n, blocks.b
    L0, nu = oracle.L0, oracle.nu
    f_hat = oracle.f_hat
    delta = None
    if f_hat is not None:
        delta = 3 * n**2 * (b - 1) / N * (nu**2 / eta**2 + L0**2 + (f_hat / eta) ** 2)
    return {"e": n**2 * nu**2 / (eta**2 * N), "theta": L0**2 * n**2 / N, "delta": delta}
