"""Stochastic zeroth-order oracles and spherical-smoothing estimators.

An oracle returns sampled values f~(x, w) whose mean over w is f(x). The
estimators here only ever touch f~; analytic smoothing data, when an oracle
declares it, is used for reference values and diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .sampling import sample_ball, sample_sphere


class StochasticOracle:
    """Base class for sampled objectives f~(x, w).

    Subclasses implement :meth:`_values` (vectorized over rows of ``X`` and
    ``omega``) and :meth:`sample_noise`. Declared constants:

    ``L0``   Lipschitz modulus of f over X + eta0*B
    ``nu``   bound on E[(f~(x, w) - f(x))^2]
    ``eta0`` largest admissible smoothing radius
    ``f_hat`` sup of f over X + eta*S (None when unknown)
    """

    n: int
    L0: float
    nu: float = 0.0
    eta0: float = 1.0
    f_hat: float | None = None
    noise_dim: int = 0

    def __init__(self):
        self.evals = {"optimization": 0, "measurement": 0}

    # -- to implement -------------------------------------------------------
    def _values(self, X: np.ndarray, omega: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_noise(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.zeros((size, self.noise_dim))

    # -- optional ground truth ---------------------------------------------
    def value(self, X):
        """Noiseless f(X); only test problems provide it."""
        raise NotImplementedError

    def smoothed(self, x, eta):
        """Analytic f_eta(x), or None."""
        return None

    def smoothed_gradient(self, x, eta):
        """Analytic grad f_eta(x), or None."""
        return None

    def noisy_smoothed_gradient(self, x, eta, omega):
        """Analytic gradient of the smoothed sampled function f~(., w)_eta at x, or None.

        ``omega`` is a stack of noise draws; the result has one row per draw.
        """
        return None

    @property
    def has_analytic_smoothing(self):
        return type(self).smoothed_gradient is not StochasticOracle.smoothed_gradient

    # -- counted evaluation ------------------------------------------------
    def evaluate(self, X, omega, purpose="optimization"):
        """Sampled values f~(X_j, omega_j); counts one evaluation per row."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        om = np.asarray(omega, dtype=float).reshape(X2.shape[0], -1)
        vals = np.asarray(self._values(X2, om), dtype=float)
        self.evals[purpose] += X2.shape[0]
        return vals[0] if single else vals

    def check_eta(self, eta):
        if not eta > 0:
            raise ConfigurationError(f"smoothing radius must be positive, got {eta}")
        if eta > self.eta0 * (1 + 1e-12):
            raise ConfigurationError(
                f"smoothing radius {eta} exceeds eta0={self.eta0}; L0 is not guaranteed there"
            )


@dataclass
class GradientEstimate:
    """A (block) gradient estimate with its provenance.

    ``block`` is None for a full-space estimate. ``se`` holds per-coordinate
    standard errors when the estimate is a Monte Carlo reference.
    """

    g: np.ndarray
    eta: float
    samples: int
    block: int | None = None
    se: np.ndarray | None = None
    analytic: bool = False
    draws: dict | None = field(default=None, repr=False)


def difference_quotients(oracle, x, V, omega, eta=None, purpose="optimization"):
    """Scalars n*(f~(x+v_j, w_j) - f~(x, w_j)) / (|v_j| * eta) for each row v_j.

    Both evaluations of a pair share the same noise draw.
    """
    x = np.asarray(x, dtype=float)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    norms = np.linalg.norm(V, axis=1)
    if eta is None:
        eta = float(norms[0])
    if np.any(np.abs(norms - eta) > 1e-10 * eta):
        raise ValueError("direction samples must lie on the sphere of radius eta")
    n = x.shape[-1]
    X0 = np.broadcast_to(x, V.shape)
    plus = oracle.evaluate(X0 + V, omega, purpose)
    base = oracle.evaluate(X0, omega, purpose)
    return n * (plus - base) / (norms * eta)


def zo_gradient_sample(oracle, x, v, omega, eta=None):
    """Two-point estimate n*(f~(x+v, w) - f~(x, w)) * v / (|v| * eta)."""
    v = np.asarray(v, dtype=float)
    d = difference_quotients(oracle, x, v[None, :], np.atleast_2d(omega), eta)
    g = d[0] * v
    return GradientEstimate(g, float(np.linalg.norm(v)) if eta is None else eta, 1)


def zo_gradient_block_sample(oracle, blocks, x, v, omega, i, eta=None):
    """Block piece of the two-point estimate: the same quotient times v's block i."""
    if not 0 <= i < blocks.b:
        raise ValueError(f"block id {i} outside 0..{blocks.b - 1}")
    v = np.asarray(v, dtype=float)
    d = difference_quotients(oracle, x, v[None, :], np.atleast_2d(omega), eta)
    g = d[0] * blocks.extract(i, v)
    return GradientEstimate(g, float(np.linalg.norm(v)) if eta is None else eta, 1, block=i)


def draw_batch(oracle, n, eta, N, direction_rng, noise_rng):
    """N sphere directions and N noise draws from their own streams."""
    V = sample_sphere(direction_rng, n, eta, size=N)
    omega = oracle.sample_noise(noise_rng, N)
    return V, omega


def minibatch_block_gradient(oracle, blocks, x, eta, i, N, direction_rng, noise_rng, keep_draws=False):
    """Mean of N independent block two-point estimates at x (2N evaluations)."""
    if N < 1:
        raise ValueError("batch size must be at least 1")
    if not 0 <= i < blocks.b:
        raise ValueError(f"block id {i} outside 0..{blocks.b - 1}")
    V, omega = draw_batch(oracle, blocks.n, eta, N, direction_rng, noise_rng)
    d = difference_quotients(oracle, x, V, omega, eta)
    g = (d[:, None] * V[:, blocks.slice(i)]).mean(axis=0)
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite zeroth-order gradient estimate")
    draws = {"V": V, "omega": omega, "d": d} if keep_draws else None
    return GradientEstimate(g, eta, int(N), block=i, draws=draws)


def smoothed_value_estimate(oracle, x, eta, M, rng, purpose="measurement"):
    """Monte Carlo f_eta(x) from M ball-perturbed sampled values; returns (mean, se)."""
    oracle.check_eta(eta)
    if M < 1:
        raise ValueError("sample count must be at least 1")
    x = np.asarray(x, dtype=float)
    U = sample_ball(rng, x.size, eta, size=M)
    omega = oracle.sample_noise(rng, M)
    vals = oracle.evaluate(x + U, omega, purpose)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(M)) if M > 1 else float("inf")
    return mean, se


def smoothed_gradient_reference(oracle, x, eta, M, rng, use_analytic=True, chunk=50_000):
    """Evaluation-grade estimate of grad f_eta(x).

    Returns the analytic gradient (se = 0) when the oracle declares one, else
    the average of M two-point samples with per-coordinate standard errors.
    """
    x = np.asarray(x, dtype=float)
    if use_analytic:
        g = oracle.smoothed_gradient(x, eta)
        if g is not None:
            return GradientEstimate(np.asarray(g, dtype=float), eta, 0, se=np.zeros(x.size), analytic=True)
    oracle.check_eta(eta)
    if M < 2:
        raise ValueError("reference estimate needs at least 2 samples")
    s1 = np.zeros(x.size)
    s2 = np.zeros(x.size)
    done = 0
    while done < M:
        m = min(chunk, M - done)
        V = sample_sphere(rng, x.size, eta, size=m)
        omega = oracle.sample_noise(rng, m)
        G = difference_quotients(oracle, x, V, omega, eta, purpose="measurement")[:, None] * V
        s1 += G.sum(axis=0)
        s2 += (G * G).sum(axis=0)
        done += m
    mean = s1 / M
    var = np.maximum(s2 / M - mean**2, 0.0) * M / (M - 1)
    return GradientEstimate(mean, eta, int(M), se=np.sqrt(var / M))
