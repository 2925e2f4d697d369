"""Stochastic test problems with declared constants.

Each problem is a :class:`~zoblock.oracle.StochasticOracle` on a block-structured
feasible set. Where the spherical smoothing of f has a closed form it is
declared, which is what the statistical and inequality checks rely on.

Noise models (``noise={"kind": ...}``):

``none``      f~ = f
``gaussian``  f~ = f + nu*z, z ~ N(0, 1)
``uniform``   f~ = f + z, z ~ U[-h, h] with h = sqrt(3)*nu (or ``half_width``)
``affine``    f~ = f + (nu/sqrt(2)) * (z0 + w.x / rho), z0, w ~ N(0, 1)

Additive noise cancels inside a two-point difference that shares w, so the
``affine`` field is the one that actually exercises the noise error terms.
``rho`` bounds |x| over the region where the noise moment must hold, which
keeps the second moment at most nu^2 there.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError
from .geometry import BlockStructure, Box, FeasibleSet
from .oracle import StochasticOracle

NOISE_KINDS = ("none", "gaussian", "uniform", "affine")


class TestProblem(StochasticOracle):
    """A named objective, feasible set, noise model and declared constants."""

    __test__ = False  # not a pytest class

    name = "problem"

    def __init__(self, blocks, feasible, *, L0, eta0, f_hat=None, noise=None, params=None, radius=1.0):
        super().__init__()
        self.blocks = blocks
        self.feasible = feasible
        self.n = blocks.n
        self.L0 = float(L0)
        self.eta0 = float(eta0)
        self.f_hat = f_hat
        self.radius = float(radius)
        self.params = dict(params or {})
        self.stationary_points = None
        self._setup_noise(dict(noise or {"kind": "none"}))

    # -- noise -------------------------------------------------------------
    def _setup_noise(self, noise):
        kind = noise.pop("kind", "none")
        if kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
        half_width = noise.pop("half_width", None)
        nu = noise.pop("nu", None)
        if noise:
            raise ConfigurationError(f"unknown noise keys {sorted(noise)}")
        if kind == "uniform" and half_width is not None:
            if nu is not None:
                raise ConfigurationError("give either nu or half_width for uniform noise, not both")
            nu = float(half_width) / math.sqrt(3.0)
        elif half_width is not None:
            raise ConfigurationError("half_width only applies to uniform noise")
        nu = 0.0 if kind == "none" else float(0.0 if nu is None else nu)
        if nu < 0 or (kind != "none" and nu == 0):
            raise ConfigurationError(f"noise level must be positive for {kind} noise")
        self.noise_kind = kind
        self.nu = nu
        self.noise_dim = {"none": 0, "gaussian": 1, "uniform": 1, "affine": 1 + self.n}[kind]
        # |x| bound on X + eta0*B + eta0*S, where the noise moment bound must hold
        self.noise_rho = self.outer_radius() + 2 * self.eta0

    def noise_spec(self):
        if self.noise_kind == "none":
            return {"kind": "none"}
        return {"kind": self.noise_kind, "nu": self.nu}

    def sample_noise(self, rng, size):
        if self.noise_kind == "none":
            return np.zeros((size, 0))
        if self.noise_kind == "uniform":
            return rng.uniform(-1.0, 1.0, size=(size, 1))
        return rng.standard_normal((size, self.noise_dim))

    def noise_values(self, X, omega):
        if self.noise_kind == "none":
            return 0.0
        if self.noise_kind == "gaussian":
            return self.nu * omega[:, 0]
        if self.noise_kind == "uniform":
            return math.sqrt(3.0) * self.nu * omega[:, 0]
        w = omega[:, 1:]
        return self.nu / math.sqrt(2.0) * (omega[:, 0] + np.einsum("ij,ij->i", w, X) / self.noise_rho)

    def _values(self, X, omega):
        return self.value(X) + self.noise_values(X, omega)

    def noisy_smoothed_gradient(self, x, eta, omega):
        g = self.smoothed_gradient(x, eta)
        if g is None:
            return None
        omega = np.atleast_2d(omega)
        G = np.broadcast_to(g, (omega.shape[0], self.n)).copy()
        if self.noise_kind == "affine":
            # ball average of a linear function is itself, so only w survives
            G += self.nu / math.sqrt(2.0) * omega[:, 1:] / self.noise_rho
        return G

    # -- geometry helpers --------------------------------------------------
    def outer_radius(self):
        """Bound on |x| over the feasible set."""
        return self.radius * math.sqrt(self.n)

    def sample_points(self, rng, m, inflate=0.0):
        """Feasible points (optionally pushed up to ``inflate`` outside X)."""
        Y = rng.uniform(-1.25 * self.radius, 1.25 * self.radius, size=(m, self.n))
        X = self.feasible.project(Y)
        if inflate > 0:
            from .sampling import sample_ball

            X = X + sample_ball(rng, self.n, inflate, size=m)
        return X

    def describe(self):
        d = {"name": self.name, "n": self.n, "block_sizes": list(self.blocks.block_sizes)}
        d.update(self.params)
        d.update(L0=self.L0, nu=self.nu, eta0=self.eta0, f_hat=self.f_hat, noise=self.noise_spec())
        return d

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, b={self.blocks.b}, noise={self.noise_kind})"


class Abs1D(TestProblem):
    """f(x) = |x| on [-r, r]."""

    name = "abs1d"

    def __init__(self, radius=1.0, eta0=0.5, noise=None):
        blocks = BlockStructure([1])
        feasible = FeasibleSet(blocks, (Box([-radius], [radius]),))
        super().__init__(blocks, feasible, L0=1.0, eta0=eta0, f_hat=radius + eta0, noise=noise,
                         params={"radius": radius}, radius=radius)
        self.stationary_points = np.zeros((1, 1))

    def value(self, X):
        return np.abs(np.asarray(X, dtype=float)[..., 0])

    def smoothed(self, x, eta):
        t = abs(float(np.asarray(x).reshape(-1)[0]))
        return t * t / (2 * eta) + eta / 2 if t < eta else t

    def smoothed_gradient(self, x, eta):
        t = float(np.asarray(x).reshape(-1)[0])
        return np.array([t / eta if abs(t) < eta else math.copysign(1.0, t)])


class Quad(TestProblem):
    """f(x) = |x|^2 / 2 on the cube [-r, r]^n."""

    name = "quad"

    def __init__(self, n=4, b=2, radius=1.0, eta0=0.5, noise=None):
        blocks = BlockStructure.even(n, b)
        feasible = FeasibleSet.cube(blocks, radius)
        reach = radius * math.sqrt(n) + eta0
        super().__init__(blocks, feasible, L0=reach, eta0=eta0, f_hat=0.5 * reach**2, noise=noise,
                         params={"b": b, "radius": radius}, radius=radius)
        self.stationary_points = np.zeros((1, n))

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return 0.5 * np.sum(X * X, axis=-1)

    def smoothed(self, x, eta):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x) + eta**2 * self.n / (2 * (self.n + 2))

    def smoothed_gradient(self, x, eta):
        return np.array(x, dtype=float)


class L1RegNC(TestProblem):
    """f(x) = |x|_1 - alpha*|x|^2 + c on the cube [-r, r]^n (nonsmooth, nonconvex)."""

    name = "l1reg_nc"

    def __init__(self, n=4, b=2, radius=1.0, alpha=0.1, c=0.0, eta0=0.5, noise=None):
        if alpha < 0:
            raise ConfigurationError("alpha must be nonnegative")
        blocks = BlockStructure.even(n, b)
        feasible = FeasibleSet.cube(blocks, radius)
        reach = radius * math.sqrt(n) + eta0
        L0 = math.sqrt(n) + 2 * alpha * reach
        f_hat = n * radius + math.sqrt(n) * eta0 + abs(c)
        super().__init__(blocks, feasible, L0=L0, eta0=eta0, f_hat=f_hat, noise=noise,
                         params={"b": b, "radius": radius, "alpha": alpha, "c": c}, radius=radius)
        self.alpha = float(alpha)
        self.c = float(c)

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return np.sum(np.abs(X), axis=-1) - self.alpha * np.sum(X * X, axis=-1) + self.c


class MaxLin(TestProblem):
    """f(x) = max_j(a_j.x + b_j) - beta * max_l(c_l.x + d_l) on the cube [-r, r]^n.

    Pieces are drawn from ``piece_seed`` so a problem is fully named by its
    parameters.
    """

    name = "maxlin"

    def __init__(self, n=4, b=2, radius=1.0, m=5, beta=0.5, piece_seed=0, eta0=0.5, noise=None):
        if m < 1:
            raise ConfigurationError("need at least one affine piece")
        blocks = BlockStructure.even(n, b)
        feasible = FeasibleSet.cube(blocks, radius)
        rng = np.random.default_rng(piece_seed)
        self.A = rng.standard_normal((m, n))
        self.a0 = rng.standard_normal(m)
        self.C = rng.standard_normal((m, n))
        self.c0 = rng.standard_normal(m)
        self.beta = float(beta)
        reach = radius * math.sqrt(n) + eta0
        L0 = np.linalg.norm(self.A, axis=1).max() + abs(beta) * np.linalg.norm(self.C, axis=1).max()
        f_hat = float(np.max(np.linalg.norm(self.A, axis=1) * reach + np.abs(self.a0))
                      + abs(beta) * np.max(np.linalg.norm(self.C, axis=1) * reach + np.abs(self.c0)))
        super().__init__(blocks, feasible, L0=float(L0), eta0=eta0, f_hat=f_hat, noise=noise,
                         params={"b": b, "radius": radius, "m": m, "beta": beta, "piece_seed": piece_seed},
                         radius=radius)

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return (X @ self.A.T + self.a0).max(axis=-1) - self.beta * (X @ self.C.T + self.c0).max(axis=-1)


PROBLEMS = {cls.name: cls for cls in (Abs1D, Quad, L1RegNC, MaxLin)}


def make_problem(spec: dict) -> TestProblem:
    """Build a corpus member from ``{"name": ..., **params}``."""
    spec = dict(spec)
    name = str(spec.pop("name", "")).lower()
    if name not in PROBLEMS:
        raise ConfigurationError(f"unknown problem {name!r}; expected one of {sorted(PROBLEMS)}")
    try:
        return PROBLEMS[name](**spec)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from None


def verify_constants(problem: TestProblem, samples: int, rng: np.random.Generator, noise_points: int = 20):
    """Empirical Lipschitz and noise-moment certificates against the declared L0 and nu.

    Lipschitz pairs are drawn in X + eta0*B. The noise moment is estimated at
    ``noise_points`` random points with ``samples`` draws each; the check passes
    when the largest per-point estimate stays within 4 standard errors of nu^2.
    """
    X = problem.sample_points(rng, samples, inflate=problem.eta0)
    Y = X + rng.normal(scale=0.1 * problem.eta0, size=X.shape)
    dist = np.linalg.norm(X - Y, axis=1)
    ok = dist > 0
    quot = np.abs(problem.value(X[ok]) - problem.value(Y[ok])) / dist[ok]
    lipschitz = float(quot.max()) if quot.size else 0.0

    moments, ses = [], []
    for x in problem.sample_points(rng, noise_points, inflate=problem.eta0):
        Xs = np.broadcast_to(x, (samples, problem.n))
        om = problem.sample_noise(rng, samples)
        err = problem.evaluate(Xs, om, purpose="measurement") - problem.value(Xs)
        sq = err * err
        moments.append(float(sq.mean()))
        ses.append(float(sq.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0)
    j = int(np.argmax(moments))
    nu2_hat = moments[j]
    return {
        "lipschitz_hat": lipschitz,
        "L0": problem.L0,
        "lipschitz_ok": lipschitz <= problem.L0 * (1 + 1e-6),
        "nu2_hat": nu2_hat,
        "nu2_hat_mean": float(np.mean(moments)),
        "nu2_se": ses[j],
        "nu": problem.nu,
        "noise_ok": nu2_hat <= problem.nu**2 + 4 * ses[j],
    }
