"""Seeded random streams for the solver.

Every consumer of randomness gets its own stream derived from one master seed
through ``numpy.random.SeedSequence`` spawn keys, so draws on one stream never
shift another. Per-iteration draws (directions, oracle noise) are keyed by the
iteration counter; a batch for iteration ``k`` is the same no matter what was
drawn before it or how the batch is later split for evaluation.
"""
from __future__ import annotations

import math

import numpy as np

STREAM_IDS = {
    "direction": 0,
    "noise": 1,
    "block": 2,
    "output": 3,
    "evaluation": 4,
}


class RngStreams:
    """Named, independent generators derived from a 64-bit master seed."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"master seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self.block = self._sequential("block")
        self.output = self._sequential("output")

    def _seq(self, name, *counter):
        return np.random.SeedSequence(self.seed, spawn_key=(STREAM_IDS[name],) + tuple(counter))

    def _sequential(self, name):
        return np.random.Generator(np.random.PCG64(self._seq(name)))

    def keyed(self, name: str, *counter: int) -> np.random.Generator:
        """Fresh generator for position ``counter`` of stream ``name``."""
        return np.random.Generator(np.random.PCG64(self._seq(name, *counter)))

    def direction(self, k):
        return self.keyed("direction", k)

    def noise(self, k):
        return self.keyed("noise", k)

    def evaluation(self, *counter):
        return self.keyed("evaluation", *counter)


def sample_sphere(rng: np.random.Generator, n: int, eta: float = 1.0, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the sphere of radius ``eta`` in R^n.

    Normalizes standard Gaussian vectors. Returns shape ``(n,)`` or ``(size, n)``.
    """
    if n < 1:
        raise ValueError("dimension must be at least 1")
    if not eta > 0:
        raise ValueError(f"radius must be positive, got {eta}")
    shape = (n,) if size is None else (size, n)
    z = rng.standard_normal(shape)
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    # a zero Gaussian vector has probability zero; redraw rather than divide by it
    while np.any(norms == 0):
        bad = (norms == 0)[..., 0]
        z[bad] = rng.standard_normal(z[bad].shape)
        norms = np.linalg.norm(z, axis=-1, keepdims=True)
    return eta * z / norms


def sample_ball(rng: np.random.Generator, n: int, eta: float = 1.0, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the ball of radius ``eta``: direction times eta*U^(1/n)."""
    u = sample_sphere(rng, n, 1.0, size)
    r = rng.random(() if size is None else (size, 1)) ** (1.0 / n)
    return eta * r * u


def sample_block(rng: np.random.Generator, b: int) -> int:
    """Block index uniform over 0..b-1."""
    if b < 1:
        raise ValueError("block count must be at least 1")
    if b == 1:
        return 0
    return int(rng.integers(b))


def output_range(K: int, lam: float) -> tuple[int, int]:
    if K < 1:
        raise ValueError("horizon K must be at least 1")
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    # guard against lam*K landing a rounding error above an integer
    lo = max(1, math.ceil(lam * K - 1e-9))
    if lo > K:
        raise ValueError(f"empty output range for K={K}, lambda={lam}")
    return lo, K


def sample_output_index(rng: np.random.Generator, K: int, lam: float) -> int:
    """R uniform over {ceil(lam*K), ..., K}."""
    lo, hi = output_range(K, lam)
    if lo == hi:
        return lo
    return int(rng.integers(lo, hi + 1))
