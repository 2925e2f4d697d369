"""Block partitions of R^n and exact Euclidean projections onto product sets.

Blocks are indexed from 0. A feasible set is a tuple of per-block descriptors;
the projection onto the product is the blockwise projection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError


class BlockStructure:
    """Partition of R^n into consecutive coordinate blocks."""

    def __init__(self, block_sizes: Sequence[int]):
        sizes = tuple(int(s) for s in block_sizes)
        if len(sizes) == 0:
            raise ConfigurationError("need at least one block")
        if any(s < 1 for s in sizes):
            raise ConfigurationError(f"block sizes must be positive, got {sizes}")
        self.block_sizes = sizes
        self.offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
        self.n = int(sum(sizes))
        self.b = len(sizes)

    @classmethod
    def even(cls, n: int, b: int) -> "BlockStructure":
        """Split n coordinates into b blocks whose sizes differ by at most one."""
        if b < 1 or n < b:
            raise ConfigurationError(f"cannot split n={n} into b={b} nonempty blocks")
        base, extra = divmod(n, b)
        return cls([base + (1 if i < extra else 0) for i in range(b)])

    def slice(self, i: int) -> slice:
        self._check(i)
        return slice(self.offsets[i], self.offsets[i] + self.block_sizes[i])

    def extract(self, i: int, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.slice(i)]

    def embed(self, i: int, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.block_sizes[i]:
            raise ValueError(f"block {i} has size {self.block_sizes[i]}, got {y.shape[-1]}")
        out = np.zeros(y.shape[:-1] + (self.n,))
        out[..., self.slice(i)] = y
        return out

    def _check(self, i: int) -> None:
        if not 0 <= i < self.b:
            raise ValueError(f"block id {i} outside 0..{self.b - 1}")

    def __eq__(self, other):
        return isinstance(other, BlockStructure) and self.block_sizes == other.block_sizes

    def __repr__(self):
        return f"BlockStructure({list(self.block_sizes)})"


# ---------------------------------------------------------------------------
# per-block set descriptors


@dataclass(frozen=True)
class Free:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError("dimension must be positive")

    def project(self, y):
        return np.array(y, dtype=float)

    def contains(self, y, tol=1e-10):
        return bool(np.all(np.isfinite(y)))

    def to_dict(self):
        return {"type": "free", "dim": self.dim}


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ConfigurationError("box bounds must be nonempty and of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ConfigurationError("box requires lower <= upper in every coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, dim, radius=1.0, center=0.0):
        return cls(np.full(dim, center - radius), np.full(dim, center + radius))

    @property
    def dim(self):
        return self.lower.size

    def project(self, y):
        return np.clip(y, self.lower, self.upper)

    def contains(self, y, tol=1e-10):
        return bool(np.all(y >= self.lower - tol) and np.all(y <= self.upper + tol))

    def to_dict(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise ConfigurationError("ball center must be a finite nonempty vector")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ConfigurationError(f"ball radius must be positive, got {self.radius}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def project(self, y):
        d = np.asarray(y, dtype=float) - self.center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + d * scale

    def contains(self, y, tol=1e-10):
        return bool(np.linalg.norm(np.asarray(y) - self.center) <= self.radius * (1 + tol) + tol)

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True)
class Simplex:
    """{y >= 0, sum(y) = radius} in R^dim."""

    dim: int
    radius: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError("dimension must be positive")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ConfigurationError(f"simplex radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def project(self, y):
        return project_simplex(y, self.radius)

    def contains(self, y, tol=1e-10):
        y = np.asarray(y)
        return bool(np.all(y >= -tol) and abs(y.sum() - self.radius) <= tol * max(1.0, self.radius))

    def to_dict(self):
        return {"type": "simplex", "dim": self.dim, "radius": self.radius}


@dataclass(frozen=True)
class Halfspace:
    """{y : a.y <= c}."""

    a: np.ndarray
    c: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        if a.size == 0 or not np.all(np.isfinite(a)) or not np.any(a != 0):
            raise ConfigurationError("halfspace normal must be finite and nonzero")
        if not np.isfinite(self.c):
            raise ConfigurationError("halfspace offset must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "_aa", float(a @ a))

    @property
    def dim(self):
        return self.a.size

    def project(self, y):
        y = np.asarray(y, dtype=float)
        excess = np.maximum(y @ self.a - self.c, 0.0)
        return y - np.multiply.outer(excess / self._aa, self.a)

    def contains(self, y, tol=1e-10):
        return bool(np.asarray(y) @ self.a <= self.c + tol * max(1.0, abs(self.c)))

    def to_dict(self):
        return {"type": "halfspace", "a": self.a.tolist(), "c": self.c}


SetDescriptor = Union[Free, Box, Ball, Simplex, Halfspace]


def project_simplex(y, radius=1.0):
    """Euclidean projection onto {w >= 0, sum w = radius} by sort and threshold.

    Works on the last axis, so a stack of points is projected row by row.
    """
    y = np.asarray(y, dtype=float)
    mu = -np.sort(-y, axis=-1)
    css = np.cumsum(mu, axis=-1) - radius
    j = np.arange(1, y.shape[-1] + 1)
    cond = mu - css / j > 0
    rho = y.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(y - theta, 0.0)


def project_block(descriptor: SetDescriptor, y) -> np.ndarray:
    """Nearest point of a single block set."""
    return descriptor.project(y)


_DESCRIPTORS = {"free": Free, "box": Box, "ball": Ball, "simplex": Simplex, "halfspace": Halfspace}


def descriptor_from_dict(d: dict) -> SetDescriptor:
    """Build a descriptor from a tagged record such as {"type": "box", ...}."""
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _DESCRIPTORS:
        raise ConfigurationError(f"unknown set type {kind!r}; expected one of {sorted(_DESCRIPTORS)}")
    try:
        return _DESCRIPTORS[kind](**d)
    except TypeError as exc:
        raise ConfigurationError(f"bad fields for {kind} set: {exc}") from None


@dataclass(frozen=True)
class FeasibleSet:
    """Cartesian product of per-block convex sets."""

    blocks: BlockStructure
    sets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        sets = tuple(self.sets)
        object.__setattr__(self, "sets", sets)
        if len(sets) != self.blocks.b:
            raise ConfigurationError(f"{len(sets)} set descriptors for {self.blocks.b} blocks")
        for i, s in enumerate(sets):
            if s.dim != self.blocks.block_sizes[i]:
                raise ConfigurationError(
                    f"block {i}: descriptor dimension {s.dim} != block size {self.blocks.block_sizes[i]}"
                )

    @classmethod
    def free(cls, blocks):
        return cls(blocks, tuple(Free(s) for s in blocks.block_sizes))

    @classmethod
    def cube(cls, blocks, radius=1.0):
        return cls(blocks, tuple(Box.cube(s, radius) for s in blocks.block_sizes))

    @classmethod
    def from_dicts(cls, blocks, records):
        return cls(blocks, tuple(descriptor_from_dict(r) for r in records))

    @property
    def n(self):
        return self.blocks.n

    def project_block(self, i, y):
        return self.sets[i].project(y)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.blocks.n:
            raise ValueError(f"expected a point of dimension {self.blocks.n}, got shape {x.shape}")
        out = np.empty_like(x)
        for i, s in enumerate(self.sets):
            sl = self.blocks.slice(i)
            out[..., sl] = s.project(x[..., sl])
        return out

    def contains(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        return all(s.contains(x[self.blocks.slice(i)], tol) for i, s in enumerate(self.sets))

    def to_dicts(self):
        return [s.to_dict() for s in self.sets]


def project_product(feasible: FeasibleSet, x) -> np.ndarray:
    return feasible.project(x)
