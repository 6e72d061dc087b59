"""Discrete design spaces built as Cartesian products of factor levels."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError

DEFAULT_CAP = 10**6


@dataclass(frozen=True)
class Grid:
    """``count`` equally spaced points from ``lo`` to ``hi`` inclusive."""

    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"grid needs count >= 2, got {self.count}")
        if not self.lo < self.hi:
            raise ValueError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")

    def values(self):
        n = int(self.count)
        k = np.arange(n)
        vals = (self.lo * (n - 1 - k) + self.hi * k) / (n - 1)
        if self.lo == -self.hi:
            # exact mirror image so that reflections map grid points onto grid points
            half = n // 2
            vals[n - half:] = -vals[:half][::-1]
            if n % 2:
                vals[half] = 0.0
        return vals


@dataclass(frozen=True)
class Levels:
    """Explicit, strictly increasing factor levels (e.g. qualitative 0/1)."""

    values_: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values_)
        if not vals:
            raise ValueError("levels must be nonempty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"levels must be strictly increasing: {vals}")
        object.__setattr__(self, "values_", vals)

    def values(self):
        return np.array(self.values_)


@dataclass
class DesignSpace:
    """Candidate points in lexicographic order (first factor varies slowest)."""

    factors: tuple
    points: np.ndarray
    _index: dict = field(default=None, repr=False, compare=False)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def p(self):
        return self.points.shape[1]

    def index_of(self, point):
        """Index of ``point`` (matched to 9 decimals), or None."""
        if self._index is None:
            self._index = {_key(row): i for i, row in enumerate(self.points)}
        return self._index.get(_key(point))

    def reflection_map(self, axis):
        """Permutation taking point i to the index of its reflection, or None."""
        refl = self.points.copy()
        refl[:, axis - 1] = -refl[:, axis - 1]
        out = np.empty(self.n, dtype=np.intp)
        for i, row in enumerate(refl):
            j = self.index_of(row)
            if j is None:
                return None
            out[i] = j
        return out


def _key(point):
    return tuple((np.round(np.asarray(point, dtype=np.float64), 9) + 0.0).tolist())


def build_space(factors, cap=DEFAULT_CAP):
    factors = tuple(factors)
    if not factors:
        raise ValueError("a design space needs at least one factor")
    levels = [f.values() for f in factors]
    n = int(np.prod([len(v) for v in levels]))
    if n > cap:
        raise CapacityError(f"design space has {n} points, cap is {cap}")
    pts = np.array(list(itertools.product(*levels)), dtype=np.float64).reshape(n, len(factors))
    return DesignSpace(factors, pts)


def is_reflection_closed(space, axis):
    col = space.points[:, axis - 1]
    vals = set(col.tolist())
    return all(-v in vals for v in vals)


def symmetry_axes(space, model):
    """Axes whose reflection leaves both the space and every block's basis sign-invariant."""
    from .basis import reflection_signature

    axes = []
    for r in range(1, space.p + 1):
        if not is_reflection_closed(space, r):
            continue
        if all(reflection_signature(b, r, space) is not None for b in model.blocks):
            axes.append(r)
    return axes


@dataclass(frozen=True)
class OrbitStructure:
    axes: tuple
    orbits: tuple  # tuple of index arrays, ordered by representative
    orbit_of: np.ndarray  # point index -> orbit index

    @property
    def representatives(self):
        return np.array([o[0] for o in self.orbits])

    @property
    def sizes(self):
        return np.array([len(o) for o in self.orbits])

    def __len__(self):
        return len(self.orbits)


def build_orbits(space, axes=()):
    axes = tuple(sorted(set(axes)))
    maps = []
    for r in axes:
        mp = space.reflection_map(r)
        if mp is None:
            raise ValueError(f"space is not closed under reflection of x{r}")
        maps.append(mp)
    orbit_of = np.full(space.n, -1, dtype=np.intp)
    orbits = []
    for i in range(space.n):
        if orbit_of[i] >= 0:
            continue
        members = {i}
        for mp in maps:
            members |= {int(mp[j]) for j in members}
        idx = np.array(sorted(members), dtype=np.intp)
        orbit_of[idx] = len(orbits)
        orbits.append(idx)
    return OrbitStructure(axes, tuple(orbits), orbit_of)


def apply_scale(space, t):
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (space.p,) or np.any(t <= 0):
        raise ValueError("scale vector needs p positive entries")
    factors = []
    for f, tr in zip(space.factors, t):
        if isinstance(f, Grid):
            factors.append(Grid(f.lo * tr, f.hi * tr, f.count))
        else:
            factors.append(Levels(tuple(v * tr for v in f.values_)))
    return DesignSpace(tuple(factors), space.points * t)
