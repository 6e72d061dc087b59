"""Worst-case D-criterion as a difference of two convex log-determinants.

For weights ``w`` on the candidate points the minimax loss is::

    loss(w) = -2 log det G(w) + log det H(w),   G(w) = sum_i w_i G_i,  H(w) = sum_i w_i H_i

with, for the generalized least squares estimator (working covariance V0)::

    G_i = Z_i' V0^-1 Z_i,   H_i = Z_i' V0^-1 (V0 + alpha I) V0^-1 Z_i

and for ordinary least squares ``G_i = Z_i' Z_i``, ``H_i = Z_i' (V0 + alpha I) Z_i``.
The convex pieces are ``g = -2 log det G`` and ``h = -log det H``.

Every per-point matrix is stored through a factor, ``G_i = F_i' F_i`` with
``F_i = R Z_i`` for a fixed m x m matrix ``R``, so traces such as
``tr(G^-1 G_i)`` become squared norms of triangular solves.

Weights may be tied across reflection orbits.  The free variables are then
the orbit masses ``u_o``; each member of orbit ``o`` carries ``u_o / |o|``
and the orbit's matrix is the mean of its members' matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .linalg import cholesky, log_det_from_factor, solve_pd, whiten
from .model import Estimator, build_z_all

SKIP_WEIGHT = 1e-16


def _row_transforms(model):
    """Matrices ``Rg``, ``Rh`` with ``G_i = (Rg Z_i)'(Rg Z_i)`` and likewise for H."""
    m = model.m
    v0 = np.asarray(model.v0, dtype=np.float64)
    lv = cholesky(v0)
    k = cholesky(v0 + model.alpha * np.eye(m))
    if model.estimator == Estimator.GLSE:
        rg = sla.solve_triangular(lv, np.eye(m), lower=True)
        rh = rg if model.alpha == 0 else solve_pd(v0, k, factor=lv).T
    else:
        rg = np.eye(m)
        rh = k.T
    return rg, rh


@dataclass
class PointMatrices:
    g: np.ndarray
    h: np.ndarray
    index: int


def point_matrices(model, space, i):
    """Explicit G_i and H_i at candidate point ``i``."""
    z = build_z_all(model, space.points[i:i + 1])[0]
    v0 = np.asarray(model.v0, dtype=np.float64)
    w = v0 + model.alpha * np.eye(model.m)
    if model.estimator == Estimator.GLSE:
        vz = solve_pd(v0, z)
        g = z.T @ vz
        h = g.copy() if model.alpha == 0 else vz.T @ w @ vz
    else:
        g = z.T @ z
        h = z.T @ w @ z
    return PointMatrices(0.5 * (g + g.T), 0.5 * (h + h.T), i)


class Criterion:
    """Precomputed problem data for one (model, space, orbit tying) triple."""

    def __init__(self, model, space, orbits=None):
        self.model = model
        self.space = space
        self.orbits = orbits
        self.q = model.q
        z = build_z_all(model, space.points)
        rg, rh = _row_transforms(model)
        self.point_g = np.einsum("ab,nbq->naq", rg, z)
        self.point_h = self.point_g if rh is rg else np.einsum("ab,nbq->naq", rh, z)
        self.n_points = space.n
        if orbits is None:
            self.atom_g, self.atom_h = self.point_g, self.point_h
            self.sizes = np.ones(space.n)
        else:
            self.sizes = orbits.sizes.astype(np.float64)
            self.atom_g = _stack_orbits(self.point_g, orbits)
            self.atom_h = self.atom_g if self.point_h is self.point_g else _stack_orbits(self.point_h, orbits)
        self.n_atoms, self.k, _ = self.atom_g.shape
        self.flat_g = self.atom_g.reshape(-1, self.q)
        self.flat_h = self.flat_g if self.atom_h is self.atom_g else self.atom_h.reshape(-1, self.q)

    # -- weight bookkeeping -------------------------------------------------

    def expand(self, u):
        """Per-point weights from atom (orbit) masses."""
        u = np.asarray(u, dtype=np.float64)
        if self.orbits is None:
            return u.copy()
        return u[self.orbits.orbit_of] / self.sizes[self.orbits.orbit_of]

    def reduce(self, w):
        """Atom masses from per-point weights."""
        w = np.asarray(w, dtype=np.float64)
        if self.orbits is None:
            return w.copy()
        return np.bincount(self.orbits.orbit_of, weights=w, minlength=self.n_atoms)

    def uniform(self):
        if self.orbits is None:
            return np.full(self.n_atoms, 1.0 / self.n_atoms)
        return self.sizes / self.sizes.sum()

    # -- aggregation --------------------------------------------------------

    def _aggregate(self, flat, u):
        rows = np.repeat(np.asarray(u, dtype=np.float64), self.k)
        keep = rows >= SKIP_WEIGHT
        f = flat[keep]
        out = f.T @ (f * rows[keep, None])
        return 0.5 * (out + out.T)

    def g_matrix(self, u):
        return self._aggregate(self.flat_g, u)

    def h_matrix(self, u):
        if self.flat_h is self.flat_g:
            return self.g_matrix(u)
        return self._aggregate(self.flat_h, u)

    def atom_matrix(self, a, which="g"):
        f = (self.atom_g if which == "g" else self.atom_h)[a]
        return f.T @ f

    def state(self, u):
        return CriterionState(self, u)

    def loss_at(self, u):
        return self.state(u).loss()

    def loss_at_weights(self, w):
        return self.loss_at(self.reduce(w))


def _stack_orbits(point_f, orbits):
    n, m, q = point_f.shape
    kmax = int(orbits.sizes.max()) * m
    out = np.zeros((len(orbits), kmax, q))
    for o, idx in enumerate(orbits.orbits):
        block = point_f[idx].reshape(-1, q) / np.sqrt(len(idx))
        out[o, :block.shape[0]] = block
    return out


def _traces(low, flat, k):
    x = whiten(low, flat)
    return np.einsum("ij,ij->i", x, x).reshape(-1, k).sum(axis=1)


class CriterionState:
    """G(u), H(u) and their Cholesky factors at one weight vector.

    Raises SingularError on construction when either matrix is not PD.
    """

    def __init__(self, crit, u):
        self.crit = crit
        self.u = np.asarray(u, dtype=np.float64)
        self.g_w = crit.g_matrix(self.u)
        self.lg = cholesky(self.g_w, symmetrize=False)
        if crit.flat_h is crit.flat_g:
            self.h_w, self.lh = self.g_w, self.lg
        else:
            self.h_w = crit.h_matrix(self.u)
            self.lh = cholesky(self.h_w, symmetrize=False)

    def loss(self):
        return -2.0 * log_det_from_factor(self.lg) + log_det_from_factor(self.lh)

    def g_traces(self):
        """``tr(G^-1 G_a)`` for every atom."""
        return _traces(self.lg, self.crit.flat_g, self.crit.k)

    def h_traces(self):
        if self.lh is self.lg:
            return self.g_traces()
        return _traces(self.lh, self.crit.flat_h, self.crit.k)

    def point_traces(self):
        """``(tr(G^-1 G_i), tr(H^-1 H_i))`` for every candidate point."""
        m, q = self.crit.model.m, self.q
        tg = _traces(self.lg, self.crit.point_g.reshape(-1, q), m)
        th = tg if self.lh is self.lg else _traces(self.lh, self.crit.point_h.reshape(-1, q), m)
        return tg, th

    @property
    def q(self):
        return self.crit.q


def loss(state):
    """``-2 log det G(w) + log det H(w)``."""
    return state.loss()


def grad_g(state):
    """Gradient of ``-2 log det G`` w.r.t. the atom masses."""
    return -2.0 * state.g_traces()


def grad_h(state):
    """Gradient of ``h = -log det H`` w.r.t. the atom masses."""
    return -state.h_traces()


def surrogate_grad(state, anchor_grad_h):
    """Gradient of ``g(w) - v(w, w0)``, the convex majorant anchored at ``w0``."""
    return grad_g(state) - np.asarray(anchor_grad_h)
