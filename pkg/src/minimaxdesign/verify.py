"""Optimality certificates and invariance checks for computed designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import scale_factors
from .criterion import Criterion
from .errors import NotApplicable
from .space import apply_scale, build_orbits


@dataclass
class Certificate:
    """Directional values ``d_i = tr(2 G^-1 G_i - H^-1 H_i) - q`` at a design.

    A design is accepted when every ``d_i <= eta2``.
    """

    d: np.ndarray
    eta2: float
    weights: np.ndarray

    @property
    def max_violation(self):
        return float(np.max(self.d))

    @property
    def passed(self):
        return self.max_violation <= self.eta2

    @property
    def weighted_sum(self):
        """``sum_i w_i d_i``; zero for any nonsingular design."""
        return float(self.weights @ self.d)


def certify(crit, w, eta2=1e-3):
    """Certificate of the per-point weights ``w`` (length N)."""
    w = np.asarray(w, dtype=np.float64)
    state = crit.state(crit.reduce(w))
    tg, th = state.point_traces()
    return Certificate(2.0 * tg - th - crit.q, float(eta2), w)


@dataclass
class InvarianceReport:
    max_weight_diff: float
    loss_diff: float
    support_match: bool
    tol: float
    losses: tuple = ()

    @property
    def passed(self):
        return self.support_match and self.max_weight_diff <= self.tol


def _compare(a, b, threshold, tol):
    sa = a.weights >= threshold
    sb = b.weights >= threshold
    return InvarianceReport(
        max_weight_diff=float(np.max(np.abs(a.weights - b.weights))),
        loss_diff=float(b.loss - a.loss),
        support_match=bool(np.array_equal(sa, sb)),
        tol=tol,
        losses=(a.loss, b.loss),
    )


def _solve(model, space, axes, opts):
    from .solver import solve_dc

    orbits = build_orbits(space, axes) if axes else None
    return solve_dc(Criterion(model, space, orbits), opts)


def check_sign_flip(model, space, signs, axes=(), opts=None, tol=1e-4, base=None):
    """Solve with ``v0`` and with ``Q v0 Q`` (``Q = diag(signs)``) and compare designs."""
    from .solver import SolverOptions

    opts = opts or SolverOptions()
    signs = np.asarray(signs, dtype=np.float64)
    if signs.shape != (model.m,) or not np.all(np.abs(signs) == 1):
        raise ValueError("signs must be a length-m vector of +1/-1")
    flipped = model.replace(v0=signs[:, None] * model.v0 * signs[None, :])
    a = base if base is not None else _solve(model, space, axes, opts)
    b = _solve(flipped, space, axes, opts)
    return _compare(a, b, opts.support_threshold, tol)


def scale_premise(model, t):
    """Block-diagonal scale factor ``Q_T`` as a length-q vector, or None."""
    parts = [scale_factors(b, t) for b in model.blocks]
    if any(p is None for p in parts):
        return None
    return np.concatenate(parts)


def check_scale(model, space, t, axes=(), opts=None, tol=1e-4, base=None):
    """Solve on the space and on its rescaled copy; compare index-wise weights."""
    from .solver import SolverOptions

    opts = opts or SolverOptions()
    if scale_premise(model, t) is None:
        raise NotApplicable("a truncated power with nonzero shift sits on a rescaled axis")
    a = base if base is not None else _solve(model, space, axes, opts)
    b = _solve(model, apply_scale(space, t), axes, opts)
    return _compare(a, b, opts.support_threshold, tol)
