"""Brute-force reference computations for tiny instances.

Deliberately independent of the package: per-point matrices come from
explicit inverses and ``slogdet``, never from Cholesky factors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_POINTS = 6
MAX_DIVISIONS = 100


class OracleCapacityError(ValueError):
    pass


def z_matrices(funcs, points):
    """Stack ``Z(x)`` for a list of per-response callables returning 1-D arrays."""
    out = []
    for x in points:
        rows = [np.atleast_1d(np.asarray(f(x), dtype=float)) for f in funcs]
        q = sum(len(r) for r in rows)
        z = np.zeros((len(rows), q))
        c = 0
        for j, r in enumerate(rows):
            z[j, c:c + len(r)] = r
            c += len(r)
        out.append(z)
    return np.array(out)


def info_matrices(zs, v0, alpha, estimator="GLSE", v_eps=None):
    """Per-point ``(G_i, H_i)`` using the covariance ``v_eps`` (default ``v0 + alpha I``)."""
    v0 = np.asarray(v0, dtype=float)
    m = v0.shape[0]
    v = v0 + alpha * np.eye(m) if v_eps is None else np.asarray(v_eps, dtype=float)
    if estimator == "GLSE":
        vi = np.linalg.inv(v0)
        g = np.array([z.T @ vi @ z for z in zs])
        h = np.array([z.T @ vi @ v @ vi @ z for z in zs])
    else:
        g = np.array([z.T @ z for z in zs])
        h = np.array([z.T @ v @ z for z in zs])
    return g, h


def dc_loss(g, h, w):
    """``-2 log det sum w_i G_i + log det sum w_i H_i`` (inf when singular)."""
    gw = np.tensordot(w, g, axes=1)
    hw = np.tensordot(w, h, axes=1)
    sg, lg = np.linalg.slogdet(gw)
    sh, lh = np.linalg.slogdet(hw)
    if sg <= 0 or sh <= 0:
        return np.inf
    scale = max(np.abs(gw).max(), 1e-300)
    if np.linalg.eigvalsh(gw)[0] <= 1e-12 * scale:
        return np.inf
    return -2.0 * lg + lh


@dataclass
class OracleResult:
    weights: np.ndarray
    loss: float
    evaluations: int


def compositions(total, parts):
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 2 - prev)
        yield out


def simplex_grid_search(g, h, step):
    """Exhaustive minimization of the DC loss over the step-``step`` simplex grid."""
    n = len(g)
    divisions = int(round(1.0 / step))
    if n > MAX_POINTS or divisions > MAX_DIVISIONS:
        raise OracleCapacityError(f"grid search limited to N <= {MAX_POINTS}, 1/step <= {MAX_DIVISIONS}")
    comps = np.array(list(compositions(divisions, n)), dtype=float) / divisions
    gw = np.einsum("kn,nij->kij", comps, g)
    hw = np.einsum("kn,nij->kij", comps, h)
    sg, lg = np.linalg.slogdet(gw)
    sh, lh = np.linalg.slogdet(hw)
    ev = np.linalg.eigvalsh(gw)[:, 0]
    scale = np.abs(gw).reshape(len(comps), -1).max(axis=1)
    ok = (sg > 0) & (sh > 0) & (ev > 1e-12 * scale)
    with np.errstate(invalid="ignore"):
        losses = np.where(ok, -2.0 * lg + lh, np.inf)
    best = int(np.argmin(losses))
    return OracleResult(comps[best], float(losses[best]), len(comps))


def random_contraction(rng, m):
    """Symmetric ``U`` with spectral norm at most one."""
    a = rng.standard_normal((m, m))
    u = 0.5 * (a + a.T)
    u /= np.max(np.abs(np.linalg.eigvalsh(u)))
    return u * rng.uniform() ** (1.0 / m)


def neighbourhood_sample_max(zs, v0, alpha, w, samples, rng, estimator="GLSE", extra=()):
    """Largest sampled log det of the estimator covariance over the neighbourhood of ``v0``.

    Each sample is ``V = clip_psd(v0 + alpha U)``; samples whose clipped
    matrix leaves the spectral ball of radius ``alpha`` are rejected.
    ``extra`` adds fixed ``U`` matrices (e.g. the identity) to the draws.
    Returns ``(max_value, accepted_count)``.
    """
    v0 = np.asarray(v0, dtype=float)
    m = v0.shape[0]
    best = -np.inf
    accepted = 0
    draws = [np.asarray(u, dtype=float) for u in extra]
    draws += [random_contraction(rng, m) for _ in range(samples)]
    for u in draws:
        lam, vec = np.linalg.eigh(v0 + alpha * u)
        v = (vec * np.maximum(lam, 0.0)) @ vec.T
        if np.max(np.abs(np.linalg.eigvalsh(v - v0))) > alpha * (1 + 1e-12) + 1e-15:
            continue
        accepted += 1
        g, h = info_matrices(zs, v0, 0.0, estimator, v_eps=v)
        _, lg = np.linalg.slogdet(np.tensordot(w, g, axes=1))
        sh, lh = np.linalg.slogdet(np.tensordot(w, h, axes=1))
        # a singular V gives a singular covariance: log det is -inf, never a maximum
        best = max(best, -2.0 * lg + lh if sh > 0 else -np.inf)
    return best, accepted
