"""DC iteration for minimax D-optimal weights.

Each outer step linearizes the concave part ``-h`` at the current weights
and minimizes the convex majorant ``-2 log det G(w) + b'w`` over the simplex,
where ``b_a = tr(H(w0)^-1 H_a)``.  The inner problem is solved by
Frank-Wolfe with away steps and exact line search.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleModel, SingularError
from .linalg import cholesky, whiten

log = logging.getLogger(__name__)

LINE_SEARCH_WIDTH = 1e-12
MAX_HALVINGS = 60
REASSEMBLE_EVERY = 200


@dataclass
class SolverOptions:
    eta1: float = 1e-5
    inner_gap_tol: float = 1e-7
    max_outer: int = 200
    max_inner: int = 50000
    support_threshold: float = 1e-5
    eta2: float = 1e-3
    multistart: int = 1

    def __post_init__(self):
        for name in ("eta1", "inner_gap_tol", "support_threshold", "eta2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer", "max_inner", "multistart"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class InnerResult:
    u: np.ndarray
    gap: float
    iterations: int
    converged: bool
    stalled: bool = False


@dataclass
class SolveResult:
    weights: np.ndarray
    atom_weights: np.ndarray
    loss: float
    outer_iterations: int
    inner_iteration_counts: list
    trace: list
    certificate: object
    wall_time: float
    converged: bool
    init_loss: float = float("nan")
    starts: list = field(default_factory=list)
    anchor: np.ndarray = None  # atom weights the final inner solve was anchored at

    @property
    def max_violation(self):
        return self.certificate.max_violation

    def support(self, threshold=1e-5):
        return np.flatnonzero(self.weights >= threshold)


# --------------------------------------------------------------------------
# line searches on the 1-D restriction of the surrogate


def _spectrum(xs, q):
    """Nonzero-capable eigenvalues of G^-1 G_s plus the count of forced zeros."""
    k = xs.shape[1]
    if k < q:
        lam = np.linalg.eigvalsh(xs.T @ xs)
        zeros = q - k
    else:
        lam = np.linalg.eigvalsh(xs @ xs.T)
        zeros = 0
    return np.maximum(lam, 0.0), zeros


def _bisect(dphi, hi):
    """Minimizer of a convex function on [0, hi] given its derivative, dphi(0) < 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        top = dphi(np.float64(hi))
    if np.isfinite(top) and top <= 0:
        return hi
    lo = 0.0
    while hi - lo > LINE_SEARCH_WIDTH:
        mid = 0.5 * (lo + hi)
        if dphi(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _toward_step(lam, zeros, slope):
    """Step toward a vertex: G(γ) = (1-γ) G + γ G_s."""

    def dphi(g):
        return -2.0 * (np.sum((lam - 1.0) / (1.0 - g + g * lam)) - zeros / (1.0 - g)) + slope

    return _bisect(dphi, 1.0)


def _away_step(lam, zeros, slope, hi):
    """Step away from a vertex: G(γ) = (1+γ) G - γ G_v."""
    mu = 1.0 - lam

    def dphi(g):
        return -2.0 * (np.sum(mu / (1.0 + g * mu)) + zeros / (1.0 + g)) + slope

    return _bisect(dphi, hi)


# --------------------------------------------------------------------------
# inner convex solver


def _frank_wolfe(crit, u0, lin, tol, max_iter):
    """Minimize ``-2 log det G(u) + lin'u`` over the simplex starting from ``u0``."""
    q, k = crit.q, crit.k
    flat, atoms = crit.flat_g, crit.atom_g
    u = np.array(u0, dtype=np.float64)
    gmat = crit.g_matrix(u)
    low = cholesky(gmat, symmetrize=False)
    it = 0
    gap = np.inf
    stalled = False
    while True:
        x = whiten(low, flat)
        t = np.einsum("ij,ij->i", x, x).reshape(-1, k).sum(axis=1)
        grad = lin - 2.0 * t
        gu = float(grad @ u)
        s = int(np.argmin(grad))
        gap = gu - float(grad[s])
        if gap <= tol or it >= max_iter:
            break
        active = np.flatnonzero(u > 0)
        v = int(active[np.argmax(grad[active])])
        away_gap = float(grad[v]) - gu
        lin_u = float(lin @ u)
        if gap >= away_gap or u[v] >= 1.0:
            lam, zeros = _spectrum(x[s * k:(s + 1) * k].T, q)
            gamma = _toward_step(lam, zeros, float(lin[s]) - lin_u)
            vertex, sign, hi = s, 1.0, 1.0
        else:
            lam, zeros = _spectrum(x[v * k:(v + 1) * k].T, q)
            hi = u[v] / (1.0 - u[v])
            gamma = _away_step(lam, zeros, lin_u - float(lin[v]), hi)
            vertex, sign = v, -1.0
        f = atoms[vertex]
        gv = f.T @ f
        for _ in range(MAX_HALVINGS):
            if sign > 0:
                new_u = (1.0 - gamma) * u
                new_u[vertex] += gamma
                new_g = (1.0 - gamma) * gmat + gamma * gv
            else:
                new_u = (1.0 + gamma) * u
                new_u[vertex] = 0.0 if gamma >= hi else new_u[vertex] - gamma
                new_g = (1.0 + gamma) * gmat - gamma * gv
            try:
                new_low = cholesky(new_g, symmetrize=False)
                break
            except SingularError:
                gamma *= 0.5
        else:
            stalled = True
            break
        it += 1
        u, gmat, low = new_u, 0.5 * (new_g + new_g.T), new_low
        if it % REASSEMBLE_EVERY == 0:
            u = np.maximum(u, 0.0)
            u /= u.sum()
            gmat = crit.g_matrix(u)
            low = cholesky(gmat, symmetrize=False)
    u = np.maximum(u, 0.0)
    u /= u.sum()
    return InnerResult(u, gap, it, gap <= tol, stalled)


def solve_inner(crit, anchor, tol=1e-7, max_iter=50000, start=None):
    """Minimize ``g(w) - v(w, anchor)`` over the simplex.

    ``v`` is the tangent plane of ``h`` at ``anchor``; the search starts at
    ``start`` (default: the anchor itself, which makes every DC step a
    descent step).
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    lin = crit.state(anchor).h_traces()
    u0 = anchor if start is None else start
    return _frank_wolfe(crit, u0, lin, tol, max_iter)


def init_weights(crit, opts=None, central=True):
    """Minimizer of ``g`` alone, started from uniform weights.

    The minimizer of ``g`` is often not unique (only the information matrix
    is).  With ``central`` the returned weights are the analytic center of
    the set of minimizers, which is the limit an interior-point method
    reaches; the DC iteration is sensitive to this choice.
    """
    opts = opts or SolverOptions()
    u0 = crit.uniform()
    try:
        cholesky(crit.g_matrix(u0), symmetrize=False)
    except SingularError:
        raise InfeasibleModel(
            "information matrix is singular even at uniform weights; "
            "the model is not identifiable on this design space") from None
    res = _frank_wolfe(crit, u0, np.zeros(crit.n_atoms), opts.inner_gap_tol, opts.max_inner)
    log.debug("bootstrap: %d iterations, gap %.2e", res.iterations, res.gap)
    if central:
        res.u = central_weights(crit, res.u)
    return res


FACE_TOL = 1e-3


def central_weights(crit, u):
    """Analytic center of ``{v >= 0 : G(v) = G(u)}`` restricted to near-optimal atoms.

    Candidate atoms are those whose directional value ``tr(G^-1 G_a)`` is
    within ``FACE_TOL`` of ``q`` plus the current support.  Coordinates that
    are zero on the whole face are dropped; the center maximizes
    ``sum_a |a| log v_a`` by damped Newton in the null space of the
    equality constraints.  Falls back to ``u`` when the face is a point.
    """
    from scipy.optimize import linprog

    t = crit.state(u).g_traces()
    cand = np.flatnonzero((t >= crit.q - FACE_TOL) | (u > 0))
    if cand.size < 2:
        return u
    iu = np.triu_indices(crit.q)
    mats = np.stack([crit.atom_matrix(a)[iu] for a in cand], axis=1)
    eq = np.vstack([mats / np.abs(mats).max(), np.ones(cand.size)])
    base = u[cand].copy()
    _, sv, vt = np.linalg.svd(eq)
    rank = int(np.sum(sv > 1e-9 * sv[0]))
    null = vt[rank:].T
    if null.shape[1] == 0:
        return u
    nz = null.shape[1]
    # which coordinates can move off zero at all
    keep = np.ones(cand.size, dtype=bool)
    for j in np.flatnonzero(base <= 1e-9):
        lp = linprog(-null[j], A_ub=-null, b_ub=base, bounds=[(-1, 1)] * nz, method="highs")
        if lp.status != 0 or base[j] + null[j] @ lp.x <= 1e-9:
            keep[j] = False
    if not np.all(keep):
        # restrict to the movable coordinates and pin the rest at their values
        fixed = ~keep
        sub = null[keep]
        proj = np.linalg.svd(null[fixed], full_matrices=True)[2] if fixed.any() else None
        if proj is not None:
            r = int(np.sum(np.linalg.svd(null[fixed], compute_uv=False) > 1e-9))
            free = proj[r:].T
            null = null @ free
            sub = null[keep]
        nz = null.shape[1]
        if nz == 0:
            return u
    else:
        sub = null
    lp = linprog(np.r_[np.zeros(nz), -1.0], A_ub=np.c_[-sub, np.ones(sub.shape[0])],
                 b_ub=base[keep], bounds=[(-1, 1)] * nz + [(None, 1.0)], method="highs")
    if lp.status != 0 or lp.x[-1] <= 0:
        return u
    z = lp.x[:nz]
    wts = crit.sizes[cand][keep]
    base_k = base[keep]

    def value(z):
        v = base_k + sub @ z
        return np.sum(wts * np.log(v)) if np.all(v > 0) else -np.inf

    for _ in range(100):
        v = base_k + sub @ z
        grad = sub.T @ (wts / v)
        hess = (sub.T * (wts / v**2)) @ sub
        step = np.linalg.solve(hess, grad)
        dec = float(grad @ step)
        if dec < 1e-20:
            break
        a, f0 = 1.0, value(z)
        while value(z + a * step) < f0 + 0.25 * a * dec and a > 1e-12:
            a *= 0.5
        z = z + a * step
    out = np.zeros_like(u)
    vals = np.maximum(base_k + sub @ z, 0.0)
    out[cand[keep]] = vals
    return out / out.sum()


def _start_list(crit, base, count):
    """Base start, the uniform design, the heavier half of the base support,
    then starts concentrated on alternating atom blocks."""
    masks = []
    support = np.flatnonzero(base > 0)
    if support.size > 1:
        heavy = support[np.argsort(-base[support], kind="stable")[: (support.size + 1) // 2]]
        masks.append(np.isin(np.arange(crit.n_atoms), heavy))
    idx = np.arange(crit.n_atoms)
    stride = 1
    while stride < crit.n_atoms:
        masks += [(idx // stride) % 2 == 0, (idx // stride) % 2 == 1]
        stride *= 2
    starts = [base]
    if count > 1:
        starts.append(crit.uniform())
    for j in range(2, count):
        mask = masks[(j - 2) % len(masks)] if masks else np.ones(crit.n_atoms, bool)
        alt = np.where(mask, crit.uniform(), 0.0)
        if alt.sum() <= 0:
            alt = crit.uniform()
        # a little of the base keeps the information matrix nonsingular
        starts.append(0.1 * base + 0.9 * alt / alt.sum())
    return starts


def _dc_from(crit, u, opts):
    state = crit.state(u)
    cur = state.loss()
    trace = [cur]
    counts = []
    converged = False
    inner_ok = True
    anchor = u
    for _ in range(opts.max_outer):
        anchor = u
        lin = state.h_traces()
        inner = _frank_wolfe(crit, u, lin, opts.inner_gap_tol, opts.max_inner)
        counts.append(inner.iterations)
        inner_ok = inner_ok and inner.converged
        new_state = crit.state(inner.u)
        new = new_state.loss()
        if new > cur + 1e-9:
            log.warning("DC step increased loss by %.3e", new - cur)
        step = float(np.linalg.norm(crit.expand(inner.u) - crit.expand(u)))
        u, state, cur = inner.u, new_state, new
        trace.append(cur)
        log.debug("outer %d loss %.10f step %.3e inner %d gap %.2e",
                  len(counts), cur, step, inner.iterations, inner.gap)
        if step < opts.eta1:
            converged = True
            break
    return u, cur, trace, counts, converged and inner_ok, anchor


def solve_dc(crit, opts=None, start=None):
    """Run the DC iteration to a first-order stationary design."""
    from .verify import certify

    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    init = None
    if start is None:
        init = init_weights(crit, opts)
        start = init.u
    init_loss = crit.loss_at(start)
    runs = []
    for s in _start_list(crit, np.asarray(start, dtype=np.float64), opts.multistart):
        u, cur, trace, counts, ok, anchor = _dc_from(crit, s, opts)
        if init is not None and not runs:
            counts = [init.iterations] + counts
            ok = ok and init.converged
        runs.append((cur, u, trace, counts, ok, anchor))
    best = min(range(len(runs)), key=lambda j: (runs[j][0], j))
    cur, u, trace, counts, ok, anchor = runs[best]
    w = crit.expand(u)
    cert = certify(crit, w, opts.eta2)
    return SolveResult(
        weights=w,
        atom_weights=u,
        loss=float(crit.loss_at(u)),
        outer_iterations=len(trace) - 1,
        inner_iteration_counts=counts,
        trace=trace,
        certificate=cert,
        wall_time=time.perf_counter() - t0,
        converged=bool(ok),
        init_loss=float(init_loss),
        starts=[r[0] for r in runs],
        anchor=anchor,
    )
