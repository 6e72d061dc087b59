"""Multi-response linear model: response blocks, covariance, estimator."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .basis import BasisVector, eval_basis, parse_basis
from .errors import ModelError, SingularError
from .linalg import cholesky


class Estimator(str, enum.Enum):
    GLSE = "GLSE"
    OLSE = "OLSE"


@dataclass(frozen=True)
class ResponseModel:
    """Model ``y = Z(x) beta + eps`` with ``Cov(eps)`` near ``v0``.

    ``blocks[j]`` is the basis of response j; parameters are ordered block
    by block.  ``alpha`` is the radius of the covariance neighbourhood.
    """

    p: int
    blocks: tuple
    v0: np.ndarray
    alpha: float = 0.0
    estimator: Estimator = Estimator.GLSE

    @classmethod
    def from_text(cls, p, bases, v0, alpha=0.0, estimator="GLSE"):
        blocks = tuple(b if isinstance(b, BasisVector) else parse_basis(b, p) for b in bases)
        model = cls(int(p), blocks, np.array(v0, dtype=np.float64), float(alpha),
                    Estimator(estimator))
        validate_model(model)
        return model

    @property
    def m(self):
        return len(self.blocks)

    @property
    def sizes(self):
        return tuple(len(b) for b in self.blocks)

    @property
    def q(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        return tuple(np.cumsum((0,) + self.sizes)[:-1].tolist())

    def replace(self, **changes):
        kw = dict(p=self.p, blocks=self.blocks, v0=self.v0, alpha=self.alpha,
                  estimator=self.estimator)
        kw.update(changes)
        kw["estimator"] = Estimator(kw["estimator"])
        kw["v0"] = np.array(kw["v0"], dtype=np.float64)
        return ResponseModel(**kw)


def validate_model(model):
    if model.p < 1:
        raise ModelError(f"p must be >= 1, got {model.p}")
    if model.m < 1:
        raise ModelError("model needs at least one response block")
    for j, b in enumerate(model.blocks):
        if len(b) < 1:
            raise ModelError(f"response {j + 1}: empty basis")
        if b.max_var > model.p:
            raise ModelError(f"response {j + 1}: uses x{b.max_var} but p={model.p}")
    v0 = np.asarray(model.v0)
    if v0.shape != (model.m, model.m):
        raise ModelError(f"v0 must be {model.m}x{model.m}, got shape {v0.shape}")
    if not np.allclose(v0, v0.T, rtol=0, atol=1e-12 * max(1.0, np.abs(v0).max())):
        raise ModelError("v0 is not symmetric")
    try:
        cholesky(v0)
    except SingularError:
        raise ModelError("v0 is not positive definite") from None
    if not np.isfinite(model.alpha) or model.alpha < 0:
        raise ModelError(f"alpha must be >= 0, got {model.alpha}")
    return True


def build_z(model, point):
    """The m x q regressor matrix at one design point."""
    return build_z_all(model, np.asarray(point, dtype=np.float64)[None, :])[0]


def build_z_all(model, points):
    """Regressor matrices at every row of ``points``: shape (n, m, q)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    z = np.zeros((points.shape[0], model.m, model.q))
    for j, (b, off) in enumerate(zip(model.blocks, model.offsets)):
        z[:, j, off:off + len(b)] = eval_basis(b, points)
    return z
