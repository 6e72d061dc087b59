"""YAML run configuration: schema checks and expansion into solve cases.

Schema (keys not listed are rejected)::

    model:
      p: 2                          # number of design variables
      responses: ["1, x1", ...]     # one basis string per response
      v0: [[4, 3], [3, 9]]          # m x m matrix, or a mapping name -> matrix
      alpha: [0, 3]                 # scalar or nonempty list, each >= 0
      estimator: both               # GLSE | OLSE | both
    space:
      factors:
        - grid: [-1, 1, 21]         # lo, hi, count (endpoints included)
        - levels: [0, 1]
      cap: 1000000                  # optional
    symmetry: auto                  # auto | off | list of axes
    solver: {eta1: 1.0e-5, ...}     # any SolverOptions field
    checks:                         # optional invariance suites
      sign_flip: [[1, -1]]
      scale: [[2, 0.5]]
      tol: 1.0e-4
    output:
      dir: out                      # relative to the config file
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .basis import parse_basis
from .errors import ConfigError, DesignError
from .model import ResponseModel
from .solver import SolverOptions
from .space import Grid, Levels

ESTIMATORS = ("GLSE", "OLSE")
_TOP_KEYS = {"model", "space", "symmetry", "solver", "checks", "output"}


@dataclass
class Case:
    """One (covariance variant, estimator, alpha) combination."""

    label: str
    v0_name: str
    p: int
    responses: tuple
    v0: list
    alpha: float
    estimator: str
    factors: list
    cap: int
    symmetry: object
    solver: dict
    checks: dict

    def model(self):
        return ResponseModel.from_text(self.p, self.responses, self.v0, self.alpha, self.estimator)

    def factor_specs(self):
        return [factor_from_dict(f) for f in self.factors]

    def options(self):
        return SolverOptions(**self.solver)


@dataclass
class RunConfig:
    path: Path
    cases: list
    output_dir: Path
    solver: dict = field(default_factory=dict)


def factor_from_dict(spec):
    if "grid" in spec:
        lo, hi, n = spec["grid"]
        return Grid(float(lo), float(hi), int(n))
    return Levels(tuple(float(v) for v in spec["levels"]))


def factor_to_dict(f):
    if isinstance(f, Grid):
        return {"grid": [f.lo, f.hi, f.count]}
    return {"levels": list(f.values_)}


def _num(value, path):
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number, got a boolean")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a number, got {value!r}") from None
    if not np.isfinite(out):
        raise ConfigError(path, "must be finite")
    return out


def _matrix(value, path):
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(path, "expected a square matrix as a list of rows")
    rows = [[_num(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(value)]
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError(path, "matrix is not square")
    return rows


def _mapping(value, path, allowed):
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a mapping")
    extra = set(value) - set(allowed)
    if extra:
        raise ConfigError(path, f"unknown keys {sorted(extra)}")
    return value


def _parse_model(raw):
    raw = _mapping(raw, "model", {"p", "responses", "v0", "alpha", "estimator"})
    for key in ("p", "responses", "v0"):
        if key not in raw:
            raise ConfigError(f"model.{key}", "missing")
    p = raw["p"]
    if isinstance(p, bool) or not isinstance(p, int) or p < 1:
        raise ConfigError("model.p", f"expected a positive integer, got {p!r}")
    responses = raw["responses"]
    if not isinstance(responses, list) or not responses:
        raise ConfigError("model.responses", "expected a nonempty list of basis strings")
    for j, text in enumerate(responses):
        if not isinstance(text, str) or not text.strip():
            raise ConfigError(f"model.responses[{j}]", f"response {j + 1} has an empty basis")
        try:
            parse_basis(text, p)
        except DesignError as exc:
            raise ConfigError(f"model.responses[{j}]", str(exc)) from None
    if isinstance(raw["v0"], dict):
        if not raw["v0"]:
            raise ConfigError("model.v0", "no covariance variants given")
        v0s = {str(k): _matrix(v, f"model.v0.{k}") for k, v in raw["v0"].items()}
    else:
        v0s = {"v0": _matrix(raw["v0"], "model.v0")}
    alpha = raw.get("alpha", 0.0)
    alphas = alpha if isinstance(alpha, list) else [alpha]
    if not alphas:
        raise ConfigError("model.alpha", "alpha list is empty")
    alphas = [_num(a, f"model.alpha[{i}]") for i, a in enumerate(alphas)]
    for i, a in enumerate(alphas):
        if a < 0:
            raise ConfigError(f"model.alpha[{i}]", f"alpha must be >= 0, got {a}")
    est = str(raw.get("estimator", "GLSE")).upper()
    if est == "BOTH":
        ests = list(ESTIMATORS)
    elif est in ESTIMATORS:
        ests = [est]
    else:
        raise ConfigError("model.estimator", f"expected GLSE, OLSE or both, got {raw['estimator']!r}")
    return p, tuple(responses), v0s, alphas, ests


def _parse_space(raw):
    raw = _mapping(raw, "space", {"factors", "cap"})
    facs = raw.get("factors")
    if not isinstance(facs, list) or not facs:
        raise ConfigError("space.factors", "expected a nonempty list")
    out = []
    for r, f in enumerate(facs):
        path = f"space.factors[{r}]"
        if not isinstance(f, dict) or len(f) != 1 or next(iter(f)) not in ("grid", "levels"):
            raise ConfigError(path, "expected {grid: [lo, hi, count]} or {levels: [...]}")
        try:
            if "grid" in f:
                g = f["grid"]
                if not isinstance(g, list) or len(g) != 3:
                    raise ConfigError(path + ".grid", "expected [lo, hi, count]")
                lo, hi = _num(g[0], path + ".grid[0]"), _num(g[1], path + ".grid[1]")
                n = g[2]
                if isinstance(n, bool) or not isinstance(n, int):
                    raise ConfigError(path + ".grid[2]", "count must be an integer")
                spec = Grid(lo, hi, n)
            else:
                vals = f["levels"]
                if not isinstance(vals, list):
                    raise ConfigError(path + ".levels", "expected a list")
                spec = Levels(tuple(_num(v, f"{path}.levels[{i}]") for i, v in enumerate(vals)))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(path, str(exc)) from None
        out.append(factor_to_dict(spec))
    cap = raw.get("cap", 10**6)
    if isinstance(cap, bool) or not isinstance(cap, int) or cap < 1:
        raise ConfigError("space.cap", "expected a positive integer")
    return out, cap


def _parse_symmetry(raw, p):
    if raw is None or raw == "auto":
        return "auto"
    if raw in ("off", False):
        return "off"
    if isinstance(raw, list):
        axes = []
        for i, a in enumerate(raw):
            if isinstance(a, bool) or not isinstance(a, int) or not 1 <= a <= p:
                raise ConfigError(f"symmetry[{i}]", f"axis must be an integer in 1..{p}")
            axes.append(a)
        return sorted(set(axes))
    raise ConfigError("symmetry", "expected auto, off or a list of axes")


def _parse_solver(raw):
    raw = _mapping(raw or {}, "solver", [f.name for f in dataclasses.fields(SolverOptions)])
    out = {}
    for f in dataclasses.fields(SolverOptions):
        if f.name not in raw:
            continue
        path = f"solver.{f.name}"
        val = raw[f.name]
        if f.type in ("int", int):
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(path, "expected an integer")
            out[f.name] = val
        else:
            out[f.name] = _num(val, path)
    try:
        SolverOptions(**out)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None
    return out


def _parse_checks(raw, m, p):
    raw = _mapping(raw or {}, "checks", {"sign_flip", "scale", "tol"})
    out = {"sign_flip": [], "scale": [], "tol": _num(raw.get("tol", 1e-4), "checks.tol")}
    for i, s in enumerate(raw.get("sign_flip") or []):
        path = f"checks.sign_flip[{i}]"
        if not isinstance(s, list) or len(s) != m or any(v not in (1, -1) for v in s):
            raise ConfigError(path, f"expected a list of {m} entries, each 1 or -1")
        out["sign_flip"].append([int(v) for v in s])
    for i, t in enumerate(raw.get("scale") or []):
        path = f"checks.scale[{i}]"
        if not isinstance(t, list) or len(t) != p:
            raise ConfigError(path, f"expected {p} positive factors")
        vals = [_num(v, f"{path}[{j}]") for j, v in enumerate(t)]
        if any(v <= 0 for v in vals):
            raise ConfigError(path, "scale factors must be positive")
        out["scale"].append(vals)
    return out


def case_label(v0_name, estimator, alpha, multi_v0):
    base = f"{estimator}_a{alpha:g}"
    return f"{v0_name}_{base}" if multi_v0 else base


def parse_config(raw, path=Path("config.yaml")):
    """Validate a parsed YAML document and expand it into cases."""
    path = Path(path)
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a mapping")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError("", f"unknown top-level keys {sorted(extra)}")
    for key in ("model", "space"):
        if key not in raw:
            raise ConfigError(key, "missing")
    p, responses, v0s, alphas, ests = _parse_model(raw["model"])
    factors, cap = _parse_space(raw["space"])
    if len(factors) != p:
        raise ConfigError("space.factors", f"model has p={p} but {len(factors)} factors are given")
    symmetry = _parse_symmetry(raw.get("symmetry", "auto"), p)
    solver = _parse_solver(raw.get("solver"))
    checks = _parse_checks(raw.get("checks"), len(responses), p)
    out_raw = _mapping(raw.get("output") or {}, "output", {"dir"})
    out_dir = Path(out_raw.get("dir", "out"))
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir

    cases = []
    for name, v0 in v0s.items():
        if len(v0) != len(responses):
            raise ConfigError(f"model.v0{'' if name == 'v0' else '.' + name}",
                              f"expected {len(responses)}x{len(responses)}, got {len(v0)}x{len(v0)}")
        for est in ests:
            for a in alphas:
                case = Case(case_label(name, est, a, len(v0s) > 1), name, p, responses, v0, a,
                            est, factors, cap, symmetry, solver, checks)
                try:
                    case.model()
                except DesignError as exc:
                    raise ConfigError("model", str(exc)) from None
                cases.append(case)
    return RunConfig(path, cases, out_dir, solver)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"invalid YAML: {exc}") from None
    return parse_config(raw, path)
