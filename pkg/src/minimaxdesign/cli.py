"""Command line driver: ``minimaxdesign solve <config> [--out DIR] [--workers K] [--verify-only RESULT]``.

Exit codes: 0 when every case converged and certified, 1 when any case
failed (or a requested invariance check failed), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import factor_from_dict, load_config
from .criterion import Criterion
from .errors import ConfigError, DesignError, NotApplicable
from .model import ResponseModel
from .space import build_orbits, build_space, symmetry_axes
from .verify import certify, check_scale, check_sign_flip

log = logging.getLogger(__name__)

WORKERS_ENV = "MINIMAXDESIGN_WORKERS"
EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


# --------------------------------------------------------------------------
# file output


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _coord_names(p):
    return [f"x{r}" for r in range(1, p + 1)]


def _fmt(x):
    return repr(float(x))


def plot_data(points, d, weights):
    """Certificate surface: one row per candidate point."""
    p = points.shape[1]
    lines = [f"# columns: {', '.join(_coord_names(p))} = point coordinates; "
             "d = 2 tr(G^-1 G_i) - tr(H^-1 H_i) - q; weight = design weight",
             ",".join(_coord_names(p) + ["d", "weight"])]
    for x, di, wi in zip(points, d, weights):
        lines.append(",".join([_fmt(v) for v in x] + [_fmt(di), _fmt(wi)]))
    return "\n".join(lines) + "\n"


def emit_plot_data(result, points, path):
    write_atomic(path, plot_data(points, result["d"], result["weights"]))


def _design_csv(points, weights, threshold):
    p = points.shape[1]
    lines = [",".join(_coord_names(p) + ["weight"])]
    sup = np.flatnonzero(weights >= threshold)
    for i in sup:
        lines.append(",".join([_fmt(v) for v in points[i]] + [_fmt(weights[i])]))
    lines.append("# residual below threshold: " + _fmt(weights.sum() - weights[sup].sum()))
    return "\n".join(lines) + "\n"


def _trace_csv(trace, counts):
    lines = ["outer,loss,inner_iterations"]
    for k, val in enumerate(trace):
        lines.append(f"{k},{_fmt(val)},{counts[k] if k < len(counts) else ''}")
    return "\n".join(lines) + "\n"


def design_table(points, results, threshold):
    """Rows of support points (union over cases) with one weight column per case."""
    ok = [r for r in results if "weights" in r]
    if not ok:
        return [], []
    w = np.array([r["weights"] for r in ok])
    support = np.flatnonzero((w >= threshold).any(axis=0))
    rows = [(points[i], w[:, i]) for i in support]
    return ok, rows


def render_table_csv(points, results, threshold, timing):
    ok, rows = design_table(points, results, threshold)
    p = points.shape[1]
    labels = [r["label"] for r in ok]
    lines = [",".join(_coord_names(p) + labels)]
    for x, ws in rows:
        lines.append(",".join([_fmt(v) for v in x] + [_fmt(v) for v in ws]))
    lines.append(",".join(["loss"] + [""] * (p - 1) + [_fmt(r["loss"]) for r in ok]))
    lines.append(",".join(["time_s"] + [""] * (p - 1) + [f"{timing.get(r['label'], float('nan')):.3f}" for r in ok]))
    resid = [sum(r["weights"]) - sum(v for v in r["weights"] if v >= threshold) for r in ok]
    lines.append(",".join(["residual"] + [""] * (p - 1) + [_fmt(v) for v in resid]))
    return "\n".join(lines) + "\n"


def render_table_text(points, results, threshold, timing):
    ok, rows = design_table(points, results, threshold)
    if not ok:
        return "no successful cases\n"
    labels = [r["label"] for r in ok]
    width = max(10, *(len(s) for s in labels))
    pt = ["(" + ",".join(f"{v:g}" for v in x) + ")" for x, _ in rows]
    left = max([len("support point")] + [len(s) for s in pt])
    head = "support point".ljust(left) + "".join(s.rjust(width + 2) for s in labels)
    out = [head, "-" * len(head)]
    for s, (_, ws) in zip(pt, rows):
        out.append(s.ljust(left) + "".join(f"{v:.4f}".rjust(width + 2) for v in ws))
    out.append("-" * len(head))
    out.append("loss".ljust(left) + "".join(f"{r['loss']:.4f}".rjust(width + 2) for r in ok))
    out.append("time (s)".ljust(left)
               + "".join(f"{timing.get(r['label'], float('nan')):.2f}".rjust(width + 2) for r in ok))
    resid = [sum(r["weights"]) - sum(v for v in r["weights"] if v >= threshold) for r in ok]
    out.append(f"below {threshold:g}".ljust(left) + "".join(f"{v:.2e}".rjust(width + 2) for v in resid))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# solving one case


def _resolve_axes(case, space, model):
    if case.symmetry == "off":
        return []
    if case.symmetry == "auto":
        return symmetry_axes(space, model)
    allowed = set(symmetry_axes(space, model))
    bad = [a for a in case.symmetry if a not in allowed]
    if bad:
        raise DesignError(f"requested symmetry axes {bad} do not satisfy the reflection premise")
    return list(case.symmetry)


def _case_header(case, axes):
    return {
        "label": case.label,
        "v0_name": case.v0_name,
        "p": case.p,
        "responses": list(case.responses),
        "v0": case.v0,
        "alpha": case.alpha,
        "estimator": case.estimator,
        "factors": case.factors,
        "symmetry_axes": list(axes),
        "solver": case.solver,
    }


def _run_checks(case, model, space, axes, opts, res):
    out = []
    tol = case.checks["tol"]
    for signs in case.checks["sign_flip"]:
        rep = check_sign_flip(model, space, signs, axes, opts, tol, base=res)
        out.append({"kind": "sign_flip", "param": signs, "passed": rep.passed,
                    "max_weight_diff": rep.max_weight_diff, "loss_diff": rep.loss_diff,
                    "support_match": rep.support_match})
    for t in case.checks["scale"]:
        try:
            rep = check_scale(model, space, t, axes, opts, tol, base=res)
        except NotApplicable as exc:
            out.append({"kind": "scale", "param": t, "passed": None, "not_applicable": str(exc)})
            continue
        out.append({"kind": "scale", "param": t, "passed": rep.passed,
                    "max_weight_diff": rep.max_weight_diff, "loss_diff": rep.loss_diff,
                    "support_match": rep.support_match})
    return out


def solve_case(case):
    """Solve, certify and check one case.  Returns ``(result, seconds)``; never raises DesignError."""
    from .solver import solve_dc

    t0 = time.perf_counter()
    result = {"label": case.label}
    try:
        model = case.model()
        space = build_space(case.factor_specs(), case.cap)
        axes = _resolve_axes(case, space, model)
        result = _case_header(case, axes)
        opts = case.options()
        orbits = build_orbits(space, axes) if axes else None
        res = solve_dc(Criterion(model, space, orbits), opts)
        cert = res.certificate
        result.update({
            "loss": res.loss,
            "init_loss": res.init_loss,
            "converged": res.converged,
            "outer_iterations": res.outer_iterations,
            "inner_iteration_counts": [int(c) for c in res.inner_iteration_counts],
            "trace": [float(v) for v in res.trace],
            "multistart_losses": [float(v) for v in res.starts],
            "certificate": {"eta2": cert.eta2, "max_violation": cert.max_violation,
                            "passed": cert.passed, "weighted_sum": cert.weighted_sum},
            "weights": [float(v) for v in res.weights],
            "d": [float(v) for v in cert.d],
        })
        checks = _run_checks(case, model, space, axes, opts, res)
        if checks:
            result["checks"] = checks
        failed = (not res.converged or not cert.passed
                  or any(c["passed"] is False for c in checks))
        result["status"] = "failed" if failed else "ok"
    except DesignError as exc:
        result["status"] = "error"
        result["error"] = f"{type(exc).__name__}: {exc}"
    return result, time.perf_counter() - t0


def write_case(out_dir, result, seconds):
    """Write every per-case artifact under ``out_dir/<label>/``."""
    case_dir = Path(out_dir) / result["label"]
    write_atomic(case_dir / "result.json", json.dumps(result, indent=1) + "\n")
    write_atomic(case_dir / "timing.json", json.dumps({"wall_time_s": seconds}) + "\n")
    if "weights" not in result:
        return
    space = build_space([factor_from_dict(f) for f in result["factors"]], 10**12)
    w = np.array(result["weights"])
    thr = result["solver"].get("support_threshold", 1e-5)
    write_atomic(case_dir / "design.csv", _design_csv(space.points, w, thr))
    emit_plot_data(result, space.points, case_dir / "certificate.csv")
    write_atomic(case_dir / "trace.csv", _trace_csv(result["trace"], result["inner_iteration_counts"]))


# --------------------------------------------------------------------------
# commands


def recertify(result):
    """Rebuild the problem stored in a result document and certify its weights."""
    model = ResponseModel.from_text(result["p"], result["responses"], result["v0"],
                                    result["alpha"], result["estimator"])
    space = build_space([factor_from_dict(f) for f in result["factors"]], 10**12)
    axes = result.get("symmetry_axes") or []
    orbits = build_orbits(space, axes) if axes else None
    eta2 = result.get("certificate", {}).get("eta2", 1e-3)
    return certify(Criterion(model, space, orbits), np.array(result["weights"]), eta2)


def verify_only(path):
    try:
        result = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        print(f"cannot read result {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if "weights" not in result:
        print(f"{path}: result holds no weights (status {result.get('status')})", file=sys.stderr)
        return EXIT_FAILED
    cert = recertify(result)
    drift = float(np.max(np.abs(cert.d - np.array(result["d"])))) if "d" in result else float("nan")
    print(f"{result['label']}: max d = {cert.max_violation:.3e} (eta2 = {cert.eta2:g}), "
          f"sum w d = {cert.weighted_sum:.2e}, drift from stored d = {drift:.2e}: "
          f"{'PASS' if cert.passed else 'FAIL'}")
    return EXIT_OK if cert.passed else EXIT_FAILED


def default_workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {raw!r}") from None


def run(config_path, out=None, workers=None):
    """Solve every case of a config; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        workers = default_workers() if workers is None else workers
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out) if out else cfg.output_dir
    if workers > 1 and len(cfg.cases) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(solve_case, cfg.cases))
    else:
        outcomes = [solve_case(c) for c in cfg.cases]
    timing = {}
    for result, seconds in outcomes:
        write_case(out_dir, result, seconds)
        timing[result["label"]] = seconds
        status = result["status"]
        extra = result.get("error") or (
            f"loss {result['loss']:.4f}, max d {result['certificate']['max_violation']:.2e}, "
            f"outer {result['outer_iterations']}, converged {result['converged']}")
        print(f"{result['label']}: {status} ({extra}) [{seconds:.1f}s]")
    results = [r for r, _ in outcomes]
    ok = [r for r in results if "weights" in r]
    if ok:
        space = build_space([factor_from_dict(f) for f in ok[0]["factors"]], 10**12)
        thr = cfg.solver.get("support_threshold", 1e-5)
        write_atomic(out_dir / "design_table.csv", render_table_csv(space.points, results, thr, timing))
        write_atomic(out_dir / "design_table.txt", render_table_text(space.points, results, thr, timing))
    return EXIT_OK if all(r["status"] == "ok" for r in results) else EXIT_FAILED


def build_parser():
    ap = argparse.ArgumentParser(prog="minimaxdesign", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve every case of a YAML config")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides output.dir)")
    s.add_argument("--workers", type=int, help=f"parallel cases (default ${WORKERS_ENV} or 1)")
    s.add_argument("--verify-only", metavar="RESULT",
                   help="re-certify a written result.json instead of solving")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verify_only:
        try:
            load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return verify_only(args.verify_only)
    if args.workers is not None and args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.config, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
