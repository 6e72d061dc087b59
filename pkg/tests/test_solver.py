import numpy as np
import pytest

from minimaxdesign import (Criterion, Grid, Levels, ResponseModel, SolverOptions, build_orbits, build_space,
                           grad_g, grad_h, init_weights, solve_dc, solve_inner, surrogate_grad)
from minimaxdesign.errors import InfeasibleModel
from minimaxdesign.model import build_z_all
from minimaxdesign.solver import central_weights

import oracle
from designs import EX3_EDGE, EX3_MID, ex1_criterion, ex2_criterion, ex3_model, ex3_space


def line_problem(alpha=0.0, estimator="GLSE"):
    model = ResponseModel.from_text(1, ["1, x1"], [[1.0]], alpha, estimator)
    return Criterion(model, build_space([Grid(-1, 1, 3)]))


def test_options_validation():
    SolverOptions()
    with pytest.raises(ValueError):
        SolverOptions(eta1=0)
    with pytest.raises(ValueError):
        SolverOptions(max_inner=0)


def test_bootstrap_on_line():
    u = init_weights(line_problem()).u
    np.testing.assert_allclose(u, [0.5, 0, 0.5], atol=1e-6)


def test_bootstrap_matches_grid_oracle():
    crit = line_problem()
    zs = build_z_all(crit.model, crit.space.points)
    g, h = oracle.info_matrices(zs, [[1.0]], 0.0)
    best = oracle.simplex_grid_search(g, h, 0.01)
    np.testing.assert_allclose(best.weights, [0.5, 0, 0.5])
    assert best.loss == pytest.approx(0.0, abs=1e-12)
    assert init_weights(crit).u == pytest.approx(best.weights, abs=1e-6)


def test_single_point_space():
    model = ResponseModel.from_text(1, ["1", "1"], [[2.0, 0.5], [0.5, 1.0]], 1.0, "OLSE")
    crit = Criterion(model, build_space([Levels((0.0,))]))
    res = solve_dc(crit)
    assert res.weights.tolist() == [1.0]
    assert res.converged


def test_infeasible_model():
    model = ResponseModel.from_text(1, ["1, x1, x1^2"], [[1.0]])
    crit = Criterion(model, build_space([Levels((0.0, 1.0))]))
    with pytest.raises(InfeasibleModel):
        init_weights(crit)


def test_inner_at_optimum_returns_anchor():
    crit = line_problem()
    opt = np.array([0.5, 0.0, 0.5])
    res = solve_inner(crit, opt)
    assert res.iterations == 0 and res.gap <= 1e-7
    assert np.array_equal(res.u, opt)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 5.0, 50.0])
@pytest.mark.parametrize("estimator", ["GLSE", "OLSE"])
def test_line_problem_any_alpha(alpha, estimator):
    res = solve_dc(line_problem(alpha, estimator))
    np.testing.assert_allclose(res.weights, [0.5, 0, 0.5], atol=1e-3)
    assert res.converged and res.certificate.passed


def test_degenerate_tie():
    model = ResponseModel.from_text(1, ["1", "1"], [[2.0, 0.5], [0.5, 1.0]], 1.0, "OLSE")
    crit = Criterion(model, build_space([Levels((0.0, 1.0))]))
    res = solve_inner(crit, np.array([0.3, 0.7]))
    assert res.gap <= 1e-7
    single = Criterion(model, build_space([Levels((0.0,))]))
    assert crit.loss_at(res.u) == pytest.approx(single.loss_at(np.array([1.0])), abs=1e-12)


def test_central_weights_spread_over_ties():
    model = ResponseModel.from_text(1, ["1", "1"], [[2.0, 0.5], [0.5, 1.0]], 1.0, "OLSE")
    crit = Criterion(model, build_space([Levels((0.0, 1.0, 2.0))]))
    np.testing.assert_allclose(central_weights(crit, np.array([1.0, 0, 0])), [1 / 3] * 3, atol=1e-9)


def test_example3_optimal_at_bootstrap():
    space = ex3_space()
    for est in ("GLSE", "OLSE"):
        crit = Criterion(ex3_model(5.0, est, "correlated"), space, build_orbits(space, (3,)))
        res = solve_dc(crit)
        assert res.init_loss == pytest.approx(res.loss, abs=1e-9)
        sup = res.support(1e-4)
        assert len(sup) == 12
        for i in sup:
            want = EX3_MID if space.points[i, 2] == 0 else EX3_EDGE
            assert res.weights[i] == pytest.approx(want, abs=0.002)


def random_tiny(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 2))
    v0 = a @ a.T + 0.3 * np.eye(2)
    est = str(rng.choice(["GLSE", "OLSE"]))
    alpha = float(rng.uniform(0, 6))
    model = ResponseModel.from_text(1, ["1, x1", "1, x1^2"], v0, alpha, est)
    pts = np.sort(rng.choice(np.linspace(-1, 1, 9), size=4, replace=False))
    space = build_space([Levels(tuple(pts))])
    return Criterion(model, space)


def _tiny_oracle(seed):
    crit = random_tiny(seed)
    zs = build_z_all(crit.model, crit.space.points)
    g, h = oracle.info_matrices(zs, crit.model.v0, crit.model.alpha, crit.model.estimator.value)
    return crit, g, h, oracle.simplex_grid_search(g, h, 0.01)


@pytest.mark.parametrize("seed", range(40))
def test_oracle_never_beats_solver(seed):
    crit, g, h, best = _tiny_oracle(seed)
    res = solve_dc(crit, SolverOptions(multistart=4))
    assert best.loss >= res.loss - 1e-4
    assert res.loss == pytest.approx(oracle.dc_loss(g, h, res.weights), abs=1e-9)


def test_single_start_can_stop_at_certified_local_minimum():
    # seed 1: the saturated two-point design beats the interior stationary point
    crit, g, h, best = _tiny_oracle(1)
    res = solve_dc(crit)
    assert res.certificate.passed
    assert res.loss > best.loss + 0.1
    assert np.count_nonzero(best.weights) == 2


@pytest.mark.parametrize("alpha,estimator", [(3.0, "GLSE"), (0.0, "OLSE"), (5.0, "OLSE")])
def test_descent_and_simplex(alpha, estimator):
    crit = ex2_criterion(alpha, estimator)
    res = solve_dc(crit)
    assert np.all(np.diff(res.trace) <= 1e-9)
    assert np.all(res.weights >= 0)
    assert abs(res.weights.sum() - 1) < 1e-12
    assert res.loss == pytest.approx(crit.loss_at(res.atom_weights), abs=1e-9)


def _fixed_point_gap(crit, opts):
    res = solve_dc(crit, opts)
    st = crit.state(res.atom_weights)
    anchored = surrogate_grad(st, grad_h(crit.state(res.anchor)))
    return np.max(np.abs(anchored - (grad_g(st) - grad_h(st))))


@pytest.mark.parametrize("alpha,estimator", [(3.0, "GLSE"), (0.0, "OLSE")])
def test_fixed_point_consistency(alpha, estimator):
    # the gap scales with the last step, so the 1e-6 bound needs a tight outer stop
    assert _fixed_point_gap(ex2_criterion(alpha, estimator), SolverOptions(eta1=1e-8)) < 1e-6


def test_fixed_point_gap_tracks_outer_tolerance():
    crit = ex2_criterion(3.0, "GLSE")
    assert _fixed_point_gap(crit, SolverOptions()) < 1e-3
    assert _fixed_point_gap(crit, SolverOptions(eta1=1e-7)) < 1e-5


def test_orbit_solution_is_exactly_symmetric():
    space = build_space([Grid(-1, 1, 7), Grid(-1, 1, 5)])
    model = ResponseModel.from_text(2, ["1, x1, x2, x1^2", "1, x2, x2^2, x1*x2"], [[2.0, 0.7], [0.7, 1.0]],
                                    2.0, "OLSE")
    crit = Criterion(model, space, build_orbits(space, (1, 2)))
    w = solve_dc(crit).weights
    for axis in (1, 2):
        assert np.array_equal(w, w[space.reflection_map(axis)])


def test_deterministic():
    a = solve_dc(ex2_criterion(3.0, "OLSE"))
    b = solve_dc(ex2_criterion(3.0, "OLSE"))
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.trace == b.trace


def test_multistart_keeps_best():
    crit = ex2_criterion(0.0, "OLSE")
    res = solve_dc(crit, SolverOptions(multistart=3))
    assert len(res.starts) == 3
    assert res.loss == pytest.approx(min(res.starts), abs=1e-12)


def test_printed_cubic_example1_optimum():
    # nearly degenerate model: the inner solver crawls, so a loose inner tolerance keeps this quick
    res = solve_dc(ex1_criterion(0.0, "GLSE", printed=True), SolverOptions(inner_gap_tol=1e-4, max_inner=3000))
    assert res.certificate.passed
    assert res.loss == pytest.approx(52.875, abs=1e-3)
