"""Minimax D-optimal designs for multi-response linear models on discrete spaces."""

from .basis import BasisVector, eval_basis, parse_basis, reflection_signature, render_basis
from .criterion import Criterion, CriterionState, grad_g, grad_h, loss, point_matrices, surrogate_grad
from .errors import (
    CapacityError,
    ConfigError,
    DesignError,
    InfeasibleModel,
    ModelError,
    NotApplicable,
    ParseError,
    RangeError,
    SingularError,
)
from .model import Estimator, ResponseModel, build_z, validate_model
from .solver import SolveResult, SolverOptions, init_weights, solve_dc, solve_inner
from .space import (
    DesignSpace,
    Grid,
    Levels,
    apply_scale,
    build_orbits,
    build_space,
    is_reflection_closed,
    symmetry_axes,
)
from .verify import Certificate, certify, check_scale, check_sign_flip

__version__ = "0.1.0"
