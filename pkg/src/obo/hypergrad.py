"""Hypergradient construction.

The total gradient of the outer objective through the inner minimizer is

    grad = grad_f_x(x, y) - cross_g_xy(x, y) . v,
    with  hess_g_yy(x, y) v = grad_f_y(x, y),

evaluated at the exact inner solution (:func:`exact_hypergrad`) or at an
approximate inner iterate with a truncated linear solve
(:func:`estimate_hypergrad`).  :func:`fd_hypergrad` differentiates the
composite objective by central differences as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Array, OptimizerConfig, RoundOracle, as_vector, ensure_finite
from .errors import (
    ArgumentError,
    ConvergenceError,
    OracleCapabilityError,
)
from .linear_solver import LinearMap, solve_cg, solve_fixed_step

DEFAULT_INNER_MAX_ITERS = 200_000


@dataclass(frozen=True)
class HypergradRecord:
    """A stored per-round hypergradient estimate."""

    round: int
    grad: Array
    v_q: Array
    solver_iters: int

    def __post_init__(self):
        if self.round < 1:
            raise ArgumentError(f"round must be >= 1, got {self.round}")
        ensure_finite(self.grad, "hypergradient")
        ensure_finite(self.v_q, "linear-system iterate")


def _hessian_map(oracle: RoundOracle, x: Array, y: Array) -> LinearMap:
    return LinearMap(apply=lambda v: oracle.hess_g_yy_vec(x, y, v), dim=oracle.d2)


def _aid_combine(oracle: RoundOracle, x: Array, y: Array, v: Array) -> Array:
    return oracle.grad_f_x(x, y) - oracle.cross_g_xy_vec(x, y, v)


def estimate_hypergrad(
    oracle: RoundOracle,
    x: Array,
    y_est: Array,
    cfg: OptimizerConfig,
    q: int,
    v0: Optional[Array] = None,
) -> HypergradRecord:
    """Estimated hypergradient at ``(x, y_est)`` with a ``q``-iteration solve.

    ``y_est`` is the post-update inner iterate; every derivative is
    evaluated at ``(x, y_est)``.  The linear system is solved from ``v0``
    (zero unless given) with the solver selected by ``cfg.solver_kind``.
    """
    x = as_vector(x, dim=oracle.d1, name="x")
    y_est = as_vector(y_est, dim=oracle.d2, name="y_est")
    if v0 is None:
        v0 = np.zeros(oracle.d2)
    linmap = _hessian_map(oracle, x, y_est)
    rhs = oracle.grad_f_y(x, y_est)
    if cfg.solver_kind == "conjugate_gradient":
        v_q = solve_cg(linmap, rhs, v0, max_iters=q, tol=0.0)
    else:
        v_q = solve_fixed_step(linmap, rhs, v0, cfg.lambda_solver, q)
    grad = _aid_combine(oracle, x, y_est, v_q)
    return HypergradRecord(round=oracle.round_index, grad=grad, v_q=v_q, solver_iters=q)


def aid_gradient_at(oracle: RoundOracle, x: Array, y: Array, solve_tol: float = 1e-10) -> Array:
    """AID hypergradient with all derivatives taken at ``(x, y)`` and the
    linear system solved by conjugate gradient to relative residual
    ``solve_tol``."""
    linmap = _hessian_map(oracle, x, y)
    rhs = oracle.grad_f_y(x, y)
    v = solve_cg(linmap, rhs, np.zeros(oracle.d2), max_iters=50 * oracle.d2 + 100, tol=solve_tol)
    return _aid_combine(oracle, x, y, v)


def exact_hypergrad(
    oracle: RoundOracle,
    x: Array,
    solve_tol: float = 1e-10,
    approx_inner: bool = False,
    inner_tol: float = 1e-10,
    inner_max_iters: int = DEFAULT_INNER_MAX_ITERS,
    inner_y0: Optional[Array] = None,
) -> Array:
    """Hypergradient at the (exact or high-accuracy) inner solution.

    Uses the oracle's closed-form inner solution when available, otherwise
    falls back to :func:`inner_solve` if ``approx_inner`` is set.
    """
    x = as_vector(x, dim=oracle.d1, name="x")
    if oracle.has_exact_inner:
        y = oracle.y_star(x)
    elif approx_inner:
        y = inner_solve(oracle, x, tol=inner_tol, max_iters=inner_max_iters, y0=inner_y0)
    else:
        raise OracleCapabilityError(
            "oracle has no exact inner solution; pass approx_inner=True to use inner_solve"
        )
    return aid_gradient_at(oracle, x, y, solve_tol)


def fd_hypergrad(
    oracle: RoundOracle,
    x: Array,
    eps: float = 1e-5,
    inner_tol: float = 1e-10,
    inner_max_iters: int = DEFAULT_INNER_MAX_ITERS,
) -> Array:
    """Central-difference gradient of ``x -> f(x, y_star(x))``.

    Re-solves the inner problem at every perturbed point (warm-started from
    the unperturbed solution when solved iteratively); the default
    ``inner_tol`` keeps the inner-solve error well below the truncation
    error of the differences.
    """
    if not (1e-8 < eps < 1e-2):
        raise ArgumentError(f"eps must lie in (1e-8, 1e-2), got {eps}")
    x = as_vector(x, dim=oracle.d1, name="x")

    if oracle.has_exact_inner:
        def composite(xp: Array) -> float:
            return oracle.f_value(xp, oracle.y_star(xp))
    else:
        base = inner_solve(oracle, x, tol=inner_tol, max_iters=inner_max_iters)

        def composite(xp: Array) -> float:
            yp = inner_solve(oracle, xp, tol=inner_tol, max_iters=inner_max_iters, y0=base)
            return oracle.f_value(xp, yp)

    out = np.empty(oracle.d1)
    for j in range(oracle.d1):
        xp = x.copy()
        xm = x.copy()
        xp[j] += eps
        xm[j] -= eps
        out[j] = (composite(xp) - composite(xm)) / (2 * eps)
    return out


def inner_solve(
    oracle: RoundOracle,
    x: Array,
    tol: float,
    max_iters: int = DEFAULT_INNER_MAX_ITERS,
    l1: Optional[float] = None,
    y0: Optional[Array] = None,
) -> Array:
    """Gradient descent on ``y -> g(x, y)`` with stepsize ``1/l1``.

    Stops once ``||grad_g_y|| <= tol * (1 + ||y||)``; strong convexity makes
    the iteration contract geometrically.  ``l1`` defaults to the oracle's
    local inner-curvature bound at ``x`` when it exposes one (the inner
    Hessian may depend on the outer decision), otherwise to the value in its
    regularity constants.
    """
    if tol <= 0:
        raise ArgumentError(f"tol must be positive, got {tol}")
    x = as_vector(x, dim=oracle.d1, name="x")
    if l1 is None:
        bound = getattr(oracle, "inner_hessian_bound", None)
        if bound is not None:
            l1 = bound(x)
        else:
            constants = getattr(oracle, "constants", None)
            if constants is None:
                raise ArgumentError("oracle reports no regularity constants; pass l1 explicitly")
            l1 = constants.l1
    step = 1.0 / l1
    y = np.zeros(oracle.d2) if y0 is None else as_vector(y0, dim=oracle.d2, name="y0").copy()
    for _ in range(max_iters):
        g = oracle.grad_g_y(x, y)
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= tol * (1.0 + float(np.linalg.norm(y))):
            return y
        y = y - step * g
    g = oracle.grad_g_y(x, y)
    grad_norm = float(np.linalg.norm(g))
    if grad_norm <= tol * (1.0 + float(np.linalg.norm(y))):
        return y
    raise ConvergenceError(
        f"inner solve did not reach tol {tol:g} in {max_iters} iterations "
        f"(final gradient norm {grad_norm:g})",
        residual=grad_norm,
    )
