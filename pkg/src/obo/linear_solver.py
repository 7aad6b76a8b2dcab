"""Approximate solvers for the SPD inner-Hessian linear system.

Both solvers touch the system only through matrix-vector products, so the
Hessian never has to be formed.  The fixed-stepsize iteration

    v_{k+1} = v_k - lambda * (A v_k - b)

contracts the error by ``(1 - lambda*mu)`` per step on a system with
spectrum in ``[mu, L]`` whenever ``lambda <= 1/L``; conjugate gradient is
offered as a faster alternative behind the same interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Array, as_vector
from .errors import ArgumentError, NumericalError, SolverBreakdown


@dataclass(frozen=True)
class LinearMap:
    """A symmetric positive-definite operator given by its action."""

    apply: Callable[[Array], Array]
    dim: int

    @staticmethod
    def from_matrix(a: Array) -> "LinearMap":
        a = np.asarray(a, dtype=np.float64)
        return LinearMap(apply=lambda v: a @ v, dim=a.shape[0])


@dataclass(frozen=True)
class QSchedule:
    """Per-round solver-iteration budget: ``min(q_max, q0 + ceil((t-1)*q_increment))``."""

    q0: int
    q_increment: float
    q_max: int

    def __post_init__(self):
        if self.q0 < 0:
            raise ArgumentError("q0 must be >= 0")
        if self.q_increment < 0:
            raise ArgumentError("q_increment must be >= 0")
        if self.q_max < self.q0:
            raise ArgumentError("q_max must be >= q0")


def q_at(schedule: QSchedule, t: int) -> int:
    """Solver-iteration budget for round ``t`` (1-based)."""
    if t < 1:
        raise ArgumentError(f"round index must be >= 1, got {t}")
    grown = schedule.q0 + math.ceil((t - 1) * schedule.q_increment)
    return min(schedule.q_max, grown)


def solve_fixed_step(linmap: LinearMap, rhs: Array, v0: Array, lam: float, q: int) -> Array:
    """Run exactly ``q`` fixed-stepsize iterations from ``v0``.

    Deterministic: identical inputs give bitwise-identical outputs.
    Raises :class:`NumericalError` (carrying the iteration index) if an
    iterate stops being finite.
    """
    rhs = as_vector(rhs, dim=linmap.dim, name="rhs")
    v = as_vector(v0, dim=linmap.dim, name="v0").copy()
    if lam <= 0:
        raise ArgumentError(f"solver stepsize must be positive, got {lam}")
    if q < 0:
        raise ArgumentError(f"iteration count must be >= 0, got {q}")
    for k in range(q):
        v = v - lam * (linmap.apply(v) - rhs)
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"fixed-step solve diverged at iteration {k + 1}")
    return v


def solve_cg(linmap: LinearMap, rhs: Array, v0: Array, max_iters: int, tol: float) -> Array:
    """Conjugate gradient from ``v0``.

    Returns the first iterate whose residual norm falls below
    ``tol * ||rhs||``, or the ``max_iters``-th iterate.  On an
    ``n``-dimensional SPD system, ``n`` iterations suffice in exact
    arithmetic.  A direction of non-positive curvature raises
    :class:`SolverBreakdown`.
    """
    rhs = as_vector(rhs, dim=linmap.dim, name="rhs")
    x = as_vector(v0, dim=linmap.dim, name="v0").copy()
    if max_iters < 0:
        raise ArgumentError(f"max_iters must be >= 0, got {max_iters}")
    if tol < 0:
        raise ArgumentError(f"tol must be >= 0, got {tol}")

    threshold = tol * float(np.linalg.norm(rhs))
    r = rhs - linmap.apply(x)
    if float(np.linalg.norm(r)) <= threshold:
        return x
    p = r.copy()
    rs = float(r @ r)
    for _ in range(max_iters):
        ap = linmap.apply(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise SolverBreakdown(f"non-positive curvature {pap:g} along search direction")
        step = rs / pap
        x = x + step * p
        r = r - step * ap
        if not np.all(np.isfinite(x)):
            raise NumericalError("conjugate gradient produced non-finite iterate")
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= threshold:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x
