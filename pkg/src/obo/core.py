"""Domain types, the round-oracle interface, and derivative self-checks.

Conventions used library-wide:

* Vectors are 1-D ``float64`` numpy arrays; matrices are 2-D and row-major
  (numpy's default C order).  Matrix-valued outer variables are flattened
  with ``M.reshape(-1)`` and restored with ``x.reshape(rows, cols)``; this
  bijection is fixed everywhere.
* All entries must be finite.  Boundary helpers raise
  :class:`~obo.errors.NumericalError` on NaN/Inf and
  :class:`~obo.errors.DimensionError` on shape mismatches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np

from .errors import ArgumentError, DimensionError, DomainError, NumericalError

Array = np.ndarray

# Central-difference step balancing truncation and round-off at float64.
DEFAULT_FD_EPS = 1e-5


def as_vector(v, dim: Optional[int] = None, name: str = "vector") -> Array:
    """Coerce to a finite 1-D float64 array, checking dimension if given."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has dim {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def ensure_finite(arr: Array, name: str = "value") -> Array:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


@runtime_checkable
class RoundOracle(Protocol):
    """One round's bilevel pair exposed through value/derivative callbacks.

    ``hess_g_yy_vec(x, y, .)`` must be a linear, symmetric map with smallest
    eigenvalue bounded below by the inner strong-convexity modulus, and
    ``cross_g_xy_vec(x, y, .)`` must be linear in its last argument.  When
    ``has_exact_inner`` is set, ``y_star(x)`` returns the inner minimizer to
    high accuracy (gradient norm below ``1e-8 * (1 + ||y_star||)``).
    """

    round_index: int
    d1: int
    d2: int
    has_exact_inner: bool

    def f_value(self, x: Array, y: Array) -> float: ...

    def g_value(self, x: Array, y: Array) -> float: ...

    def grad_f_x(self, x: Array, y: Array) -> Array: ...

    def grad_f_y(self, x: Array, y: Array) -> Array: ...

    def grad_g_y(self, x: Array, y: Array) -> Array: ...

    def hess_g_yy_vec(self, x: Array, y: Array, v: Array) -> Array: ...

    def cross_g_xy_vec(self, x: Array, y: Array, v: Array) -> Array: ...

    def y_star(self, x: Array) -> Array: ...


@dataclass(frozen=True)
class CallbackOracle:
    """Adapter building a :class:`RoundOracle` from plain callables.

    Useful for tests and user-defined rounds.  ``y_star_fn`` is optional;
    ``has_exact_inner`` reflects its presence.
    """

    d1: int
    d2: int
    f: Callable[[Array, Array], float]
    g: Callable[[Array, Array], float]
    gfx: Callable[[Array, Array], Array]
    gfy: Callable[[Array, Array], Array]
    ggy: Callable[[Array, Array], Array]
    hyy: Callable[[Array, Array, Array], Array]
    cxy: Callable[[Array, Array, Array], Array]
    y_star_fn: Optional[Callable[[Array], Array]] = None
    round_index: int = 1
    constants: Optional["RegularityConstants"] = None

    @property
    def has_exact_inner(self) -> bool:
        return self.y_star_fn is not None

    def f_value(self, x, y):
        return float(self.f(x, y))

    def g_value(self, x, y):
        return float(self.g(x, y))

    def grad_f_x(self, x, y):
        return self.gfx(x, y)

    def grad_f_y(self, x, y):
        return self.gfy(x, y)

    def grad_g_y(self, x, y):
        return self.ggy(x, y)

    def hess_g_yy_vec(self, x, y, v):
        return self.hyy(x, y, v)

    def cross_g_xy_vec(self, x, y, v):
        return self.cxy(x, y, v)

    def y_star(self, x):
        if self.y_star_fn is None:
            from .errors import OracleCapabilityError

            raise OracleCapabilityError("oracle has no exact inner solution")
        return self.y_star_fn(x)


@dataclass(frozen=True)
class RegularityConstants:
    """Curvature and smoothness constants a stream reports about itself.

    ``mu_g`` is the inner strong-convexity modulus, ``l1`` the gradient
    Lipschitz bound used for stepsize rules, ``d_bound`` the feasible-set
    diameter (0 for unconstrained).  Higher-order smoothness constants are
    analysis-only and intentionally not represented.
    """

    mu_g: float
    l1: float
    d_bound: float = 0.0

    def __post_init__(self):
        if not (self.mu_g > 0):
            raise ArgumentError(f"mu_g must be positive, got {self.mu_g}")
        if not (self.l1 > 0):
            raise ArgumentError(f"l1 must be positive, got {self.l1}")
        if self.mu_g > self.l1 * (1 + 1e-12):
            raise ArgumentError(f"mu_g ({self.mu_g}) must not exceed l1 ({self.l1})")
        if self.d_bound < 0:
            raise ArgumentError("d_bound must be >= 0")


@dataclass(frozen=True)
class Domain:
    """Projection domain: unconstrained, Euclidean ball, or coordinate box."""

    kind: str = "none"  # none | ball | box
    center: Optional[Array] = None
    radius: float = 0.0
    lo: Optional[Array] = None
    hi: Optional[Array] = None

    @staticmethod
    def unconstrained() -> "Domain":
        return Domain(kind="none")

    @staticmethod
    def ball(center, radius: float) -> "Domain":
        if radius <= 0:
            raise DomainError(f"ball radius must be positive, got {radius}")
        return Domain(kind="ball", center=as_vector(center, name="center"), radius=float(radius))

    @staticmethod
    def box(lo, hi) -> "Domain":
        lo = as_vector(lo, name="lo")
        hi = as_vector(hi, dim=lo.shape[0], name="hi")
        if np.any(lo > hi):
            raise DomainError("box requires lo <= hi coordinate-wise")
        return Domain(kind="box", lo=lo, hi=hi)


@dataclass(frozen=True)
class OptimizerConfig:
    """Stepsizes, window, solver budget and projection domain for a run.

    ``alpha``/``beta`` are the inner/outer stepsizes, ``eta`` and
    ``k_window`` the window weights and length, ``lambda_solver`` the
    fixed-step linear-solver stepsize, and ``q0``/``q_increment``/``q_max``
    the per-round solver-iteration schedule.  ``n_inner`` only affects the
    multi-step baseline optimizer.
    """

    alpha: float
    beta: float
    eta: float = 0.95
    k_window: int = 10
    lambda_solver: float = 0.1
    q0: int = 5
    q_increment: float = 0.5
    q_max: int = 50
    n_inner: int = 1
    domain: Domain = field(default_factory=Domain.unconstrained)
    solver_kind: str = "fixed_step"  # fixed_step | conjugate_gradient
    # Start each round's linear solve from the previous round's solution
    # instead of the fixed zero point.  Off by default: the single-loop
    # recipe restarts from the fixed point every round.
    warm_start_solver: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ArgumentError("stepsizes must be non-negative")
        if not (0 < self.eta <= 1):
            raise ArgumentError(f"eta must lie in (0, 1], got {self.eta}")
        if self.k_window < 1:
            raise ArgumentError("k_window must be >= 1")
        if self.lambda_solver <= 0:
            raise ArgumentError("lambda_solver must be positive")
        if self.q0 < 0 or self.q_increment < 0:
            raise ArgumentError("q0 and q_increment must be >= 0")
        if self.q_max < self.q0:
            raise ArgumentError("q_max must be >= q0")
        if self.n_inner < 1:
            raise ArgumentError("n_inner must be >= 1")
        if self.solver_kind not in ("fixed_step", "conjugate_gradient"):
            raise ArgumentError(f"unknown solver_kind {self.solver_kind!r}")


# --------------------------------------------------------------------------
# Derivative self-checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsistencyCheck:
    name: str
    error: float
    passed: bool


@dataclass(frozen=True)
class ConsistencyReport:
    """Outcome of :func:`check_oracle`, one entry per derivative check."""

    checks: tuple
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def error_of(self, name: str) -> float:
        for c in self.checks:
            if c.name == name:
                return c.error
        raise KeyError(name)

    def __str__(self):
        lines = [f"oracle consistency (tol {self.tol:g})"]
        for c in self.checks:
            lines.append(f"  {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.error:.3e}")
        return "\n".join(lines)


def _rel_error(candidate: Array, reference: Array) -> float:
    """Error of ``candidate`` against ``reference``, relative to the
    reference scale; falls back to absolute error for near-zero references."""
    diff = float(np.linalg.norm(candidate - reference))
    ref = float(np.linalg.norm(reference))
    if ref >= 1e-6:
        return diff / ref
    return diff


def _central_diff(fun: Callable[[Array], float], z: Array, eps: float) -> Array:
    out = np.empty_like(z)
    for j in range(z.shape[0]):
        zp = z.copy()
        zm = z.copy()
        zp[j] += eps
        zm[j] -= eps
        out[j] = (fun(zp) - fun(zm)) / (2 * eps)
    return out


def check_oracle(
    oracle: RoundOracle,
    x,
    y,
    eps: float = DEFAULT_FD_EPS,
    mu_g: float = 0.0,
    n_probes: int = 5,
    rng: Optional[np.random.Generator] = None,
    tol: float = 1e-4,
) -> ConsistencyReport:
    """Verify an oracle's derivative callbacks against finite differences.

    Checks (a) the two outer-gradient callbacks against central differences
    of ``f_value``, (b) the inner gradient against central differences of
    ``g_value``, (c) symmetry ``<u, Hv> == <v, Hu>`` of the inner
    Hessian-vector product on random probes, and (d) curvature
    ``<v, Hv> >= mu_g ||v||^2``.  Passes iff every relative error is below
    ``tol`` and the curvature bound holds.
    """
    if not (1e-9 < eps < 1e-2):
        raise ArgumentError(f"eps must lie in (1e-9, 1e-2), got {eps}")
    x = as_vector(x, dim=oracle.d1, name="x")
    y = as_vector(y, dim=oracle.d2, name="y")
    rng = rng if rng is not None else np.random.default_rng(0)

    checks = []

    fd_fx = _central_diff(lambda xp: oracle.f_value(xp, y), x, eps)
    gfx = as_vector(oracle.grad_f_x(x, y), dim=oracle.d1, name="grad_f_x")
    checks.append(("grad_f_x", _rel_error(gfx, fd_fx)))

    fd_fy = _central_diff(lambda yp: oracle.f_value(x, yp), y, eps)
    gfy = as_vector(oracle.grad_f_y(x, y), dim=oracle.d2, name="grad_f_y")
    checks.append(("grad_f_y", _rel_error(gfy, fd_fy)))

    g_value = getattr(oracle, "g_value", None)
    if g_value is not None:
        fd_gy = _central_diff(lambda yp: g_value(x, yp), y, eps)
        ggy = as_vector(oracle.grad_g_y(x, y), dim=oracle.d2, name="grad_g_y")
        checks.append(("grad_g_y", _rel_error(ggy, fd_gy)))

    sym_err = 0.0
    for _ in range(n_probes):
        u = rng.standard_normal(oracle.d2)
        v = rng.standard_normal(oracle.d2)
        hu = ensure_finite(oracle.hess_g_yy_vec(x, y, u), "hess_g_yy_vec")
        hv = ensure_finite(oracle.hess_g_yy_vec(x, y, v), "hess_g_yy_vec")
        a = float(u @ hv)
        b = float(v @ hu)
        sym_err = max(sym_err, abs(a - b) / max(abs(a), abs(b), 1e-6))
    checks.append(("hess_symmetry", sym_err))

    entries = [ConsistencyCheck(name, err, err < tol) for name, err in checks]

    curvature_ok = True
    worst_gap = 0.0
    for _ in range(n_probes):
        v = rng.standard_normal(oracle.d2)
        hv = oracle.hess_g_yy_vec(x, y, v)
        gap = float(v @ hv) - mu_g * float(v @ v)
        worst_gap = min(worst_gap, gap)
        if gap < -1e-10:
            curvature_ok = False
    entries.append(ConsistencyCheck("hess_curvature", -worst_gap if worst_gap < 0 else 0.0, curvature_ok))

    return ConsistencyReport(checks=tuple(entries), tol=tol)


# --------------------------------------------------------------------------
# Config validation against regularity constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationItem:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationResult:
    """Advisory report of the stepsize/window/solver-growth conditions.

    Failures are warnings: a run proceeds regardless.
    """

    items: tuple

    @property
    def all_passed(self) -> bool:
        return all(i.passed for i in self.items)

    def __str__(self):
        lines = []
        for i in self.items:
            lines.append(f"  {'ok  ' if i.passed else 'warn'} {i.name}: {i.detail}")
        return "\n".join(lines)


def required_q_increment(alpha: float, lambda_solver: float, mu_g: float) -> float:
    """Minimum per-round growth of the solver-iteration schedule that keeps
    the solver contraction ahead of the inner-estimate contraction."""
    a = 1.0 - alpha * mu_g / 2.0
    b = 1.0 - lambda_solver * mu_g
    if a <= 0.0 or b <= 0.0:
        return 0.0  # either contraction is immediate; no growth needed
    return math.log(a) / (2.0 * math.log(b))


def validate_config(cfg: OptimizerConfig, constants: RegularityConstants) -> ValidationResult:
    """Check the sufficient stepsize/window conditions; advisory only."""
    items = []
    inv_l1 = 1.0 / constants.l1

    items.append(
        ValidationItem(
            "alpha <= 1/l1",
            cfg.alpha <= inv_l1 * (1 + 1e-12),
            f"alpha={cfg.alpha:g}, 1/l1={inv_l1:g}",
        )
    )
    items.append(
        ValidationItem(
            "lambda_solver <= 1/l1",
            cfg.lambda_solver <= inv_l1 * (1 + 1e-12),
            f"lambda={cfg.lambda_solver:g}, 1/l1={inv_l1:g}",
        )
    )
    eta_floor = 1.0 - cfg.alpha * constants.mu_g / 2.0
    items.append(
        ValidationItem(
            "eta in (1 - alpha*mu_g/2, 1]",
            cfg.eta == 1.0 or cfg.eta > eta_floor,
            f"eta={cfg.eta:g}, floor={eta_floor:g}",
        )
    )
    required = required_q_increment(cfg.alpha, cfg.lambda_solver, constants.mu_g)
    items.append(
        ValidationItem(
            "q_increment >= solver growth condition",
            cfg.q_increment >= required - 1e-12,
            f"q_increment={cfg.q_increment:g}, required={required:g}",
        )
    )
    return ValidationResult(items=tuple(items))
