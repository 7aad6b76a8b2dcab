"""Post-hoc metrics over a run trace.

Implements the window-averaged local-regret series in both flavors (past
gradients at their own iterates vs past gradients recomputed at the current
iterate), the per-round hypergradient-estimation error, and the
nonstationarity proxies.  The ``sup`` over outer decisions in the variation
definitions is intractable; the proxies evaluate at the trajectory point
and are labeled as lower bounds wherever they are reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Array
from .errors import ArgumentError, EmptyLogError
from .hypergrad import exact_hypergrad
from .optimizers import window_weight_sum


@dataclass
class RunLog:
    """Per-round trace consumed by the metrics engine.

    Row ``t-1`` (0-based) holds round ``t``: the pre-step outer decision
    ``x``, the post-step inner decision ``y_next``, the stored estimate
    ``est_grad``, the reference gradient ``exact_grad`` at the round's inner
    optimum, that optimum ``y_star`` and objective value ``f_at_opt``, plus
    the same round's optimum and value evaluated at the previous outer
    decision (``*_at_prev_x``, NaN in round 1) for the variation proxies.
    """

    x: Array
    y_next: Array
    est_grad: Array
    exact_grad: Array
    y_star: Array
    f_at_opt: Array
    y_star_at_prev_x: Array
    f_at_prev_x: Array
    wallclock_ns: Array

    def __post_init__(self):
        self.rounds = self.x.shape[0]
        if self.rounds == 0:
            raise EmptyLogError("run log holds no rounds")

    def __len__(self):
        return self.rounds


def running_sum(values: Sequence[float]) -> Array:
    """Compensated (Kahan-Babuska/Neumaier) running sum."""
    total = 0.0
    comp = 0.0
    out = np.empty(len(values))
    for i, value in enumerate(values):
        v = float(value)
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[i] = total + comp
    return out


def _window_weights(eta: float, k: int) -> Array:
    # Successive multiplication, matching the optimizer's weight arithmetic.
    weights = np.empty(k)
    w = 1.0
    for i in range(k):
        weights[i] = w
        w *= eta
    return weights


def _window_norms(grads: Array, eta: float, k: int) -> Array:
    """||(1/W) sum_i eta^i grads[t-i]||^2 per round, absent rounds = zero."""
    rounds = grads.shape[0]
    w_norm = window_weight_sum(eta, k)
    weights = _window_weights(eta, k)
    out = np.empty(rounds)
    for t in range(rounds):
        m = min(k, t + 1)
        seg = grads[t - m + 1 : t + 1][::-1]  # newest first
        avg = (weights[:m, None] * seg).sum(axis=0) / w_norm
        out[t] = float(avg @ avg)
    return out


def blr_series(log: RunLog, eta: float, k: int) -> Array:
    """Per-round window-averaged local regret: the squared norm of the
    eta-weighted average of the stored exact hypergradients, each taken at
    its own round's iterate.  Cumulative regret is ``running_sum`` of this."""
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if not (0 < eta <= 1):
        raise ArgumentError(f"eta must lie in (0, 1], got {eta}")
    return _window_norms(log.exact_grad, eta, k)


def blr_static_series(
    log: RunLog,
    stream,
    eta: float,
    k: int,
    solve_tol: float = 1e-10,
    inner_tol: float = 1e-10,
) -> Array:
    """Regret variant with every windowed past-round gradient recomputed at
    the *current* iterate.

    Requires the stream so past rounds can be re-evaluated; this
    reintroduces the per-round window-length cost the single-loop optimizer
    avoids, so the runner only computes it on request.
    """
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if not (0 < eta <= 1):
        raise ArgumentError(f"eta must lie in (0, 1], got {eta}")
    rounds = len(log)
    if len(stream) < rounds:
        raise ArgumentError("stream shorter than the run log")
    w_norm = window_weight_sum(eta, k)
    out = np.empty(rounds)
    for t in range(rounds):
        x_t = log.x[t]
        acc = None
        weight = 1.0
        for i in range(min(k, t + 1)):
            grad = exact_hypergrad(
                stream[t - i],
                x_t,
                solve_tol=solve_tol,
                approx_inner=not stream[t - i].has_exact_inner,
                inner_tol=inner_tol,
            )
            term = weight * grad
            acc = term if acc is None else acc + term
            weight *= eta
        avg = acc / w_norm
        out[t] = float(avg @ avg)
    return out


def hypergrad_error_series(log: RunLog) -> Array:
    """Squared distance between the stored estimate and the reference
    hypergradient, per round."""
    diff = log.exact_grad - log.est_grad
    return np.einsum("ij,ij->i", diff, diff)


@dataclass(frozen=True)
class VariationStats:
    """Nonstationarity proxies along the trajectory.

    ``v1_proxy`` and ``h2_proxy`` evaluate the function/inner-optimum
    variation at the visited outer decisions, hence lower-bound the
    sup-based quantities.  ``inner_err_series`` tracks the squared distance
    between the inner iterate and the round's inner optimum.
    """

    v1_proxy: float
    h2_proxy: float
    inner_err_series: Array
    h2_increments: Array
    v1_increments: Array


def variation_stats(log: RunLog) -> VariationStats:
    rounds = len(log)
    inner_diff = log.y_next - log.y_star
    inner_err = np.einsum("ij,ij->i", inner_diff, inner_diff)

    h2_inc = np.zeros(rounds)
    v1_inc = np.zeros(rounds)
    for t in range(1, rounds):
        if not np.isfinite(log.f_at_prev_x[t]):
            continue  # round lacks the previous-iterate evaluation
        gap = log.y_star_at_prev_x[t] - log.y_star[t - 1]
        h2_inc[t] = float(gap @ gap)
        v1_inc[t] = float(log.f_at_prev_x[t] - log.f_at_opt[t - 1])
    h2 = float(running_sum(h2_inc)[-1]) if rounds else 0.0
    v1 = float(running_sum(v1_inc)[-1]) if rounds else 0.0
    return VariationStats(
        v1_proxy=v1,
        h2_proxy=h2,
        inner_err_series=inner_err,
        h2_increments=h2_inc,
        v1_increments=v1_inc,
    )
