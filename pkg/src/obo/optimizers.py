"""The three online updaters, the hypergradient window, and projection.

Each step consumes the current round's oracle and an immutable state and
returns the successor state, so runs are replayable and trivially
thread-transferable.  The window-averaged update direction is

    (1/W) * sum_i eta^i * grad_i,      W = sum_{i=0}^{K-1} eta^i,

with ``i`` the record age (0 = newest) and pre-history rounds contributing
zero while ``W`` stays fixed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Array, Domain, OptimizerConfig, RoundOracle, as_vector
from .errors import ArgumentError, DomainError, EmptyWindowError
from .hypergrad import HypergradRecord, estimate_hypergrad
from .linear_solver import QSchedule, q_at


def window_weight_sum(eta: float, k: int) -> float:
    """Normalization ``W = sum_{i=0}^{k-1} eta^i`` (summed in age order)."""
    total = 0.0
    w = 1.0
    for _ in range(k):
        total += w
        w *= eta
    return total


def _weighted_average(grads: Sequence[Array], eta: float, k: int) -> Array:
    """Age-weighted average of ``grads`` (newest first), normalized by the
    full-window weight regardless of how many entries are present."""
    acc = None
    w = 1.0
    for g in grads:
        term = w * g
        acc = term if acc is None else acc + term
        w *= eta
    if acc is None:
        raise EmptyWindowError("no gradients to average")
    return acc / window_weight_sum(eta, k)


@dataclass(frozen=True)
class WindowBuffer:
    """Bounded ring of the most recent hypergradient records, newest first."""

    capacity: int
    eta: float
    records: tuple = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ArgumentError("window capacity must be >= 1")
        if not (0 < self.eta <= 1):
            raise ArgumentError(f"eta must lie in (0, 1], got {self.eta}")
        rounds = [r.round for r in self.records]
        if any(older >= newer for newer, older in zip(rounds, rounds[1:])):
            # newest-first: rounds strictly decreasing from the front
            raise ArgumentError("buffer records must be strictly newer toward the front")
        if len(self.records) > self.capacity:
            raise ArgumentError("buffer overfilled")

    def pushed(self, record: HypergradRecord) -> "WindowBuffer":
        """New buffer with ``record`` at the front, evicting the oldest if full."""
        if self.records and record.round <= self.records[0].round:
            raise ArgumentError("records must be pushed in increasing round order")
        kept = (record,) + self.records[: self.capacity - 1]
        return dataclasses.replace(self, records=kept)


def window_average(buffer: WindowBuffer) -> Array:
    """Eta-weighted average of the buffered hypergradients."""
    if not buffer.records:
        raise EmptyWindowError("window buffer is empty")
    return _weighted_average([r.grad for r in buffer.records], buffer.eta, buffer.capacity)


def project(x: Array, domain: Domain) -> Array:
    """Euclidean projection of ``x`` onto ``domain`` (idempotent)."""
    if domain.kind == "none":
        return x
    if domain.kind == "ball":
        if domain.radius <= 0:
            raise DomainError(f"ball radius must be positive, got {domain.radius}")
        center = as_vector(domain.center, dim=x.shape[0], name="center")
        offset = x - center
        dist = float(np.linalg.norm(offset))
        if dist <= domain.radius:
            return x
        return center + (domain.radius / dist) * offset
    if domain.kind == "box":
        lo = as_vector(domain.lo, dim=x.shape[0], name="lo")
        hi = as_vector(domain.hi, dim=x.shape[0], name="hi")
        if np.any(lo > hi):
            raise DomainError("box requires lo <= hi coordinate-wise")
        return np.clip(x, lo, hi)
    raise DomainError(f"unknown domain kind {domain.kind!r}")


@dataclass(frozen=True)
class IterateState:
    """Live optimizer state: round counter, decisions, window, solver schedule."""

    t: int
    x: Array
    y: Array
    buffer: WindowBuffer
    schedule: QSchedule


@dataclass(frozen=True)
class StepLog:
    """What one round produced: the pre-step outer decision, the post-step
    inner decision, and the stored hypergradient record."""

    t: int
    x: Array
    y_next: Array
    record: HypergradRecord


@dataclass(frozen=True)
class OracleWindow:
    """The most recent previous-round oracles (newest first), as the
    multi-evaluation baseline requires.  Capacity is ``K - 1``."""

    capacity: int
    oracles: tuple = ()

    def pushed(self, oracle: RoundOracle) -> "OracleWindow":
        if self.capacity <= 0:
            return self
        return dataclasses.replace(self, oracles=(oracle,) + self.oracles[: self.capacity - 1])


def initial_state(x1, y1, cfg: OptimizerConfig) -> IterateState:
    """Fresh state at round 1 with an empty window."""
    return IterateState(
        t=1,
        x=as_vector(x1, name="x1"),
        y=as_vector(y1, name="y1"),
        buffer=WindowBuffer(capacity=cfg.k_window, eta=cfg.eta),
        schedule=QSchedule(cfg.q0, cfg.q_increment, cfg.q_max),
    )


def _require_round(state: IterateState, oracle: RoundOracle) -> None:
    if oracle.round_index != state.t:
        raise ArgumentError(
            f"oracle is for round {oracle.round_index}, state expects round {state.t}"
        )


def sobow_step(state: IterateState, oracle: RoundOracle, cfg: OptimizerConfig):
    """One single-loop round: inner gradient step, truncated linear solve,
    window push, projected window-averaged outer step."""
    _require_round(state, oracle)
    y_next = state.y - cfg.alpha * oracle.grad_g_y(state.x, state.y)
    q = q_at(state.schedule, state.t)
    v0 = None
    if cfg.warm_start_solver and state.buffer.records:
        v0 = state.buffer.records[0].v_q
    record = estimate_hypergrad(oracle, state.x, y_next, cfg, q, v0=v0)
    buffer = state.buffer.pushed(record)
    direction = window_average(buffer)
    x_next = project(state.x - cfg.beta * direction, cfg.domain)
    next_state = IterateState(t=state.t + 1, x=x_next, y=y_next, buffer=buffer, schedule=state.schedule)
    return next_state, StepLog(t=state.t, x=state.x, y_next=y_next, record=record)


def oagd_step(state: IterateState, oracle: RoundOracle, past: OracleWindow, cfg: OptimizerConfig):
    """One round of the multi-evaluation baseline.

    Takes ``n_inner`` inner gradient steps, then re-estimates the
    hypergradient of every windowed past round at the current pair
    (each with its own linear solve) before the projected outer step.
    Returns ``(state, step_log, advanced_past_window)``.
    """
    _require_round(state, oracle)
    y_next = state.y
    for _ in range(cfg.n_inner):
        y_next = y_next - cfg.alpha * oracle.grad_g_y(state.x, y_next)
    q = q_at(state.schedule, state.t)

    grads = []
    current_record = None
    for past_oracle in (oracle,) + past.oracles[: cfg.k_window - 1]:
        rec = estimate_hypergrad(past_oracle, state.x, y_next, cfg, q)
        if current_record is None:
            current_record = rec
        grads.append(rec.grad)
    direction = _weighted_average(grads, cfg.eta, cfg.k_window)
    x_next = project(state.x - cfg.beta * direction, cfg.domain)
    next_state = IterateState(t=state.t + 1, x=x_next, y=y_next, buffer=state.buffer, schedule=state.schedule)
    log = StepLog(t=state.t, x=state.x, y_next=y_next, record=current_record)
    return next_state, log, past.pushed(oracle)


def ogd_step(state: IterateState, oracle: RoundOracle, cfg: OptimizerConfig):
    """Plain online hypergradient descent: the single-loop step with the
    window forced to length one."""
    if state.buffer.capacity != 1:
        state = dataclasses.replace(
            state, buffer=WindowBuffer(capacity=1, eta=state.buffer.eta)
        )
    return sobow_step(state, oracle, dataclasses.replace(cfg, k_window=1))
