"""Piecewise deterministic Markov process abstraction and exact simulation.

A process is described by a deterministic flow, a state-dependent jump
intensity with its accumulated integral along the flow and the inverse of
that integral, and a jump kernel.  Jump times are produced by inverse
transform: the accumulated intensity evaluated at the jump time is a
standard exponential variable, so models with closed-form inverses are
simulated exactly (no discretisation anywhere).

Two engines are provided: ``simulate_path`` produces one trajectory with
its full event log, ``simulate_ensemble`` advances many replications at
once using counter-indexed marks so that replication ``k`` consumes the
same draw sequence regardless of batching, and coupled ensembles can
share those draws (common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .rng import EventMarks, MarkView, RandomStream

__all__ = [
    "Model",
    "Trajectory",
    "Estimate",
    "DomainError",
    "ExplosionError",
    "sample_jump_time",
    "simulate_path",
    "simulate_ensemble",
    "ensemble_states_at",
    "semigroup_estimate",
    "gradient_semigroup_estimate",
    "default_bump",
]

MAX_EVENTS_DEFAULT = 10_000_000


class DomainError(ValueError):
    """A state or start point fell outside the model domain."""


class ExplosionError(RuntimeError):
    """Event count exceeded the guard; the model violates non-explosiveness."""


def _ones_like(x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Model:
    """A PDMP on an open interval of the real line.

    Core fields follow the jump-time construction: ``flow(x, t)`` is the
    deterministic motion, ``rate(x)`` the jump intensity, ``cum_rate(x, t)``
    its integral along the flow started at ``x``, ``inv_cum_rate(x, u)``
    the inverse of that integral in ``t``, and ``jump(x, rng)`` a sample
    of the post-jump state.  All callables must accept numpy arrays.

    ``jump_gradient_bound`` is the factor by which the jump kernel can
    expand the (weighted) gradient; ``weight`` is the gradient weight used
    by weighted energies (constantly one unless the model says otherwise).

    ``h_form`` and ``ktilde_sampler``, when provided, are closed-form
    shortcuts used by the embedded-chain module (the mean residual
    normaliser and the length-biased inter-jump sampler); generic
    quadrature fallbacks are used otherwise.
    """

    name: str
    domain_low: float
    domain_high: float
    drift: Callable
    flow: Callable
    rate: Callable
    cum_rate: Callable
    inv_cum_rate: Callable
    jump: Callable
    jump_gradient_bound: Callable
    weight: Callable = _ones_like
    h_form: Optional[Callable] = None
    ktilde_sampler: Optional[Callable] = None

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.domain_low) & (x <= self.domain_high)

    def require_in_domain(self, x, what: str = "state"):
        if not np.all(self.contains(x)):
            raise DomainError(
                f"{what} outside [{self.domain_low}, {self.domain_high}] for model {self.name}"
            )


@dataclass(frozen=True)
class Trajectory:
    """Event log of one path: (jump time, pre-jump state, post-jump state)."""

    initial_state: float
    events: tuple
    end_time: float
    end_state: float

    @property
    def jump_times(self):
        return np.array([e[0] for e in self.events])

    @property
    def n_events(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    std_error: float

    def __iter__(self):
        return iter((self.value, self.std_error))


def sample_jump_time(model: Model, x, rng) -> float:
    """Draw the first jump time from state ``x`` by inverse transform."""
    model.require_in_domain(x, "start state")
    e = rng.exponential()
    return float(model.inv_cum_rate(x, e))


def simulate_path(
    model: Model, x0: float, t_end: float, rng: RandomStream,
    max_events: int = MAX_EVENTS_DEFAULT,
) -> Trajectory:
    """Simulate one exact trajectory on [0, t_end] with its event log."""
    model.require_in_domain(x0, "start state")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    x = float(x0)
    t = 0.0
    events = []
    while True:
        e = rng.exponential()
        remaining = t_end - t
        if model.cum_rate(x, remaining) <= e:
            end_state = float(model.flow(x, remaining))
            break
        if len(events) >= max_events:
            raise ExplosionError(f"more than {max_events} events before t={t_end}")
        tau = float(model.inv_cum_rate(x, e))
        pre = float(model.flow(x, tau))
        post = float(model.jump(pre, rng))
        model.require_in_domain(post, "post-jump state")
        t += tau
        events.append((t, pre, post))
        x = post
    return Trajectory(float(x0), tuple(events), float(t_end), end_state)


def simulate_ensemble(
    model: Model, x0, t_end, stream: RandomStream,
    max_events: int = MAX_EVENTS_DEFAULT,
):
    """End states at ``t_end`` for a whole ensemble of start states.

    ``x0`` is an array of starts (scalars are broadcast against ``t_end``),
    ``t_end`` a scalar or per-replication horizon.  Marks are keyed by
    ``stream``'s identity: calling twice with streams derived from the same
    node replays identical per-replication draws, which is exactly the
    coupling used by the gradient and transport-distance estimators.
    """
    x0b, tb = np.broadcast_arrays(np.asarray(x0, dtype=float),
                                  np.asarray(t_end, dtype=float))
    x0 = np.atleast_1d(x0b).astype(float, copy=True)
    t = np.atleast_1d(tb).astype(float, copy=True)
    if np.any(t < 0):
        raise ValueError("t_end must be nonnegative")
    model.require_in_domain(x0, "start state")
    marks = EventMarks(stream)
    x = x0.copy()
    alive = np.flatnonzero(t > 0)
    event = 0
    while alive.size:
        if event >= max_events:
            raise ExplosionError(f"more than {max_events} events in ensemble")
        e = marks.exponential(alive, event, slot=0)
        xa = x[alive]
        done = model.cum_rate(xa, t[alive]) <= e
        idx_done = alive[done]
        x[idx_done] = model.flow(x[idx_done], t[idx_done])
        t[idx_done] = 0.0
        alive = alive[~done]
        if alive.size:
            tau = model.inv_cum_rate(x[alive], e[~done])
            pre = model.flow(x[alive], tau)
            x[alive] = model.jump(pre, MarkView(marks, alive, event))
            t[alive] -= tau
        event += 1
    return x


def ensemble_states_at(
    model: Model, x0, times, stream: RandomStream,
    max_events: int = MAX_EVENTS_DEFAULT,
):
    """States of an ensemble sampled at a grid of times.

    Returns an array of shape (n_paths, n_times).  The grid must be
    nondecreasing; the ensemble is advanced segment by segment, so the
    samples along a row belong to one path.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d array")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be nondecreasing and nonnegative")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    out = np.empty((x.size, times.size))
    prev = 0.0
    for j, tj in enumerate(times):
        x = simulate_ensemble(model, x, tj - prev, stream.substream(j), max_events)
        out[:, j] = x
        prev = tj
    return out


def semigroup_estimate(
    model: Model, f: Callable, x: float, t: float, n: int, rng: RandomStream,
    max_events: int = MAX_EVENTS_DEFAULT,
) -> Estimate:
    """Estimate the conditional mean of f at time t started from x."""
    if n < 2:
        raise ValueError("need at least two replications")
    ends = simulate_ensemble(model, np.full(int(n), float(x)), t, rng.spawn(), max_events)
    vals = np.asarray(f(ends), dtype=float)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n)))


def default_bump(x: float) -> float:
    return 1e-4 * max(1.0, abs(float(x)))


def gradient_semigroup_estimate(
    model: Model, f: Callable, x: float, t: float, n: int, rng: RandomStream,
    h: Optional[float] = None, max_events: int = MAX_EVENTS_DEFAULT,
) -> Estimate:
    """Central-difference estimate of d/dx of the time-t conditional mean.

    Both bump ensembles replay identical per-replication exponential marks
    and jump draws (they share one stream node), so for synchronously
    coupled models the difference is exact and the variance collapses.
    """
    if n < 2:
        raise ValueError("need at least two replications")
    h = default_bump(x) if h is None else float(h)
    if h <= 0:
        raise ValueError("bump size must be positive")
    if x - h < model.domain_low or x + h > model.domain_high:
        raise DomainError(f"x +/- h leaves the domain (x={x}, h={h})")
    node = rng.spawn()
    up = simulate_ensemble(model, np.full(int(n), x + h), t, node, max_events)
    dn = simulate_ensemble(model, np.full(int(n), x - h), t, node, max_events)
    d = (np.asarray(f(up), dtype=float) - np.asarray(f(dn), dtype=float)) / (2.0 * h)
    return Estimate(float(d.mean()), float(d.std(ddof=1) / np.sqrt(n)))
