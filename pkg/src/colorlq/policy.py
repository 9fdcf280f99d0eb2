"""Uniform controller interface.

A policy maps ``(k, x_k, w_{k-1})`` -- plus ``u_{k-1}`` for delayed systems and
the noise history for tree policies -- to the control ``u_k``.  Every policy
here is deterministic and linear in ``(x, u_prev)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, IndexOutOfRange, UnknownSupportValue
from .riccati_delay import delayed_gains
from .riccati_free import value_matrix
from .schedule import Schedule, lookup


class Policy:
    delayed: bool = False
    m: int
    n_steps: int  # number of decisions: N+1 delay-free, N delayed

    def control(self, k: int, x: np.ndarray, w_prev: float,
                u_prev: np.ndarray | None = None, history: tuple = ()) -> np.ndarray:
        raise NotImplementedError

    def _check_k(self, k: int) -> None:
        if not 0 <= k < self.n_steps:
            raise IndexOutOfRange(f"control index {k} outside 0..{self.n_steps - 1}")


class SchedulePolicy(Policy):
    """Feedback law read off a literal, measurable, white or delayed schedule."""

    def __init__(self, schedule: Schedule):
        if not schedule.solvable:
            raise ConfigError(f"schedule is not solvable: {schedule.failure}")
        self.schedule = schedule
        self.kind = schedule.kind
        self.delayed = schedule.kind == "delayed"
        self.n_steps = schedule.N if self.delayed else schedule.N + 1
        last = schedule.stages[-1]
        if self.delayed:
            self.m = last.Rk.shape[0]
        elif self.kind == "white":
            self.m = last.K.shape[0]
        else:
            self.m = next(iter(last.G.values())).shape[0]

    def gain(self, k: int, w_prev: float) -> np.ndarray:
        """Delay-free gain ``G`` with ``u_k = -G x_k``."""
        self._check_k(k)
        st = self.schedule.stage(k)
        if self.kind == "white":
            return st.K
        if self.kind in ("literal", "measurable"):
            return lookup(st.G, w_prev, k)
        raise ConfigError("delayed schedules have no single-state gain; use delayed_gains")

    def control(self, k, x, w_prev, u_prev=None, history=()):
        x = np.asarray(x, dtype=float)
        if self.delayed:
            self._check_k(k)
            Kx, Ku = delayed_gains(self.schedule, k, w_prev)
            return -(Kx @ x + Ku @ np.asarray(u_prev, dtype=float))
        return -(self.gain(k, w_prev) @ x)


class ZeroPolicy(Policy):
    def __init__(self, m: int, n_steps: int, delayed: bool = False):
        self.m, self.n_steps, self.delayed = m, n_steps, delayed

    def control(self, k, x, w_prev, u_prev=None, history=()):
        self._check_k(k)
        return np.zeros(self.m)


class LinearPolicy(Policy):
    """Time-varying linear feedback ``u_k = -K_k x_k`` (or ``-K_k [x_k; u_{k-1}]``
    when delayed)."""

    def __init__(self, gains: Sequence[np.ndarray], delayed: bool = False):
        self.gains = [np.asarray(K, dtype=float) for K in gains]
        self.delayed = delayed
        self.n_steps = len(self.gains)
        self.m = self.gains[0].shape[0] if self.gains else 0

    def control(self, k, x, w_prev, u_prev=None, history=()):
        self._check_k(k)
        z = np.asarray(x, dtype=float)
        if self.delayed:
            z = np.concatenate([z, np.asarray(u_prev, dtype=float)])
        return -(self.gains[k] @ z)


@dataclass
class TreePolicy(Policy):
    """Open-loop control per noise-history node (the oracle's adapted policy).

    ``controls[h]`` is the control chosen after observing history ``h``; for a
    delay-free tree ``len(h) = k`` at decision ``k``, likewise when delayed.
    """

    controls: dict
    m: int
    n_steps: int
    delayed: bool = False
    cost: float | None = field(default=None, compare=False)

    def control(self, k, x, w_prev, u_prev=None, history=()):
        self._check_k(k)
        h = tuple(history)
        if len(h) != k:
            raise IndexOutOfRange(f"history of length {len(h)} at step {k}")
        try:
            return self.controls[h]
        except KeyError:
            raise UnknownSupportValue(h[-1] if h else w_prev, k) from None

    def rows(self):
        """``(history string, k, u)`` rows, histories in lexicographic node order."""
        for h in sorted(self.controls, key=lambda t: (len(t), t)):
            yield ";".join(repr(v) for v in h), len(h), self.controls[h]


def from_schedule(schedule: Schedule) -> SchedulePolicy:
    return SchedulePolicy(schedule)


def control_free(policy: Policy, k: int, x, w_prev: float, history: tuple = ()) -> np.ndarray:
    if policy.delayed:
        raise ConfigError("control_free called with a delayed policy")
    return policy.control(k, x, w_prev, history=history)


def costate_relation_free(schedule: Schedule, k: int, x, w_prev: float) -> np.ndarray:
    """``P_k(w_prev) x``, the costate ``lambda_{k-1}`` implied by the schedule."""
    return value_matrix(schedule, k, w_prev) @ np.asarray(x, dtype=float)


class TablePolicy(Policy):
    """Markov feedback with gains tabulated over the previous noise value:
    ``u_k = -K_k(w_{k-1}) z_k`` where ``z_k`` is ``x_k`` or ``[x_k; u_{k-1}]``."""

    def __init__(self, gains: Sequence[dict], delayed: bool = False):
        self.gains = list(gains)
        self.delayed = delayed
        self.n_steps = len(self.gains)
        self.m = next(iter(self.gains[0].values())).shape[0] if self.gains else 0

    def control(self, k, x, w_prev, u_prev=None, history=()):
        self._check_k(k)
        K = lookup(self.gains[k], w_prev, k)
        z = np.asarray(x, dtype=float)
        if self.delayed:
            z = np.concatenate([z, np.asarray(u_prev, dtype=float)])
        return -(K @ z)
