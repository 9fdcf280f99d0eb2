"""Backward recursions for the delay-free system.

Three schedules are produced:

* ``literal``    -- Upsilon_k, M_k, P_k evaluated for each value ``w`` of the
  previous noise, with the probability-weighted average of the P table fed to
  the next (earlier) step as a single matrix.
* ``measurable`` -- exact dynamic programming on the information state
  ``(x_k, w_{k-1})``; the cost-to-go Hessian is a table over ``w``.
* ``white``      -- the classical multiplicative white-noise Riccati
  recursion, valid when ``B2 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, NotSolvable, RequiresB2Zero
from .linalg import min_eig, pd_factor, pd_solve, sym
from .model import InitialCondition, NoiseSpec, SystemModel
from .schedule import Schedule, lookup


@dataclass(frozen=True, eq=False)
class StageLiteral:
    k: int
    Upsilon: dict
    M: dict
    P: dict
    G: dict  # Upsilon^{-1} M, the feedback gain

    kind = "literal"


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Exact stage-k quantities given ``w_{k-1} = w``: cost-to-go ``S``,
    gain ``G`` (``u = -G x``) and control Hessian ``H``."""

    k: int
    S: dict
    G: dict
    H: dict

    kind = "measurable"


@dataclass(frozen=True, eq=False)
class WhiteStage:
    k: int
    Pw: np.ndarray
    Mbar: np.ndarray
    Rk: np.ndarray
    K: np.ndarray

    kind = "white"


def _support_values(support) -> tuple[float, ...]:
    if isinstance(support, NoiseSpec):
        return support.require_finite().values
    return tuple(float(w) for w in support)


def _step0_keys(values: tuple[float, ...], w_prev: float | None) -> tuple[float, ...]:
    if w_prev is None or w_prev in values:
        return values
    return values + (float(w_prev),)


def _require_free(model: SystemModel) -> None:
    if model.delay != 0:
        raise ConfigError("delay-free solver called on a delayed model (delay = 1)")


def backstep_literal(P_next: np.ndarray, model: SystemModel, support: Iterable[float],
                     k: int = 0) -> StageLiteral:
    """One step of the colored recursion with ``P_{k+1} = P_next``."""
    P1 = np.asarray(P_next, dtype=float)
    s2 = model.sigma2
    A0, A1, B0, B1, B2 = model.A0, model.A1, model.B0, model.B1, model.B2
    base_P = A0.T @ P1 @ A0 + s2 * (A1.T @ P1 @ A1) + model.Q
    base_U = model.R + s2 * (B1.T @ P1 @ B1)
    base_M = B0.T @ P1 @ A0 + s2 * (B1.T @ P1 @ A1)
    cross_M = B2.T @ P1 @ A0

    ups, Ms, Ps, Gs = {}, {}, {}, {}
    for w in _support_values(support):
        Bw = B0 + B2 * w
        U = sym(base_U + Bw.T @ P1 @ Bw)
        M = base_M + w * cross_M
        fac = pd_factor(U)
        if fac is None:
            raise NotSolvable(k, "Upsilon_k > 0", min_eig(U), w)
        G = pd_solve(fac, M)
        ups[w], Ms[w], Gs[w] = U, M, G
        Ps[w] = sym(base_P - M.T @ G)
    return StageLiteral(k, ups, Ms, Ps, Gs)


def solve_literal(model: SystemModel, noise: NoiseSpec, w_prev: float | None = None,
                  strict: bool = True) -> Schedule:
    """Iterate :func:`backstep_literal` from ``P_terminal``.

    ``w_prev`` adds a step-0 table entry for an initial noise value outside
    the support.  With ``strict=False`` a solvability failure is recorded on
    the returned schedule instead of raised.
    """
    _require_free(model)
    values = noise.require_finite("literal recursion").values
    probs = np.array(noise.probs)
    stages: list = [None] * (model.N + 1)
    sched = Schedule("literal", model.N, stages, values)
    P_next = np.array(model.P_terminal)
    for k in range(model.N, -1, -1):
        keys = _step0_keys(values, w_prev) if k == 0 else values
        try:
            st = backstep_literal(P_next, model, keys, k)
        except NotSolvable as exc:
            if strict:
                raise
            sched.failure = exc
            return sched
        stages[k] = st
        P_next = sym(np.tensordot(probs, np.stack([st.P[v] for v in values]), axes=1))
    return sched


def backstep_measurable(S_next: Mapping[float, np.ndarray], model: SystemModel,
                        noise: NoiseSpec, k: int = 0,
                        keys: Iterable[float] | None = None) -> ValueTable:
    """Exact Bellman step; ``S_next[v]`` is the step-(k+1) Hessian given ``w_k = v``."""
    noise.require_finite("measurable recursion")
    vals, probs = noise.values, noise.probs
    A_v = [model.A(v) for v in vals]
    S_v = [np.asarray(S_next[v], dtype=float) for v in vals]
    EAA = model.Q + sum(p * (A.T @ S @ A) for p, A, S in zip(probs, A_v, S_v))

    S_out, G_out, H_out = {}, {}, {}
    for w in (vals if keys is None else _support_values(keys)):
        B_v = [model.B(v, w) for v in vals]
        H = sym(model.R + sum(p * (B.T @ S @ B) for p, B, S in zip(probs, B_v, S_v)))
        L = sum(p * (B.T @ S @ A) for p, B, S, A in zip(probs, B_v, S_v, A_v))
        fac = pd_factor(H)
        if fac is None:
            raise NotSolvable(k, "H_k > 0", min_eig(H), w)
        G = pd_solve(fac, L)
        S_out[w], G_out[w], H_out[w] = sym(EAA - L.T @ G), G, H
    return ValueTable(k, S_out, G_out, H_out)


def solve_measurable(model: SystemModel, noise: NoiseSpec, w_prev: float | None = None,
                     strict: bool = True) -> Schedule:
    _require_free(model)
    values = noise.require_finite("measurable recursion").values
    stages: list = [None] * (model.N + 1)
    sched = Schedule("measurable", model.N, stages, values)
    S_next = {v: np.array(model.P_terminal) for v in values}
    for k in range(model.N, -1, -1):
        keys = _step0_keys(values, w_prev) if k == 0 else values
        try:
            st = backstep_measurable(S_next, model, noise, k, keys)
        except NotSolvable as exc:
            if strict:
                raise
            sched.failure = exc
            return sched
        stages[k] = st
        S_next = st.S
    return sched


def solve_white(model: SystemModel, strict: bool = True) -> Schedule:
    """Multiplicative white-noise Riccati recursion (requires ``B2 = 0``)."""
    _require_free(model)
    if model.colored:
        raise RequiresB2Zero("white-noise recursion")
    s2 = model.sigma2
    A0, A1, B0, B1 = model.A0, model.A1, model.B0, model.B1
    stages: list = [None] * (model.N + 1)
    sched = Schedule("white", model.N, stages)
    P = np.array(model.P_terminal)
    for k in range(model.N, -1, -1):
        Rk = sym(model.R + B0.T @ P @ B0 + s2 * (B1.T @ P @ B1))
        Mbar = B0.T @ P @ A0 + s2 * (B1.T @ P @ A1)
        fac = pd_factor(Rk)
        if fac is None:
            exc = NotSolvable(k, "Upsilon_k > 0", min_eig(Rk))
            if strict:
                raise exc
            sched.failure = exc
            return sched
        K = pd_solve(fac, Mbar)
        P = sym(A0.T @ P @ A0 + s2 * (A1.T @ P @ A1) + model.Q - Mbar.T @ K)
        stages[k] = WhiteStage(k, P, Mbar, Rk, K)
    return sched


def value_matrix(schedule: Schedule, k: int, w: float) -> np.ndarray:
    """Cost-to-go Hessian of a delay-free schedule at step ``k`` given ``w_{k-1} = w``."""
    st = schedule.stage(k)
    if schedule.kind == "literal":
        return lookup(st.P, w, k)
    if schedule.kind == "measurable":
        return lookup(st.S, w, k)
    if schedule.kind == "white":
        return st.Pw
    raise ConfigError(f"no delay-free value matrix for a {schedule.kind!r} schedule")


def optimal_value(schedule: Schedule, init: InitialCondition) -> float:
    """``x0' P_0 x0`` with the step-0 table read at ``w_prev``."""
    P0 = value_matrix(schedule, 0, init.w_prev)
    x0 = np.asarray(init.x0)
    if x0.shape != (P0.shape[0],):
        raise ConfigError(f"x0 has shape {x0.shape}, expected ({P0.shape[0]},)")
    return float(x0 @ P0 @ x0)
