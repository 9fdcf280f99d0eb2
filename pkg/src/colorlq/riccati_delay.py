"""Backward recursion and feedback law for the one-step input-delay system

    x_{k+1} = (A0 + A1 w_k) x_k + (B0 + B1 w_k + B2 w_{k-1}) u_{k-1}.

The stage-k quantities ``P, Rk, T0, T1, F`` are built from stage k+1.  The
control applied at time k uses stage k+1:

    u_k = -Rk_{k+1}^{-1} [T0_{k+1} x_k + (T1_{k+1} + F_{k+1} B2 w_{k-1}) u_{k-1}].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IndexOutOfRange, NotSolvable
from .linalg import min_eig, pd_factor, pd_solve, sym
from .model import SystemModel
from .schedule import Schedule


@dataclass(frozen=True, eq=False)
class DelayedStage:
    k: int
    P: np.ndarray
    Rk: np.ndarray
    T0: np.ndarray
    T1: np.ndarray
    F: np.ndarray

    kind = "delayed"


def terminal_stage(model: SystemModel) -> DelayedStage:
    """Stage N+1: ``P = P_terminal``; T0, T1, F zero; Rk the (inert) identity."""
    n, m = model.n, model.m
    return DelayedStage(model.N + 1, np.array(model.P_terminal), np.eye(m),
                        np.zeros((m, n)), np.zeros((m, m)), np.zeros((m, n)))


def variance_factor(model: SystemModel) -> float:
    return math.sqrt(model.sigma2) if model.sigma_unsquared else model.sigma2


def backstep_delayed(nxt: DelayedStage, model: SystemModel) -> DelayedStage:
    k = nxt.k - 1
    fac = pd_factor(nxt.Rk)
    if fac is None:
        raise NotSolvable(nxt.k, "R_k > 0", min_eig(nxt.Rk))
    s = variance_factor(model)
    A0, A1, B0, B1, B2 = model.A0, model.A1, model.B0, model.B1, model.B2
    P = nxt.P

    Rinv_T0 = pd_solve(fac, nxt.T0)   # m x n
    Rinv_T1 = pd_solve(fac, nxt.T1)   # m x m
    Rinv_F = pd_solve(fac, nxt.F)     # m x n
    T1R_T0 = nxt.T1.T @ Rinv_T0       # (T1)' R^{-1} T0
    PA0_FRT0 = P @ A0 - nxt.F.T @ Rinv_T0

    Rk = sym(model.R + B0.T @ P @ B0 + s * (B1.T @ P @ B1)
             + s * (B2.T @ (P - nxt.F.T @ Rinv_F) @ B2)
             - nxt.T1.T @ Rinv_T1)
    T0 = (B0.T @ P @ A0 @ A0 + s * (B1.T @ P @ A1 @ A0)
          + s * (B2.T @ PA0_FRT0 @ A1) - T1R_T0 @ A0)
    T1 = (B0.T @ P @ A0 @ B0 + s * (B1.T @ P @ A1 @ B0)
          + s * (B2.T @ PA0_FRT0 @ B1) - T1R_T0 @ B0)
    F = B0.T @ P @ A0 + s * (B1.T @ P @ A1) - T1R_T0
    P_new = sym(A0.T @ P @ A0 + s * (A1.T @ P @ A1) + model.Q - nxt.T0.T @ Rinv_T0)
    return DelayedStage(k, P_new, Rk, T0, T1, F)


def solve_delayed(model: SystemModel, strict: bool = True) -> Schedule:
    """Stages k = N..0.  ``Rk`` must be positive definite for k = 1..N, the
    steps whose Hessian governs a decision (u_0..u_{N-1})."""
    if model.delay != 1:
        raise ConfigError("delayed solver called on a delay-free model (delay = 0)")
    stages: list = [None] * (model.N + 1)
    sched = Schedule("delayed", model.N, stages, B2=np.array(model.B2))
    st = terminal_stage(model)
    for _ in range(model.N + 1):
        try:
            st = backstep_delayed(st, model)
            if st.k >= 1 and pd_factor(st.Rk) is None:
                raise NotSolvable(st.k, "R_k > 0", min_eig(st.Rk))
        except NotSolvable as exc:
            if strict:
                raise
            sched.failure = exc
            return sched
        stages[st.k] = st
    return sched


def delayed_gains(schedule: Schedule, k: int, w_prev: float) -> tuple[np.ndarray, np.ndarray]:
    """``(Kx, Ku)`` with ``u_k = -(Kx x_k + Ku u_{k-1})``."""
    if not 0 <= k <= schedule.N - 1:
        raise IndexOutOfRange(f"delayed control index {k} outside 0..{schedule.N - 1}")
    st = schedule.stage(k + 1)
    fac = pd_factor(st.Rk)
    if fac is None:
        raise NotSolvable(k + 1, "R_k > 0", min_eig(st.Rk))
    Kx = pd_solve(fac, st.T0)
    Ku = pd_solve(fac, st.T1 + w_prev * (st.F @ schedule.B2))
    return Kx, Ku


def control_delayed(schedule: Schedule, k: int, x, u_prev, w_prev: float) -> np.ndarray:
    Kx, Ku = delayed_gains(schedule, k, w_prev)
    return -(Kx @ np.asarray(x, dtype=float) + Ku @ np.asarray(u_prev, dtype=float))
