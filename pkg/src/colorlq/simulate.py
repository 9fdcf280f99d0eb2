"""Forward simulation, cost accounting, Monte Carlo and exact path enumeration."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DimensionMismatch, InconsistentTrajectory, TooManyPaths
from .model import InitialCondition, NoiseSpec, SystemModel
from .policy import Policy

MAX_PATHS = 10**7


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One realized path.

    ``states`` holds x_0..x_{N+1}; ``noises`` holds w_{-1}..w_N.  ``controls``
    holds u_0..u_N (delay-free) or u_{-1}..u_{N-1} (delayed), so row k is the
    control entering the transition k -> k+1 in both cases.  ``stage_costs``
    has N+2 entries, the last one terminal.
    """

    states: np.ndarray
    controls: np.ndarray
    noises: np.ndarray
    stage_costs: np.ndarray
    total_cost: float
    delayed: bool = False

    def to_record(self) -> dict:
        return {
            "delayed": self.delayed,
            "x0": self.states[0].tolist(),
            "u_prev": self.controls[0].tolist() if self.delayed else None,
            "noises": self.noises.tolist(),
            "states": self.states.tolist(),
            "controls": self.controls.tolist(),
            "stage_costs": self.stage_costs.tolist(),
            "total_cost": self.total_cost,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_record())

    def to_csv(self) -> str:
        n, m = self.states.shape[1], self.controls.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "w_k"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(m)]
                   + ["stage_cost"])
        last = len(self.states) - 1
        for k in range(last + 1):
            wk = [repr(float(self.noises[k + 1]))] if k < last else [""]
            u = [repr(float(c)) for c in self.controls[k]] if k < last else [""] * m
            w.writerow([k] + wk + [repr(float(c)) for c in self.states[k]] + u
                       + [repr(float(self.stage_costs[k]))])
        return buf.getvalue()


def rollout(model: SystemModel, policy: Policy, noise_path, init: InitialCondition) -> Trajectory:
    """Simulate with ``noise_path = (w_0, ..., w_N)``; ``w_{-1}`` comes from ``init``."""
    N, n, m = model.N, model.n, model.m
    path = np.asarray(noise_path, dtype=float).ravel()
    if path.shape != (N + 1,):
        raise DimensionMismatch("noise_path", (N + 1,), path.shape)
    if policy.m != m and policy.n_steps > 0:
        raise DimensionMismatch("policy", m, policy.m)
    noises = np.concatenate([[init.w_prev], path])
    xs = np.zeros((N + 2, n))
    us = np.zeros((N + 1, m))
    costs = np.zeros(N + 2)
    x = np.array(init.x0, dtype=float)
    xs[0] = x
    u_prev = np.array(init.u_prev, dtype=float)
    for k in range(N + 1):
        w_prev, v = noises[k], noises[k + 1]
        hist = tuple(path[:k])
        if model.delay:
            u_in = u_prev
            costs[k] = x @ model.Q @ x + (u_in @ model.R @ u_in if k >= 1 else 0.0)
            if k < N:
                u_prev = np.asarray(policy.control(k, x, w_prev, u_prev=u_in, history=hist))
        else:
            u_in = np.asarray(policy.control(k, x, w_prev, history=hist))
            costs[k] = x @ model.Q @ x + u_in @ model.R @ u_in
        us[k] = u_in
        x = model.A(v) @ x + model.B(v, w_prev) @ u_in
        xs[k + 1] = x
    costs[N + 1] = x @ model.P_terminal @ x
    return Trajectory(xs, us, noises, costs, math.fsum(costs), bool(model.delay))


def replay(model: SystemModel, policy: Policy, record: dict | str) -> Trajectory:
    if isinstance(record, str):
        record = json.loads(record)
    noises = record["noises"]
    init = InitialCondition(
        x0=np.array(record["x0"], dtype=float),
        u_prev=np.array(record["u_prev"] if record["u_prev"] is not None
                        else np.zeros(model.m), dtype=float),
        w_prev=float(noises[0]),
    )
    return rollout(model, policy, noises[1:], init)


def cost(model: SystemModel, traj: Trajectory) -> float:
    """Quadratic cost of a trajectory, recomputed from its states and controls."""
    N = model.N
    if traj.states.shape != (N + 2, model.n) or traj.controls.shape != (N + 1, model.m):
        raise InconsistentTrajectory(
            f"trajectory shapes {traj.states.shape}/{traj.controls.shape} do not fit "
            f"N={N}, n={model.n}, m={model.m}")
    if traj.delayed != bool(model.delay):
        raise InconsistentTrajectory("delay flag of trajectory and model differ")
    terms = [x @ model.Q @ x for x in traj.states[: N + 1]]
    controls = traj.controls[1:] if model.delay else traj.controls
    terms += [u @ model.R @ u for u in controls]
    xN1 = traj.states[N + 1]
    terms.append(xN1 @ model.P_terminal @ xN1)
    return math.fsum(terms)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def uniforms(seed: int, index: int, size: int) -> np.ndarray:
    """Open-interval uniforms for sample ``index``: Philox keyed by ``seed``
    with the sample index in the second counter word."""
    bg = np.random.Philox(key=seed, counter=[0, index, 0, 0])
    raw = bg.random_raw(size)
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


def sample_path(noise: NoiseSpec, size: int, seed: int, index: int) -> np.ndarray:
    u = uniforms(seed, index, size)
    if noise.finite:
        cum = np.cumsum(noise.probs)
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(noise.values) - 1)
        return np.asarray(noise.values)[idx]
    return ndtri(u) * math.sqrt(noise.sigma2)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int

    def to_csv(self) -> str:
        return ("mean,stderr,n_samples,seed\n"
                f"{self.mean!r},{self.stderr!r},{self.n_samples},{self.seed}\n")


def monte_carlo(model: SystemModel, policy: Policy, init: InitialCondition, noise: NoiseSpec,
                n_samples: int, seed: int) -> MCEstimate:
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    costs = np.empty(n_samples)
    for i in range(n_samples):
        path = sample_path(noise, model.N + 1, seed, i)
        costs[i] = rollout(model, policy, path, init).total_cost
    mean = math.fsum(costs) / n_samples
    var = math.fsum((costs - mean) ** 2) / (n_samples - 1)
    return MCEstimate(mean, math.sqrt(var / n_samples), n_samples, seed)


# --------------------------------------------------------------------------
# exact enumeration
# --------------------------------------------------------------------------

def leaf_costs(model: SystemModel, policy: Policy, noise: NoiseSpec, init: InitialCondition,
               max_paths: int = MAX_PATHS):
    """Yield ``(path probability, path cost)`` for every noise path, in
    lexicographic order of support indices."""
    noise.require_finite("exact expected cost")
    vals, probs = noise.values, noise.probs
    count = len(vals) ** (model.N + 1)
    if count > max_paths:
        raise TooManyPaths(count, max_paths)
    N, Q, R = model.N, model.Q, model.R
    A_v = [model.A(v) for v in vals]

    def walk(k, x, u_prev, w_prev, hist, prob, acc):
        if k == N + 1:
            yield prob, math.fsum(acc + (float(x @ model.P_terminal @ x),))
            return
        if model.delay:
            u_in = u_prev
            stage = x @ Q @ x + (u_in @ R @ u_in if k >= 1 else 0.0)
            u_next = (np.asarray(policy.control(k, x, w_prev, u_prev=u_in, history=hist))
                      if k < N else None)
        else:
            u_in = np.asarray(policy.control(k, x, w_prev, history=hist))
            stage = x @ Q @ x + u_in @ R @ u_in
            u_next = None
        acc = acc + (float(stage),)
        for v, p, A in zip(vals, probs, A_v):
            x1 = A @ x + model.B(v, w_prev) @ u_in
            yield from walk(k + 1, x1, u_next, v, hist + (v,), prob * p, acc)

    yield from walk(0, np.array(init.x0, dtype=float), np.array(init.u_prev, dtype=float),
                    init.w_prev, (), 1.0, ())


def exact_expected_cost(model: SystemModel, policy: Policy, noise: NoiseSpec,
                        init: InitialCondition, max_paths: int = MAX_PATHS) -> float:
    return math.fsum(p * c for p, c in leaf_costs(model, policy, noise, init, max_paths))
