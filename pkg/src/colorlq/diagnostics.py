"""Runtime checks of the completion-of-squares identity, comparison of the
recursion-based controllers against the oracle, and structural reductions."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ColorLQError, NotSolvable, RequiresB2Zero
from .model import InitialCondition, NoiseSpec, SystemModel, rademacher, validate
from .oracle import augmented_lqr, backward_costate, forward_tree, path_qp, stationarity_residual
from .policy import SchedulePolicy
from .riccati_delay import backstep_delayed, delayed_gains, solve_delayed, terminal_stage
from .riccati_free import optimal_value, solve_literal, solve_measurable, solve_white
from .schedule import Schedule
from .simulate import exact_expected_cost

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
LOWER_BOUND_TOL = 1e-9


# --------------------------------------------------------------------------
# seeded instances
# --------------------------------------------------------------------------

def _psd(rng: np.random.Generator, k: int, shift: float) -> np.ndarray:
    X = rng.normal(size=(k, k))
    S = 0.5 * (X + X.T)
    S = S - np.linalg.eigvalsh(S)[0] * np.eye(k) + shift * np.eye(k)
    return 0.5 * (S + S.T)


def random_instance(seed: int, n: int = 2, m: int = 1, N: int = 3, colored: bool = True,
                    delay: int = 0, sigma2: float = 1.0, scale: float = 0.5):
    """Seeded instance with eigenvalue-shifted symmetric weights.

    Returns ``(model, params)``; ``params`` is enough to regenerate it.
    """
    params = dict(seed=seed, n=n, m=m, N=N, colored=colored, delay=delay,
                  sigma2=sigma2, scale=scale)
    rng = np.random.default_rng(seed)

    def g(*shape):
        return scale * rng.normal(size=shape)

    cfg = dict(
        N=N, delay=delay, sigma2=sigma2,
        A0=g(n, n), A1=g(n, n), B0=g(n, m), B1=g(n, m),
        B2=g(n, m) if colored else np.zeros((n, m)),
        Q=_psd(rng, n, 0.1), R=_psd(rng, m, 0.5), P_terminal=_psd(rng, n, 0.1),
    )
    return validate({k: v.tolist() if isinstance(v, np.ndarray) else v
                     for k, v in cfg.items()}), params


def random_init(seed: int, model: SystemModel, noise: NoiseSpec) -> InitialCondition:
    rng = np.random.default_rng([seed, 1])
    w_prev = noise.values[int(rng.integers(len(noise.values)))] if noise.finite else 0.0
    return InitialCondition(rng.normal(size=model.n), rng.normal(size=model.m), w_prev)


# --------------------------------------------------------------------------
# completion of squares
# --------------------------------------------------------------------------

@dataclass
class TelescopingReport:
    residual: float
    max_square_term: float
    per_step: list = field(default_factory=list)


def telescoping_residual(model: SystemModel, white: Schedule, policy, noise: NoiseSpec,
                         init: InitialCondition) -> TelescopingReport:
    """Per step k, compare  E[x_k'P_k x_k] - E[x_{k+1}'P_{k+1} x_{k+1}]  with
    E[x'Qx + u'Ru - (u + K x)' R_k (u + K x)]  by exact enumeration.

    Holds for any adapted ``policy`` when B2 = 0.
    """
    if model.colored:
        raise RequiresB2Zero("telescoping identity")
    tree, fwd = forward_tree(model, policy, noise.require_finite("telescoping"), init)
    N = model.N

    def P(k):
        return model.P_terminal if k == N + 1 else white.stage(k).Pw

    worst, worst_sq, rows = 0.0, 0.0, []
    for k in range(N + 1):
        st = white.stage(k)
        lhs, rhs, sq = [], [], []
        for h, p in tree.levels[k]:
            x, u = fwd.states[h], fwd.controls[h]
            e = u + st.K @ x
            s = float(e @ st.Rk @ e)
            lhs.append(p * float(x @ P(k) @ x))
            rhs.append(p * float(x @ model.Q @ x + u @ model.R @ u - s))
            sq.append(p * s)
        for h, p in tree.levels[k + 1]:
            x = fwd.states[h]
            lhs.append(-p * float(x @ P(k + 1) @ x))
        diff = abs(math.fsum(lhs) - math.fsum(rhs))
        square = math.fsum(sq)
        rows.append({"k": k, "residual": diff, "square_term": square})
        worst, worst_sq = max(worst, diff), max(worst_sq, abs(square))
    return TelescopingReport(worst, worst_sq, rows)


# --------------------------------------------------------------------------
# comparison harness
# --------------------------------------------------------------------------

@dataclass
class MethodResult:
    method: str
    cost: float | None
    gap: float | None
    rel_gap: float | None
    solvable: bool
    max_residual: float | None
    claimed_value: float | None = None
    note: str = ""


@dataclass
class ComparisonReport:
    instance_id: str
    summary: dict
    oracle_cost: float
    methods: list
    lower_bound_ok: bool
    white_bound: float | None = None
    white_bound_ok: bool | None = None

    def method(self, name: str) -> MethodResult:
        for r in self.methods:
            if r.method == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "summary": self.summary,
            "oracle_cost": self.oracle_cost,
            "lower_bound_ok": self.lower_bound_ok,
            "white_bound": self.white_bound,
            "white_bound_ok": self.white_bound_ok,
            "methods": [asdict(r) for r in self.methods],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def csv_rows(self) -> list[list]:
        return [[self.instance_id, r.method, r.cost, r.gap, r.solvable, r.max_residual]
                for r in self.methods]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["instance_id", "method", "cost", "gap", "solvable", "max_residual"])
        for row in self.csv_rows():
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v)
                        for v in row])
        return buf.getvalue()


def default_methods(model: SystemModel) -> list[str]:
    if model.delay:
        return ["delayed"]
    return ["literal", "measurable"] + ([] if model.colored else ["white"])


def _schedule(method: str, model: SystemModel, noise: NoiseSpec, w_prev: float) -> Schedule:
    if method == "literal":
        return solve_literal(model, noise, w_prev)
    if method == "measurable":
        return solve_measurable(model, noise, w_prev)
    if method == "white":
        return solve_white(model)
    if method == "delayed":
        return solve_delayed(model)
    raise ValueError(f"unknown method {method!r}")


def compare_policies(model: SystemModel, noise: NoiseSpec, init: InitialCondition,
                     methods: list[str] | None = None,
                     instance_id: str = "instance") -> ComparisonReport:
    """Exact closed-loop cost of each recursion's controller against the
    path-enumeration optimum.  Gaps are reported, never asserted."""
    noise.require_finite("policy comparison")
    methods = default_methods(model) if methods is None else list(methods)
    qp = path_qp(model, noise, init)
    oracle_res = stationarity_residual(model, backward_costate(model, qp.policy, noise, init), noise)
    results = [MethodResult("oracle", qp.cost, 0.0, 0.0, True, oracle_res)]
    scale = max(abs(qp.cost), 1e-300)

    white_bound = None
    for method in methods:
        try:
            sched = _schedule(method, model, noise, init.w_prev)
        except NotSolvable as exc:
            results.append(MethodResult(method, None, None, None, False, None, note=str(exc)))
            continue
        pol = SchedulePolicy(sched)
        c = exact_expected_cost(model, pol, noise, init)
        res = stationarity_residual(model, backward_costate(model, pol, noise, init), noise)
        claimed = None if method == "delayed" else optimal_value(sched, init)
        if method == "white":
            white_bound = claimed
        gap = c - qp.cost
        results.append(MethodResult(method, c, gap, gap / scale, True, res, claimed))

    lower_ok = all(r.gap is None or r.gap >= -LOWER_BOUND_TOL for r in results)
    white_ok = None
    if white_bound is not None:
        white_ok = all(r.cost is None or r.cost >= white_bound - LOWER_BOUND_TOL
                       for r in results)
    summary = {"n": model.n, "m": model.m, "N": model.N, "delay": model.delay,
               "colored": model.colored, "support": list(noise.values)}
    return ComparisonReport(instance_id, summary, qp.cost, results, lower_ok,
                            white_bound, white_ok)


# --------------------------------------------------------------------------
# reductions
# --------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    max_deviation: float
    tolerance: float
    detail: str = ""


@dataclass
class ReductionReport:
    checks: list
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "params": self.params,
                "checks": [asdict(c) for c in self.checks]}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _check(name, dev, tol, detail="") -> Check:
    return Check(name, bool(dev <= tol), float(dev), tol, detail)


def white_schedule_deviation(model: SystemModel, noise: NoiseSpec | None = None) -> float:
    """Max elementwise difference between literal, measurable and white schedules
    (value matrices and gains) on a B2 = 0 model."""
    if noise is None:
        noise = rademacher(math.sqrt(model.sigma2))
    lit = solve_literal(model, noise)
    mea = solve_measurable(model, noise)
    wht = solve_white(model)
    dev = 0.0
    for k in range(model.N + 1):
        a, b, c = lit.stage(k), mea.stage(k), wht.stage(k)
        for w in noise.values:
            for X, Y in ((a.P[w], c.Pw), (b.S[w], c.Pw), (a.G[w], c.K), (b.G[w], c.K),
                         (a.Upsilon[w], c.Rk), (b.H[w], c.Rk), (a.M[w], c.Mbar)):
                dev = max(dev, float(np.max(np.abs(X - Y))))
    return dev


def golden_ratio_model(N: int = 30) -> SystemModel:
    return validate(dict(N=N, sigma2=0.0, A0=1.0, B0=1.0, Q=1.0, R=1.0, P_terminal=1.0))


def delayed_augmented_deviation(model: SystemModel) -> float:
    """Delayed schedule against LQR on ``[x; u_prev]`` for the mean system."""
    det = model.replace(delay=1, A1=np.zeros_like(model.A1), B1=np.zeros_like(model.B1),
                        B2=np.zeros_like(model.B2))
    sched = solve_delayed(det)
    Pis, Ks = augmented_lqr(det)
    n = det.n
    dev = 0.0
    for k in range(det.N + 1):
        st = sched.stage(k)
        dev = max(dev, float(np.max(np.abs(st.P - Pis[k][:n, :n]))),
                  float(np.max(np.abs(st.F.T - Pis[k][:n, n:]))),
                  float(np.max(np.abs(st.Rk - det.R - Pis[k][n:, n:]))))
    for k in range(det.N):
        Kx, Ku = delayed_gains(sched, k, 0.0)
        dev = max(dev, float(np.max(np.abs(np.hstack([Kx, Ku]) - Ks[k]))))
    return dev


def delayed_terminal_deviation(model: SystemModel, noise: NoiseSpec) -> float:
    """Stage-N delayed quantities against the conditional expectations they
    stand for, enumerated over the two unseen noises (w_{N-1}, w_N)."""
    dm = model.replace(delay=1)
    st = backstep_delayed(terminal_stage(dm), dm)
    P = dm.P_terminal
    vals, probs = noise.values, noise.probs
    R_exact = dm.R + sum(p1 * p2 * dm.B(v2, v1).T @ P @ dm.B(v2, v1)
                         for v1, p1 in zip(vals, probs) for v2, p2 in zip(vals, probs))
    T0_exact = sum(p1 * p2 * dm.B(v2, v1).T @ P @ dm.A(v2) @ dm.A(v1)
                   for v1, p1 in zip(vals, probs) for v2, p2 in zip(vals, probs))
    dev = max(float(np.max(np.abs(st.Rk - R_exact))), float(np.max(np.abs(st.T0 - T0_exact))))
    for w in vals:
        Tu_exact = sum(p1 * p2 * dm.B(v2, v1).T @ P @ dm.A(v2) @ dm.B(v1, w)
                       for v1, p1 in zip(vals, probs) for v2, p2 in zip(vals, probs))
        dev = max(dev, float(np.max(np.abs(st.T1 + w * st.F @ dm.B2 - Tu_exact))))
    return dev


def reduction_suite(model: SystemModel | None = None, seed: int = 0) -> ReductionReport:
    """B2 = 0 equivalence, golden-ratio fixed point, delayed/augmented LQR
    agreement and the variance reading of the delayed terminal stage."""
    params: dict = {"seed": seed}
    if model is None:
        model, inst = random_instance(seed, n=2, m=1, N=5, colored=False)
        params["instance"] = inst
    checks = []
    base = model.replace(delay=0, B2=np.zeros_like(model.B2))
    noise = rademacher(math.sqrt(base.sigma2))
    try:
        checks.append(_check("white_equivalence", white_schedule_deviation(base, noise), 1e-12))
    except ColorLQError as exc:
        checks.append(Check("white_equivalence", False, math.inf, 1e-12, str(exc)))

    p0 = solve_white(golden_ratio_model()).stage(0).Pw[0, 0]
    checks.append(_check("golden_ratio", abs(p0 - GOLDEN), 1e-4, f"P_0 = {p0!r}"))

    try:
        checks.append(_check("delayed_augmented_lqr", delayed_augmented_deviation(model), 1e-10))
    except ColorLQError as exc:
        checks.append(Check("delayed_augmented_lqr", False, math.inf, 1e-10, str(exc)))

    detail = "factor read as sigma, not sigma^2" if model.sigma_unsquared else ""
    checks.append(_check("delayed_terminal_sigma2",
                         delayed_terminal_deviation(model, noise), 1e-12, detail))
    return ReductionReport(checks, params)
