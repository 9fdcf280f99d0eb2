"""Ground truth for finite-support noise.

``path_qp`` optimizes over *all* adapted policies: every node of the noise
tree gets its own control vector, the expected cost is an explicit quadratic
in the stacked controls, and its stationarity system is solved directly.
``dp_exact`` runs value iteration over stacked quadratic forms; it shares no
code with the recursions in :mod:`colorlq.riccati_free`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NotSolvable, SingularHessian, TooManyPaths
from .model import InitialCondition, NoiseSpec, SystemModel
from .policy import Policy, TablePolicy, TreePolicy

MAX_NODES = 10**6
MAX_VARS = 6000
PIVOT_RATIO = 1e-10


@dataclass(frozen=True)
class NoiseTree:
    """Histories ``(w_0, ..., w_{d-1})`` for d = 0..depth with their probabilities."""

    values: tuple[float, ...]
    probs: tuple[float, ...]
    levels: list

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def children(self, h: tuple):
        for v, p in zip(self.values, self.probs):
            yield v, p, h + (v,)


def build_tree(noise: NoiseSpec, depth: int, max_nodes: int = MAX_NODES) -> NoiseTree:
    noise.require_finite("noise tree")
    s = len(noise.values)
    count = sum(s**d for d in range(depth + 1))
    if count > max_nodes:
        raise TooManyPaths(count, max_nodes)
    levels = []
    for d in range(depth + 1):
        level = []
        for idx in itertools.product(range(s), repeat=d):
            h = tuple(noise.values[i] for i in idx)
            level.append((h, math.prod(noise.probs[i] for i in idx)))
        levels.append(level)
    return NoiseTree(noise.values, noise.probs, levels)


# --------------------------------------------------------------------------
# path-enumeration KKT solve
# --------------------------------------------------------------------------

@dataclass
class QPResult:
    policy: TreePolicy
    cost: float
    pivot_ratio: float


class _Quadratic:
    """Accumulates  const + 2 g'd + d'Hd  from affine maps  x = c + sum_s J_s d_s."""

    def __init__(self, n_vars: int):
        self.H = np.zeros((n_vars, n_vars))
        self.g = np.zeros(n_vars)
        self.const: list[float] = []

    def add(self, weight: float, W: np.ndarray, c: np.ndarray, J: dict, m: int) -> None:
        Wc = W @ c
        self.const.append(weight * float(c @ Wc))
        WJ = {s: W @ Js for s, Js in J.items()}
        for s, Js in J.items():
            self.g[s * m:(s + 1) * m] += weight * (Js.T @ Wc)
            for t, WJt in WJ.items():
                self.H[s * m:(s + 1) * m, t * m:(t + 1) * m] += weight * (Js.T @ WJt)

    def add_control(self, weight: float, R: np.ndarray, slot: int, m: int) -> None:
        self.H[slot * m:(slot + 1) * m, slot * m:(slot + 1) * m] += weight * R


def path_qp(model: SystemModel, noise: NoiseSpec, init: InitialCondition,
            max_nodes: int = MAX_NODES, max_vars: int = MAX_VARS) -> QPResult:
    """Certified optimal adapted policy and its expected cost."""
    N, m = model.N, model.m
    tree = build_tree(noise, N + 1, max_nodes)
    n_dec = N if model.delay else N + 1
    slots = {}
    for d in range(n_dec):
        for h, _ in tree.levels[d]:
            slots[h] = len(slots)
    n_vars = len(slots) * m
    if n_vars > max_vars:
        raise TooManyPaths(n_vars, max_vars)

    qp = _Quadratic(n_vars)
    # affine state per node: (c, {slot: J})
    frontier = {(): (np.array(init.x0, dtype=float), {})}
    for d in range(N + 2):
        nxt = {}
        for h, prob in tree.levels[d]:
            c, J = frontier[h]
            if d == N + 1:
                qp.add(prob, model.P_terminal, c, J, m)
                continue
            qp.add(prob, model.Q, c, J, m)
            if h in slots:
                qp.add_control(prob, model.R, slots[h], m)
            w = h[-1] if h else init.w_prev
            for v, _, child in tree.children(h):
                A, B = model.A(v), model.B(v, w)
                c1 = A @ c
                J1 = {s: A @ Js for s, Js in J.items()}
                if model.delay:
                    if d == 0:
                        c1 = c1 + B @ init.u_prev
                    else:
                        s = slots[h[:-1]]
                        J1[s] = J1.get(s, 0.0) + B
                else:
                    s = slots[h]
                    J1[s] = J1.get(s, 0.0) + B
                nxt[child] = (c1, J1)
        frontier = nxt

    const = math.fsum(qp.const)
    if n_vars == 0:
        return QPResult(TreePolicy({}, m, 0, bool(model.delay), const), const, 1.0)
    H = 0.5 * (qp.H + qp.H.T)
    try:
        L, lower = scipy.linalg.cho_factor(H, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise SingularHessian(-math.inf) from None
    pivots = np.diag(L) ** 2
    ratio = float(pivots.min() / pivots.max())
    if ratio < PIVOT_RATIO:
        raise SingularHessian(ratio)
    d_opt = -scipy.linalg.cho_solve((L, lower), qp.g)
    total = math.fsum([const, float(qp.g @ d_opt)])
    controls = {h: d_opt[s * m:(s + 1) * m].copy() for h, s in slots.items()}
    policy = TreePolicy(controls, m, n_dec, bool(model.delay), total)
    return QPResult(policy, total, ratio)


# --------------------------------------------------------------------------
# exact dynamic programming
# --------------------------------------------------------------------------

@dataclass
class DPResult:
    """``values[k][w]``: Hessian of the cost-to-go at step k given w_{k-1} = w,
    over ``x`` (delay-free) or ``[x; u_prev]`` (delayed).  ``gains[k][w]``:
    ``u_k = -gains[k][w] @ z_k``."""

    values: list
    gains: list
    delayed: bool

    def policy(self) -> TablePolicy:
        return TablePolicy(self.gains, self.delayed)

    def value(self, init: InitialCondition) -> float:
        z = np.asarray(init.x0, dtype=float)
        if self.delayed:
            z = np.concatenate([z, init.u_prev])
        return float(z @ self.values[0][init.w_prev] @ z)


def _schur(Omega: np.ndarray, nz: int, k: int, w: float):
    Ozz, Ozu = Omega[:nz, :nz], Omega[:nz, nz:]
    Ouu = 0.5 * (Omega[nz:, nz:] + Omega[nz:, nz:].T)
    lam = float(np.linalg.eigvalsh(Ouu)[0]) if Ouu.size else math.inf
    if not lam > 0.0:
        raise NotSolvable(k, "control Hessian > 0", lam, w)
    K = np.linalg.solve(Ouu, Ozu.T)
    V = Ozz - Ozu @ K
    return 0.5 * (V + V.T), K


def dp_exact(model: SystemModel, noise: NoiseSpec, w_prev: float | None = None) -> DPResult:
    noise.require_finite("exact dynamic programming")
    vals, probs = noise.values, noise.probs
    N, n, m = model.N, model.n, model.m
    keys_all = vals if w_prev is None or w_prev in vals else vals + (float(w_prev),)
    values: list = [None] * (N + 1)
    gains: list = [None] * (N + 1 if not model.delay else N)
    Z = np.zeros

    if not model.delay:
        nxt = {v: model.P_terminal for v in vals}
        stage = np.block([[model.Q, Z((n, m))], [Z((m, n)), model.R]])
        for k in range(N, -1, -1):
            keys = keys_all if k == 0 else vals
            Vk, Kk = {}, {}
            for w in keys:
                Omega = stage.copy()
                for v, p in zip(vals, probs):
                    Phi = np.hstack([model.A(v), model.B(v, w)])
                    Omega += p * (Phi.T @ nxt[v] @ Phi)
                Vk[w], Kk[w] = _schur(Omega, n, k, w)
            values[k], gains[k] = Vk, Kk
            nxt = Vk
        return DPResult(values, gains, False)

    # delayed: z = [x; u_prev], decision u
    nz = n + m
    last = {}
    for w in (keys_all if N == 0 else vals):
        V = np.zeros((nz, nz))
        V[:n, :n] = model.Q
        for v, p in zip(vals, probs):
            Psi = np.hstack([model.A(v), model.B(v, w)])
            V += p * (Psi.T @ model.P_terminal @ Psi)
        last[w] = 0.5 * (V + V.T)
    values[N] = last
    nxt = last
    stage = np.zeros((nz + m, nz + m))
    stage[:n, :n] = model.Q
    stage[nz:, nz:] = model.R
    for k in range(N - 1, -1, -1):
        keys = keys_all if k == 0 else vals
        Vk, Kk = {}, {}
        for w in keys:
            Omega = stage.copy()
            for v, p in zip(vals, probs):
                Phi = np.block([[model.A(v), model.B(v, w), Z((n, m))],
                                [Z((m, n)), Z((m, m)), np.eye(m)]])
                Omega += p * (Phi.T @ nxt[v] @ Phi)
            Vk[w], Kk[w] = _schur(Omega, nz, k, w)
        values[k], gains[k] = Vk, Kk
        nxt = Vk
    return DPResult(values, gains, True)


def lqr(A, B, Q, R, P_final, steps: int):
    """Textbook finite-horizon LQR: ``x_{k+1} = A x_k + B u_k``, cost
    ``sum_{k<steps} x'Qx + u'Ru + x_steps' P_final x_steps``.
    Returns (P_0..P_steps, K_0..K_{steps-1}) with ``u_k = -K_k x_k``."""
    P = np.asarray(P_final, dtype=float)
    Ps, Ks = [P], []
    for _ in range(steps):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ A - A.T @ P @ B @ K
        Ps.append(P)
        Ks.append(K)
    return Ps[::-1], Ks[::-1]


def augmented_lqr(model: SystemModel):
    """Deterministic delayed problem (mean matrices A0, B0) as an LQR on
    ``z_k = [x_k; u_{k-1}]``.  Returns ``(Pi_0..Pi_N, K_0..K_{N-1})``."""
    n, m, N = model.n, model.m, model.N
    A_aug = np.block([[model.A0, model.B0], [np.zeros((m, n)), np.zeros((m, m))]])
    B_aug = np.vstack([np.zeros((n, m)), np.eye(m)])
    Q_aug = np.zeros((n + m, n + m))
    Q_aug[:n, :n] = model.Q
    AB = np.hstack([model.A0, model.B0])
    P_final = Q_aug + AB.T @ model.P_terminal @ AB
    return lqr(A_aug, B_aug, Q_aug, model.R, P_final, N)


# --------------------------------------------------------------------------
# costates and stationarity
# --------------------------------------------------------------------------

@dataclass
class CostateTree:
    """Per-history node ``h`` of length k: ``states[h] = x_k``,
    ``controls[h]`` = the control decided at that node, ``costates[h] = lambda_{k-1}``."""

    states: dict = field(default_factory=dict)
    controls: dict = field(default_factory=dict)
    costates: dict = field(default_factory=dict)
    w_prev: float = 0.0
    u_prev: np.ndarray | None = None
    delayed: bool = False


def forward_tree(model: SystemModel, policy: Policy, noise: NoiseSpec,
                 init: InitialCondition, max_nodes: int = MAX_NODES):
    """States and controls of ``policy`` on every node; costates left empty."""
    N = model.N
    tree = build_tree(noise, N + 1, max_nodes)
    out = CostateTree(w_prev=init.w_prev, u_prev=np.array(init.u_prev), delayed=bool(model.delay))
    out.states[()] = np.array(init.x0, dtype=float)
    n_dec = N if model.delay else N + 1
    for d in range(N + 1):
        for h, _ in tree.levels[d]:
            x = out.states[h]
            w = h[-1] if h else init.w_prev
            if model.delay:
                u_in = out.controls[h[:-1]] if h else out.u_prev
                if d < n_dec:
                    out.controls[h] = np.asarray(policy.control(d, x, w, u_prev=u_in, history=h))
            else:
                u_in = np.asarray(policy.control(d, x, w, history=h))
                out.controls[h] = u_in
            for v, _, child in tree.children(h):
                out.states[child] = model.A(v) @ x + model.B(v, w) @ u_in
    return tree, out


def backward_costate(model: SystemModel, policy: Policy, noise: NoiseSpec,
                     init: InitialCondition, max_nodes: int = MAX_NODES) -> CostateTree:
    N = model.N
    tree, out = forward_tree(model, policy, noise, init, max_nodes)
    for h, _ in tree.levels[N + 1]:
        out.costates[h] = model.P_terminal @ out.states[h]
    for d in range(N, -1, -1):
        for h, _ in tree.levels[d]:
            lam = model.Q @ out.states[h]
            for v, p, child in tree.children(h):
                lam = lam + p * (model.A(v).T @ out.costates[child])
            out.costates[h] = lam
    return out


def stationarity_vectors(model: SystemModel, costates: CostateTree, noise: NoiseSpec) -> dict:
    """Per decision node: ``R u + E[B' lambda | information at decision time]``.

    Delay-free nodes condition on w_0..w_{k-1} (one unseen noise); delayed
    nodes on w_0..w_{k-2} (two unseen noises).
    """
    vals, probs = noise.values, noise.probs
    out = {}
    for h, u in costates.controls.items():
        r = model.R @ u
        w0 = h[-1] if h else costates.w_prev
        if not costates.delayed:
            for v, p in zip(vals, probs):
                r = r + p * (model.B(v, w0).T @ costates.costates[h + (v,)])
        else:
            for v1, p1 in zip(vals, probs):
                for v2, p2 in zip(vals, probs):
                    r = r + p1 * p2 * (model.B(v2, v1).T @ costates.costates[h + (v1, v2)])
        out[h] = r
    return out


def stationarity_residual(model: SystemModel, costates: CostateTree, noise: NoiseSpec) -> float:
    """Max-norm of the stationarity vectors over all decision nodes."""
    vecs = stationarity_vectors(model, costates, noise)
    return max((float(np.max(np.abs(r))) for r in vecs.values() if r.size), default=0.0)
