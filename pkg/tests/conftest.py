import numpy as np
import pytest

from colorlq.model import InitialCondition, rademacher, validate


def scalar_model(**kw):
    cfg = dict(N=0, sigma2=1.0, A0=1.0, A1=0.0, B0=1.0, B1=0.0, B2=0.0,
               Q=1.0, R=1.0, P_terminal=1.0)
    cfg.update(kw)
    return validate(cfg)


def init_for(model, x0=None, u_prev=None, w_prev=0.0):
    x0 = np.ones(model.n) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    u_prev = np.zeros(model.m) if u_prev is None else np.atleast_1d(np.asarray(u_prev, dtype=float))
    return InitialCondition(x0, u_prev, w_prev)


def textbook_lqr(A, B, Q, R, Pf, steps):
    """Plain finite-horizon LQR written out step by step (test-side oracle)."""
    P = np.array(Pf, dtype=float)
    Ps, Ks = [P], []
    for _ in range(steps):
        S = R + B.T @ P @ B
        K = np.linalg.inv(S) @ (B.T @ P @ A)
        P = Q + A.T @ P @ A - K.T @ S @ K
        Ps.insert(0, P)
        Ks.insert(0, K)
    return Ps, Ks


def augmented(model):
    """Delayed deterministic system as LQR on [x; u_prev] (test-side oracle)."""
    n, m = model.n, model.m
    A = np.zeros((n + m, n + m))
    A[:n, :n], A[:n, n:] = model.A0, model.B0
    B = np.zeros((n + m, m))
    B[n:, :] = np.eye(m)
    Q = np.zeros((n + m, n + m))
    Q[:n, :n] = model.Q
    C = np.hstack([model.A0, model.B0])
    return textbook_lqr(A, B, Q, model.R, Q + C.T @ model.P_terminal @ C, model.N)


@pytest.fixture
def two_point():
    return rademacher(1.0)


@pytest.fixture
def colored_scalar():
    """A0=1, B0=1, B2=1, Q=R=P=1, unit-variance two-point noise."""
    return scalar_model(B2=1.0)
