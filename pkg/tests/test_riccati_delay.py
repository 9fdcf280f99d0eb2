import itertools

import numpy as np
import pytest

from colorlq.diagnostics import random_init, random_instance
from colorlq.errors import ConfigError, IndexOutOfRange, NotSolvable
from colorlq.model import rademacher
from colorlq.oracle import forward_tree, path_qp
from colorlq.riccati_delay import (
    backstep_delayed,
    control_delayed,
    solve_delayed,
    terminal_stage,
)

from conftest import augmented, init_for, scalar_model


def test_terminal_step_variance_reading():
    model = scalar_model(delay=1, B1=1.0, B2=1.0)
    st = backstep_delayed(terminal_stage(model), model)
    # R + E[(1 + v + w)^2] over two independent unit two-point noises
    direct = 1.0 + np.mean([(1 + v + w) ** 2 for v, w in itertools.product((-1, 1), repeat=2)])
    assert direct == 4.0
    assert st.Rk[0, 0] == pytest.approx(direct, abs=1e-15)


def test_sigma_unsquared_flag():
    base = scalar_model(delay=1, B1=1.0, B2=1.0, sigma2=4.0)
    lit = base.replace(sigma_unsquared=True)
    r_sq = backstep_delayed(terminal_stage(base), base).Rk[0, 0]
    r_lit = backstep_delayed(terminal_stage(lit), lit).Rk[0, 0]
    assert r_sq == pytest.approx(1 + 1 + 4 + 4)
    assert r_lit == pytest.approx(1 + 1 + 2 + 2)


def test_deterministic_backstep_against_augmented_lqr():
    model = scalar_model(delay=1, N=1)
    st = backstep_delayed(terminal_stage(model), model)
    assert (st.T0[0, 0], st.T1[0, 0], st.F[0, 0], st.Rk[0, 0]) == (1.0, 1.0, 1.0, 2.0)
    Pis, Ks = augmented(model)
    # stage-N blocks of the augmented value [[P, F'], [F, Rk - R]]
    assert st.P[0, 0] == pytest.approx(Pis[-1][0, 0], abs=1e-15)
    assert st.P[0, 0] == 2.0
    assert st.F[0, 0] == pytest.approx(Pis[-1][1, 0], abs=1e-15)


def test_zero_cost_delayed():
    model, _ = random_instance(3, n=2, m=2, N=3, delay=1)
    model = model.replace(Q=np.zeros((2, 2)), R=np.eye(2), P_terminal=np.zeros((2, 2)))
    sched = solve_delayed(model)
    for k in range(model.N + 1):
        st = sched.stage(k)
        for X in (st.P, st.T0, st.T1, st.F):
            assert not np.any(X)
        np.testing.assert_array_equal(st.Rk, np.eye(2))


@pytest.mark.parametrize("seed,n,m", [(0, 1, 1), (1, 2, 1), (2, 3, 2)])
def test_deterministic_delayed_matches_augmented(seed, n, m):
    model, _ = random_instance(seed, n=n, m=m, N=5, delay=1, colored=False)
    model = model.replace(A1=np.zeros((n, n)), B1=np.zeros((n, m)))
    sched = solve_delayed(model)
    Pis, Ks = augmented(model)
    for k in range(model.N + 1):
        np.testing.assert_allclose(sched.stage(k).P, Pis[k][:n, :n], atol=1e-10, rtol=0)
    for k in range(model.N):
        x, up = np.arange(1.0, n + 1), np.linspace(-1, 1, m)
        u = control_delayed(sched, k, x, up, 0.0)
        np.testing.assert_allclose(u, -Ks[k] @ np.concatenate([x, up]), atol=1e-10, rtol=0)


def test_control_delayed_examples():
    model = scalar_model(delay=1, N=1)
    sched = solve_delayed(model)
    assert control_delayed(sched, 0, [0.0], [0.0], 1.0)[0] == 0.0
    assert control_delayed(sched, 0, [1.0], [0.0], 0.0)[0] == pytest.approx(-0.5, abs=1e-15)
    with pytest.raises(IndexOutOfRange):
        control_delayed(sched, 1, [1.0], [0.0], 0.0)


def test_b2_zero_ignores_w_prev():
    model, _ = random_instance(4, n=2, m=2, N=4, delay=1, colored=False)
    sched = solve_delayed(model)
    x, up = np.array([0.3, -1.2]), np.array([0.7, 0.1])
    for k in range(model.N):
        a = control_delayed(sched, k, x, up, -1.0)
        b = control_delayed(sched, k, x, up, 1.0)
        assert np.max(np.abs(a - b)) <= 1e-15


@pytest.mark.parametrize("seed", range(5))
def test_last_stage_gain_matches_oracle(seed):
    noise = rademacher(1.0)
    model, _ = random_instance(100 + seed, n=1 + seed % 2, m=1, N=3, delay=1)
    init = random_init(seed, model, noise)
    sched = solve_delayed(model)
    qp = path_qp(model, noise, init)
    tree, fwd = forward_tree(model, qp.policy, noise, init)
    k = model.N - 1
    for h, _ in tree.levels[k]:
        u_prev = fwd.controls[h[:-1]] if h else init.u_prev
        w = h[-1] if h else init.w_prev
        u = control_delayed(sched, k, fwd.states[h], u_prev, w)
        np.testing.assert_allclose(u, fwd.controls[h], atol=1e-10, rtol=0)


def test_unsolvable_reports_step():
    model = scalar_model(delay=1, N=2).replace(R=np.array([[-1.0]]))
    with pytest.raises(NotSolvable) as err:
        solve_delayed(model)
    # R_N = -1 + B0' P B0 = 0
    assert err.value.k == 2 and err.value.min_eig == pytest.approx(0.0, abs=1e-15)


def test_unsolvable_singular_R():
    model = scalar_model(delay=1, N=2, B0=0.0, R=0.0)
    with pytest.raises(NotSolvable) as err:
        solve_delayed(model)
    assert err.value.k == 2 and err.value.condition == "R_k > 0"
    sched = solve_delayed(model, strict=False)
    assert not sched.solvable


def test_delay_flag_required():
    with pytest.raises(ConfigError):
        solve_delayed(scalar_model())
