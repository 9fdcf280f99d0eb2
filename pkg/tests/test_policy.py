import numpy as np
import pytest

from colorlq.diagnostics import random_instance
from colorlq.errors import IndexOutOfRange, UnknownSupportValue
from colorlq.model import rademacher
from colorlq.oracle import backward_costate, build_tree, forward_tree, path_qp
from colorlq.policy import (
    LinearPolicy,
    SchedulePolicy,
    ZeroPolicy,
    control_free,
    costate_relation_free,
)
from colorlq.riccati_delay import solve_delayed
from colorlq.riccati_free import solve_literal, solve_measurable, solve_white

from conftest import init_for, scalar_model


def _free_policies(model, noise):
    init = init_for(model, x0=[1.0] * model.n)
    return [
        SchedulePolicy(solve_literal(model, noise)),
        SchedulePolicy(solve_measurable(model, noise)),
        ZeroPolicy(model.m, model.N + 1),
        LinearPolicy([np.ones((model.m, model.n))] * (model.N + 1)),
        path_qp(model, noise, init).policy,
    ]


def test_zero_state_gives_zero_control(two_point):
    model, _ = random_instance(3, n=2, m=2, N=2)
    zero = np.zeros(2)
    for pol in _free_policies(model, two_point)[:4]:
        for k in range(model.N + 1):
            for w in two_point.values:
                assert not np.any(control_free(pol, k, zero, w))
    # the oracle tree is open loop, so a zero root state gives zero everywhere
    tree = path_qp(model, two_point, init_for(model, x0=[0.0, 0.0])).policy
    assert not any(np.any(u) for u in tree.controls.values())


def test_colored_horizon0_gain(colored_scalar, two_point):
    pol = SchedulePolicy(solve_literal(colored_scalar, two_point))
    for x in (1.0, -2.5, 3.0):
        np.testing.assert_allclose(control_free(pol, 0, [x], 1.0), [-0.4 * x], rtol=0, atol=1e-15)


def test_deterministic_last_step_half_gain():
    model = scalar_model(N=3, sigma2=0.0)
    pol = SchedulePolicy(solve_white(model))
    assert control_free(pol, 3, [2.0], 0.0)[0] == pytest.approx(-1.0, abs=1e-15)


def test_homogeneity(two_point):
    model, _ = random_instance(5, n=3, m=2, N=3)
    x = np.array([0.3, -1.2, 0.8])
    for pol in _free_policies(model, two_point)[:4]:
        for k in range(model.N + 1):
            base = control_free(pol, k, x, -1.0)
            for a in (2.0, -0.5, 1e3):
                np.testing.assert_allclose(control_free(pol, k, a * x, -1.0), a * base,
                                           rtol=1e-14, atol=1e-14 * abs(a))


def test_delayed_homogeneity():
    model, _ = random_instance(6, n=2, m=1, N=4, delay=1)
    pol = SchedulePolicy(solve_delayed(model))
    x, up = np.array([1.0, -0.3]), np.array([0.7])
    for k in range(model.N):
        base = pol.control(k, x, 1.0, u_prev=up)
        np.testing.assert_allclose(pol.control(k, 3 * x, 1.0, u_prev=3 * up), 3 * base,
                                   rtol=1e-14, atol=1e-15)


def test_unknown_support_value(colored_scalar, two_point):
    pol = SchedulePolicy(solve_measurable(colored_scalar.replace(N=2), two_point))
    with pytest.raises(UnknownSupportValue):
        control_free(pol, 1, [1.0], 0.5)


def test_step_out_of_range(two_point):
    model = scalar_model(N=2, B2=1.0)
    for pol in _free_policies(model, two_point):
        with pytest.raises(IndexOutOfRange):
            control_free(pol, 3, [1.0], 1.0, history=(1.0,) * 3)
        with pytest.raises(IndexOutOfRange):
            control_free(pol, -1, [1.0], 1.0)


def test_costate_relation_identity():
    model = scalar_model(N=0, sigma2=0.0)
    sched = solve_white(model.replace(P_terminal=np.array([[0.0]]), Q=np.array([[1.0]])))
    # with P_{1} = 0 the stage value is Q = 1
    np.testing.assert_allclose(costate_relation_free(sched, 0, [2.0], 0.0), [2.0], atol=1e-15)


def test_costate_relation_matches_backward_costate(two_point):
    model, _ = random_instance(8, n=2, m=1, N=3, colored=False)
    sched = solve_literal(model, two_point)
    init = init_for(model, x0=[1.0, -0.5], w_prev=1.0)
    ct = backward_costate(model, SchedulePolicy(sched), two_point, init)
    for h, lam in ct.costates.items():
        k = len(h)
        if k == model.N + 1:
            np.testing.assert_array_equal(lam, model.P_terminal @ ct.states[h])
            continue
        w_prev = h[-1] if h else init.w_prev
        np.testing.assert_allclose(lam, costate_relation_free(sched, k, ct.states[h], w_prev),
                                   atol=1e-9, rtol=0)


@pytest.mark.parametrize("seed", range(3))
def test_measurable_matches_oracle_tree(seed, two_point):
    model, _ = random_instance(50 + seed, n=2, m=1, N=4)
    init = init_for(model, x0=[1.0, 0.5], w_prev=-1.0)
    qp = path_qp(model, two_point, init)
    pol = SchedulePolicy(solve_measurable(model, two_point, init.w_prev))
    _, fwd = forward_tree(model, pol, two_point, init)
    for h, u in qp.policy.controls.items():
        np.testing.assert_allclose(fwd.controls[h], u, atol=1e-8, rtol=0)
