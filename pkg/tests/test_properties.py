import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from colorlq.diagnostics import random_instance, white_schedule_deviation
from colorlq.model import dump_config, load_problem, rademacher
from colorlq.oracle import path_qp
from colorlq.policy import SchedulePolicy
from colorlq.riccati_delay import solve_delayed
from colorlq.riccati_free import solve_literal, solve_measurable
from colorlq.schedule import Schedule
from colorlq.simulate import exact_expected_cost

from conftest import init_for

SETTINGS = settings(max_examples=25, deadline=None,
                    suppress_health_check=[HealthCheck.too_slow])

instances = st.builds(
    random_instance,
    seed=st.integers(0, 10**6),
    n=st.integers(1, 3),
    m=st.integers(1, 2),
    N=st.integers(0, 5),
    colored=st.booleans(),
    delay=st.integers(0, 1),
    sigma2=st.sampled_from([0.25, 1.0, 2.0]),
).map(lambda pair: pair[0])


def _tables(sched):
    for stage in sched.stages:
        for name, val in vars(stage).items():
            if isinstance(val, dict):
                yield from ((name, M) for M in val.values())
            elif isinstance(val, np.ndarray):
                yield name, val


@SETTINGS
@given(instances)
def test_value_matrices_symmetric_psd(model):
    noise = rademacher(math.sqrt(model.sigma2))
    scheds = ([solve_delayed(model)] if model.delay
              else [solve_literal(model, noise), solve_measurable(model, noise)])
    for sched in scheds:
        for name, M in _tables(sched):
            if name in ("P", "S", "Pw", "Upsilon", "H", "Rk"):
                assert np.max(np.abs(M - M.T)) <= 1e-12 * max(1.0, np.max(np.abs(M)))
                assert np.linalg.eigvalsh(M)[0] >= -1e-9 * max(1.0, np.max(np.abs(M)))


@SETTINGS
@given(instances)
def test_white_reduction(model):
    base = model.replace(delay=0, B2=np.zeros_like(model.B2))
    assert white_schedule_deviation(base) <= 1e-10


@SETTINGS
@given(instances)
def test_schedule_json_round_trip(model):
    noise = rademacher(math.sqrt(model.sigma2))
    sched = solve_delayed(model) if model.delay else solve_measurable(model, noise)
    again = Schedule.loads(sched.dumps())
    assert again.dumps() == sched.dumps()
    for (_, a), (_, b) in zip(_tables(sched), _tables(again)):
        assert np.array_equal(a, b)


@SETTINGS
@given(instances)
def test_config_round_trip(model):
    noise = rademacher(math.sqrt(model.sigma2))
    init = init_for(model, x0=np.linspace(-1, 1, model.n))
    problem = load_problem(dump_config(model, noise, init))
    for key in ("A0", "A1", "B0", "B1", "B2", "Q", "R", "P_terminal"):
        assert np.array_equal(getattr(problem.model, key), getattr(model, key))
    assert problem.model.N == model.N and problem.model.delay == model.delay


@SETTINGS
@given(instances.filter(lambda m: m.N <= 3), st.floats(-3, 3).filter(lambda a: abs(a) > 1e-3))
def test_cost_is_quadratic_in_initial_state(model, a):
    noise = rademacher(math.sqrt(model.sigma2))
    init = init_for(model, x0=np.ones(model.n), u_prev=np.ones(model.m), w_prev=1.0)
    scaled = init_for(model, x0=a * np.ones(model.n), u_prev=a * np.ones(model.m), w_prev=1.0)
    c1 = path_qp(model, noise, init).cost
    c2 = path_qp(model, noise, scaled).cost
    assert abs(c2 - a * a * c1) <= 1e-9 * max(1.0, abs(c2))


@SETTINGS
@given(instances.filter(lambda m: m.N <= 3 and m.delay == 0))
def test_measurable_attains_oracle(model):
    noise = rademacher(math.sqrt(model.sigma2))
    init = init_for(model, x0=np.ones(model.n), w_prev=-math.sqrt(model.sigma2))
    pol = SchedulePolicy(solve_measurable(model, noise, init.w_prev))
    opt = path_qp(model, noise, init).cost
    assert abs(exact_expected_cost(model, pol, noise, init) - opt) <= 1e-8 * max(1.0, opt)
