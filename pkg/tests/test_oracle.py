import math

import numpy as np
import pytest

from motility_sim.core import FieldState, GridSpec, LinearResponse, ModelParams, SaturatingResponse
from motility_sim.errors import DomainError
from motility_sim.oracle import (OdeState, heat_mode_decay, heat_mode_initial, heat_mode_rate, ode_integrate)
from motility_sim.stepper import StepControl, StopRule, implicit_v_update, run_until


def params(**kw):
    base = dict(m=2.0, alpha=1.0, beta=0.5, d_coef=5.0, response=LinearResponse())
    base.update(kw)
    return ModelParams(**base)


def test_no_substrate_decouples():
    traj = ode_integrate(OdeState(1.3, 0.2, 0.0), params(), 5.0, 1e-3)
    assert np.all(traj.u == 1.3) and np.all(traj.w == 0.0)
    exact = 1.3 + (0.2 - 1.3) * math.exp(-5.0)
    assert traj.final.t == 5.0
    assert abs(traj.final.v - exact) < 1e-8


def test_linear_response_limit_is_target():
    traj = ode_integrate(OdeState(1.0, 1.0, 2.0), params(beta=0.5), 200.0, 1e-3, every=10000)
    assert abs(traj.final.u - 2.0) < 1e-6
    assert traj.final.w < 1e-6


def test_conservation_drift():
    p = params(beta=0.5, response=SaturatingResponse(1.0))
    traj = ode_integrate(OdeState(1.0, 1.0, 2.0), p, 100.0, 1e-3, every=1000)
    mass = traj.u + 0.5 * traj.w
    assert np.max(np.abs(mass - mass[0])) <= 1e-10 * mass[0]


@pytest.mark.parametrize("u0, w0, lam", [(0.1, 3.0, 1.0), (2.0, 0.5, 0.05), (1.0, 10.0, 4.0)])
def test_saturating_signs_along_flow(u0, w0, lam):
    traj = ode_integrate(OdeState(u0, 1.0, w0), params(response=SaturatingResponse(lam)), 20.0, 1e-2)
    assert np.all(np.diff(traj.u) >= 0)
    assert np.all(np.diff(traj.w) <= 0)


def test_bad_arguments():
    with pytest.raises(DomainError):
        ode_integrate(OdeState(1, 1, 1), params(), 1.0, 0.0)
    with pytest.raises(DomainError):
        ode_integrate(OdeState(1, 1, 1, t=2.0), params(), 1.0, 0.1)


def test_heat_mode_zero_amplitude_is_fixed_point():
    g = GridSpec(8, 8)
    assert np.all(heat_mode_decay(g, 3.0, 2.5, amplitude=0.0) == 1.0)


def _be_heat(grid, d_coef, dt, t_end, amplitude=0.1):
    v = heat_mode_initial(grid, amplitude)
    u = np.ones(grid.shape)
    ctl = StepControl(cg_tol=1e-13, cg_max_iter=5000)
    for _ in range(int(round(t_end / dt))):
        v, _ = implicit_v_update(v, u, dt, d_coef, grid, ctl)
    return v


@pytest.mark.parametrize("dt", [0.02, 0.01])
def test_heat_mode_backward_euler_agreement(dt):
    g = GridSpec(64, 64)
    a = 0.1
    v = _be_heat(g, 1.0, dt, 1.0, a)
    err = np.max(np.abs(v - heat_mode_decay(g, 1.0, 1.0, a))) / a
    assert err <= 2 * dt


def test_heat_mode_large_d_amplitude():
    g = GridSpec(16, 16)
    for d in (100.0, 1000.0):
        predicted = heat_mode_decay(g, d, 1.0, amplitude=0.1)
        assert np.max(np.abs(predicted - 1.0)) < 1e-3 * 0.1
        assert heat_mode_rate(g, d) < 0


def _homogeneous_discrepancy(dt, t_end):
    g = GridSpec(4, 4, 100.0, 100.0)
    p = params(beta=0.5)
    s = FieldState(np.ones(g.shape), np.ones(g.shape), np.full(g.shape, 2.0), g)
    states = []
    run_until(s, p, StepControl(dt_init=dt, dt_max=dt), StopRule(max_time=t_end),
              callback=lambda st, o: states.append((st.u[0, 0], st.v[0, 0], st.w[0, 0])), stride=1)
    ref = ode_integrate(OdeState(1, 1, 2), p, t_end, dt)
    got = np.array(states)
    assert len(got) == len(ref)
    return np.max(np.abs(got - np.stack([ref.u, ref.v, ref.w], axis=1)))


def test_stepper_first_order_against_rk4():
    errs = [_homogeneous_discrepancy(dt, 2.0) for dt in (0.02, 0.01, 0.005, 0.0025)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 1.7) & (ratios <= 2.3)), ratios
