import math

import numpy as np
import pytest

from lfodamp.case import Bus, GridCase, Line, MachineArrays
from lfodamp.dynamics import (DynamicState, InitializationError, Integrator, NumericalBlowup,
                              derivatives, electrical_power, init_dynamic_state, rk4_generic,
                              simulate, step_rk4)
from lfodamp.environment import check_synchronism
from lfodamp.network import (GridEvent, NetworkContext, ReducedNetwork, apply_event, fault_pair,
                             solve_power_flow)

from conftest import machine, two_bus


def equilibrium(case):
    pf = solve_power_flow(case)
    ctx = NetworkContext.from_power_flow(case, pf)
    return ctx, init_dynamic_state(case, pf, ctx.reduced)


def max_abs_derivative(d):
    return max(np.max(np.abs(x)) for x in d)


@pytest.mark.parametrize("name", ["kundur", "ieee39"])
def test_equilibrium_derivatives_vanish(name, request):
    case = request.getfixturevalue(name)
    ctx, st = equilibrium(case)
    assert max_abs_derivative(derivatives(st, ctx.reduced, None, case)) < 1e-8


def test_synchronous_speed_means_no_angle_motion(kundur):
    ctx, st = equilibrium(kundur)
    st.eqp = st.eqp * 1.05
    d = derivatives(st, ctx.reduced, None, kundur)
    assert np.all(d.delta == 0.0)


def test_pss_step_drives_only_that_exciter(kundur):
    ctx, st = equilibrium(kundur)
    u = np.zeros(4)
    u[1] = 0.05
    d = derivatives(st, ctx.reduced, u, kundur)
    assert d.efd[1] == pytest.approx(200 * 0.05 / 0.01, rel=1e-9)
    others = np.delete(d.efd, 1)
    assert np.max(np.abs(others)) < 1e-6


def test_control_length_checked(kundur):
    ctx, st = equilibrium(kundur)
    with pytest.raises(ValueError):
        derivatives(st, ctx.reduced, np.zeros(3), kundur)


def test_smib_power_angle_formula():
    # one machine against a fixed source: E=1, V=1, X=0.5, delta=30 deg -> Pe = 1
    # the source is a second, enormous machine with Xd' -> 0 and delta 0
    x = 0.5
    Y = np.array([[1 / (1j * x), -1 / (1j * x)], [-1 / (1j * x), 1 / (1j * x)]])
    red = ReducedNetwork(Y_red=Y, gen_bus=np.array([0, 1]), recovery=np.eye(2, dtype=complex))
    st = DynamicState(0.0, np.array([math.pi / 6, 0.0]), np.ones(2), np.ones(2), np.ones(2),
                      np.zeros(2), np.zeros(2))
    pe, _ = electrical_power(red, st)
    assert pe[0] == pytest.approx(1.0, abs=1e-12)
    assert pe[1] == pytest.approx(-1.0, abs=1e-12)


def test_symmetric_machines_do_not_exchange_power():
    y_line, y_load = -10j, 0.5 + 0.1j
    Y = np.array([[-y_line + y_load, y_line], [y_line, -y_line + y_load]])
    red = ReducedNetwork(Y_red=Y, gen_bus=np.array([0, 1]), recovery=np.eye(2, dtype=complex))
    st = DynamicState(0.0, np.zeros(2) + 0.3, np.ones(2), np.ones(2) * 1.1, np.ones(2),
                      np.zeros(2), np.zeros(2))
    pe, _ = electrical_power(red, st)
    assert pe[0] == pytest.approx(pe[1], abs=1e-14)
    assert pe[0] == pytest.approx(1.1 ** 2 * y_load.real, abs=1e-12)


def test_unloaded_machine_initialization():
    case = two_bus()
    pf = solve_power_flow(case)
    st = init_dynamic_state(case, pf)
    assert st.eqp[0] == pytest.approx(1.0, abs=1e-12)
    assert st.delta[0] == pytest.approx(pf.theta[0], abs=1e-12)
    assert st.pm[0] == pytest.approx(0.0, abs=1e-12)


def test_field_limit_at_initialization():
    case = GridCase(100.0, 60.0, [Bus(1, "slack", 0.9), Bus(2, "PQ", 1.0, 100.0, 60.0)],
                    [Line(1, 2, 0.0, 0.05)], [machine(1, P=100.0, Xd=1.8, lim=1.5)])
    pf = solve_power_flow(case)
    with pytest.raises(InitializationError, match="Efd"):
        init_dynamic_state(case, pf)


def test_kundur_machines_need_modest_field(kundur):
    ctx, st = equilibrium(kundur)
    assert np.all((st.efd > 1.0) & (st.efd < 4.0))
    assert np.allclose(st.omega, 1.0)


# ------------------------------------------------------------- integration

def test_rk4_scalar_decay():
    x = rk4_generic(lambda t, y: -y, np.array([1.0]), 0.0, 0.1)
    assert x[0] == pytest.approx(0.904837, abs=1e-6)


def test_state_at_rest_only_advances_time():
    case = two_bus()
    pf = solve_power_flow(case)
    ctx = NetworkContext.from_power_flow(case, pf)
    st = init_dynamic_state(case, pf, ctx.reduced)
    new = step_rk4(st, ctx.reduced, None, 0.01, case)
    assert new.t == pytest.approx(0.01)
    for a, b in [(st.delta, new.delta), (st.omega, new.omega), (st.eqp, new.eqp),
                 (st.efd, new.efd)]:
        assert np.allclose(a, b, atol=1e-13, rtol=0)


def test_step_rejects_bad_dt(kundur):
    ctx, st = equilibrium(kundur)
    with pytest.raises(ValueError):
        step_rk4(st, ctx.reduced, None, 0.0, kundur)


def test_blowup_is_reported(kundur):
    ctx, st = equilibrium(kundur)
    st.omega[0] = np.nan
    with pytest.raises(NumericalBlowup):
        step_rk4(st, ctx.reduced, None, 0.01, kundur)


def test_efd_stays_inside_limits_under_saturating_input(kundur):
    ctx, st = equilibrium(kundur)
    new = step_rk4(st, ctx.reduced, np.full(4, 5.0), 0.01, kundur, nsteps=50)
    assert np.all(new.efd <= 6.0) and np.all(new.efd >= -6.0)
    assert np.any(new.efd == 6.0)


@pytest.mark.parametrize("name", ["kundur", "ieee39"])
def test_twenty_second_equilibrium_hold(name, request):
    case = request.getfixturevalue(name)
    ctx, st = equilibrium(case)
    _, w, _ = simulate(case, ctx, st, 20.0, 0.01)
    assert np.max(np.abs(w - 1.0)) < 1e-6


def fault_on_error(case, dt, ref_dt=0.00125, horizon=1.0):
    """Final-state error of a partial fault trajectory against a fine reference."""
    ctx, st = equilibrium(case)
    ctx = apply_event(ctx, GridEvent("bus_fault", 8, 0.0, 5.0))
    integ = Integrator(MachineArrays.from_case(case))
    integ.set_network(ctx.reduced)

    def run(h):
        s = st.copy()
        integ.advance(s, np.zeros(4), h, int(round(horizon / h)))
        return np.concatenate([s.delta, s.omega, s.eqp, s.efd])

    ref = run(ref_dt)
    return np.max(np.abs(run(dt) - ref))


def test_rk4_convergence_order_on_fault_trajectory(kundur):
    e1 = fault_on_error(kundur, 0.01)
    e2 = fault_on_error(kundur, 0.005)
    order = math.log2(e1 / e2)
    assert e1 / e2 >= 14
    assert 3.8 <= order <= 4.2


def test_lossless_classical_energy_is_conserved():
    # three machines, lossless lines, no resistive load, frozen flux and field
    buses = [Bus(1, "slack", 1.0), Bus(2, "PV", 1.0), Bus(3, "PV", 1.0),
             Bus(4, "PQ", 1.0, 0.0, 30.0)]
    lines = [Line(1, 4, 0.0, 0.1), Line(2, 4, 0.0, 0.12), Line(3, 4, 0.0, 0.08),
             Line(1, 2, 0.0, 0.3)]
    gens = [machine(1, P=0.0, Xd=0.3, Td0p=1e12, Ka=1.0, Ta=1e12, lim=10.0),
            machine(2, P=80.0, H=4.0, Xd=0.3, Td0p=1e12, Ka=1.0, Ta=1e12, lim=10.0),
            machine(3, P=-60.0, H=3.0, Xd=0.3, Td0p=1e12, Ka=1.0, Ta=1e12, lim=10.0)]
    case = GridCase(100.0, 60.0, buses, lines, gens)
    ctx, st = equilibrium(case)
    B = ctx.reduced.Y_red.imag
    assert np.max(np.abs(ctx.reduced.Y_red.real)) < 1e-12
    m = MachineArrays.from_case(case)
    st.omega = st.omega + np.array([0.004, -0.002, 0.001])

    def energy(s):
        kin = np.sum(m.H * m.ws * (s.omega - 1.0) ** 2)
        E = s.eqp
        pot = -np.sum(s.pm * s.delta)
        for i in range(3):
            for j in range(i + 1, 3):
                pot -= E[i] * E[j] * B[i, j] * math.cos(s.delta[i] - s.delta[j])
        return kin + pot, kin

    integ = Integrator(m)
    integ.set_network(ctx.reduced)
    w0, k0 = energy(st)
    drift = 0.0
    for _ in range(1000):
        integ.advance(st, np.zeros(3), 0.01, 1)
        w, _ = energy(st)
        drift = max(drift, abs(w - w0))
    assert drift < 1e-3 * k0


def test_bolted_fault_causes_sustained_oscillation(kundur):
    ctx, st = equilibrium(kundur)
    t, w, _ = simulate(kundur, ctx, st, 20.0, 0.01, events=fault_pair(8, 1.0, 0.1))
    # every 1 s window from fault clearing to 11.1 s keeps >1e-3 pu of swing
    for start in np.arange(1.1, 11.1, 1.0):
        win = (t >= start) & (t < start + 1.0)
        assert np.ptp(w[win], axis=0).max() > 1e-3


def test_held_fault_loses_synchronism(kundur):
    ctx, st = equilibrium(kundur)
    assert check_synchronism(st)
    integ = Integrator(MachineArrays.from_case(kundur))
    on, _ = fault_pair(8, 0.0, 1.0)
    integ.set_network(apply_event(ctx, on).reduced)
    integ.advance(st, np.zeros(4), 0.01, 100)
    integ.set_network(ctx.reduced)
    lost = False
    for _ in range(300):
        integ.advance(st, np.zeros(4), 0.01, 1)
        if not check_synchronism(st):
            lost = True
            break
    assert lost


def test_check_synchronism_threshold():
    st = DynamicState(0.0, np.zeros(2), np.ones(2), np.ones(2), np.ones(2), np.zeros(2), np.zeros(2))
    assert check_synchronism(st)
    st.delta = np.array([0.0, math.pi + 0.01])
    assert not check_synchronism(st)
    assert check_synchronism(st, threshold=4.0)
