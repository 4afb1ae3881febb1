import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from lfodamp.case import Bus, CaseError, GridCase, Line, case_from_dict, load_case
from lfodamp.network import (GridEvent, NetworkContext, PowerFlowError, SingularNetworkError,
                             apply_event, build_admittance, fault_pair, kron_eliminate,
                             kron_reduce, load_admittances, solve_power_flow, tie_transfer_mw)

from conftest import machine, two_bus


# ------------------------------------------------------------- case data

def test_kundur_case_matches_published_machine_data(kundur):
    H = [g.H for g in kundur.generators]
    assert H == [6.5, 6.5, 6.175, 6.175]
    assert all(g.rating == 900 and g.Ka == 200 for g in kundur.generators)
    assert sorted(p.rated for p in kundur.pv_units) == [100, 100]
    assert kundur.buses[kundur.slack_index].id == 3


def test_case_validation_names_field():
    d = json.loads(json.dumps(two_bus().to_dict()))
    del d["generators"][0]["H"]
    with pytest.raises(CaseError, match=r"generators\[0\]\.H"):
        case_from_dict(d)
    d = two_bus().to_dict()
    d["lines"][0]["to_bus"] = 99
    with pytest.raises(CaseError, match="to_bus"):
        case_from_dict(d)
    d = two_bus().to_dict()
    d["buses"][1]["kind"] = "slack"
    with pytest.raises(CaseError, match="slack"):
        case_from_dict(d)
    d = two_bus().to_dict()
    d["generators"][0]["Xd_prime"] = 2.0
    with pytest.raises(CaseError, match="Xd"):
        case_from_dict(d)


def test_case_round_trip(tmp_path, kundur):
    p = tmp_path / "k.json"
    kundur.save(p)
    again = load_case(p)
    assert again.to_dict() == kundur.to_dict()


def test_unknown_case_name():
    with pytest.raises(CaseError):
        load_case("no_such_case")


# ------------------------------------------------------------- admittance

def test_single_line_admittance():
    Y = build_admittance(two_bus(x=0.1))
    assert Y[0, 1] == pytest.approx(10j)
    assert abs(Y[0, 1]) == pytest.approx(10.0)
    assert Y[0, 0] == pytest.approx(-10j)


def test_all_lines_out_leaves_no_coupling(kundur):
    for ln in kundur.lines:
        ln.in_service = False
    Y = build_admittance(kundur)
    assert np.count_nonzero(Y) == 0


def test_kundur_admittance_matches_hand_assembly(kundur):
    # independent assembly straight from the pi-model definition
    n = kundur.n_bus
    ids = [b.id for b in kundur.buses]
    Y = np.zeros((n, n), complex)
    for ln in kundur.lines:
        i, j = ids.index(ln.from_bus), ids.index(ln.to_bus)
        z = ln.r + 1j * ln.x
        series = 1 / z
        Y[i, j] -= series
        Y[j, i] -= series
        Y[i, i] += series + 1j * ln.b_shunt / 2
        Y[j, j] += series + 1j * ln.b_shunt / 2
    assert np.max(np.abs(build_admittance(kundur) - Y)) < 1e-12


def test_admittance_is_symmetric(ieee39):
    Y = build_admittance(ieee39)
    assert np.allclose(Y, Y.T, atol=0, rtol=0)


# ------------------------------------------------------------- power flow

def test_no_load_two_bus_needs_no_correction():
    pf = solve_power_flow(two_bus())
    assert pf.iterations == 0
    assert np.allclose(pf.V, 1.0) and np.allclose(pf.theta, 0.0)


def test_two_bus_matches_closed_form():
    pf = solve_power_flow(two_bus(P_load=100.0, x=0.1))
    # closed form: P = V sin(-theta)/x, Q = (V cos(theta) - V^2)/x = 0
    # => V = cos(theta), P*x = cos(theta) sin(-theta) = -sin(2 theta)/2
    theta = brentq(lambda t: -0.5 * math.sin(2 * t) - 0.1, -0.5, 0.0)
    assert pf.theta[1] == pytest.approx(theta, abs=1e-9)
    assert pf.V[1] == pytest.approx(math.cos(theta), abs=1e-9)
    assert pf.theta[1] == pytest.approx(-0.1003, abs=1e-3)
    assert pf.theta[0] == 0.0


def test_kundur_power_flow_and_transfer(kundur):
    pf = solve_power_flow(kundur)
    assert pf.mismatch_norm < 1e-8
    assert pf.iterations <= 10
    assert tie_transfer_mw(kundur, pf) == pytest.approx(413.0, rel=0.01)
    for b, v in zip(kundur.buses, pf.V):
        if b.kind != "PQ":
            assert v == pytest.approx(b.V_setpoint, abs=1e-12)


def test_ieee39_converges(ieee39):
    pf = solve_power_flow(ieee39)
    assert pf.iterations <= 10 and pf.mismatch_norm < 1e-8


def test_dc_start_gives_same_answer(kundur):
    a = solve_power_flow(kundur, flat_start=True)
    b = solve_power_flow(kundur, flat_start=False)
    assert np.allclose(a.V, b.V, atol=1e-9) and np.allclose(a.theta, b.theta, atol=1e-9)


def test_infeasible_load_fails_to_converge():
    with pytest.raises(PowerFlowError):
        solve_power_flow(two_bus(P_load=2000.0, x=0.1), max_iter=15)


# ------------------------------------------------------------- Kron reduction

def test_nothing_to_eliminate():
    Y = np.array([[2 - 5j, -1 + 5j], [-1 + 5j, 2 - 5j]])
    assert np.array_equal(kron_eliminate(Y, [0, 1]), Y)


def test_star_delta():
    # star with admittances ya, yb, yc to a centre node
    ya, yb, yc = -4j, -2j, 1 - 5j
    Y = np.array([[ya, 0, 0, -ya], [0, yb, 0, -yb], [0, 0, yc, -yc],
                  [-ya, -yb, -yc, ya + yb + yc]])
    red = kron_eliminate(Y, [0, 1, 2])
    s = ya + yb + yc
    y_ab, y_bc, y_ca = ya * yb / s, yb * yc / s, yc * ya / s
    expect = np.array([[y_ab + y_ca, -y_ab, -y_ca], [-y_ab, y_ab + y_bc, -y_bc],
                       [-y_ca, -y_bc, y_bc + y_ca]])
    assert np.max(np.abs(red - expect)) < 1e-14


def _full_network(case, pf):
    """Full (bus + internal node) admittance for the oracle solves."""
    n, g = case.n_bus, case.n_gen
    Y = np.zeros((n + g, n + g), complex)
    Y[:n, :n] = build_admittance(case) + np.diag(load_admittances(case, pf))
    for k, gen in enumerate(case.generators):
        b = case.bus_index(gen.bus)
        y = 1 / (1j * gen.Xd_prime * case.system_base / gen.rating)
        Y[n + k, n + k] += y
        Y[b, b] += y
        Y[n + k, b] -= y
        Y[b, n + k] -= y
    return Y


def test_kron_currents_match_full_network(kundur):
    pf = solve_power_flow(kundur)
    red = NetworkContext.from_power_flow(kundur, pf).reduced
    Y = _full_network(kundur, pf)
    n = kundur.n_bus
    rng = np.random.default_rng(3)
    for _ in range(100):
        E = rng.uniform(0.8, 1.2, 4) * np.exp(1j * rng.uniform(-1, 1, 4))
        # bus voltages from the full solve with internal nodes held at E
        Vb = np.linalg.solve(Y[:n, :n], -Y[:n, n:] @ E)
        I_full = Y[n:, :n] @ Vb + Y[n:, n:] @ E
        I_red = red.Y_red @ E
        assert np.max(np.abs(I_red - I_full)) <= 1e-10 * np.max(np.abs(I_full))
        assert np.max(np.abs(red.bus_voltages(E) - Vb)) < 1e-10


def test_reduced_matrix_symmetric(kundur):
    pf = solve_power_flow(kundur)
    Yr = NetworkContext.from_power_flow(kundur, pf).reduced.Y_red
    assert Yr.shape == (4, 4)
    assert np.max(np.abs(Yr - Yr.T)) < 1e-12


def test_radial_island_is_rejected():
    case = GridCase(100.0, 60.0,
                    [Bus(1, "slack"), Bus(2, "PQ", 1.0, 10.0), Bus(3, "PQ", 1.0, 10.0)],
                    [Line(1, 2, 0.0, 0.1), Line(2, 3, 0.0, 0.1)], [machine(1)])
    pf = solve_power_flow(case)
    ctx = NetworkContext.from_power_flow(case, pf)
    with pytest.raises(SingularNetworkError):
        apply_event(ctx, GridEvent("line_trip", 1, 0.0))


# ------------------------------------------------------------- events

def test_fault_then_clear_restores_matrix(kundur):
    pf = solve_power_flow(kundur)
    ctx = NetworkContext.from_power_flow(kundur, pf)
    before = ctx.reduced.Y_red
    on, off = fault_pair(8, 1.0, 0.1)
    faulted = apply_event(ctx, on)
    assert np.max(np.abs(faulted.reduced.Y_red - before)) > 1e-3
    cleared = apply_event(faulted, off)
    assert np.max(np.abs(cleared.reduced.Y_red - before)) < 1e-12


def test_bolted_fault_collapses_bus_voltage(kundur):
    pf = solve_power_flow(kundur)
    ctx = apply_event(NetworkContext.from_power_flow(kundur, pf), GridEvent("bus_fault", 8, 0.0, 1e4))
    E = np.ones(4) * 1.1
    V = np.abs(ctx.reduced.bus_voltages(E))
    assert V[kundur.bus_index(8)] < 0.01


def test_clear_without_fault_and_unknown_bus(kundur):
    pf = solve_power_flow(kundur)
    ctx = NetworkContext.from_power_flow(kundur, pf)
    with pytest.raises(CaseError):
        apply_event(ctx, GridEvent("fault_clear", 8, 0.0))
    with pytest.raises(CaseError):
        apply_event(ctx, GridEvent("bus_fault", 99, 0.0, 1e4))
    with pytest.raises(ValueError):
        GridEvent("explode", 8, 0.0)
    with pytest.raises(ValueError):
        fault_pair(8, 1.0, 0.0)


def test_load_step_and_pv_set_shift_shunts(kundur):
    pf = solve_power_flow(kundur)
    ctx = NetworkContext.from_power_flow(kundur, pf)
    i = kundur.bus_index(7)
    stepped = apply_event(ctx, GridEvent("load_step", 7, 0.0, 50.0))
    dy = stepped.shunts()[i] - ctx.shunts()[i]
    assert dy == pytest.approx(0.5 / pf.V[i] ** 2)
    pv = apply_event(ctx, GridEvent("pv_set", 7, 0.0, 50.0))
    assert (pv.shunts()[i] - ctx.shunts()[i]) == pytest.approx(-0.5 / pf.V[i] ** 2)
    pv2 = apply_event(pv, GridEvent("pv_set", 7, 0.0, 0.0))
    assert np.allclose(pv2.shunts(), ctx.shunts())
