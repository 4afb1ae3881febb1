"""One-axis machine + static exciter dynamics on a Kron-reduced network.

State per generator: rotor angle ``delta`` (rad), speed ``omega`` (pu, 1.0 is
synchronous), transient EMF ``eqp`` and field voltage ``efd``. The network sees
an EMF ``eqp * exp(j*delta)`` behind ``j*Xd'`` (round rotor, ``Xq = Xd'``).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from ._backend import kernel
from .case import GridCase, MachineArrays
from .network import PowerFlowSolution, ReducedNetwork


class InitializationError(ValueError):
    """Dispatch cannot be met within the field-voltage limits."""


class NumericalBlowup(FloatingPointError):
    """Non-finite state during integration."""


@dataclass
class DynamicState:
    t: float
    delta: np.ndarray
    omega: np.ndarray
    eqp: np.ndarray
    efd: np.ndarray
    pm: np.ndarray
    vref: np.ndarray

    def copy(self) -> "DynamicState":
        return DynamicState(self.t, self.delta.copy(), self.omega.copy(), self.eqp.copy(),
                            self.efd.copy(), self.pm.copy(), self.vref.copy())

    @property
    def n_gen(self) -> int:
        return len(self.delta)


class StateDerivative(NamedTuple):
    delta: np.ndarray
    omega: np.ndarray
    eqp: np.ndarray
    efd: np.ndarray


def _machines(case_or_machines) -> MachineArrays:
    if isinstance(case_or_machines, MachineArrays):
        return case_or_machines
    return MachineArrays.from_case(case_or_machines)


def param_matrix(m: MachineArrays) -> np.ndarray:
    return np.ascontiguousarray(np.vstack(
        [m.H, m.D, m.Xd, m.Xdp, m.Td0p, m.Ka, m.Ta, m.efd_min, m.efd_max]))


def _control(control, n):
    if control is None:
        return np.zeros(n)
    u = np.ascontiguousarray(control, dtype=float)
    if u.shape != (n,):
        raise ValueError(f"control must have length {n}, got {u.shape}")
    return u


def electrical_power(reduced: ReducedNetwork, state: DynamicState):
    """Electrical power ``Pe`` and terminal-voltage magnitude ``Vt`` per generator (pu)."""
    E = state.eqp * np.exp(1j * state.delta)
    current = reduced.Y_red @ E
    pe = np.ascontiguousarray((E * np.conj(current)).real)
    vt = np.abs(reduced.terminal_voltages(E))
    return pe, vt


def derivatives(state: DynamicState, reduced: ReducedNetwork, control, case) -> StateDerivative:
    """Time derivatives of (delta, omega, eqp, efd) for stabilizing input ``control``.

    ``case`` may be a :class:`GridCase` or precomputed :class:`MachineArrays`.
    """
    m = _machines(case)
    u = _control(control, state.n_gen)
    out = kernel.derivatives_raw(state.delta, state.omega, state.eqp, state.efd, state.pm,
                                 state.vref, u, np.ascontiguousarray(reduced.Y_red.real),
                                 np.ascontiguousarray(reduced.Y_red.imag), param_matrix(m), m.ws)
    return StateDerivative(*[np.array(a) for a in out[:4]])


def init_dynamic_state(case: GridCase, pf: PowerFlowSolution, reduced: ReducedNetwork | None = None,
                       machines: MachineArrays | None = None) -> DynamicState:
    """Back-solve angles, EMFs, field voltages, Pm and Vref from a converged power flow.

    When ``reduced`` is given, Pm is recomputed from it so the network seen by
    the integrator is balanced to rounding.
    """
    m = machines if machines is not None else MachineArrays.from_case(case)
    gb = case.gen_bus_indices()
    V = pf.phasors[gb]
    # share each bus's generation among its machines by dispatch
    S_bus = pf.P + 1j * pf.Q
    load = np.array([b.P_load + 1j * b.Q_load for b in case.buses]) / case.system_base
    S_gen_bus = S_bus + load
    disp = np.array([g.P_dispatch for g in case.generators], dtype=float)
    S = np.empty(case.n_gen, dtype=complex)
    for k, b in enumerate(gb):
        same = gb == b
        tot = disp[same].sum()
        frac = disp[k] / tot if tot != 0 else 1.0 / same.sum()
        S[k] = S_gen_bus[b] * frac
    current = np.conj(S / V)
    E = V + 1j * m.Xdp * current
    delta = np.angle(E)
    eqp = np.abs(E)
    c, s = np.cos(delta), np.sin(delta)
    i_d = current.real * s - current.imag * c
    efd = eqp + (m.Xd - m.Xdp) * i_d
    bad = (efd < m.efd_min) | (efd > m.efd_max)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise InitializationError(
            f"generator {k} (bus {case.generators[k].bus}) needs Efd={efd[k]:.3f} pu, "
            f"outside [{m.efd_min[k]}, {m.efd_max[k]}]")
    vt = np.abs(V)
    pm = S.real.copy()
    state = DynamicState(0.0, delta, np.ones(case.n_gen), eqp, efd, pm, vt + efd / m.Ka)
    if reduced is not None:
        pe, vt_red = electrical_power(reduced, state)
        state.pm = np.ascontiguousarray(pe)
        state.vref = vt_red + efd / m.Ka
    return state


def step_rk4(state: DynamicState, reduced: ReducedNetwork, control, dt: float, case,
             nsteps: int = 1) -> DynamicState:
    """Advance ``nsteps`` classical RK4 steps of size ``dt`` with ``control`` held.

    Efd limits are enforced after every step. Raises :class:`NumericalBlowup` on
    a non-finite state.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    m = _machines(case)
    u = _control(control, state.n_gen)
    new = state.copy()
    ok = kernel.rk4_advance(new.delta, new.omega, new.eqp, new.efd, new.pm, new.vref, u,
                            np.ascontiguousarray(reduced.Y_red.real),
                            np.ascontiguousarray(reduced.Y_red.imag),
                            param_matrix(m), m.ws, float(dt), int(nsteps))
    new.t = state.t + nsteps * dt
    if not ok:
        raise NumericalBlowup(f"non-finite machine state near t={new.t:.4f} s")
    return new


def rk4_generic(f, y, t: float, dt: float):
    """One classical RK4 step of ``dy/dt = f(t, y)`` (reference form, any array shape)."""
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


class Integrator:
    """Reusable stepper holding contiguous network/parameter buffers.

    Avoids per-call array conversion in the training loop.
    """

    def __init__(self, machines: MachineArrays):
        self.m = machines
        self.params = param_matrix(machines)
        self.Yr = self.Yi = None

    def set_network(self, reduced: ReducedNetwork) -> None:
        self.Yr = np.ascontiguousarray(reduced.Y_red.real)
        self.Yi = np.ascontiguousarray(reduced.Y_red.imag)

    def advance(self, state: DynamicState, control: np.ndarray, dt: float, nsteps: int) -> None:
        """In-place advance of ``state``."""
        ok = kernel.rk4_advance(state.delta, state.omega, state.eqp, state.efd, state.pm,
                                state.vref, control, self.Yr, self.Yi, self.params,
                                self.m.ws, dt, nsteps)
        state.t += nsteps * dt
        if not ok:
            raise NumericalBlowup(f"non-finite machine state near t={state.t:.4f} s")


def simulate(case: GridCase, ctx, state: DynamicState, duration: float, dt: float,
             events=(), control=None, record_every: int = 1):
    """Open-loop simulation with events; returns ``(times, omega_history, final_state)``.

    ``ctx`` is a :class:`~lfodamp.network.NetworkContext`. Events are applied
    at the first step boundary at or after their time.
    """
    from .network import apply_event

    m = MachineArrays.from_case(case)
    integ = Integrator(m)
    integ.set_network(ctx.reduced)
    u = _control(control, state.n_gen)
    st = state.copy()
    pending = sorted(events, key=lambda e: e.time)
    n = int(round(duration / dt))
    times, omegas = [st.t], [st.omega.copy()]
    for k in range(n):
        while pending and pending[0].time <= st.t + 1e-9:
            ctx = apply_event(ctx, pending.pop(0))
            integ.set_network(ctx.reduced)
        integ.advance(st, u, dt, 1)
        if (k + 1) % record_every == 0:
            times.append(st.t)
            omegas.append(st.omega.copy())
    return np.array(times), np.array(omegas), st
