"""Admittance assembly, Newton-Raphson power flow, Kron reduction and network events."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .case import GridCase, CaseError


class PowerFlowError(RuntimeError):
    """Newton-Raphson did not converge within ``max_iter``."""


class SingularNetworkError(RuntimeError):
    """Singular Jacobian or reduction sub-block (isolated bus or island)."""


def _line_stamps(case: GridCase, tripped=frozenset()):
    idx = {b.id: i for i, b in enumerate(case.buses)}
    for k, ln in enumerate(case.lines):
        if not ln.in_service or k in tripped:
            continue
        y = 1.0 / complex(ln.r, ln.x)
        bc = 0.5j * ln.b_shunt
        t = ln.tap
        yield k, idx[ln.from_bus], idx[ln.to_bus], (y + bc) / t**2, -y / t, y + bc


def build_admittance(case: GridCase, tripped=frozenset()) -> np.ndarray:
    """Bus admittance matrix in pu on the system base.

    Off-diagonal entries are ``-y`` summed over parallel in-service lines, so a
    single reactance of j0.1 gives ``Y[0, 1] = +10j``. Diagonals include half the
    charging susceptance of every attached line. ``tap`` is an off-nominal ratio
    on the from-side. Lines listed in ``tripped`` (indices) are skipped.
    """
    n = case.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for _, i, j, yff, yft, ytt in _line_stamps(case, tripped):
        Y[i, i] += yff
        Y[j, j] += ytt
        Y[i, j] += yft
        Y[j, i] += yft
    return Y


@dataclass
class PowerFlowSolution:
    V: np.ndarray
    theta: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    mismatch_norm: float
    iterations: int

    @property
    def phasors(self) -> np.ndarray:
        return self.V * np.exp(1j * self.theta)


def scheduled_injections(case: GridCase) -> tuple[np.ndarray, np.ndarray]:
    """Net specified (P, Q) injections in pu. Q is meaningful at PQ buses only."""
    base = case.system_base
    P = np.array([-b.P_load for b in case.buses], dtype=float)
    Q = np.array([-b.Q_load for b in case.buses], dtype=float)
    for g in case.generators:
        P[case.bus_index(g.bus)] += g.P_dispatch
    return P / base, Q / base


def _dS(Y, V):
    # complex power derivatives w.r.t. angle and magnitude (polar form)
    Ibus = Y @ V
    diagV = np.diag(V)
    diagI = np.diag(Ibus)
    diagVn = np.diag(V / np.abs(V))
    dS_dVa = 1j * diagV @ np.conj(diagI - Y @ diagV)
    dS_dVm = diagV @ np.conj(Y @ diagVn) + np.conj(diagI) @ diagVn
    return dS_dVa, dS_dVm


def solve_power_flow(case: GridCase, flat_start: bool = True, tol: float = 1e-10,
                     max_iter: int = 20, ybus: np.ndarray | None = None) -> PowerFlowSolution:
    """Full Newton-Raphson in polar coordinates.

    PV buses hold their voltage magnitude (no reactive limits). ``iterations``
    counts Newton corrections, so an already balanced start reports 0.
    """
    Y = build_admittance(case) if ybus is None else ybus
    kinds = [b.kind for b in case.buses]
    slack = case.slack_index
    pv = np.array([i for i, k in enumerate(kinds) if k == "PV"], dtype=int)
    pq = np.array([i for i, k in enumerate(kinds) if k == "PQ"], dtype=int)
    pvpq = np.r_[pv, pq]
    Psp, Qsp = scheduled_injections(case)

    Vm = np.array([b.V_setpoint if b.kind != "PQ" else 1.0 for b in case.buses], dtype=float)
    Va = np.zeros(case.n_bus)
    if not flat_start:
        # DC estimate of angles
        B = -Y.imag
        keep = pvpq
        try:
            Va[keep] = np.linalg.solve(B[np.ix_(keep, keep)], Psp[keep])
        except np.linalg.LinAlgError:
            raise SingularNetworkError("singular DC matrix (isolated bus)") from None

    def mismatch(V):
        S = V * np.conj(Y @ V)
        return np.r_[S.real[pvpq] - Psp[pvpq], S.imag[pq] - Qsp[pq]]

    V = Vm * np.exp(1j * Va)
    F = mismatch(V)
    it = 0
    norm = np.max(np.abs(F)) if F.size else 0.0
    while norm > tol:
        if it >= max_iter:
            raise PowerFlowError(f"no convergence after {max_iter} iterations "
                                 f"(mismatch {norm:.3e} pu)")
        dS_dVa, dS_dVm = _dS(Y, V)
        J = np.block([
            [dS_dVa[np.ix_(pvpq, pvpq)].real, dS_dVm[np.ix_(pvpq, pq)].real],
            [dS_dVa[np.ix_(pq, pvpq)].imag, dS_dVm[np.ix_(pq, pq)].imag],
        ])
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise SingularNetworkError("singular Jacobian (isolated bus?)") from None
        if not np.all(np.isfinite(dx)):
            raise SingularNetworkError("singular Jacobian (isolated bus?)")
        npv = len(pvpq)
        Va[pvpq] += dx[:npv]
        Vm[pq] += dx[npv:]
        V = Vm * np.exp(1j * Va)
        F = mismatch(V)
        norm = np.max(np.abs(F))
        it += 1

    S = V * np.conj(Y @ V)
    Va = Va - Va[slack]
    return PowerFlowSolution(V=np.abs(V), theta=Va, P=S.real, Q=S.imag,
                             mismatch_norm=float(norm), iterations=it)


def branch_flow_mw(case: GridCase, pf: PowerFlowSolution, from_bus: int, to_bus: int) -> float:
    """Active power (MW) leaving ``from_bus`` summed over in-service lines to ``to_bus``."""
    V = pf.phasors
    total = 0.0
    found = False
    for _, i, j, yff, yft, ytt in _line_stamps(case):
        a, b = case.buses[i].id, case.buses[j].id
        if (a, b) == (from_bus, to_bus):
            s = V[i] * np.conj(yff * V[i] + yft * V[j])
        elif (a, b) == (to_bus, from_bus):
            s = V[j] * np.conj(ytt * V[j] + yft * V[i])
        else:
            continue
        found = True
        total += s.real
    if not found:
        raise CaseError(f"no in-service line between {from_bus} and {to_bus}")
    return total * case.system_base


def tie_transfer_mw(case: GridCase, pf: PowerFlowSolution) -> float:
    """Sum of flows over the ``meta.tie_lines`` pairs listed in the case file."""
    ties = case.meta.get("tie_lines")
    if not ties:
        raise CaseError("meta.tie_lines: case defines no tie lines")
    return sum(branch_flow_mw(case, pf, a, b) for a, b in ties)


# ---------------------------------------------------------------- Kron reduction

def kron_eliminate(Y: np.ndarray, keep) -> np.ndarray:
    """Eliminate every node not in ``keep``: Y_kk - Y_ke Y_ee^-1 Y_ek."""
    n = Y.shape[0]
    keep = np.asarray(keep, dtype=int)
    elim = np.setdiff1d(np.arange(n), keep)
    if elim.size == 0:
        return Y[np.ix_(keep, keep)].copy()
    Yee = Y[np.ix_(elim, elim)]
    try:
        X = np.linalg.solve(Yee, Y[np.ix_(elim, keep)])
    except np.linalg.LinAlgError:
        raise SingularNetworkError("singular reduction sub-block") from None
    return Y[np.ix_(keep, keep)] - Y[np.ix_(keep, elim)] @ X


@dataclass
class ReducedNetwork:
    """Admittance among generator internal nodes plus the map back to bus voltages.

    ``recovery`` (N x G) gives the bus voltage phasors as ``recovery @ E``.
    """
    Y_red: np.ndarray
    gen_bus: np.ndarray
    recovery: np.ndarray

    @property
    def n_gen(self) -> int:
        return self.Y_red.shape[0]

    def terminal_voltages(self, E: np.ndarray) -> np.ndarray:
        return self.recovery[self.gen_bus] @ E

    def bus_voltages(self, E: np.ndarray) -> np.ndarray:
        return self.recovery @ E


def load_admittances(case: GridCase, pf: PowerFlowSolution) -> np.ndarray:
    """Constant-impedance equivalents y = (P - jQ)/|V|^2 of the bus loads (pu)."""
    P = np.array([b.P_load for b in case.buses]) / case.system_base
    Q = np.array([b.Q_load for b in case.buses]) / case.system_base
    return (P - 1j * Q) / pf.V**2


def _check_connected(ybus, gen_bus):
    n = ybus.shape[0]
    A = csr_matrix(np.abs(ybus) > 0)
    _, labels = connected_components(A, directed=False)
    fed = set(labels[gen_bus])
    island = [i for i in range(n) if labels[i] not in fed]
    if island:
        raise SingularNetworkError(f"bus indices {island} are islanded from every generator")


def kron_reduce(ybus: np.ndarray, load_y: np.ndarray, generator_internal_branches) -> ReducedNetwork:
    """Reduce to generator internal nodes.

    ``generator_internal_branches`` is a sequence of ``(bus_index, x)``: each
    machine attaches to its bus through reactance ``jx`` (system base). Loads
    enter as shunts ``load_y``. Every bus node is eliminated.
    """
    n = ybus.shape[0]
    gen_bus = np.array([b for b, _ in generator_internal_branches], dtype=int)
    g = len(gen_bus)
    yg = np.array([1.0 / (1j * x) for _, x in generator_internal_branches])
    _check_connected(ybus, gen_bus)
    Ybb = ybus + np.diag(load_y)
    Ybb[gen_bus, gen_bus] += yg
    Ybg = np.zeros((n, g), dtype=complex)
    Ybg[gen_bus, np.arange(g)] = -yg
    try:
        R = -np.linalg.solve(Ybb, Ybg)
    except np.linalg.LinAlgError:
        raise SingularNetworkError("singular reduction sub-block") from None
    if not np.all(np.isfinite(R)):
        raise SingularNetworkError("singular reduction sub-block")
    Y_red = np.diag(yg) + Ybg.T @ R
    return ReducedNetwork(Y_red=Y_red, gen_bus=gen_bus, recovery=R)


# ---------------------------------------------------------------- events

EVENT_KINDS = ("bus_fault", "fault_clear", "line_trip", "load_step", "pv_set")


@dataclass(frozen=True)
class GridEvent:
    kind: str
    target: int
    time: float
    magnitude: float = 0.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


def fault_pair(bus: int, t_fault: float, duration: float, admittance: float = 1e4):
    if duration <= 0:
        raise ValueError("fault_clear time must be strictly after the fault")
    return (GridEvent("bus_fault", bus, t_fault, admittance),
            GridEvent("fault_clear", bus, t_fault + duration))


@dataclass(frozen=True, eq=False)
class NetworkContext:
    """Everything needed to rebuild the reduced network after events.

    Instances are immutable; :func:`apply_event` returns a new context.
    """
    case: GridCase
    v0: np.ndarray                      # solved bus voltage magnitudes
    load_y: np.ndarray                  # load shunts (bus loads + PV equivalents)
    faults: tuple = ()                  # ((bus_index, y), ...)
    tripped: frozenset = frozenset()
    extra_y: tuple = ()                 # ((bus_index, y), ...) from load_step
    pv_y: tuple = ()                    # ((bus_index, y), ...) from pv_set
    pv_base: tuple = ()                 # ((bus_index, MW), ...) PV already folded into load_y

    @classmethod
    def from_power_flow(cls, case: GridCase, pf: PowerFlowSolution) -> "NetworkContext":
        return cls(case=case, v0=pf.V.copy(), load_y=load_admittances(case, pf))

    def shunts(self) -> np.ndarray:
        y = self.load_y.astype(complex).copy()
        for i, v in self.faults + self.extra_y + self.pv_y:
            y[i] += v
        return y

    @cached_property
    def ybus(self) -> np.ndarray:
        return build_admittance(self.case, self.tripped)

    @cached_property
    def reduced(self) -> ReducedNetwork:
        ms = _xdp_sys(self.case)
        branches = list(zip(self.case.gen_bus_indices(), ms))
        return kron_reduce(self.ybus, self.shunts(), branches)


def _xdp_sys(case: GridCase) -> np.ndarray:
    return np.array([g.Xd_prime * case.system_base / g.rating for g in case.generators])


def apply_event(ctx: NetworkContext, event: GridEvent) -> NetworkContext:
    """Return the context after ``event``. The reduced network is rebuilt lazily."""
    case = ctx.case
    kind = event.kind
    if kind == "line_trip":
        if not 0 <= int(event.target) < len(case.lines):
            raise CaseError(f"line_trip: unknown line index {event.target}")
        new = replace(ctx, tripped=ctx.tripped | {int(event.target)})
        new.reduced  # raises on islanding / singular reduction
        return new
    i = case.bus_index(int(event.target))
    if kind == "bus_fault":
        return replace(ctx, faults=ctx.faults + ((i, complex(event.magnitude)),))
    if kind == "fault_clear":
        remaining = tuple(f for f in ctx.faults if f[0] != i)
        if len(remaining) == len(ctx.faults):
            raise CaseError(f"fault_clear: no active fault at bus {event.target}")
        return replace(ctx, faults=remaining)
    if kind == "load_step":
        dy = (event.magnitude / case.system_base) / ctx.v0[i] ** 2
        return replace(ctx, extra_y=ctx.extra_y + ((i, complex(dy)),))
    if kind == "pv_set":
        base_mw = dict(ctx.pv_base).get(i, 0.0)
        y = -((event.magnitude - base_mw) / case.system_base) / ctx.v0[i] ** 2
        others = tuple(p for p in ctx.pv_y if p[0] != i)
        return replace(ctx, pv_y=others + ((i, complex(y)),))
    raise ValueError(kind)  # pragma: no cover
