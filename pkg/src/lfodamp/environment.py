"""Markov decision process around the simulator.

The agent sees measurements that went through a :class:`~lfodamp.delay.GaussianMixtureDelay`
channel; the reward is computed by the harness on the true (undelayed) state.
"""
from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import PssBank
from .case import GridCase, MachineArrays
from .delay import GaussianMixtureDelay, MeasurementBuffer, channel_preset, push_measurement, read_delayed
from .dynamics import DynamicState, Integrator, NumericalBlowup, electrical_power, init_dynamic_state
from .network import GridEvent, NetworkContext, apply_event, fault_pair, solve_power_flow

TRACE_HEADER = "t,gen_id,delta_rad,omega_pu,eqp_pu,efd_pu,pe_pu"


@dataclass
class Observation:
    speed_deviations: np.ndarray
    bus_angles: np.ndarray
    valid: bool = True

    def vector(self, speed_scale: float = 1.0) -> np.ndarray:
        return np.concatenate([self.speed_deviations * speed_scale, self.bus_angles])

    @property
    def dim(self) -> int:
        return len(self.speed_deviations) + len(self.bus_angles)


@dataclass
class RewardWeights:
    alpha: float = 10.0
    beta: float = 50.0
    eta: float = 1.0
    zeta: float = 1.0
    u: float = 0.2
    v: float = -0.2
    sync_penalty: float = 1000.0

    def __post_init__(self):
        if not self.v < self.u:
            raise ValueError("action bounds need v < u")
        if min(self.alpha, self.beta, self.eta, self.zeta) < 0:
            raise ValueError("reward weights must be non-negative")
        if not self.sync_penalty > 0:
            raise ValueError("sync_penalty must be positive")


@dataclass
class EpisodeConfig:
    dt_sim: float = 0.01
    dt_control: float = 0.05
    horizon: float = 20.0
    fault_bus: int | None = None          # None: case meta default; -1: no fault
    fault_time: float = 1.0
    fault_duration: float = 0.1
    fault_admittance: float = 1e4
    channel: GaussianMixtureDelay | None = field(default_factory=lambda: channel_preset("fiber_optic"))
    monitored_buses: list | None = None
    monitored_pairs: list | None = None
    controlled_generators: list | None = None
    pv_share: float = 0.0
    pv_fluctuation_std: float = 0.02
    pv_level_spread: float = 0.2
    pv_cutoff_hz: float = 0.1
    seed: int = 0
    sync_threshold: float = math.pi
    paper_literal_reward: bool = False
    speed_scale: float = 1000.0
    pss_on_uncontrolled: bool = True
    actuation_delay_steps: int = 0
    obs_noise_std: float = 0.0

    def validate(self) -> None:
        ratio = self.dt_control / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_control must be an integer multiple of dt_sim")
        if self.fault_bus != -1 and not self.horizon > self.fault_time + self.fault_duration:
            raise ValueError("horizon must exceed the fault clearing time")
        if not 0 <= self.pv_share < 1:
            raise ValueError("pv_share must be in [0, 1)")


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict


# ------------------------------------------------------------------ pure pieces

def assemble_state(delayed_payload, previous_payload) -> Observation:
    """Speed-change magnitudes between two delivered samples plus the bus angles.

    Payloads are ``(omega, angles)``; ``None`` for ``delayed_payload`` means
    nothing has arrived yet (``valid=False``).
    """
    if delayed_payload is None:
        if previous_payload is None:
            raise ValueError("need at least one payload to shape an invalid observation")
        omega, angles = previous_payload
        return Observation(np.zeros_like(omega), np.array(angles, dtype=float), valid=False)
    omega, angles = delayed_payload
    prev = omega if previous_payload is None else previous_payload[0]
    return Observation(np.abs(np.asarray(omega) - np.asarray(prev)), np.array(angles, dtype=float))


def action_penalty(action, u: float, v: float, literal: bool = False) -> np.ndarray:
    """Per-component out-of-bound distance (default) or the as-printed piecewise term."""
    a = np.asarray(action, dtype=float)
    if literal:
        return np.where(a < u, np.abs(-a - u), np.abs(a - v))
    return np.maximum(a - u, 0.0) + np.maximum(v - a, 0.0)


def reward(omega, delta_omega, angle_pairs, action, weights: RewardWeights,
           literal: bool = False) -> float:
    """Per-step reward, always <= 0.

    ``angle_pairs`` is a sequence of ``(theta_i, theta_j)``. The default form
    penalizes the action only outside ``[v, u]``. ``literal=True`` applies the
    piecewise terms exactly as printed and repeats the speed and action terms
    once per bus pair (and the angle term once per generator).
    """
    w = weights
    omega = np.asarray(omega, dtype=float)
    dw = np.asarray(delta_omega, dtype=float)
    speed = w.alpha * np.abs(1.0 - omega).sum() + w.beta * np.abs(dw).sum()
    pairs = [abs(a - b) for a, b in angle_pairs]
    angle = w.zeta * sum(pairs)
    act = w.eta * action_penalty(action, w.u, w.v, literal).sum()
    if literal:
        nb = max(len(pairs), 1)
        return -(nb * (speed + act) + len(omega) * angle)
    return -(speed + angle + act)


def discounted_return(rewards, gamma: float) -> float:
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must be in [0, 1]")
    total = 0.0
    g = 1.0
    for r in rewards:
        total += g * r
        g *= gamma
    return total


def check_synchronism(state: DynamicState, threshold: float = math.pi) -> bool:
    """True while the largest pairwise rotor-angle separation is within ``threshold``."""
    d = state.delta
    return bool(np.all(np.isfinite(d)) and (d.max() - d.min()) <= threshold)


# ------------------------------------------------------------------ environment

def apply_pv_scenario(case: GridCase, total_mw: float) -> tuple[GridCase, dict]:
    """Case copy with ``total_mw`` of PV netted from loads (split by rating) and
    non-slack dispatch scaled down by the same total. Returns per-bus PV MW."""
    c = copy.deepcopy(case)
    if total_mw <= 0 or not c.pv_units:
        return c, {}
    rated = sum(p.rated for p in c.pv_units)
    per_bus: dict = {}
    for p in c.pv_units:
        per_bus[p.bus] = per_bus.get(p.bus, 0.0) + total_mw * p.rated / rated
    for bus_id, mw in per_bus.items():
        c.buses[c.bus_index(bus_id)].P_load -= mw
    gen_total = sum(g.P_dispatch for g in c.generators)
    scale = 1.0 - total_mw / gen_total
    if scale <= 0.05:
        raise ValueError(f"PV output {total_mw:.0f} MW leaves no room for synchronous dispatch")
    for g in c.generators:
        g.P_dispatch *= scale
    return c, per_bus


class DampingEnv:
    """Reset/step interface over the delayed wide-area control loop."""

    def __init__(self, case: GridCase, config: EpisodeConfig | None = None,
                 weights: RewardWeights | None = None, record_trace: bool = False):
        self.case = case
        self.cfg = config or EpisodeConfig()
        self.cfg.validate()
        self.w = weights or RewardWeights()
        meta = case.meta
        cfg = self.cfg
        self.controlled = list(cfg.controlled_generators if cfg.controlled_generators is not None
                               else meta.get("controlled_generators", range(case.n_gen)))
        self.monitored = list(cfg.monitored_buses if cfg.monitored_buses is not None
                              else meta.get("monitored_buses", []))
        self.pairs = [tuple(p) for p in (cfg.monitored_pairs if cfg.monitored_pairs is not None
                                         else meta.get("monitored_pairs", []))]
        fb = cfg.fault_bus if cfg.fault_bus is not None else meta.get("fault_bus", -1)
        self.fault_bus = fb
        self.uncontrolled = [g for g in range(case.n_gen) if g not in self.controlled]
        self.mon_idx = np.array([case.bus_index(b) for b in self.monitored], dtype=int)
        self.pair_idx = [(case.bus_index(a), case.bus_index(b)) for a, b in self.pairs]
        self.n_sub = int(round(cfg.dt_control / cfg.dt_sim))
        self.machines = MachineArrays.from_case(case)
        self.integ = Integrator(self.machines)
        self.record_trace = record_trace
        self.buffer = MeasurementBuffer()
        self.trace: list = []
        self._pf_cache = None
        self.state: DynamicState | None = None

    # dimensions -------------------------------------------------------
    @property
    def obs_dim(self) -> int:
        return self.case.n_gen + len(self.monitored)

    @property
    def action_dim(self) -> int:
        return len(self.controlled)

    @property
    def n_steps(self) -> int:
        return int(round(self.cfg.horizon / self.cfg.dt_control))

    # internals --------------------------------------------------------
    def _bus_angles(self, idx) -> np.ndarray:
        E = self.state.eqp * np.exp(1j * self.state.delta)
        return np.angle(self._rec[idx] @ E)

    def _set_network(self, ctx: NetworkContext) -> None:
        self.ctx = ctx
        red = ctx.reduced
        self.reduced = red
        self._rec = red.recovery
        self.integ.set_network(red)

    def _measure(self):
        omega = self.state.omega.copy()
        if self.cfg.obs_noise_std > 0:
            omega = omega + self.noise_rng.normal(0.0, self.cfg.obs_noise_std, omega.shape)
        return omega, self._bus_angles(self.mon_idx)

    def _true_pairs(self):
        if not self.pair_idx:
            return []
        flat = np.array([i for p in self.pair_idx for i in p], dtype=int)
        ang = self._bus_angles(flat)
        return list(zip(ang[0::2], ang[1::2]))

    def _build_episode(self, rng):
        cfg = self.cfg
        pv_mw = 0.0
        if cfg.pv_share > 0:
            total_load = sum(b.P_load for b in self.case.buses)
            level = rng.uniform(1.0 - cfg.pv_level_spread, 1.0 + cfg.pv_level_spread)
            pv_mw = cfg.pv_share * total_load * level
        if pv_mw == 0.0 and self._pf_cache is not None:
            return self._pf_cache
        ep_case, per_bus = apply_pv_scenario(self.case, pv_mw)
        pf = solve_power_flow(ep_case)
        ctx = NetworkContext.from_power_flow(ep_case, pf)
        ctx = replace(ctx, pv_base=tuple((ep_case.bus_index(b), mw) for b, mw in per_bus.items()))
        state0 = init_dynamic_state(ep_case, pf, ctx.reduced, self.machines)
        built = (ep_case, pf, ctx, state0, per_bus)
        if pv_mw == 0.0:
            self._pf_cache = built
        return built

    # API --------------------------------------------------------------
    def reset(self, seed: int | None = None) -> Observation:
        cfg = self.cfg
        ss = np.random.SeedSequence(cfg.seed if seed is None else seed)
        pv_ss, delay_ss, noise_ss = ss.spawn(3)
        pv_rng = np.random.default_rng(pv_ss)
        self.delay_rng = np.random.default_rng(delay_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.ep_case, self.pf, ctx, state0, self.pv_base = self._build_episode(pv_rng)
        self.pv_rng = pv_rng
        self.pv_total = sum(self.pv_base.values())
        self.pv_filter = 0.0
        self.state = state0.copy()
        self._set_network(ctx)
        self.events = []
        if self.fault_bus != -1:
            self.events = list(fault_pair(self.fault_bus, cfg.fault_time, cfg.fault_duration,
                                          cfg.fault_admittance))
        self.k = 0
        self.prev_true_omega = self.state.omega.copy()
        self.pss = PssBank(len(self.uncontrolled)) if (cfg.pss_on_uncontrolled and self.uncontrolled) else None
        self.act_queue = deque([np.zeros(self.action_dim)] * cfg.actuation_delay_steps)
        self.buffer.clear()
        self.trace = []
        payload = self._measure()
        self._initial_payload = payload
        self._last_delivered = None       # (emit_time, payload)
        self._prev_delivered = None
        self.obs = Observation(np.zeros(self.case.n_gen), np.array(payload[1]), valid=False)
        self.obs = self._deliver(payload)
        self.sync_lost = False
        if self.record_trace:
            self._record(0.0, np.zeros(self.action_dim))
        return self.obs

    def _deliver(self, payload) -> Observation:
        if self.cfg.channel is None:
            arrived = (self.state.t, payload)
        else:
            push_measurement(self.buffer, self.state.t, payload, self.cfg.channel, self.delay_rng)
            arrived = read_delayed(self.buffer, self.state.t, with_time=True)
        if arrived is None:
            return Observation(np.zeros(self.case.n_gen), np.array(self._initial_payload[1]), valid=False)
        if self._last_delivered is not None and arrived[0] == self._last_delivered[0]:
            return self.obs                                 # nothing new: hold
        prev = self._last_delivered[1] if self._last_delivered is not None else None
        self._last_delivered = arrived
        return assemble_state(arrived[1], prev)

    def _pv_update(self) -> None:
        cfg = self.cfg
        if not self.pv_base or cfg.pv_fluctuation_std <= 0:
            return
        a = math.exp(-2 * math.pi * cfg.pv_cutoff_hz * cfg.dt_control)
        gain = cfg.pv_fluctuation_std * math.sqrt(1 - a * a)
        self.pv_filter = a * self.pv_filter + gain * self.pv_rng.standard_normal()
        ctx = self.ctx
        for bus_id, mw in self.pv_base.items():
            ctx = apply_event(ctx, GridEvent("pv_set", bus_id, self.state.t, mw * (1 + self.pv_filter)))
        self._set_network(ctx)

    def step(self, action) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() first")
        a = np.asarray(action, dtype=float).reshape(-1)
        if a.shape != (self.action_dim,):
            raise ValueError(f"action must have length {self.action_dim}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite action")
        cfg = self.cfg
        applied = a
        if cfg.actuation_delay_steps:
            self.act_queue.append(a.copy())
            applied = self.act_queue.popleft()
        vpss = np.zeros(self.case.n_gen)
        vpss[self.controlled] = applied
        if self.pss is not None:
            vpss[self.uncontrolled] = self.pss(self.state.omega[self.uncontrolled], cfg.dt_control)
        self._pv_update()
        blown = False
        try:
            for _ in range(self.n_sub):
                while self.events and self.events[0].time <= self.state.t + 1e-9:
                    self._set_network(apply_event(self.ctx, self.events.pop(0)))
                self.integ.advance(self.state, vpss, cfg.dt_sim, 1)
        except NumericalBlowup:
            blown = True
        self.k += 1
        self.state.t = self.k * cfg.dt_control
        sync_ok = (not blown) and check_synchronism(self.state, cfg.sync_threshold)
        if sync_ok:
            true_dw = np.abs(self.state.omega - self.prev_true_omega)
            r = reward(self.state.omega, true_dw, self._true_pairs(), applied, self.w,
                       cfg.paper_literal_reward)
            self.prev_true_omega = self.state.omega.copy()
            self.obs = self._deliver(self._measure())
        else:
            self.sync_lost = True
            r = -self.w.sync_penalty
        done = (not sync_ok) or self.k >= self.n_steps
        if self.record_trace and not blown:
            self._record(r, applied)
        return StepResult(self.obs, float(r), bool(done), {"sync_lost": not sync_ok, "t": self.state.t})

    @property
    def delivered_payload(self):
        """Newest ``(omega, angles)`` packet delivered so far, or ``None``."""
        return None if self._last_delivered is None else self._last_delivered[1]

    # traces -----------------------------------------------------------
    def _record(self, r, applied) -> None:
        st = self.state
        pe, _ = electrical_power(self.reduced, st)
        for g in range(self.case.n_gen):
            self.trace.append((st.t, g, st.delta[g], st.omega[g], st.eqp[g], st.efd[g], pe[g],
                               r, tuple(applied)))

    def trace_omega(self):
        """``(times, omega[T, G])`` arrays from the recorded trace."""
        G = self.case.n_gen
        rows = self.trace
        t = np.array([rows[i][0] for i in range(0, len(rows), G)])
        w = np.array([row[3] for row in rows]).reshape(-1, G)
        return t, w


def write_trace_csv(path, rows, n_actions: int) -> None:
    cols = TRACE_HEADER + ",reward" + "".join(f",action_g{i}" for i in range(n_actions))
    with open(path, "w") as f:
        f.write(cols + "\n")
        for t, g, d, w, e, fd, pe, r, act in rows:
            nums = (d, w, e, fd, pe, r) + tuple(act)
            f.write(f"{t:.6f},{g}," + ",".join(repr(float(x)) for x in nums) + "\n")
