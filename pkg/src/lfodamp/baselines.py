"""Comparison controllers: discrete PID on speed error and a washout + lead-lag PSS."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass
class PidState:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    v: float = -0.2
    u: float = 0.2
    anti_windup: bool = True
    integral: float = 0.0
    prev_error: float | None = None

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None


def pid_step(state: PidState, error: float, dt: float) -> float:
    """Positional PID with derivative on error and clamped output.

    With ``anti_windup`` the integrator is frozen whenever the output is
    saturated in the direction the error would push it further.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    deriv = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    state.prev_error = error
    trial = state.integral + error * dt
    raw = state.kp * error + state.ki * trial + state.kd * deriv
    out = min(max(raw, state.v), state.u)
    if not (state.anti_windup and out != raw):
        state.integral = trial
    return out


@dataclass
class PssState:
    """Washout followed by lead-lag stages, bilinear-discretized."""
    Kpss: float = 20.0
    Tw: float = 10.0
    stages: tuple = ((0.05, 0.02), (0.05, 0.02))
    v: float = -0.2
    u: float = 0.2
    x_in: float = 0.0
    y_w: float = 0.0
    stage_in: list = field(default_factory=list)
    stage_out: list = field(default_factory=list)

    def reset(self) -> None:
        self.x_in = 0.0
        self.y_w = 0.0
        self.stage_in = [0.0] * len(self.stages)
        self.stage_out = [0.0] * len(self.stages)


def _bilinear(num, den, dt):
    """Tustin map of (num[0] s + num[1]) / (den[0] s + den[1]) to (b0, b1, a1)."""
    k = 2.0 / dt
    a0 = den[0] * k + den[1]
    b0 = (num[0] * k + num[1]) / a0
    b1 = (-num[0] * k + num[1]) / a0
    a1 = (-den[0] * k + den[1]) / a0
    return b0, b1, a1


def pss_step(state: PssState, delta_omega: float, dt: float) -> float:
    """One sample of Kpss * sTw/(1+sTw) * prod (1+sT1)/(1+sT2), clamped."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if len(state.stage_in) != len(state.stages):
        state.reset()
    b0, b1, a1 = _bilinear((state.Tw, 0.0), (state.Tw, 1.0), dt)
    y = b0 * delta_omega + b1 * state.x_in - a1 * state.y_w
    state.x_in, state.y_w = delta_omega, y
    sig = y
    for k, (t1, t2) in enumerate(state.stages):
        b0, b1, a1 = _bilinear((t1, 1.0), (t2, 1.0), dt)
        out = b0 * sig + b1 * state.stage_in[k] - a1 * state.stage_out[k]
        state.stage_in[k], state.stage_out[k] = sig, out
        sig = out
    return min(max(state.Kpss * sig, state.v), state.u)


@dataclass
class TuningResult:
    kp: float
    ki: float
    kd: float
    score: float
    log: list  # [(kp, ki, kd, score), ...] in search order


def tune_pid(score_fn, kp_grid, ki_grid, kd_grid) -> TuningResult:
    """Exhaustive grid search minimizing ``score_fn(kp, ki, kd)``.

    Ties keep the first point in (kp, ki, kd) lexicographic grid order, so
    enlarging the grid can never return a worse score.
    """
    log = []
    best = None
    for kp, ki, kd in itertools.product(kp_grid, ki_grid, kd_grid):
        s = float(score_fn(kp, ki, kd))
        log.append((float(kp), float(ki), float(kd), s))
        if best is None or s < best[3]:
            best = log[-1]
    if best is None:
        raise ValueError("empty tuning grid")
    return TuningResult(best[0], best[1], best[2], best[3], log)


def write_tuning_csv(path, result: TuningResult) -> None:
    with open(path, "w") as f:
        f.write("kp,ki,kd,score\n")
        for kp, ki, kd, s in result.log:
            f.write(f"{float(kp)!r},{float(ki)!r},{float(kd)!r},{float(s)!r}\n")


class PidController:
    """One PID per controlled generator on the delayed speed error 1 - omega."""

    def __init__(self, n: int, kp: float, ki: float, kd: float, v: float = -0.2, u: float = 0.2):
        self.pids = [PidState(kp, ki, kd, v, u) for _ in range(n)]

    def reset(self) -> None:
        for p in self.pids:
            p.reset()

    def __call__(self, omega: np.ndarray, dt: float) -> np.ndarray:
        return np.array([pid_step(p, 1.0 - w, dt) for p, w in zip(self.pids, omega)])


class PssBank:
    """Conventional PSS on a set of generators, fed by local (undelayed) speed."""

    def __init__(self, n: int, **kw):
        self.units = [PssState(**kw) for _ in range(n)]
        self.reset()

    def reset(self) -> None:
        for p in self.units:
            p.reset()

    def __call__(self, omega: np.ndarray, dt: float) -> np.ndarray:
        return np.array([pss_step(p, w - 1.0, dt) for p, w in zip(self.units, omega)])
