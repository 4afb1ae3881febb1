"""Learning-curve and damping-quality measurements (pure functions of logs)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

TRAINING_LOG_HEADER = "episode,return,success,initial_q,wall_time_s"
EVAL_REPORT_HEADER = "scenario,channel,controller,seed,success,peak_dev_pu,settling_s,tail_energy"


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    success: bool
    initial_q: float
    wall_time: float = 0.0


@dataclass
class DampingReport:
    peak_deviation: float
    settling_time: float      # inf when unsettled
    tail_energy: float
    settled: bool


def success_rate(records, window: int) -> float:
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > len(records):
        raise ValueError(f"window {window} exceeds {len(records)} records")
    tail = records[-window:]
    return sum(bool(r.success) for r in tail) / window


def trailing_mean(values, window: int) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` points average what is available."""
    x = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.concatenate([[0.0], np.cumsum(x)])
    k = np.arange(1, len(x) + 1)
    lo = np.maximum(k - window, 0)
    return (c[k] - c[lo]) / (k - lo)


def moving_average_return(records, window: int = 5) -> np.ndarray:
    return trailing_mean([r.ret for r in records], window)


def smoothed_success(records, window: int = 50) -> np.ndarray:
    return trailing_mean([float(r.success) for r in records], window)


def damping_report(times, omega, clear_time: float, threshold: float = 1e-3,
                   tail_window: float = 5.0, sync_lost: bool = False) -> DampingReport:
    """Peak, settling time and tail energy of ``omega[T, G]`` after ``clear_time``.

    The trace counts as settled only if it stays inside the band over the
    whole tail window. A trace that lost synchronism is reported unsettled
    with infinite tail energy.
    """
    t = np.asarray(times, dtype=float)
    w = np.asarray(omega, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if len(t) < 2 or t[-1] - t[0] < tail_window:
        raise ValueError("trace is shorter than the tail window")
    dev = np.abs(w - 1.0).max(axis=1)
    post = t >= clear_time - 1e-12
    peak = float(dev[post].max()) if post.any() else 0.0
    if sync_lost:
        return DampingReport(peak, math.inf, math.inf, False)
    tail = t >= t[-1] - tail_window - 1e-12
    # settled means inside the band for the whole tail window, so an undamped
    # swing that happens to end near a zero crossing is not counted
    above = np.flatnonzero(post & (dev >= threshold))
    if len(above) == 0:
        settling, settled = float(clear_time), True
    elif above[-1] == len(t) - 1 or tail[above[-1]]:
        settling, settled = math.inf, False
    else:
        settling, settled = float(t[above[-1] + 1]), True
    e = ((w[tail] - 1.0) ** 2).sum(axis=1)
    energy = float(np.trapezoid(e, t[tail])) if hasattr(np, "trapezoid") else float(np.trapz(e, t[tail]))
    return DampingReport(peak, settling, energy, settled)


def overall_speed(curve) -> float:
    """Sum of per-episode increments of ``curve`` over the largest increment (0 if none rises)."""
    c = np.asarray(curve, dtype=float)
    if len(c) < 2:
        raise ValueError("need at least two points")
    inc = np.diff(c)
    top = inc.max()
    if top <= 0:
        return 0.0
    return float(inc.sum() / top)


def episodes_to_threshold(curve, threshold: float, start: int = 0):
    """First index ``>= start`` at which ``curve`` reaches ``threshold``; ``None`` if never."""
    hits = np.flatnonzero(np.asarray(curve, dtype=float)[start:] >= threshold)
    return int(hits[0]) + start if len(hits) else None


def mean_overall_speed(records, success_threshold: float = 0.8, window: int = 50):
    """Learning-speed metric on the smoothed success rate.

    Returns ``(v_bar, episodes_to_threshold)``; the threshold is only searched
    once a full smoothing window is available.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    curve = smoothed_success(records, window)
    start = min(window - 1, len(records) - 1)
    return overall_speed(curve), episodes_to_threshold(curve, success_threshold, start)


def _num(x) -> str:
    return repr(float(x))


def write_training_log(path, records) -> None:
    with open(path, "w") as f:
        f.write(TRAINING_LOG_HEADER + "\n")
        for r in records:
            f.write(f"{r.episode},{_num(r.ret)},{int(bool(r.success))},{_num(r.initial_q)},"
                    f"{_num(r.wall_time)}\n")


def read_training_log(path) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [EpisodeRecord(int(r["episode"]), float(r["return"]), bool(int(r["success"])),
                          float(r["initial_q"]), float(r["wall_time_s"])) for r in rows]


def write_eval_report(path, rows) -> None:
    """``rows``: tuples in :data:`EVAL_REPORT_HEADER` order, written sorted by key."""
    with open(path, "w") as f:
        f.write(EVAL_REPORT_HEADER + "\n")
        for row in sorted(rows, key=lambda r: (r[0], r[1], r[2], r[3])):
            scen, chan, ctrl, seed, ok, peak, settle, tail = row
            f.write(f"{scen},{chan},{ctrl},{seed},{int(bool(ok))},{_num(peak)},{_num(settle)},"
                    f"{_num(tail)}\n")
