"""Communication-latency models and the delayed-measurement buffer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf
from scipy.stats import truncnorm

# one-way delay ranges in seconds
CHANNEL_RANGES = {
    "fiber_optic": (0.100, 0.150),
    "microwave": (0.100, 0.150),
    "plc": (0.150, 0.350),
    "telephone": (0.200, 0.300),
    "satellite": (0.500, 0.700),
}
CHANNEL_LABELS = tuple(CHANNEL_RANGES) + ("custom",)


@dataclass(frozen=True)
class GaussianMixtureDelay:
    """Truncated Gaussian mixture over one-way latency (seconds).

    A component with ``std == 0`` is a point mass at its mean (constant delay).
    """
    weights: tuple
    means: tuple
    stds: tuple
    truncation: tuple
    channel_label: str = "custom"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (len(self.weights) == len(self.means) == len(self.stds)) or len(w) == 0:
            raise ValueError("weights, means and stds must have the same non-zero length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be non-negative and sum to 1, got {w.sum()!r}")
        if np.any(np.asarray(self.stds, dtype=float) < 0):
            raise ValueError("component std must be >= 0")
        lo, hi = self.truncation
        if not (0 <= lo < hi):
            raise ValueError("truncation must satisfy 0 <= min < max")
        if self.channel_label not in CHANNEL_LABELS:
            raise ValueError(f"unknown channel label {self.channel_label!r}")
        for m, s in zip(self.means, self.stds):
            if s == 0 and not (lo <= m <= hi):
                raise ValueError("point-mass component must lie inside the truncation")

    @property
    def is_constant(self) -> bool:
        return len(self.weights) == 1 and self.stds[0] == 0

    def _component_mass(self):
        lo, hi = self.truncation
        out = []
        for m, s in zip(self.means, self.stds):
            if s == 0:
                out.append(1.0)
            else:
                out.append(0.5 * (erf((hi - m) / (s * math.sqrt(2))) - erf((lo - m) / (s * math.sqrt(2)))))
        return np.array(out)

    def pdf(self, x):
        """Density of the truncated mixture (continuous components only)."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.truncation
        w = np.asarray(self.weights)
        mass = float(np.dot(w, self._component_mass()))
        dens = np.zeros_like(x)
        for wi, m, s in zip(w, self.means, self.stds):
            if s > 0:
                dens += wi * np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        dens = np.where((x >= lo) & (x <= hi), dens, 0.0)
        return dens / mass

    def mean(self) -> float:
        """Analytic mean of the truncated mixture (closed form per component)."""
        lo, hi = self.truncation
        num = 0.0
        den = 0.0
        for wi, m, s in zip(self.weights, self.means, self.stds):
            if s == 0:
                num += wi * m
                den += wi
                continue
            a, b = (lo - m) / s, (hi - m) / s
            z = 0.5 * (erf(b / math.sqrt(2)) - erf(a / math.sqrt(2)))
            phi_a = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
            phi_b = math.exp(-0.5 * b * b) / math.sqrt(2 * math.pi)
            num += wi * (m * z + s * (phi_a - phi_b))
            den += wi * z
        return num / den

    def as_constant(self) -> "GaussianMixtureDelay":
        """Point mass at this model's mean, same range and label."""
        return GaussianMixtureDelay((1.0,), (self.mean(),), (0.0,), self.truncation, self.channel_label)


def channel_preset(label: str) -> GaussianMixtureDelay:
    """Two equal components at 1/4 and 3/4 of the channel range, std = span/8."""
    if label not in CHANNEL_RANGES:
        raise ValueError(f"unknown channel {label!r}; choose from {sorted(CHANNEL_RANGES)}")
    lo, hi = CHANNEL_RANGES[label]
    span = hi - lo
    return GaussianMixtureDelay(
        weights=(0.5, 0.5),
        means=(lo + 0.25 * span, lo + 0.75 * span),
        stds=(span / 8, span / 8),
        truncation=(lo, hi),
        channel_label=label,
    )


def custom_channel(weights, means_s, stds_s, trunc_s) -> GaussianMixtureDelay:
    return GaussianMixtureDelay(tuple(float(w) for w in weights), tuple(float(m) for m in means_s),
                                tuple(float(s) for s in stds_s),
                                (float(trunc_s[0]), float(trunc_s[1])), "custom")


ZERO_DELAY = GaussianMixtureDelay((1.0,), (0.0,), (0.0,), (0.0, 1.0), "custom")


def _exact_draw(model: GaussianMixtureDelay, rng: np.random.Generator) -> float:
    """Inverse-CDF draw from the truncated mixture (components weighted by kept mass)."""
    lo, hi = model.truncation
    w = np.asarray(model.weights) * model._component_mass()
    if not w.sum() > 0:
        # every component's window mass underflowed: use the nearest window edge
        k = int(np.argmin([max(lo - m, m - hi, 0.0) for m in model.means]))
        return float(min(max(model.means[k], lo), hi)) or hi
    k = int(rng.choice(len(w), p=w / w.sum()))
    m, s = model.means[k], model.stds[k]
    if s == 0:
        return float(m)
    x = float(truncnorm.ppf(rng.random(), (lo - m) / s, (hi - m) / s, loc=m, scale=s))
    x = min(max(x, lo), hi)
    return x if x > 0 else hi


def sample_delay(model: GaussianMixtureDelay, rng: np.random.Generator, max_tries: int = 64) -> float:
    """Pick a component by weight, draw, and redraw until inside the truncation.

    After ``max_tries`` misses (window deep in the tails) the draw is taken
    by inverse CDF instead, which has the same distribution.
    """
    lo, hi = model.truncation
    n = len(model.weights)
    for _ in range(max_tries):
        k = 0
        if n > 1:
            r = rng.random()
            acc = model.weights[0]
            while r >= acc and k < n - 1:
                k += 1
                acc += model.weights[k]
        s = model.stds[k]
        if s == 0:
            if lo <= model.means[k] <= hi:
                return float(model.means[k])
            continue
        x = model.means[k] + s * rng.standard_normal()
        if lo <= x <= hi and x > 0:
            return float(x)
    return _exact_draw(model, rng)


@dataclass
class _Entry:
    emit_time: float
    arrive_time: float
    payload: object


@dataclass
class MeasurementBuffer:
    """Time-ordered packets in flight or delivered; oldest evicted at capacity."""
    capacity: int = 256
    entries: list = field(default_factory=list)

    def clear(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


def push_measurement(buf: MeasurementBuffer, emit_time: float, payload, model: GaussianMixtureDelay,
                     rng: np.random.Generator) -> float:
    """Append a packet stamped ``emit_time``; returns its arrival time."""
    if buf.entries and emit_time < buf.entries[-1].emit_time:
        raise ValueError(f"emit_time {emit_time} precedes last emit_time "
                         f"{buf.entries[-1].emit_time}")
    arrive = emit_time + sample_delay(model, rng)
    buf.entries.append(_Entry(emit_time, arrive, payload))
    if len(buf.entries) > buf.capacity:
        del buf.entries[0]
    return arrive


def read_delayed(buf: MeasurementBuffer, now: float, with_time: bool = False):
    """Freshest (largest emit_time) packet whose arrival time is <= ``now``.

    Late packets older than an already-arrived newer one are superseded. Returns
    ``None`` when nothing has arrived; with ``with_time`` a ``(emit_time, payload)``
    pair.
    """
    for e in reversed(buf.entries):
        if e.arrive_time <= now + 1e-12:
            return (e.emit_time, e.payload) if with_time else e.payload
    return None
