"""Static network description and JSON case files.

Bus quantities are in MW / MVAr; line impedances are in pu on the system base.
Generator reactances, inertia and damping are on the machine base (``rating``)
and are converted to the system base by :class:`MachineArrays`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

import numpy as np

BUS_KINDS = ("slack", "PV", "PQ")


class CaseError(ValueError):
    """Malformed or inconsistent case data. The message names the offending field."""


@dataclass
class Bus:
    id: int
    kind: str
    V_setpoint: float = 1.0
    P_load: float = 0.0
    Q_load: float = 0.0


@dataclass
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_shunt: float = 0.0
    in_service: bool = True
    tap: float = 1.0


@dataclass
class Generator:
    bus: int
    rating: float
    H: float
    D: float
    Xd: float
    Xd_prime: float
    Td0_prime: float
    Ka: float
    Ta: float
    Efd_min: float
    Efd_max: float
    P_dispatch: float


@dataclass
class PVUnit:
    bus: int
    rated: float


@dataclass
class GridCase:
    system_base: float
    nominal_freq: float
    buses: list[Bus]
    lines: list[Line]
    generators: list[Generator]
    pv_units: list[PVUnit] = field(default_factory=list)
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise CaseError(f"buses.id: duplicate bus ids {dup}")
        for b in self.buses:
            if b.kind not in BUS_KINDS:
                raise CaseError(f"buses.kind: bus {b.id} has unknown kind {b.kind!r}")
        n_slack = sum(b.kind == "slack" for b in self.buses)
        if n_slack != 1:
            raise CaseError(f"buses.kind: need exactly one slack bus, found {n_slack}")
        known = set(ids)
        for k, ln in enumerate(self.lines):
            for name in ("from_bus", "to_bus"):
                end = getattr(ln, name)
                if end not in known:
                    raise CaseError(f"lines[{k}].{name}: references unknown bus {end}")
            if ln.r == 0 and ln.x == 0:
                raise CaseError(f"lines[{k}].x: zero impedance")
            if ln.tap <= 0:
                raise CaseError(f"lines[{k}].tap must be positive")
        for k, g in enumerate(self.generators):
            if g.bus not in known:
                raise CaseError(f"generators[{k}].bus: unknown bus {g.bus}")
            if not g.H > 0:
                raise CaseError(f"generators[{k}].H must be > 0")
            if not g.Td0_prime > 0:
                raise CaseError(f"generators[{k}].Td0_prime must be > 0")
            if not g.Ta > 0:
                raise CaseError(f"generators[{k}].Ta must be > 0")
            if not (g.Xd >= g.Xd_prime > 0):
                raise CaseError(f"generators[{k}].Xd_prime: need Xd >= Xd_prime > 0")
            if not g.Efd_min < g.Efd_max:
                raise CaseError(f"generators[{k}].Efd_min: need Efd_min < Efd_max")
            if not g.rating > 0:
                raise CaseError(f"generators[{k}].rating must be > 0")
        for k, pv in enumerate(self.pv_units):
            if pv.bus not in known:
                raise CaseError(f"pv_units[{k}].bus: unknown bus {pv.bus}")

    # index helpers -----------------------------------------------------
    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def bus_index(self, bus_id: int) -> int:
        for i, b in enumerate(self.buses):
            if b.id == bus_id:
                return i
        raise CaseError(f"unknown bus id {bus_id}")

    @property
    def slack_index(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == "slack")

    def gen_bus_indices(self) -> np.ndarray:
        return np.array([self.bus_index(g.bus) for g in self.generators], dtype=int)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not d["name"]:
            d.pop("name")
        if not d["meta"]:
            d.pop("meta")
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


_REQUIRED = {
    "buses": ("id", "kind"),
    "lines": ("from_bus", "to_bus", "r", "x"),
    "generators": ("bus", "rating", "H", "D", "Xd", "Xd_prime", "Td0_prime",
                   "Ka", "Ta", "Efd_min", "Efd_max", "P_dispatch"),
    "pv_units": ("bus", "rated"),
}
_TYPES = {"buses": Bus, "lines": Line, "generators": Generator, "pv_units": PVUnit}


def case_from_dict(d: dict) -> GridCase:
    for key in ("system_base", "nominal_freq", "buses", "lines", "generators"):
        if key not in d:
            raise CaseError(f"{key}: missing required field")
    parts = {}
    for key, cls in _TYPES.items():
        rows = d.get(key, [])
        if not isinstance(rows, list):
            raise CaseError(f"{key}: expected a list")
        allowed = set(cls.__dataclass_fields__)
        objs = []
        for k, row in enumerate(rows):
            for req in _REQUIRED[key]:
                if req not in row:
                    raise CaseError(f"{key}[{k}].{req}: missing required field")
            extra = set(row) - allowed
            if extra:
                raise CaseError(f"{key}[{k}].{sorted(extra)[0]}: unknown field")
            try:
                objs.append(cls(**row))
            except TypeError as exc:
                raise CaseError(f"{key}[{k}]: {exc}") from None
        parts[key] = objs
    try:
        base = float(d["system_base"])
        freq = float(d["nominal_freq"])
    except (TypeError, ValueError):
        raise CaseError("system_base/nominal_freq: expected numbers") from None
    return GridCase(base, freq, parts["buses"], parts["lines"], parts["generators"],
                    parts["pv_units"], name=d.get("name", ""), meta=d.get("meta", {}))


def load_case(path_or_name) -> GridCase:
    """Load a case from a JSON path, or by bundled name (``kundur_2area``, ``ieee39``)."""
    p = Path(str(path_or_name))
    if not p.exists():
        name = p.name if p.suffix == ".json" else p.name + ".json"
        ref = resources.files("lfodamp.data").joinpath(name)
        if not ref.is_file():
            raise CaseError(f"case file not found: {path_or_name}")
        text = ref.read_text()
    else:
        text = p.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"case file is not valid JSON: {exc}") from None
    return case_from_dict(d)


@dataclass
class MachineArrays:
    """Per-generator parameters on the system base, as contiguous float arrays."""
    H: np.ndarray
    D: np.ndarray
    Xd: np.ndarray
    Xdp: np.ndarray
    Td0p: np.ndarray
    Ka: np.ndarray
    Ta: np.ndarray
    efd_min: np.ndarray
    efd_max: np.ndarray
    ws: float

    @classmethod
    def from_case(cls, case: GridCase) -> "MachineArrays":
        gens = case.generators
        ratio = np.array([g.rating / case.system_base for g in gens])

        def arr(name):
            return np.array([getattr(g, name) for g in gens], dtype=float)

        return cls(
            H=arr("H") * ratio,
            D=arr("D") * ratio,
            Xd=arr("Xd") / ratio,
            Xdp=arr("Xd_prime") / ratio,
            Td0p=arr("Td0_prime"),
            Ka=arr("Ka"),
            Ta=arr("Ta"),
            efd_min=arr("Efd_min"),
            efd_max=arr("Efd_max"),
            ws=2.0 * np.pi * case.nominal_freq,
        )
