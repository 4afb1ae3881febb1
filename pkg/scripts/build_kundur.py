"""Regenerate src/lfodamp/data/kundur_2area.json.

Two-area, four-machine test system (230 kV, 100 MVA base, line data
r=0.0001, x=0.001, b=0.00175 pu/km). The area-1 load is tuned by bisection so
the area-1 -> area-2 transfer over the two tie circuits is 413 MW.
"""
import json
import sys
from pathlib import Path

from scipy.optimize import brentq

from lfodamp.case import case_from_dict
from lfodamp.network import solve_power_flow, tie_transfer_mw

TARGET_MW = 413.0
OUT = Path(__file__).resolve().parents[1] / "src/lfodamp/data/kundur_2area.json"


def line(a, b, km, circuits=1):
    return [{"from_bus": a, "to_bus": b, "r": 0.0001 * km, "x": 0.001 * km,
             "b_shunt": 0.00175 * km, "in_service": True}] * circuits


def xfmr(a, b):
    return [{"from_bus": a, "to_bus": b, "r": 0.0, "x": 0.15 / 9.0, "b_shunt": 0.0,
             "in_service": True}]


def gen(bus, H, P):
    return {"bus": bus, "rating": 900.0, "H": H, "D": DAMPING, "Xd": 1.8, "Xd_prime": 0.3,
            "Td0_prime": 8.0, "Ka": 200.0, "Ta": 0.01, "Efd_min": -6.0, "Efd_max": 6.0,
            "P_dispatch": P}


DAMPING = float(sys.argv[1]) if len(sys.argv) > 1 else 2.0


def make(load7):
    buses = [{"id": i, "kind": "PQ", "V_setpoint": 1.0, "P_load": 0.0, "Q_load": 0.0}
             for i in range(1, 12)]
    for i, kind, v in ((1, "PV", 1.03), (2, "PV", 1.01), (3, "slack", 1.03), (4, "PV", 1.01)):
        buses[i - 1].update(kind=kind, V_setpoint=v)
    # shunt capacitors folded into Q (constant-impedance loads)
    buses[6].update(P_load=load7, Q_load=100.0 - 200.0)
    buses[8].update(P_load=1767.0, Q_load=100.0 - 350.0)
    lines = (xfmr(1, 5) + xfmr(2, 6) + xfmr(3, 11) + xfmr(4, 10)
             + line(5, 6, 25) + line(6, 7, 10) + line(7, 8, 110, 2) + line(8, 9, 110, 2)
             + line(9, 10, 10) + line(10, 11, 25))
    return {
        "name": "kundur_2area",
        "system_base": 100.0,
        "nominal_freq": 60.0,
        "buses": buses,
        "lines": lines,
        "generators": [gen(1, 6.5, 700.0), gen(2, 6.5, 700.0), gen(3, 6.175, 719.0),
                       gen(4, 6.175, 700.0)],
        "pv_units": [{"bus": 7, "rated": 100.0}, {"bus": 9, "rated": 100.0}],
        "meta": {
            "tie_lines": [[7, 8]],
            "fault_bus": 8,
            "monitored_buses": [1, 2, 3, 4, 7, 9],
            "monitored_pairs": [[7, 9]],
            "controlled_generators": [0, 1, 2, 3],
        },
    }


def transfer(load7):
    case = case_from_dict(make(load7))
    return tie_transfer_mw(case, solve_power_flow(case)) - TARGET_MW


if __name__ == "__main__":
    load7 = brentq(transfer, 850.0, 1000.0, xtol=1e-6)
    load7 = round(load7, 3)
    d = make(load7)
    case = case_from_dict(d)
    pf = solve_power_flow(case)
    print(f"load7={load7} MW transfer={tie_transfer_mw(case, pf):.3f} MW it={pf.iterations}")
    OUT.write_text(json.dumps(d, indent=1) + "\n")
