"""Regenerate src/lfodamp/data/ieee39.json (New England 10-machine, 39-bus system).

Network, load and dispatch data follow the standard published case; machine
data are the standard values on a 1000 MVA machine base. Every machine gets the
same fast static exciter as the two-area case. Transformer taps are kept
(``tap`` field).
"""
import json
from pathlib import Path

from lfodamp.case import case_from_dict
from lfodamp.network import solve_power_flow

OUT = Path(__file__).resolve().parents[1] / "src/lfodamp/data/ieee39.json"

LOADS = {1: (97.6, 44.2), 3: (322, 2.4), 4: (500, 184), 7: (233.8, 84), 8: (522, 176.6),
         9: (6.5, -66.6), 12: (8.53, 88), 15: (320, 153), 16: (329, 32.3), 18: (158, 30),
         20: (680, 103), 21: (274, 115), 23: (247.5, 84.6), 24: (308.6, -92.2),
         25: (224, 47.2), 26: (139, 17), 27: (281, 75.5), 28: (206, 27.6),
         29: (283.5, 26.9), 31: (9.2, 4.6), 39: (1104, 250)}

# bus, Pg, Vset, H, Xd, Xd', Td0'   (machine base 1000 MVA)
GENS = [
    (30, 250.0, 1.0499, 4.2, 1.0, 0.31, 10.2),
    (31, 677.871, 0.982, 3.03, 2.95, 0.697, 6.56),
    (32, 650.0, 0.9841, 3.58, 2.495, 0.531, 5.7),
    (33, 632.0, 0.9972, 2.86, 2.62, 0.436, 5.69),
    (34, 508.0, 1.0123, 2.6, 6.7, 1.32, 5.4),
    (35, 650.0, 1.0494, 3.48, 2.54, 0.5, 7.3),
    (36, 560.0, 1.0636, 2.64, 2.95, 0.49, 5.66),
    (37, 540.0, 1.0275, 2.43, 2.9, 0.57, 6.7),
    (38, 830.0, 1.0265, 3.45, 2.106, 0.57, 4.79),
    (39, 1000.0, 1.03, 50.0, 0.2, 0.06, 7.0),
]

# from, to, r, x, b, tap
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987, 1), (1, 39, 0.001, 0.025, 0.75, 1),
    (2, 3, 0.0013, 0.0151, 0.2572, 1), (2, 25, 0.007, 0.0086, 0.146, 1),
    (2, 30, 0, 0.0181, 0, 1.025), (3, 4, 0.0013, 0.0213, 0.2214, 1),
    (3, 18, 0.0011, 0.0133, 0.2138, 1), (4, 5, 0.0008, 0.0128, 0.1342, 1),
    (4, 14, 0.0008, 0.0129, 0.1382, 1), (5, 6, 0.0002, 0.0026, 0.0434, 1),
    (5, 8, 0.0008, 0.0112, 0.1476, 1), (6, 7, 0.0006, 0.0092, 0.113, 1),
    (6, 11, 0.0007, 0.0082, 0.1389, 1), (6, 31, 0, 0.025, 0, 1.07),
    (7, 8, 0.0004, 0.0046, 0.078, 1), (8, 9, 0.0023, 0.0363, 0.3804, 1),
    (9, 39, 0.001, 0.025, 1.2, 1), (10, 11, 0.0004, 0.0043, 0.0729, 1),
    (10, 13, 0.0004, 0.0043, 0.0729, 1), (10, 32, 0, 0.02, 0, 1.07),
    (12, 11, 0.0016, 0.0435, 0, 1.006), (12, 13, 0.0016, 0.0435, 0, 1.006),
    (13, 14, 0.0009, 0.0101, 0.1723, 1), (14, 15, 0.0018, 0.0217, 0.366, 1),
    (15, 16, 0.0009, 0.0094, 0.171, 1), (16, 17, 0.0007, 0.0089, 0.1342, 1),
    (16, 19, 0.0016, 0.0195, 0.304, 1), (16, 21, 0.0008, 0.0135, 0.2548, 1),
    (16, 24, 0.0003, 0.0059, 0.068, 1), (17, 18, 0.0007, 0.0082, 0.1319, 1),
    (17, 27, 0.0013, 0.0173, 0.3216, 1), (19, 20, 0.0007, 0.0138, 0, 1.06),
    (19, 33, 0.0007, 0.0142, 0, 1.07), (20, 34, 0.0009, 0.018, 0, 1.009),
    (21, 22, 0.0008, 0.014, 0.2565, 1), (22, 23, 0.0006, 0.0096, 0.1846, 1),
    (22, 35, 0, 0.0143, 0, 1.025), (23, 24, 0.0022, 0.035, 0.361, 1),
    (23, 36, 0.0005, 0.0272, 0, 1), (25, 26, 0.0032, 0.0323, 0.531, 1),
    (25, 37, 0.0006, 0.0232, 0, 1.025), (26, 27, 0.0014, 0.0147, 0.2396, 1),
    (26, 28, 0.0043, 0.0474, 0.7802, 1), (26, 29, 0.0057, 0.0625, 1.029, 1),
    (28, 29, 0.0014, 0.0151, 0.249, 1), (29, 38, 0.0008, 0.0156, 0, 1.025),
]

DAMPING = 6.0


def make():
    gen_v = {g[0]: g[2] for g in GENS}
    buses = []
    for i in range(1, 40):
        kind = "slack" if i == 31 else ("PV" if i in gen_v else "PQ")
        p, q = LOADS.get(i, (0.0, 0.0))
        buses.append({"id": i, "kind": kind, "V_setpoint": gen_v.get(i, 1.0),
                      "P_load": float(p), "Q_load": float(q)})
    lines = [{"from_bus": a, "to_bus": b, "r": r, "x": x, "b_shunt": bsh, "in_service": True,
              "tap": float(t)} for a, b, r, x, bsh, t in BRANCHES]
    gens = [{"bus": b, "rating": 1000.0, "H": H, "D": DAMPING, "Xd": xd, "Xd_prime": xdp,
             "Td0_prime": td, "Ka": 200.0, "Ta": 0.01, "Efd_min": -6.0, "Efd_max": 6.0,
             "P_dispatch": p} for b, p, _, H, xd, xdp, td in GENS]
    return {
        "name": "ieee39",
        "system_base": 100.0,
        "nominal_freq": 60.0,
        "buses": buses,
        "lines": lines,
        "generators": gens,
        "pv_units": [],
        "meta": {
            "fault_bus": 13,
            "alt_fault_bus": 35,
            "monitored_buses": [13, 34],
            "monitored_pairs": [[13, 34]],
            "controlled_generators": [4],
            "tie_lines": [[16, 17]],
        },
    }


if __name__ == "__main__":
    d = make()
    case = case_from_dict(d)
    pf = solve_power_flow(case)
    print(f"converged in {pf.iterations} iterations, mismatch {pf.mismatch_norm:.2e}")
    OUT.write_text(json.dumps(d, indent=1) + "\n")
