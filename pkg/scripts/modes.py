"""Print small-signal modes of a bundled case (finite-difference linearization)."""
import sys

import numpy as np

from lfodamp.case import load_case, MachineArrays
from lfodamp.dynamics import derivatives, init_dynamic_state
from lfodamp.network import NetworkContext, solve_power_flow


def modes(case):
    pf = solve_power_flow(case)
    ctx = NetworkContext.from_power_flow(case, pf)
    red = ctx.reduced
    m = MachineArrays.from_case(case)
    st = init_dynamic_state(case, pf, red, m)
    G = case.n_gen

    def f(x):
        s = st.copy()
        s.delta, s.omega, s.eqp, s.efd = x[:G], x[G:2 * G], x[2 * G:3 * G], x[3 * G:]
        return np.concatenate(derivatives(s, red, None, m))

    x0 = np.concatenate([st.delta, st.omega, st.eqp, st.efd])
    print("max |f(x0)| =", np.abs(f(x0)).max(), " efd0 =", st.efd.round(3))
    A = np.zeros((4 * G, 4 * G))
    h = 1e-7
    for k in range(4 * G):
        e = np.zeros(4 * G)
        e[k] = h
        A[:, k] = (f(x0 + e) - f(x0 - e)) / (2 * h)
    lam = np.linalg.eigvals(A)
    for l in sorted(lam, key=lambda z: -z.real):
        if l.imag > 0.1:
            print(f"  f={l.imag / 2 / np.pi:6.3f} Hz  sigma={l.real:8.4f}  zeta={-l.real / abs(l):7.4f}")


if __name__ == "__main__":
    modes(load_case(sys.argv[1] if len(sys.argv) > 1 else "kundur_2area"))
