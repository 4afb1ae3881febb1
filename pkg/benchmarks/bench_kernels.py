"""Compare the compiled and numpy RK4 kernels on the bundled cases.

Usage: python3 benchmarks/bench_kernels.py [--steps N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from lfodamp import _backend
from lfodamp.case import MachineArrays, load_case
from lfodamp.dynamics import init_dynamic_state, param_matrix
from lfodamp.network import NetworkContext, solve_power_flow


def inputs(name):
    case = load_case(name)
    pf = solve_power_flow(case)
    red = NetworkContext.from_power_flow(case, pf).reduced
    st = init_dynamic_state(case, pf, red)
    m = MachineArrays.from_case(case)
    x = [st.delta, st.omega, st.eqp, st.efd, st.pm, st.vref, np.zeros(case.n_gen)]
    net = [np.ascontiguousarray(red.Y_red.real), np.ascontiguousarray(red.Y_red.imag),
           param_matrix(m), m.ws]
    return x, net


def per_step_us(kernel, x, net, steps, repeat):
    def run():
        y = [a.copy() for a in x]
        kernel.rk4_advance(*y, *net, 0.01, steps)
    return min(timeit.repeat(run, number=1, repeat=repeat)) / steps * 1e6


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000, help="RK4 steps per run (one 20 s episode)")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = [("python", _backend.python_kernel)]
    if _backend.compiled_kernel is not None:
        impls.append(("cython", _backend.compiled_kernel))
    else:
        print("compiled kernel not built; timing the numpy fallback only")
    print(f"{'case':<14}{'gens':>5}" + "".join(f"{n + ' us/step':>18}" for n, _ in impls)
          + ("  speedup" if len(impls) == 2 else ""))
    for name in ("kundur_2area", "ieee39"):
        x, net = inputs(name)
        times = [per_step_us(k, x, net, args.steps, args.repeat) for _, k in impls]
        line = f"{name:<14}{len(x[0]):>5}" + "".join(f"{t:>18.2f}" for t in times)
        if len(times) == 2:
            line += f"  {times[0] / times[1]:7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
