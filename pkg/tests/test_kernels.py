import numpy as np
import pytest

from lfodamp import _backend
from lfodamp.dynamics import param_matrix
from lfodamp.case import MachineArrays
from lfodamp.network import NetworkContext, solve_power_flow

compiled = _backend.compiled_kernel
python = _backend.python_kernel
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernel not built")


def random_inputs(case, seed):
    pf = solve_power_flow(case)
    red = NetworkContext.from_power_flow(case, pf).reduced
    m = MachineArrays.from_case(case)
    rng = np.random.default_rng(seed)
    g = case.n_gen
    x = dict(delta=rng.uniform(-1, 1, g), omega=1 + rng.normal(0, 0.01, g),
             eqp=rng.uniform(0.8, 1.2, g), efd=rng.uniform(-7, 7, g), pm=rng.uniform(0, 8, g),
             vref=rng.uniform(1.0, 1.1, g), vpss=rng.uniform(-0.2, 0.2, g))
    net = (np.ascontiguousarray(red.Y_red.real), np.ascontiguousarray(red.Y_red.imag),
           param_matrix(m), m.ws)
    return x, net


def test_selected_backend_is_reported():
    assert _backend.BACKEND in ("cython", "python")
    if compiled is not None:
        assert _backend.kernel is compiled


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_derivative_parity(kundur, seed):
    x, net = random_inputs(kundur, seed)
    a = python.derivatives_raw(*x.values(), *net)
    b = compiled.derivatives_raw(*x.values(), *net)
    for u, v in zip(a, b):
        assert np.max(np.abs(np.asarray(u) - np.asarray(v))) <= 1e-12 * max(1.0, np.max(np.abs(u)))


@needs_compiled
@pytest.mark.parametrize("name", ["kundur", "ieee39"])
def test_rk4_parity(name, request):
    case = request.getfixturevalue(name)
    x, net = random_inputs(case, 11)
    x["efd"] = np.clip(x["efd"], -5, 5)
    xa = {k: v.copy() for k, v in x.items()}
    xb = {k: v.copy() for k, v in x.items()}
    assert python.rk4_advance(*xa.values(), *net, 0.01, 20)
    assert compiled.rk4_advance(*xb.values(), *net, 0.01, 20)
    for k in ("delta", "omega", "eqp", "efd"):
        assert np.max(np.abs(xa[k] - xb[k])) <= 1e-12 * max(1.0, np.max(np.abs(xa[k])))


@pytest.mark.parametrize("impl", [python, compiled], ids=["python", "cython"])
def test_nonfinite_state_reported(kundur, impl):
    if impl is None:
        pytest.skip("compiled kernel not built")
    x, net = random_inputs(kundur, 0)
    x["omega"][2] = np.inf
    assert not impl.rk4_advance(*x.values(), *net, 0.01, 3)
