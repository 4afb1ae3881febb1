"""Pure-numpy reference of the machine-dynamics kernel.

Same signatures as the compiled ``_kernel`` extension. ``params`` is a (9, G)
array with rows H, D, Xd, Xdp, Td0p, Ka, Ta, Efd_min, Efd_max (system base).
"""
import numpy as np


def derivatives_raw(delta, omega, eqp, efd, pm, vref, vpss, Yr, Yi, params, ws):
    H, D, Xd, Xdp, Td0p, Ka, Ta, emin, emax = params
    c = np.cos(delta)
    s = np.sin(delta)
    Er = eqp * c
    Ei = eqp * s
    Ir = Yr @ Er - Yi @ Ei
    Ii = Yr @ Ei + Yi @ Er
    iq = Ir * c + Ii * s
    i_d = Ir * s - Ii * c
    pe = eqp * iq
    vt = np.hypot(Er + Xdp * Ii, Ei - Xdp * Ir)
    efd_c = np.minimum(np.maximum(efd, emin), emax)
    dw = omega - 1.0
    d_delta = ws * dw
    d_omega = (pm - pe - D * dw) / (2.0 * H)
    d_eqp = (efd_c - eqp - (Xd - Xdp) * i_d) / Td0p
    d_efd = (Ka * (vref + vpss - vt) - efd) / Ta
    d_efd = np.where(((efd >= emax) & (d_efd > 0)) | ((efd <= emin) & (d_efd < 0)), 0.0, d_efd)
    return d_delta, d_omega, d_eqp, d_efd, pe, vt


def rk4_advance(delta, omega, eqp, efd, pm, vref, vpss, Yr, Yi, params, ws, dt, nsteps):
    """Advance the four state arrays in place by ``nsteps`` RK4 steps.

    Returns False as soon as a non-finite value appears.
    """
    emin, emax = params[7], params[8]
    x = [delta, omega, eqp, efd]
    # blow-ups are reported through the return value, not warnings
    with np.errstate(invalid="ignore", over="ignore"):
        for _ in range(nsteps):
            k1 = derivatives_raw(*x, pm, vref, vpss, Yr, Yi, params, ws)[:4]
            x2 = [xi + 0.5 * dt * ki for xi, ki in zip(x, k1)]
            k2 = derivatives_raw(*x2, pm, vref, vpss, Yr, Yi, params, ws)[:4]
            x3 = [xi + 0.5 * dt * ki for xi, ki in zip(x, k2)]
            k3 = derivatives_raw(*x3, pm, vref, vpss, Yr, Yi, params, ws)[:4]
            x4 = [xi + dt * ki for xi, ki in zip(x, k3)]
            k4 = derivatives_raw(*x4, pm, vref, vpss, Yr, Yi, params, ws)[:4]
            for xi, a, b, c, d in zip(x, k1, k2, k3, k4):
                xi += (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            np.clip(efd, emin, emax, out=efd)
            if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(omega))
                    and np.all(np.isfinite(eqp)) and np.all(np.isfinite(efd))):
                return False
    return True
