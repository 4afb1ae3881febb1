# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled machine-dynamics kernel. Mirrors ``_kernel_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, isfinite

cnp.import_array()


cdef void _deriv(int G, double[::1] delta, double[::1] omega, double[::1] eqp,
                 double[::1] efd, double[::1] pm, double[::1] vref, double[::1] vpss,
                 double[:, ::1] Yr, double[:, ::1] Yi, double[:, ::1] p, double ws,
                 double[::1] c, double[::1] s, double[::1] Er, double[::1] Ei,
                 double[::1] o_delta, double[::1] o_omega, double[::1] o_eqp, double[::1] o_efd,
                 double[::1] o_pe, double[::1] o_vt) noexcept nogil:
    cdef int i, j
    cdef double ir, ii, iq, idd, pe, vr, vi, vt, ec, dw, rhs, e
    for i in range(G):
        c[i] = cos(delta[i])
        s[i] = sin(delta[i])
        Er[i] = eqp[i] * c[i]
        Ei[i] = eqp[i] * s[i]
    for i in range(G):
        ir = 0.0
        ii = 0.0
        for j in range(G):
            ir += Yr[i, j] * Er[j] - Yi[i, j] * Ei[j]
            ii += Yr[i, j] * Ei[j] + Yi[i, j] * Er[j]
        iq = ir * c[i] + ii * s[i]
        idd = ir * s[i] - ii * c[i]
        pe = eqp[i] * iq
        vr = Er[i] + p[3, i] * ii
        vi = Ei[i] - p[3, i] * ir
        vt = sqrt(vr * vr + vi * vi)
        e = efd[i]
        ec = e
        if ec < p[7, i]:
            ec = p[7, i]
        if ec > p[8, i]:
            ec = p[8, i]
        dw = omega[i] - 1.0
        o_delta[i] = ws * dw
        o_omega[i] = (pm[i] - pe - p[1, i] * dw) / (2.0 * p[0, i])
        o_eqp[i] = (ec - eqp[i] - (p[2, i] - p[3, i]) * idd) / p[4, i]
        rhs = (p[5, i] * (vref[i] + vpss[i] - vt) - e) / p[6, i]
        if (e >= p[8, i] and rhs > 0.0) or (e <= p[7, i] and rhs < 0.0):
            rhs = 0.0
        o_efd[i] = rhs
        o_pe[i] = pe
        o_vt[i] = vt


def derivatives_raw(delta, omega, eqp, efd, pm, vref, vpss, Yr, Yi, params, double ws):
    cdef int G = len(delta)
    f = lambda a: np.ascontiguousarray(a, dtype=np.float64)
    out = np.empty((6, G))
    tmp = np.empty((4, G))
    _deriv(G, f(delta), f(omega), f(eqp), f(efd), f(pm), f(vref), f(vpss),
           f(Yr), f(Yi), f(params), ws, tmp[0], tmp[1], tmp[2], tmp[3],
           out[0], out[1], out[2], out[3], out[4], out[5])
    return out[0], out[1], out[2], out[3], out[4], out[5]


def rk4_advance(double[::1] delta, double[::1] omega, double[::1] eqp, double[::1] efd,
                double[::1] pm, double[::1] vref, double[::1] vpss,
                double[:, ::1] Yr, double[:, ::1] Yi, double[:, ::1] params,
                double ws, double dt, int nsteps):
    """Advance the four state arrays in place by ``nsteps`` RK4 steps.

    Returns False as soon as a non-finite value appears.
    """
    cdef int G = delta.shape[0]
    cdef int n, i
    cdef double h6 = dt / 6.0
    work = np.empty((34, G))
    cdef double[:, ::1] w = work
    # rows: 0-3 trig/EMF scratch, 4-7 stage state, 8-23 k1..k4, 32-33 pe/vt scratch
    cdef bint ok = True
    with nogil:
        for n in range(nsteps):
            _deriv(G, delta, omega, eqp, efd, pm, vref, vpss, Yr, Yi, params, ws,
                   w[0], w[1], w[2], w[3], w[8], w[9], w[10], w[11], w[32], w[33])
            for i in range(G):
                w[4, i] = delta[i] + 0.5 * dt * w[8, i]
                w[5, i] = omega[i] + 0.5 * dt * w[9, i]
                w[6, i] = eqp[i] + 0.5 * dt * w[10, i]
                w[7, i] = efd[i] + 0.5 * dt * w[11, i]
            _deriv(G, w[4], w[5], w[6], w[7], pm, vref, vpss, Yr, Yi, params, ws,
                   w[0], w[1], w[2], w[3], w[12], w[13], w[14], w[15], w[32], w[33])
            for i in range(G):
                w[4, i] = delta[i] + 0.5 * dt * w[12, i]
                w[5, i] = omega[i] + 0.5 * dt * w[13, i]
                w[6, i] = eqp[i] + 0.5 * dt * w[14, i]
                w[7, i] = efd[i] + 0.5 * dt * w[15, i]
            _deriv(G, w[4], w[5], w[6], w[7], pm, vref, vpss, Yr, Yi, params, ws,
                   w[0], w[1], w[2], w[3], w[16], w[17], w[18], w[19], w[32], w[33])
            for i in range(G):
                w[4, i] = delta[i] + dt * w[16, i]
                w[5, i] = omega[i] + dt * w[17, i]
                w[6, i] = eqp[i] + dt * w[18, i]
                w[7, i] = efd[i] + dt * w[19, i]
            _deriv(G, w[4], w[5], w[6], w[7], pm, vref, vpss, Yr, Yi, params, ws,
                   w[0], w[1], w[2], w[3], w[20], w[21], w[22], w[23], w[32], w[33])
            for i in range(G):
                delta[i] += h6 * (w[8, i] + 2.0 * w[12, i] + 2.0 * w[16, i] + w[20, i])
                omega[i] += h6 * (w[9, i] + 2.0 * w[13, i] + 2.0 * w[17, i] + w[21, i])
                eqp[i] += h6 * (w[10, i] + 2.0 * w[14, i] + 2.0 * w[18, i] + w[22, i])
                efd[i] += h6 * (w[11, i] + 2.0 * w[15, i] + 2.0 * w[19, i] + w[23, i])
                if efd[i] < params[7, i]:
                    efd[i] = params[7, i]
                if efd[i] > params[8, i]:
                    efd[i] = params[8, i]
                if not (isfinite(delta[i]) and isfinite(omega[i])
                        and isfinite(eqp[i]) and isfinite(efd[i])):
                    ok = False
            if not ok:
                break
    return ok
