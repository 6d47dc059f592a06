# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled propagation kernels.

Same contracts as ``_pykernels``: real operator coordinates stored as rows,
generator ``L0 + eps * L1`` per interval, Taylor series with norm-based
substepping.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, ceil

cnp.import_array()


cdef double TAYLOR_RTOL = 1e-17
cdef int MAX_TERMS = 40
cdef double SUBSTEP_NORM = 0.5


cdef void _build(const double[:, ::1] l0, const double[:, ::1] l1, double e,
                 double[:, ::1] g) noexcept nogil:
    cdef Py_ssize_t m = l0.shape[0], a, b
    for a in range(m):
        for b in range(m):
            g[a, b] = l0[a, b] + e * l1[a, b]


cdef void _expm_apply(const double[:, ::1] g, const double[:, ::1] src,
                      double[:, ::1] dst, double dt,
                      double[::1] term, double[::1] tmp) noexcept nogil:
    cdef Py_ssize_t n = src.shape[0], m = src.shape[1]
    cdef Py_ssize_t i, a, b, k, sub, nsub
    cdef double norm = 0.0, col, h, tmax, amax, c, s
    for b in range(m):
        col = 0.0
        for a in range(m):
            col += fabs(g[a, b])
        if col > norm:
            norm = col
    nsub = <Py_ssize_t>ceil(dt * norm / SUBSTEP_NORM)
    if nsub < 1:
        nsub = 1
    h = dt / nsub
    for i in range(n):
        for a in range(m):
            dst[i, a] = src[i, a]
        for sub in range(nsub):
            for a in range(m):
                term[a] = dst[i, a]
            for k in range(1, MAX_TERMS + 1):
                c = h / k
                tmax = 0.0
                amax = 0.0
                for a in range(m):
                    s = 0.0
                    for b in range(m):
                        s = s + g[a, b] * term[b]
                    tmp[a] = s * c
                for a in range(m):
                    term[a] = tmp[a]
                    dst[i, a] = dst[i, a] + tmp[a]
                    if fabs(tmp[a]) > tmax:
                        tmax = fabs(tmp[a])
                    if fabs(dst[i, a]) > amax:
                        amax = fabs(dst[i, a])
                if tmax <= TAYLOR_RTOL * amax:
                    break


def expm_apply(g, states, double dt):
    cdef double[:, ::1] gv = np.ascontiguousarray(g, dtype=float)
    cdef double[:, ::1] src = np.ascontiguousarray(states, dtype=float)
    out = np.empty_like(np.asarray(src))
    cdef double[:, ::1] dst = out
    cdef double[::1] term = np.empty(gv.shape[0], dtype=float)
    cdef double[::1] tmp = np.empty(gv.shape[0], dtype=float)
    with nogil:
        _expm_apply(gv, src, dst, dt, term, tmp)
    return out


def propagate(states, eps, l0, l1, double dt, bint reverse=False):
    cdef double[:, ::1] s0 = np.ascontiguousarray(states, dtype=float)
    cdef double[::1] ev = np.ascontiguousarray(eps, dtype=float)
    cdef double[:, ::1] a0 = np.ascontiguousarray(l0, dtype=float)
    cdef double[:, ::1] a1 = np.ascontiguousarray(l1, dtype=float)
    cdef Py_ssize_t nt = ev.shape[0], n = s0.shape[0], m = s0.shape[1], k
    out = np.empty((nt + 1, n, m), dtype=float)
    cdef double[:, :, ::1] traj = out
    cdef double[:, ::1] g = np.empty((m, m), dtype=float)
    cdef double[::1] term = np.empty(m, dtype=float)
    cdef double[::1] tmp = np.empty(m, dtype=float)
    with nogil:
        if reverse:
            traj[nt, :, :] = s0
            for k in range(nt - 1, -1, -1):
                _build(a0, a1, ev[k], g)
                _expm_apply(g, traj[k + 1], traj[k], dt, term, tmp)
        else:
            traj[0, :, :] = s0
            for k in range(nt):
                _build(a0, a1, ev[k], g)
                _expm_apply(g, traj[k], traj[k + 1], dt, term, tmp)
    return out


def sweep(rho0, costates, eps, step, l0, l1, double dt):
    cdef double[:, ::1] r0 = np.ascontiguousarray(rho0, dtype=float)
    cdef double[:, :, ::1] phi = np.ascontiguousarray(costates, dtype=float)
    cdef double[::1] ev = np.ascontiguousarray(eps, dtype=float)
    cdef double[::1] sv = np.ascontiguousarray(step, dtype=float)
    cdef double[:, ::1] a0 = np.ascontiguousarray(l0, dtype=float)
    cdef double[:, ::1] a1 = np.ascontiguousarray(l1, dtype=float)
    cdef Py_ssize_t nt = ev.shape[0], n = r0.shape[0], m = r0.shape[1]
    cdef Py_ssize_t k, i, a, b
    out = np.empty((nt + 1, n, m), dtype=float)
    eps_out = np.empty(nt)
    delta_out = np.empty(nt)
    cdef double[:, :, ::1] traj = out
    cdef double[::1] enew = eps_out
    cdef double[::1] dv = delta_out
    cdef double[:, ::1] g = np.empty((m, m), dtype=float)
    cdef double[::1] term = np.empty(m, dtype=float)
    cdef double[::1] tmp = np.empty(m, dtype=float)
    cdef double s, acc
    with nogil:
        traj[0, :, :] = r0
        for k in range(nt):
            acc = 0.0
            for i in range(n):
                for a in range(m):
                    s = 0.0
                    for b in range(m):
                        s = s + a1[a, b] * traj[k, i, b]
                    acc = acc + phi[k, i, a] * s
            dv[k] = acc
            enew[k] = ev[k] + sv[k] * dv[k]
            _build(a0, a1, enew[k], g)
            _expm_apply(g, traj[k], traj[k + 1], dt, term, tmp)
    return eps_out, out, delta_out
