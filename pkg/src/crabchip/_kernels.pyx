# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: CRAB drive sampling and fixed-step RK4 propagation.

The five-level Hamiltonian is stored in compressed form: a real diagonal
``level + f(t) * detuning_weights`` and four real nearest-neighbour
couplings. Every kernel here has a drop-in twin in ``_kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

cdef enum:
    DIM = 5


def crab_samples(double f0, double a0, const double complex[::1] coeffs,
                 double period, double h, Py_ssize_t n_points):
    """f(t_i) for t_i = i*h, i = 0..n_points-1."""
    cdef Py_ssize_t n_f = coeffs.shape[0]
    cdef Py_ssize_t i, k
    cdef double theta, acc
    cdef double complex z, zk
    out = np.empty(n_points, dtype=np.float64)
    cdef double[::1] o = out
    cdef double two_pi = 6.283185307179586
    cdef double complex w = cos(two_pi * h / period) + 1j * sin(two_pi * h / period)
    z = 1.0
    with nogil:
        for i in range(n_points):
            # exact resync bounds the drift of the rotation recurrence
            if i % 512 == 0:
                theta = two_pi * (i * h) / period
                z = cos(theta) + 1j * sin(theta)
            zk = 1.0
            acc = 1.0 + a0
            for k in range(n_f):
                zk = zk * z
                acc = acc + 2.0 * (coeffs[k].real * zk.real - coeffs[k].imag * zk.imag)
            o[i] = f0 * acc
            z = z * w
    return out


cdef inline void _rhs_density(double complex* rho, double complex* out,
                              double* diag, double* coup, double gamma) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double complex hr, rh
    for i in range(DIM):
        for j in range(DIM):
            hr = diag[i] * rho[i * DIM + j]
            if i > 0:
                hr = hr + coup[i - 1] * rho[(i - 1) * DIM + j]
            if i < DIM - 1:
                hr = hr + coup[i] * rho[(i + 1) * DIM + j]
            rh = rho[i * DIM + j] * diag[j]
            if j > 0:
                rh = rh + rho[i * DIM + j - 1] * coup[j - 1]
            if j < DIM - 1:
                rh = rh + rho[i * DIM + j + 1] * coup[j]
            out[i * DIM + j] = -1j * (hr - rh)
            if i != j:
                out[i * DIM + j] = out[i * DIM + j] - 2.0 * gamma * rho[i * DIM + j]


cdef inline void _rhs_state(double complex* psi, double complex* out,
                            double* diag, double* coup) noexcept nogil:
    out[0] = -1j * (diag[0] * psi[0] + coup[0] * psi[1])
    out[1] = -1j * (coup[0] * psi[0] + diag[1] * psi[1] + coup[1] * psi[2])
    out[2] = -1j * (coup[1] * psi[1] + diag[2] * psi[2] + coup[2] * psi[3])
    out[3] = -1j * (coup[2] * psi[2] + diag[3] * psi[3] + coup[3] * psi[4])
    out[4] = -1j * (coup[3] * psi[3] + diag[4] * psi[4])


cdef inline void _fill_diag(double* diag, double* levels, double f) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(DIM):
        diag[i] = levels[i] + f * (i - 2)


def rk4_density(rho0, const double[::1] levels, const double[::1] couplings, const double[::1] fgrid,
                double dt, double gamma, Py_ssize_t stride):
    """Integrate the dephasing master equation; ``fgrid`` holds f at half steps.

    Returns the states at steps 0, stride, 2*stride, ... and always the last step.
    """
    cdef Py_ssize_t n_steps = (fgrid.shape[0] - 1) // 2
    cdef Py_ssize_t n_samples = n_steps // stride + 1
    if n_steps % stride:
        n_samples += 1
    samples = np.empty((n_samples, DIM, DIM), dtype=np.complex128)
    cdef double complex[:, :, ::1] smp = samples
    cdef double complex[:, ::1] r0 = np.array(rho0, dtype=np.complex128, order="C")
    cdef double complex r[25]
    cdef double complex tmp[25]
    cdef double complex k1[25]
    cdef double complex k2[25]
    cdef double complex k3[25]
    cdef double complex k4[25]
    cdef double lv[5]
    cdef double cp[4]
    cdef double dg[5]
    cdef Py_ssize_t n, i, s = 0
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    for i in range(DIM):
        lv[i] = levels[i]
    for i in range(DIM - 1):
        cp[i] = couplings[i]
    for i in range(DIM * DIM):
        r[i] = r0[i // DIM, i % DIM]
    with nogil:
        for i in range(DIM * DIM):
            smp[s, i // DIM, i % DIM] = r[i]
        s += 1
        for n in range(n_steps):
            _fill_diag(dg, lv, fgrid[2 * n])
            _rhs_density(r, k1, dg, cp, gamma)
            _fill_diag(dg, lv, fgrid[2 * n + 1])
            for i in range(DIM * DIM):
                tmp[i] = r[i] + half * k1[i]
            _rhs_density(tmp, k2, dg, cp, gamma)
            for i in range(DIM * DIM):
                tmp[i] = r[i] + half * k2[i]
            _rhs_density(tmp, k3, dg, cp, gamma)
            _fill_diag(dg, lv, fgrid[2 * n + 2])
            for i in range(DIM * DIM):
                tmp[i] = r[i] + dt * k3[i]
            _rhs_density(tmp, k4, dg, cp, gamma)
            for i in range(DIM * DIM):
                r[i] = r[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if (n + 1) % stride == 0 or n + 1 == n_steps:
                for i in range(DIM * DIM):
                    smp[s, i // DIM, i % DIM] = r[i]
                s += 1
    return samples


def rk4_state(psi0, const double[::1] levels, const double[::1] couplings, const double[::1] fgrid, double dt):
    """Integrate the Schrodinger equation for each column of ``psi0`` (5 x k)."""
    cdef Py_ssize_t n_steps = (fgrid.shape[0] - 1) // 2
    arr = np.array(psi0, dtype=np.complex128, order="C")
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr.reshape(DIM, 1)
    cdef double complex[:, ::1] out = arr
    cdef Py_ssize_t ncol = arr.shape[1]
    cdef double complex p[5]
    cdef double complex tmp[5]
    cdef double complex k1[5]
    cdef double complex k2[5]
    cdef double complex k3[5]
    cdef double complex k4[5]
    cdef double lv[5]
    cdef double cp[4]
    cdef double dg[5]
    cdef Py_ssize_t n, i, c
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    for i in range(DIM):
        lv[i] = levels[i]
    for i in range(DIM - 1):
        cp[i] = couplings[i]
    with nogil:
        for c in range(ncol):
            for i in range(DIM):
                p[i] = out[i, c]
            for n in range(n_steps):
                _fill_diag(dg, lv, fgrid[2 * n])
                _rhs_state(p, k1, dg, cp)
                _fill_diag(dg, lv, fgrid[2 * n + 1])
                for i in range(DIM):
                    tmp[i] = p[i] + half * k1[i]
                _rhs_state(tmp, k2, dg, cp)
                for i in range(DIM):
                    tmp[i] = p[i] + half * k2[i]
                _rhs_state(tmp, k3, dg, cp)
                _fill_diag(dg, lv, fgrid[2 * n + 2])
                for i in range(DIM):
                    tmp[i] = p[i] + dt * k3[i]
                _rhs_state(tmp, k4, dg, cp)
                for i in range(DIM):
                    p[i] = p[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(DIM):
                out[i, c] = p[i]
    if squeeze:
        return arr[:, 0]
    return arr
