"""Pure numpy twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same step ordering, same sampling convention. Slow (one
Python-level loop iteration per RK4 step) but needs no compiler.
"""

import numpy as np

DIM = 5
_WEIGHTS = np.arange(DIM, dtype=float) - 2.0


def crab_samples(f0, a0, coeffs, period, h, n_points):
    coeffs = np.asarray(coeffs, dtype=complex)
    t = np.arange(n_points) * h
    acc = np.full(n_points, 1.0 + a0)
    for k, a in enumerate(coeffs, start=1):
        z = np.exp(1j * 2.0 * np.pi * k * t / period)
        acc += 2.0 * (a.real * z.real - a.imag * z.imag)
    return f0 * acc


def _hamiltonian(levels, couplings, f):
    h = np.diag(levels + f * _WEIGHTS).astype(complex)
    h += np.diag(couplings, 1) + np.diag(couplings, -1)
    return h


def _rhs_density(rho, h, gamma):
    out = -1j * (h @ rho - rho @ h)
    if gamma:
        out -= 2.0 * gamma * (rho - np.diag(np.diag(rho)))
    return out


def rk4_density(rho0, levels, couplings, fgrid, dt, gamma, stride):
    n_steps = (len(fgrid) - 1) // 2
    levels = np.asarray(levels, dtype=float)
    couplings = np.asarray(couplings, dtype=float)
    r = np.array(rho0, dtype=complex)
    samples = [r.copy()]
    for n in range(n_steps):
        h0 = _hamiltonian(levels, couplings, fgrid[2 * n])
        hm = _hamiltonian(levels, couplings, fgrid[2 * n + 1])
        h1 = _hamiltonian(levels, couplings, fgrid[2 * n + 2])
        k1 = _rhs_density(r, h0, gamma)
        k2 = _rhs_density(r + 0.5 * dt * k1, hm, gamma)
        k3 = _rhs_density(r + 0.5 * dt * k2, hm, gamma)
        k4 = _rhs_density(r + dt * k3, h1, gamma)
        r = r + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            samples.append(r.copy())
    return np.array(samples)


def rk4_state(psi0, levels, couplings, fgrid, dt):
    n_steps = (len(fgrid) - 1) // 2
    levels = np.asarray(levels, dtype=float)
    couplings = np.asarray(couplings, dtype=float)
    p = np.array(psi0, dtype=complex)
    for n in range(n_steps):
        h0 = _hamiltonian(levels, couplings, fgrid[2 * n])
        hm = _hamiltonian(levels, couplings, fgrid[2 * n + 1])
        h1 = _hamiltonian(levels, couplings, fgrid[2 * n + 2])
        k1 = -1j * (h0 @ p)
        k2 = -1j * (hm @ (p + 0.5 * dt * k1))
        k3 = -1j * (hm @ (p + 0.5 * dt * k2))
        k4 = -1j * (h1 @ (p + dt * k3))
        p = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p
