"""Time evolution of the five-level density matrix.

The master equation integrated here is

    d rho/dt = -i [H0 + H1 + f(t) diag(-2,-1,0,1,2), rho] + L(rho)
    L(rho)   = gamma * sum_j (-{P_j, rho} + 2 P_j rho P_j)

with P_j the level projectors, so populations are untouched by L and every
coherence decays at 2*gamma. Time-dependent runs use a fixed-step classical
RK4 scheme in the compiled kernel; constant generators can also be
exponentiated exactly (``expm_propagator``), which the tests use as oracle.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from numbers import Real
from typing import Callable, Union

import numpy as np
from scipy.linalg import expm

from crabchip import backend
from crabchip.pulse import CrabPulse
from crabchip.spin_system import SystemParams, total_hamiltonian
from crabchip.states import DIM, check_density, density_violations, populations

log = logging.getLogger(__name__)

DEFAULT_STEP = 2e-9
MAX_SAMPLES = 2000
# tolerances for trajectory samples
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8
# largest phase a level-energy spread may accumulate within one step
MAX_PHASE_STEP = 0.02

Drive = Union[CrabPulse, float, Callable]


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t = {time * 1e6:.6f} us")
        self.time = time


@dataclass(frozen=True)
class IntegratorSettings:
    step_size: float = DEFAULT_STEP
    sample_stride: int | None = None  # None: stride giving <= MAX_SAMPLES samples
    method: str = "rk4"

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.sample_stride is not None and self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if self.method not in ("rk4", "expm"):
            raise ValueError(f"unknown method {self.method!r}")

    def n_steps(self, duration: float) -> int:
        return max(1, int(round(duration / self.step_size)))

    def stride(self, n_steps: int) -> int:
        if self.sample_stride is not None:
            return self.sample_stride
        return max(1, math.ceil(n_steps / (MAX_SAMPLES - 1)))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def populations(self) -> np.ndarray:
        return populations(self.states)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path, coherences: bool = False, time_offset: float = 0.0) -> None:
        header = ["t_us"] + [f"p{i}" for i in range(1, DIM + 1)]
        pairs = [(i, j) for i in range(DIM) for j in range(i + 1, DIM)]
        if coherences:
            for i, j in pairs:
                header += [f"re_rho{i + 1}{j + 1}", f"im_rho{i + 1}{j + 1}"]
        pops = self.populations
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t, p, rho in zip(self.times, pops, self.states):
                row = [(t + time_offset) * 1e6, *p]
                if coherences:
                    for i, j in pairs:
                        row += [rho[i, j].real, rho[i, j].imag]
                writer.writerow([f"{v:.17e}" for v in row])


def lindblad_rhs(rho, hamiltonian, gamma: float) -> np.ndarray:
    """-i[H, rho] + L(rho) for a dense Hamiltonian (rad/s)."""
    rho = np.asarray(rho, dtype=complex)
    h = np.asarray(hamiltonian, dtype=complex)
    out = -1j * (h @ rho - rho @ h)
    for j in range(rho.shape[0]):
        proj = np.zeros_like(rho)
        proj[j, j] = 1.0
        out += gamma * (-(proj @ rho + rho @ proj) + 2.0 * proj @ rho @ proj)
    return out


def liouvillian(hamiltonian, gamma: float) -> np.ndarray:
    """25 x 25 generator acting on row-major ``rho.reshape(25)``."""
    h = np.asarray(hamiltonian, dtype=complex)
    n = h.shape[0]
    eye = np.eye(n)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    keep_diag = np.zeros(n * n)
    keep_diag[:: n + 1] = 1.0
    gen += np.diag(-2.0 * gamma * (1.0 - keep_diag))
    return gen


def expm_propagator(hamiltonian, gamma: float, dt: float) -> np.ndarray:
    """Exact superoperator exp(L dt) for a constant generator."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return expm(liouvillian(hamiltonian, gamma) * dt)


def apply_superoperator(superop, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[-1]
    return (superop @ rho.reshape(n * n)).reshape(n, n)


def drive_grid(drive: Drive, duration: float, n_steps: int) -> np.ndarray:
    """f at the 2*n_steps + 1 half-step nodes of [0, duration]."""
    h = duration / n_steps
    n_points = 2 * n_steps + 1
    if isinstance(drive, CrabPulse):
        if drive.duration < duration * (1 - 1e-12):
            raise ValueError("propagation runs past the end of the pulse")
        return drive.sample(0.5 * h, n_points)
    if isinstance(drive, Real):
        return np.full(n_points, float(drive))
    values = np.asarray(drive(np.arange(n_points) * 0.5 * h), dtype=float)
    if values.shape != (n_points,):
        raise ValueError("drive callable must map a time array to an array of the same shape")
    return values


def energy_spread(system: SystemParams, fgrid) -> float:
    """Largest spread of the diagonal of H over the sampled drive values (rad/s).

    The spread is convex in f, so the extreme drive values bound it.
    """
    m = np.arange(DIM) - 2.0
    f = np.asarray(fgrid, dtype=float)
    f = f[np.isfinite(f)]  # non-finite drives are reported by the sample checks
    if f.size == 0:
        return 0.0
    return float(max(np.ptp(system.level_energies + x * m) for x in (f.min(), f.max())))


def step_grid(drive: Drive, system: SystemParams, duration: float, step_size: float):
    """Step count, step length and drive samples for a fixed-step run.

    ``step_size`` is an upper bound: when the drive pushes the level spread so
    far that one step would accumulate more than MAX_PHASE_STEP of relative
    phase, the step is shortened to keep the scheme converged.
    """
    n_steps = max(1, int(round(duration / step_size)))
    fgrid = drive_grid(drive, duration, n_steps)
    needed = math.ceil(duration * energy_spread(system, fgrid) / MAX_PHASE_STEP)
    if needed > n_steps:
        n_steps = needed
        fgrid = drive_grid(drive, duration, n_steps)
    return n_steps, duration / n_steps, fgrid


def _validate_samples(times, states):
    herm = np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2))), axis=(1, 2))
    trace_dev = np.abs(np.trace(states, axis1=1, axis2=2) - 1.0)
    finite = np.all(np.isfinite(states), axis=(1, 2))
    bad = (~finite) | (herm > HERMITIAN_TOL) | (trace_dev > TRACE_TOL)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise IntegrationError(
            "density matrix invariant violated: "
            + "; ".join(density_violations(states[k], HERMITIAN_TOL, TRACE_TOL, POSITIVITY_TOL)),
            times[k],
        )
    sym = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    lam_min = np.linalg.eigvalsh(sym)[:, 0]
    if np.any(lam_min < -POSITIVITY_TOL):
        k = int(np.argmax(lam_min < -POSITIVITY_TOL))
        raise IntegrationError(f"negative eigenvalue {lam_min[k]:.3e}", times[k])


def propagate(
    initial,
    drive: Drive,
    system: SystemParams,
    duration: float,
    settings: IntegratorSettings | None = None,
) -> Trajectory:
    """Integrate the master equation from ``initial`` for ``duration`` seconds.

    ``drive`` is a CrabPulse, a constant f (rad/s) or a vectorized callable
    f(t). Samples every ``sample_stride`` steps plus the final step, and
    raises IntegrationError at the first sample breaking a density-matrix
    invariant.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    settings = settings or IntegratorSettings()
    rho0 = check_density(initial)
    n_steps, h, fgrid = step_grid(drive, system, duration, settings.step_size)
    stride = settings.stride(n_steps)
    levels = np.ascontiguousarray(system.level_energies, dtype=float)
    couplings = system.couplings()
    if settings.method == "rk4":
        states = backend.kernels.rk4_density(
            rho0, levels, couplings, fgrid, h, system.dephasing_rate, stride
        )
    else:
        states = _expm_midpoint(rho0, system, fgrid, h, stride)
    steps = np.arange(0, n_steps + 1, stride)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    times = steps * h
    _validate_samples(times, states)
    return Trajectory(times=times, states=states)


def _expm_midpoint(rho0, system, fgrid, h, stride):
    """Piecewise-constant exponential stepping with f held at each step midpoint."""
    n_steps = (len(fgrid) - 1) // 2
    samples = [rho0.copy()]
    rho = rho0.copy()
    cache = {}
    for n in range(n_steps):
        f = fgrid[2 * n + 1]
        if f not in cache:
            cache[f] = expm_propagator(total_hamiltonian(system, f), system.dephasing_rate, h)
        rho = apply_superoperator(cache[f], rho)
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            samples.append(rho.copy())
    return np.array(samples)


def propagate_piecewise_constant(initial, f_values, system: SystemParams, dt: float,
                                 method: str = "rk4") -> np.ndarray:
    """Final state for f held at ``f_values[n]`` during step n of length dt."""
    rho = np.array(initial, dtype=complex)
    levels = np.ascontiguousarray(system.level_energies, dtype=float)
    couplings = system.couplings()
    for f in f_values:
        if method == "rk4":
            grid = np.full(3, float(f))
            rho = backend.kernels.rk4_density(
                rho, levels, couplings, grid, dt, system.dephasing_rate, 1
            )[-1]
        else:
            superop = expm_propagator(total_hamiltonian(system, f), system.dephasing_rate, dt)
            rho = apply_superoperator(superop, rho)
    return rho


def _pure_vector(rho, tol=1e-12):
    lam, vec = np.linalg.eigh(rho)
    if lam[-1] < 1.0 - tol:
        return None
    return vec[:, -1]


def final_state(initial, drive: Drive, system: SystemParams, duration: float,
                step_size: float = DEFAULT_STEP) -> np.ndarray:
    """State at ``duration`` without trajectory storage or sample checks.

    Noiseless runs from a pure state integrate the state vector instead of
    the density matrix (same RK4 scheme, five times fewer unknowns).
    """
    rho0 = np.asarray(initial, dtype=complex)
    if duration <= 0:
        return rho0.copy()
    n_steps, h, fgrid = step_grid(drive, system, duration, step_size)
    levels = np.ascontiguousarray(system.level_energies, dtype=float)
    couplings = system.couplings()
    if system.dephasing_rate == 0.0:
        psi = _pure_vector(rho0)
        if psi is not None:
            psi = backend.kernels.rk4_state(psi, levels, couplings, fgrid, h)
            return np.outer(psi, psi.conj())
    return backend.kernels.rk4_density(
        rho0, levels, couplings, fgrid, h, system.dephasing_rate, n_steps
    )[-1]


def unitary_propagator(drive: Drive, system: SystemParams, duration: float,
                       step_size: float = DEFAULT_STEP) -> np.ndarray:
    """5 x 5 evolution operator of the closed system (dephasing ignored)."""
    n_steps, h, fgrid = step_grid(drive, system, duration, step_size)
    return backend.kernels.rk4_state(
        np.eye(DIM, dtype=complex),
        np.ascontiguousarray(system.level_energies, dtype=float),
        system.couplings(),
        fgrid,
        h,
    )


def channel_superoperator(drive: Drive, system: SystemParams, duration: float,
                          step_size: float = DEFAULT_STEP) -> np.ndarray:
    """25 x 25 map rho(0) -> rho(duration), built column by column."""
    n_steps, h, fgrid = step_grid(drive, system, duration, step_size)
    levels = np.ascontiguousarray(system.level_energies, dtype=float)
    couplings = system.couplings()
    superop = np.empty((DIM * DIM, DIM * DIM), dtype=complex)
    for col in range(DIM * DIM):
        unit = np.zeros(DIM * DIM, dtype=complex)
        unit[col] = 1.0
        out = backend.kernels.rk4_density(
            unit.reshape(DIM, DIM), levels, couplings, fgrid, h, system.dephasing_rate, n_steps
        )[-1]
        superop[:, col] = out.reshape(DIM * DIM)
    return superop


def propagate_free(initial, system: SystemParams, duration: float,
                   gamma: float | None = None) -> np.ndarray:
    """Closed-form evolution under H0 plus dephasing (no drive)."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    gamma = system.dephasing_rate if gamma is None else gamma
    rho = np.array(initial, dtype=complex)
    w = system.level_energies
    factor = np.exp(-1j * np.subtract.outer(w, w) * duration)
    off = ~np.eye(DIM, dtype=bool)
    factor[off] *= np.exp(-2.0 * gamma * duration)
    return rho * factor
