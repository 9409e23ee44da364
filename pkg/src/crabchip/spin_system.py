"""Hamiltonian pieces for the F=2 ground manifold of 87Rb under an RF drive.

All energies are angular frequencies (rad/s, i.e. H/hbar). Basis index
0..4 corresponds to m_F = +2..-2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from crabchip.states import DIM, TargetSpec, pure_state

TWO_PI = 2.0 * np.pi
KHZ = TWO_PI * 1e3  # 2*pi * 1 kHz in rad/s

# 87Rb 5S1/2 reference data (Steck), CODATA Bohr magneton and Planck constant
HYPERFINE_SPLITTING_HZ = 6_834_682_610.904
G_J = 2.00233113
G_I = -0.0009951414
BOHR_MAGNETON = 9.2740100783e-24  # J/T
PLANCK = 6.62607015e-34  # J s
NUCLEAR_SPIN = 1.5

M_F = np.array([2, 1, 0, -1, -2])
DETUNING_WEIGHTS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
MAX_FIELD_GAUSS = 100.0

DEFAULT_FIELD_GAUSS = 6.179
DEFAULT_RABI = 60.0 * KHZ
DEFAULT_F_BAR = 4323.0 * KHZ


def breit_rabi_energies(bias_field_gauss: float) -> np.ndarray:
    """F=2 sublevel energies (rad/s) at the given field, shifted so m_F = 0 is zero.

    Ordered m_F = +2 .. -2.
    """
    b = float(bias_field_gauss)
    if not (0.0 <= b <= MAX_FIELD_GAUSS):
        raise ValueError(f"bias field {b} G outside [0, {MAX_FIELD_GAUSS}] G")
    field_tesla = b * 1e-4
    x = (G_J - G_I) * BOHR_MAGNETON * field_tesla / (PLANCK * HYPERFINE_SPLITTING_HZ)
    m = M_F.astype(float)
    root = np.sqrt(1.0 + 4.0 * m * x / (2.0 * NUCLEAR_SPIN + 1.0) + x * x)
    # stretched state: the square root is exactly 1 + x
    root[0] = 1.0 + x
    energy_hz = (
        G_I * BOHR_MAGNETON * m * field_tesla / PLANCK
        + 0.5 * HYPERFINE_SPLITTING_HZ * root
    )
    energy_hz = energy_hz - energy_hz[2]
    energy_hz[2] = 0.0
    return TWO_PI * energy_hz


@dataclass(frozen=True)
class SystemParams:
    bias_field_gauss: float = DEFAULT_FIELD_GAUSS
    rabi_rate: float = DEFAULT_RABI
    dephasing_rate: float = 0.0
    level_energies: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if self.bias_field_gauss < 0 or self.rabi_rate < 0 or self.dephasing_rate < 0:
            raise ValueError("field, Rabi rate and dephasing rate must be non-negative")
        if self.level_energies is None:
            levels = breit_rabi_energies(self.bias_field_gauss)
        else:
            levels = np.array(self.level_energies, dtype=float)
            if levels.shape != (DIM,):
                raise ValueError("level_energies must have 5 entries")
            levels = levels - levels[2]
        levels.setflags(write=False)
        object.__setattr__(self, "level_energies", levels)

    def with_field(self, bias_field_gauss: float) -> "SystemParams":
        return SystemParams(bias_field_gauss, self.rabi_rate, self.dephasing_rate)

    def with_dephasing(self, gamma: float) -> "SystemParams":
        return replace(self, dephasing_rate=gamma)

    def couplings(self) -> np.ndarray:
        return coupling_vector(self.rabi_rate)

    def to_dict(self) -> dict:
        return {
            "B_gauss": self.bias_field_gauss,
            "rabi_khz": self.rabi_rate / KHZ,
            "gamma_hz": self.dephasing_rate / TWO_PI,
            "levels_khz": [float(v) for v in self.level_energies / KHZ],
        }


def coupling_vector(rabi_rate: float) -> np.ndarray:
    """Nearest-neighbour couplings (1,2), (2,3), (3,4), (4,5)."""
    s = np.sqrt(1.5) * rabi_rate
    return np.array([rabi_rate, s, s, rabi_rate], dtype=float)


def build_h0(system: SystemParams) -> np.ndarray:
    return np.diag(system.level_energies).astype(complex)


def build_h1(rabi_rate: float) -> np.ndarray:
    if rabi_rate < 0:
        raise ValueError("Rabi rate must be non-negative")
    c = coupling_vector(rabi_rate)
    return (np.diag(c, 1) + np.diag(c, -1)).astype(complex)


def build_detuning(f_value: float) -> np.ndarray:
    return (f_value * np.diag(DETUNING_WEIGHTS)).astype(complex)


def total_hamiltonian(system: SystemParams, f_value: float) -> np.ndarray:
    return build_h0(system) + build_h1(system.rabi_rate) + build_detuning(f_value)


class DegenerateEigenstateError(ValueError):
    pass


def eigenstate_target(
    system: SystemParams,
    f_bar: float = DEFAULT_F_BAR,
    which: str = "ground",
    degeneracy_tol: float = 1e-9,
) -> TargetSpec:
    """Ground or highest eigenstate of H0 + H1 + V(f_bar) as a pure-state target."""
    if which not in ("ground", "highest"):
        raise ValueError(f"which must be 'ground' or 'highest', not {which!r}")
    h = total_hamiltonian(system, f_bar)
    evals, evecs = np.linalg.eigh(h)
    scale = max(np.max(np.abs(evals)), 1.0)
    if which == "ground":
        gap, vec = evals[1] - evals[0], evecs[:, 0]
    else:
        gap, vec = evals[-1] - evals[-2], evecs[:, -1]
    if gap / scale < degeneracy_tol:
        raise DegenerateEigenstateError(
            f"{which} eigenvalue is degenerate (relative gap {gap / scale:.2e})"
        )
    rho = pure_state(vec)
    b = np.abs(vec) ** 2
    b = b / b.sum()
    return TargetSpec(name=which, populations=tuple(b), full_target=rho)
