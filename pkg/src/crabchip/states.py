"""Density matrices of the F=2 manifold and population targets.

Density matrices are plain ``(5, 5)`` complex numpy arrays; ``check_density``
enforces the physical invariants where it matters (trajectory samples,
fidelity inputs).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

DIM = 5
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8


class InvalidStateError(ValueError):
    pass


def basis_state(index: int) -> np.ndarray:
    """|j><j| for a 0-based level index (0 <-> m_F = +2)."""
    rho = np.zeros((DIM, DIM), dtype=complex)
    rho[index, index] = 1.0
    return rho


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def initial_state() -> np.ndarray:
    """All population in m_F = +2."""
    return basis_state(0)


def populations(rho) -> np.ndarray:
    return np.real(np.diagonal(rho, axis1=-2, axis2=-1)).copy()


def density_violations(
    rho,
    hermitian_tol: float = HERMITIAN_TOL,
    trace_tol: float = TRACE_TOL,
    positivity_tol: float = POSITIVITY_TOL,
) -> list[str]:
    """Human-readable list of broken invariants (empty when valid)."""
    rho = np.asarray(rho)
    problems = []
    if rho.shape != (DIM, DIM):
        return [f"shape {rho.shape} != (5, 5)"]
    if not np.all(np.isfinite(rho)):
        return ["non-finite entries"]
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > hermitian_tol:
        problems.append(f"hermiticity deviation {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        problems.append(f"trace {tr:.12g}")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if lam[0] < -positivity_tol:
        problems.append(f"negative eigenvalue {lam[0]:.3e}")
    return problems


def check_density(rho, **tols) -> np.ndarray:
    problems = density_violations(rho, **tols)
    if problems:
        raise InvalidStateError("invalid density matrix: " + "; ".join(problems))
    return np.asarray(rho, dtype=complex)


@dataclass(frozen=True)
class TargetSpec:
    """Target populations b_1..b_5, optionally with the full target state."""

    name: str
    populations: tuple[float, ...]
    full_target: Optional[np.ndarray] = None

    def __post_init__(self):
        b = np.asarray(self.populations, dtype=float)
        if b.shape != (DIM,):
            raise ValueError(f"target {self.name!r}: need 5 populations, got {b.shape}")
        if np.any(b < 0):
            raise ValueError(f"target {self.name!r}: negative population")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ValueError(f"target {self.name!r}: populations sum to {b.sum()!r}")
        object.__setattr__(self, "populations", tuple(float(v) for v in b))
        if self.full_target is not None:
            object.__setattr__(self, "full_target", check_density(self.full_target))

    @property
    def b(self) -> np.ndarray:
        return np.array(self.populations)

    def diagonal_state(self) -> np.ndarray:
        return np.diag(self.b).astype(complex)

    def to_dict(self) -> dict:
        d = {"name": self.name, "populations": list(self.populations)}
        if self.full_target is not None:
            d["state_re"] = self.full_target.real.tolist()
            d["state_im"] = self.full_target.imag.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        full = None
        if "state_re" in d:
            full = np.array(d["state_re"]) + 1j * np.array(d["state_im"])
        return cls(d["name"], tuple(d["populations"]), full)
