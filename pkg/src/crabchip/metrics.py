"""State-preparation error and Uhlmann fidelity."""

import numpy as np

from crabchip.states import POSITIVITY_TOL, TargetSpec, populations


class FidelityDomainError(ValueError):
    pass


def state_error(state, target) -> float:
    """Half the L1 distance between the populations of ``state`` and the target.

    ``state`` may be a density matrix or a population vector; ``target`` a
    TargetSpec or a population vector.
    """
    state = np.asarray(state)
    p = populations(state) if state.ndim == 2 else np.real(state).astype(float)
    b = target.b if isinstance(target, TargetSpec) else np.asarray(target, dtype=float)
    return 0.5 * float(np.sum(np.abs(p - b)))


def _psd_sqrt(rho, name):
    rho = np.asarray(rho, dtype=complex)
    herm = 0.5 * (rho + rho.conj().T)
    if np.max(np.abs(rho - herm)) > 1e-8:
        raise FidelityDomainError(f"{name} is not Hermitian")
    lam, vec = np.linalg.eigh(herm)
    if lam[0] < -POSITIVITY_TOL:
        raise FidelityDomainError(f"{name} has negative eigenvalue {lam[0]:.3e}")
    lam = np.clip(lam, 0.0, None)
    return (vec * np.sqrt(lam)) @ vec.conj().T


def _pure_vector(rho, tol=1e-12):
    lam, vec = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return vec[:, -1] if lam[-1] > 1.0 - tol else None


def uhlmann_fidelity(a, b) -> float:
    """Tr sqrt(sqrt(a) b sqrt(a)) (root fidelity, 1 for identical states).

    When either state is pure this reduces to sqrt(<psi|rho|psi>), which is
    used directly: square roots of rank-deficient matrices lose ~1e-8.
    """
    root_a = _psd_sqrt(a, "first state")
    _psd_sqrt(b, "second state")
    for pure, other in ((a, b), (b, a)):
        psi = _pure_vector(np.asarray(pure, dtype=complex))
        if psi is not None:
            value = np.real(psi.conj() @ np.asarray(other, dtype=complex) @ psi)
            return float(np.sqrt(np.clip(value, 0.0, 1.0)))
    inner = root_a @ np.asarray(b, dtype=complex) @ root_a
    lam = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.clip(np.sum(np.sqrt(np.clip(lam, 0.0, None))), 0.0, 1.0))
