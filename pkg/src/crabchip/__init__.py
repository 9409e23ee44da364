"""CRAB optimal control of RF-driven state preparation in the 87Rb F=2 manifold."""

__version__ = "0.1.0"

from crabchip.backend import BACKEND  # noqa: E402
from crabchip.dynamics import (  # noqa: E402
    IntegratorSettings,
    Trajectory,
    expm_propagator,
    lindblad_rhs,
    propagate,
    propagate_free,
)
from crabchip.metrics import state_error, uhlmann_fidelity  # noqa: E402
from crabchip.optimizer import (  # noqa: E402
    OptimizationRecord,
    OptimizerOptions,
    constant_pulse_error,
    optimize_preparation,
    robustness_envelope,
    sweep_pulse_length,
)
from crabchip.pulse import CrabPulse, FrequencyBand, band_violation  # noqa: E402
from crabchip.spin_system import (  # noqa: E402
    SystemParams,
    breit_rabi_energies,
    build_detuning,
    build_h0,
    build_h1,
    eigenstate_target,
)
from crabchip.states import TargetSpec  # noqa: E402
from crabchip.subplex import subplex_minimize  # noqa: E402

__all__ = [
    "BACKEND",
    "CrabPulse",
    "FrequencyBand",
    "IntegratorSettings",
    "OptimizationRecord",
    "OptimizerOptions",
    "SystemParams",
    "TargetSpec",
    "Trajectory",
    "band_violation",
    "breit_rabi_energies",
    "build_detuning",
    "build_h0",
    "build_h1",
    "constant_pulse_error",
    "eigenstate_target",
    "expm_propagator",
    "lindblad_rhs",
    "optimize_preparation",
    "propagate",
    "propagate_free",
    "robustness_envelope",
    "state_error",
    "subplex_minimize",
    "sweep_pulse_length",
    "uhlmann_fidelity",
]
