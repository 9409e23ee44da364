"""Multi-level Ramsey interferometer built from a state-preparation pulse.

Sequence per delay tau: rho0 -> pulse -> free evolution(tau) -> same pulse ->
populations. Both pulses are the identical linear map, so it is computed once
(a 5x5 unitary when noiseless, a 25x25 superoperator otherwise) and applied
to every freely evolved state.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from crabchip.dynamics import (
    DEFAULT_STEP,
    apply_superoperator,
    channel_superoperator,
    final_state,
    propagate_free,
    unitary_propagator,
)
from crabchip.pulse import CrabPulse
from crabchip.spin_system import KHZ, SystemParams
from crabchip.states import DIM, initial_state, populations

DEFAULT_TAU_GRID = np.arange(1001) * 2e-9  # 0 .. 2 us


@dataclass
class FringeSeries:
    tau_values: np.ndarray
    populations: np.ndarray  # (n_tau, 5)

    def __post_init__(self):
        sums = self.populations.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("populations do not sum to one at every delay")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau_us"] + [f"p{i}" for i in range(1, DIM + 1)])
            for tau, p in zip(self.tau_values, self.populations):
                writer.writerow([f"{v:.17e}" for v in (tau * 1e6, *p)])


def ramsey_scan(
    prep: CrabPulse,
    system: SystemParams,
    tau_values,
    duration: float | None = None,
    free_gamma: float | None = None,
    step_size: float = DEFAULT_STEP,
) -> FringeSeries:
    """Output populations of the pulse-delay-pulse sequence for each delay.

    ``duration`` defaults to the pulse length; 0 makes both pulses the identity.
    ``free_gamma`` sets dephasing during the delay (default: the system's).
    """
    tau_values = np.asarray(tau_values, dtype=float)
    if np.any(tau_values < 0) or np.any(np.diff(tau_values) < 0):
        raise ValueError("delays must be non-negative and ascending")
    duration = prep.duration if duration is None else duration
    rho0 = initial_state()
    if duration > 0:
        rho1 = final_state(rho0, prep, system, duration, step_size)
        if system.dephasing_rate == 0.0:
            u = unitary_propagator(prep, system, duration, step_size)
            second = lambda rho: u @ rho @ u.conj().T  # noqa: E731
        else:
            superop = channel_superoperator(prep, system, duration, step_size)
            second = lambda rho: apply_superoperator(superop, rho)  # noqa: E731
    else:
        rho1 = rho0
        second = lambda rho: rho  # noqa: E731
    out = np.empty((tau_values.size, DIM))
    for i, tau in enumerate(tau_values):
        out[i] = populations(second(propagate_free(rho1, system, tau, free_gamma)))
    return FringeSeries(tau_values, out)


@dataclass
class FringeMetrics:
    channel_index: int
    amplitude_A: float
    max_slope_S: float
    normalized_S_over_A: float
    dominant_gap_dE: float
    gap_resolution: float
    flagged: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def dominant_frequency(tau, signal, pad: int = 8) -> tuple[float, float]:
    """Angular frequency of the strongest non-DC Fourier component and the bin width."""
    tau = np.asarray(tau, dtype=float)
    dt = np.diff(tau)
    if tau.size < 3 or np.ptp(dt) > 1e-9 * dt.mean():
        return float("nan"), float("nan")
    n = tau.size
    x = np.asarray(signal, dtype=float)
    spectrum = np.abs(np.fft.rfft((x - x.mean()) * np.hanning(n), n * pad))
    freqs = np.fft.rfftfreq(n * pad, dt.mean())
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    return 2 * np.pi * freqs[k], 2 * np.pi / (n * dt.mean())


def fringe_metrics(series: FringeSeries, min_amplitude: float = 1e-9) -> FringeMetrics:
    """Largest-amplitude channel, its maximum point-to-point slope and S/A."""
    tau = series.tau_values
    if tau.size < 3:
        raise ValueError("need at least three delays")
    pops = series.populations
    amplitudes = 0.5 * (pops.max(axis=0) - pops.min(axis=0))
    channel = int(np.argmax(amplitudes))
    amp = float(amplitudes[channel])
    dtau = np.diff(tau)
    if np.any(dtau <= 0):
        raise ValueError("delays must be strictly ascending for slopes")
    slope = float(np.max(np.abs(np.diff(pops[:, channel]) / dtau)))
    gap, resolution = dominant_frequency(tau, pops[:, channel])
    if amp < min_amplitude:
        return FringeMetrics(channel, amp, slope, float("nan"), float("nan"), resolution,
                             flagged=True, note="no fringe: constant series")
    return FringeMetrics(channel, amp, slope, slope / amp, gap, resolution)


@dataclass
class StudyRow:
    label: str
    delta_e: float
    amplitude: float
    slope: float
    s_over_a: float
    channel: int
    gap_resolution: float


@dataclass
class SensitivityStudy:
    rows: list[StudyRow]
    fit_slope: float = float("nan")
    r_squared: float = float("nan")
    residuals: list[float] = field(default_factory=list)

    def ratio(self, a: str, b: str) -> float:
        by = {r.label: r for r in self.rows}
        return by[a].s_over_a / by[b].s_over_a

    def to_dict(self) -> dict:
        return {
            "fit_slope": self.fit_slope,
            "r_squared": self.r_squared,
            "residuals": self.residuals,
            "rows": [
                {
                    "label": r.label,
                    "delta_e_khz": r.delta_e / KHZ,
                    "amplitude": r.amplitude,
                    "max_slope_per_us": r.slope * 1e-6,
                    "s_over_a_per_us": r.s_over_a * 1e-6,
                    "channel": r.channel + 1,
                    "gap_resolution_khz": r.gap_resolution / KHZ,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def sensitivity_study(
    prep_pulses: Mapping[str, CrabPulse],
    system: SystemParams,
    tau_grid=DEFAULT_TAU_GRID,
    step_size: float = DEFAULT_STEP,
) -> SensitivityStudy:
    """S/A against the Fourier-extracted gap for each pulse, fitted through the origin."""
    rows = []
    for label, pulse in prep_pulses.items():
        m = fringe_metrics(ramsey_scan(pulse, system, tau_grid, step_size=step_size))
        if m.flagged:
            continue
        rows.append(StudyRow(label, m.dominant_gap_dE, m.amplitude_A, m.max_slope_S,
                             m.normalized_S_over_A, m.channel_index, m.gap_resolution))
    study = SensitivityStudy(rows)
    if len(rows) >= 2:
        x = np.array([r.delta_e for r in rows])
        y = np.array([r.s_over_a for r in rows])
        slope = float(x @ y / (x @ x))
        resid = y - slope * x
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        study.fit_slope = slope
        study.residuals = resid.tolist()
        study.r_squared = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
    return study
