"""CRAB frequency-modulated drive.

The instantaneous drive frequency is a truncated Fourier series around a
carrier ``f0``::

    f(t) = f0 * (1 + A_0 + sum_{k=1}^{n_f} 2 Re[A_k exp(2 pi i k t / T)])

which is the two-sided sum with ``A_{-k} = conj(A_k)`` folded in, so ``f`` is
real by construction. The RF phase frequency ``omega(t)`` obeys
``f = d/dt [t omega(t)]``, i.e. ``omega`` is the running time-average of ``f``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from crabchip import backend
from crabchip.spin_system import DEFAULT_F_BAR, KHZ, TWO_PI

DEFAULT_BAND_KHZ = (4000.0, 4700.0)


class PulseDomainError(ValueError):
    pass


class PulseParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CrabPulse:
    f0: float
    duration: float
    coefficients: np.ndarray
    a0: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "f0", float(self.f0))
        object.__setattr__(self, "duration", float(self.duration))
        object.__setattr__(self, "a0", float(self.a0))

    @classmethod
    def constant(cls, f0: float = DEFAULT_F_BAR, duration: float = 100e-6, n_f: int = 0):
        return cls(f0, duration, np.zeros(n_f, dtype=complex))

    @classmethod
    def from_vector(cls, x, f0: float, duration: float, n_f: int, include_a0: bool = False):
        """Inverse of :meth:`to_vector`: ``[Re A1, Im A1, ..., Re An, Im An(, A0)]``."""
        x = np.asarray(x, dtype=float)
        expected = 2 * n_f + int(include_a0)
        if x.shape != (expected,):
            raise ValueError(f"coefficient vector has shape {x.shape}, expected ({expected},)")
        coeffs = x[0:2 * n_f:2] + 1j * x[1:2 * n_f:2]
        a0 = float(x[-1]) if include_a0 else 0.0
        return cls(f0, duration, coeffs, a0)

    def to_vector(self, include_a0: bool = False) -> np.ndarray:
        x = np.empty(2 * self.n_f)
        x[0::2] = self.coefficients.real
        x[1::2] = self.coefficients.imag
        if include_a0:
            x = np.append(x, self.a0)
        return x

    @property
    def n_f(self) -> int:
        return self.coefficients.size

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        slack = 1e-12 * self.duration
        if np.any(t < -slack) or np.any(t > self.duration + slack):
            raise PulseDomainError(f"time outside [0, {self.duration!r}] s")
        return np.clip(t, 0.0, self.duration)

    def eval_f(self, t):
        """Instantaneous drive frequency f(t) in rad/s."""
        t = self._check_time(t)
        k = np.arange(1, self.n_f + 1)
        phase = np.exp(1j * TWO_PI * np.multiply.outer(t, k) / self.duration)
        mod = 2.0 * np.real(phase @ self.coefficients) if self.n_f else 0.0 * t
        return self.f0 * (1.0 + self.a0 + mod)

    __call__ = eval_f

    def omega(self, t):
        """omega(t) = (1/t) * integral_0^t f(s) ds, continuous at t = 0."""
        t = self._check_time(t)
        if not self.n_f:
            return self.f0 * (1.0 + self.a0) + 0.0 * t
        k = np.arange(1, self.n_f + 1)
        half_phase = np.pi * np.multiply.outer(t, k) / self.duration
        # (exp(ix) - 1) / (ix) = exp(ix/2) * sinc(x / 2pi), x = 2 pi k t / T
        avg = np.exp(1j * half_phase) * np.sinc(half_phase / np.pi)
        mod = 2.0 * np.real(avg @ self.coefficients)
        return self.f0 * (1.0 + self.a0 + mod)

    def sample(self, h: float, n_points: int) -> np.ndarray:
        """f at t_i = i * h, i < n_points, via the active kernel backend."""
        if (n_points - 1) * h > self.duration * (1 + 1e-12):
            raise PulseDomainError("sample grid extends past the pulse end")
        return backend.kernels.crab_samples(
            self.f0, self.a0, np.ascontiguousarray(self.coefficients), self.duration, h, n_points
        )

    def trace(self, n_points: int = 401):
        t = np.linspace(0.0, self.duration, n_points)
        return t, self.eval_f(t), self.omega(t)

    def to_record(self, trace_points: int = 0) -> dict:
        record = {
            "f0_khz": self.f0 / KHZ,
            "T_us": self.duration * 1e6,
            "n_f": self.n_f,
            "a0": self.a0,
            "coeffs": [[float(c.real), float(c.imag)] for c in self.coefficients],
        }
        if trace_points:
            t, f, w = self.trace(trace_points)
            record["trace"] = {
                "t_us": (t * 1e6).tolist(),
                "f_khz": (f / KHZ).tolist(),
                "omega_khz": (w / KHZ).tolist(),
            }
        return record

    @classmethod
    def from_record(cls, record) -> "CrabPulse":
        return parse_pulse(record)

    def save(self, path, trace_points: int = 0) -> None:
        Path(path).write_text(json.dumps(self.to_record(trace_points), indent=2))

    @classmethod
    def load(cls, path) -> "CrabPulse":
        try:
            record = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise PulseParseError(f"{path}: line {err.lineno} col {err.colno}: {err.msg}") from err
        return parse_pulse(record, source=str(path))

    def write_trace_csv(self, path, n_points: int = 401) -> None:
        t, f, w = self.trace(n_points)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_us", "f_khz", "omega_khz"])
            for row in zip(t * 1e6, f / KHZ, w / KHZ):
                writer.writerow([f"{v:.17e}" for v in row])


def serialize_pulse(pulse: CrabPulse, trace_points: int = 0) -> dict:
    return pulse.to_record(trace_points)


def parse_pulse(record, source: str = "pulse") -> CrabPulse:
    """Build a pulse from its record; errors name the offending field."""
    if not isinstance(record, dict):
        raise PulseParseError(f"{source}: expected an object, got {type(record).__name__}")
    for key in ("f0_khz", "T_us", "coeffs"):
        if key not in record:
            raise PulseParseError(f"{source}: missing field {key!r}")

    def number(key, value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise PulseParseError(f"{source}: {key}: expected a number, got {value!r}")
        if not np.isfinite(value):
            raise PulseParseError(f"{source}: {key}: non-finite value")
        return float(value)

    f0 = number("f0_khz", record["f0_khz"]) * KHZ
    duration = number("T_us", record["T_us"]) * 1e-6
    if duration <= 0:
        raise PulseParseError(f"{source}: T_us: must be positive")
    a0 = number("a0", record.get("a0", 0.0))
    coeffs = record["coeffs"]
    if not isinstance(coeffs, list):
        raise PulseParseError(f"{source}: coeffs: expected a list of [re, im] pairs")
    values = []
    for i, pair in enumerate(coeffs):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise PulseParseError(f"{source}: coeffs[{i}]: expected [re, im] pair, got {pair!r}")
        values.append(number(f"coeffs[{i}][0]", pair[0]) + 1j * number(f"coeffs[{i}][1]", pair[1]))
    if "n_f" in record and record["n_f"] != len(values):
        raise PulseParseError(
            f"{source}: n_f: declared {record['n_f']!r} but {len(values)} coefficient pairs given"
        )
    return CrabPulse(f0, duration, np.array(values, dtype=complex), a0)


@dataclass(frozen=True)
class FrequencyBand:
    omega_min: float = DEFAULT_BAND_KHZ[0] * KHZ
    omega_max: float = DEFAULT_BAND_KHZ[1] * KHZ

    def __post_init__(self):
        if not self.omega_min < self.omega_max:
            raise ValueError("omega_min must be below omega_max")

    def distance(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.maximum(0.0, np.maximum(self.omega_min - omega, omega - self.omega_max))


def band_violation(pulse: CrabPulse, band: FrequencyBand, n_samples: int = 401,
                   refine: bool = False) -> float:
    """Largest excursion (rad/s) of omega(t) outside the band on a uniform grid.

    With ``refine`` the largest and smallest samples are polished by zooming
    in between their neighbours, so peaks falling between grid points are
    measured too.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    t = np.linspace(0.0, pulse.duration, n_samples)
    omega = pulse.omega(t)
    worst = float(np.max(band.distance(omega)))
    if not refine or not np.all(np.isfinite(omega)):
        return worst
    # bracket the extreme samples and zoom in twice; both sides share one call
    k = np.array([np.argmax(omega), np.argmin(omega)])
    lo, hi = t[np.maximum(k - 1, 0)], t[np.minimum(k + 1, n_samples - 1)]
    sign = np.array([1.0, -1.0])
    cols = np.arange(2)
    for _ in range(2):
        ts = np.linspace(lo, hi, 41)  # (41, 2)
        vals = pulse.omega(ts.ravel()).reshape(ts.shape)
        j = np.argmax(sign * vals, axis=0)
        lo, hi = ts[np.maximum(j - 1, 0), cols], ts[np.minimum(j + 1, 40), cols]
    return max(worst, float(np.max(band.distance(vals[j, cols]))))
