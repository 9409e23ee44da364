"""Pulse optimization: objective, multi-start Subplex search, T sweeps, robustness.

The design objective is the population error of the final state plus a soft
penalty for the RF frequency omega(t) leaving its allowed band::

    objective(x) = eps(rho(T)) + max_t dist(omega(t), band) / penalty_scale

Designs are computed noiselessly; dephasing and field offsets enter only in
``robustness_envelope`` and explicit noisy re-evaluations.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from crabchip.dynamics import DEFAULT_STEP, final_state, propagate
from crabchip.dynamics import IntegratorSettings
from crabchip.metrics import state_error, uhlmann_fidelity
from crabchip.pulse import CrabPulse, FrequencyBand, band_violation
from crabchip.spin_system import DEFAULT_F_BAR, KHZ, TWO_PI, SystemParams
from crabchip.states import TargetSpec, initial_state
from crabchip.subplex import MinimizeResult, subplex_minimize

log = logging.getLogger(__name__)

DEFAULT_DURATION = 100e-6


@dataclass(frozen=True)
class OptimizerOptions:
    n_f: int = 7
    include_a0: bool = False
    starts: int = 5
    max_evals: int = 3000
    restarts: int = 0
    simplex_scale: float = 0.05
    init_bound: float = 0.05
    feasible_starts: bool = True
    subspace_size: tuple[int, int] = (2, 5)
    xtol: float = 1e-8
    f_target: float | None = None
    rng_seed: int = 0
    f0: float = DEFAULT_F_BAR
    band_min: float = 4000.0 * KHZ
    band_max: float = 4700.0 * KHZ
    band_samples: int = 201
    penalty_scale: float = 100.0 * KHZ
    coherence_weight: float = 0.0
    step_size: float = DEFAULT_STEP
    threads: int = 1

    @property
    def band(self) -> FrequencyBand:
        return FrequencyBand(self.band_min, self.band_max)

    @property
    def n_params(self) -> int:
        return 2 * self.n_f + int(self.include_a0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subspace_size"] = list(self.subspace_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerOptions":
        d = dict(d)
        if "subspace_size" in d:
            d["subspace_size"] = tuple(d["subspace_size"])
        return cls(**d)


@dataclass
class PreparationProblem:
    """Everything the objective needs: target, system, pulse length, settings."""

    target: TargetSpec
    system: SystemParams
    duration: float
    options: OptimizerOptions = field(default_factory=OptimizerOptions)

    def pulse(self, x) -> CrabPulse:
        o = self.options
        return CrabPulse.from_vector(x, o.f0, self.duration, o.n_f, o.include_a0)

    def final(self, pulse: CrabPulse) -> np.ndarray:
        return final_state(initial_state(), pulse, self.system, self.duration,
                           self.options.step_size)

    def penalty(self, pulse: CrabPulse) -> float:
        o = self.options
        return band_violation(pulse, o.band, o.band_samples, refine=True) / o.penalty_scale

    def evaluate(self, pulse: CrabPulse) -> tuple[float, float]:
        """(error, band penalty) of a pulse.

        The error is the population error, plus ``coherence_weight`` times the
        trace distance sqrt(1 - F^2) to the full target state when one is known.
        """
        penalty = self.penalty(pulse)
        try:
            rho = self.final(pulse)
            eps = state_error(rho, self.target)
            if self.options.coherence_weight and self.target.full_target is not None:
                fid = uhlmann_fidelity(rho, self.target.full_target)
                eps += self.options.coherence_weight * np.sqrt(max(0.0, 1.0 - fid * fid))
            if not np.isfinite(eps):
                raise FloatingPointError("non-finite error")
        except Exception as err:  # keep the search alive on a bad point
            log.warning("propagation failed (%s); scoring as worst case", err)
            eps = 1.0
        return eps, penalty

    def __call__(self, x) -> float:
        eps, penalty = self.evaluate(self.pulse(x))
        return eps + penalty


def objective(coefficients, problem: PreparationProblem) -> float:
    return problem(coefficients)


@dataclass
class OptimizationRecord:
    best_pulse: CrabPulse
    best_error: float  # objective value: epsilon (+ phase term) + band penalty
    best_epsilon: float  # population error alone
    band_penalty: float
    eval_count: int
    history: list[tuple[int, float]]
    rng_seed: int
    options: OptimizerOptions
    system: SystemParams
    target: TargetSpec
    duration: float
    start_errors: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "T_us": self.duration * 1e6,
            "best_error": self.best_error,
            "best_epsilon": self.best_epsilon,
            "band_penalty": self.band_penalty,
            "eval_count": self.eval_count,
            "rng_seed": self.rng_seed,
            "start_errors": self.start_errors,
            "wall_time_s": self.wall_time,
            "options": self.options.to_dict(),
            "system": self.system.to_dict(),
            "pulse": self.best_pulse.to_record(),
            "history": [[i, f] for i, f in self.history],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizationRecord":
        s = d["system"]
        system = SystemParams(s["B_gauss"], s["rabi_khz"] * KHZ, s["gamma_hz"] * TWO_PI)
        target = TargetSpec.from_dict(d["target"])
        return cls(
            best_pulse=CrabPulse.from_record(d["pulse"]),
            best_error=d["best_error"],
            best_epsilon=d["best_epsilon"],
            band_penalty=d["band_penalty"],
            eval_count=d["eval_count"],
            history=[(int(i), float(f)) for i, f in d["history"]],
            rng_seed=d["rng_seed"],
            options=OptimizerOptions.from_dict(d["options"]),
            system=system,
            target=target,
            duration=d["T_us"] * 1e-6,
            start_errors=list(d.get("start_errors", [])),
            wall_time=d.get("wall_time_s", 0.0),
        )

    @classmethod
    def load(cls, path) -> "OptimizationRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def problem(self) -> PreparationProblem:
        return PreparationProblem(self.target, self.system, self.duration, self.options)

    def revalidate(self) -> float:
        """Re-evaluate the stored pulse; returns |stored - recomputed| objective."""
        eps, penalty = self.problem().evaluate(self.best_pulse)
        return abs(eps + penalty - self.best_error)


def start_points(options: OptimizerOptions, rng_seed: int | None = None) -> list[np.ndarray]:
    """Seed-derived initial coefficient vectors, uniform in the bound box."""
    seed = options.rng_seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    return [rng.uniform(-options.init_bound, options.init_bound, options.n_params)
            for _ in range(options.starts)]


def shrink_into_band(problem: PreparationProblem, x, iterations: int = 30) -> np.ndarray:
    """Scale ``x`` toward zero until omega(t) sits inside the band.

    The zero vector (constant f0) is assumed feasible; the largest feasible
    factor is found by bisection. Vectors already inside are returned as is.
    """
    x = np.asarray(x, dtype=float)
    if problem.penalty(problem.pulse(x)) == 0.0:
        return x
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if problem.penalty(problem.pulse(mid * x)) == 0.0:
            lo = mid
        else:
            hi = mid
    return lo * x


def _run_start(problem, x0, seed, f_target):
    o = problem.options
    return subplex_minimize(
        problem, x0,
        max_evals=o.max_evals,
        simplex_scale=o.simplex_scale,
        subspace_size=o.subspace_size,
        restarts=o.restarts,
        rng_seed=seed,
        xtol=o.xtol,
        f_target=f_target,
    )


def optimize_preparation(
    target: TargetSpec,
    duration: float = DEFAULT_DURATION,
    system: SystemParams | None = None,
    options: OptimizerOptions | None = None,
    initial_guesses: Sequence | None = None,
) -> OptimizationRecord:
    """Multi-start Subplex search over CRAB coefficients.

    ``initial_guesses`` (e.g. a warm start) are tried before the random
    starts. With ``feasible_starts`` each random start is shrunk toward the
    constant pulse until omega(t) is inside the band, so no start spends its
    budget walking back from a large penalty. With ``threads == 1`` the starts run in order and stop early once
    ``f_target`` is met; otherwise all starts run and the best wins.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    system = system or SystemParams()
    options = options or OptimizerOptions()
    problem = PreparationProblem(target, system, duration, options)
    guesses = [np.asarray(g, dtype=float) for g in (initial_guesses or [])]
    randoms = start_points(options)
    if options.feasible_starts:
        randoms = [shrink_into_band(problem, x) for x in randoms]
    x0s = guesses + randoms
    seeds = [options.rng_seed * 1000 + i for i in range(len(x0s))]

    t0 = time.perf_counter()
    results: list[MinimizeResult] = []
    if options.threads > 1:
        with ThreadPoolExecutor(options.threads) as pool:
            futures = [pool.submit(_run_start, problem, x0, s, options.f_target)
                       for x0, s in zip(x0s, seeds)]
            results = [fut.result() for fut in futures]
    else:
        for x0, s in zip(x0s, seeds):
            res = _run_start(problem, x0, s, options.f_target)
            results.append(res)
            log.info("start %d: objective %.5f after %d evals", len(results), res.fun, res.n_evals)
            if options.f_target is not None and res.fun <= options.f_target:
                break

    best_index = min(range(len(results)), key=lambda i: (results[i].fun, i))
    best = results[best_index]
    history = []
    offset = 0
    for res in results:
        history.extend((offset + i, f) for i, f in res.history)
        offset += res.n_evals
    pulse = problem.pulse(best.x)
    err, penalty = problem.evaluate(pulse)
    return OptimizationRecord(
        best_pulse=pulse,
        best_error=err + penalty,
        best_epsilon=state_error(problem.final(pulse), target),
        band_penalty=penalty,
        eval_count=offset,
        history=history,
        rng_seed=options.rng_seed,
        options=options,
        system=system,
        target=target,
        duration=duration,
        start_errors=[r.fun for r in results],
        wall_time=time.perf_counter() - t0,
    )


def refine_preparation(
    record: OptimizationRecord,
    epsilon_target: float = 1e-3,
    max_evals: int = 3000,
    rounds: int = 3,
    simplex_scale: float = 0.01,
) -> OptimizationRecord:
    """Continue the search from a record's best pulse with a fresh, smaller simplex.

    Each round re-enters Subplex from the current best point with at most
    ``max_evals`` evaluations; rounds stop once the objective reaches
    ``epsilon_target``. The record returned accumulates the evaluation count
    and history of the original search.
    """
    problem = record.problem()
    x = record.best_pulse.to_vector(record.options.include_a0)
    best_f = record.best_error
    history = list(record.history)
    offset = record.eval_count
    t0 = time.perf_counter()
    for i in range(rounds):
        if best_f <= epsilon_target:
            break
        res = subplex_minimize(problem, x, max_evals=max_evals, simplex_scale=simplex_scale,
                               subspace_size=record.options.subspace_size,
                               rng_seed=record.rng_seed * 1000 + i, xtol=record.options.xtol,
                               f_target=epsilon_target)
        history.extend((offset + j, f) for j, f in res.history)
        offset += res.n_evals
        log.info("refine round %d: objective %.6f after %d evals", i + 1, res.fun, res.n_evals)
        if res.fun < best_f:
            x, best_f = res.x, res.fun
    pulse = problem.pulse(x)
    err, penalty = problem.evaluate(pulse)
    return replace(
        record,
        best_pulse=pulse,
        best_error=err + penalty,
        best_epsilon=state_error(problem.final(pulse), record.target),
        band_penalty=penalty,
        eval_count=offset,
        history=history,
        wall_time=record.wall_time + time.perf_counter() - t0,
    )


@dataclass
class RobustnessEnvelope:
    epsilon_nominal: float
    epsilon_min: float
    epsilon_max: float
    points: list[tuple[float, float, float]] = field(default_factory=list)  # (gamma, B, eps)

    @property
    def spread(self) -> float:
        return self.epsilon_max - self.epsilon_min

    def to_rows(self) -> list[tuple[float, float, float]]:
        """(gamma_hz, b_gauss, epsilon) with gamma as an ordinary frequency."""
        return [(g / TWO_PI, b, e) for g, b, e in self.points]


def _error_at(pulse, target, system, duration, step_size):
    if duration <= 0:
        return state_error(initial_state(), target)
    rho = final_state(initial_state(), pulse, system, duration, step_size)
    return state_error(rho, target)


def robustness_envelope(
    pulse: CrabPulse,
    target: TargetSpec,
    system: SystemParams,
    gamma_grid: Sequence[float],
    b_field_grid: Sequence[float],
    duration: float | None = None,
    step_size: float = DEFAULT_STEP,
    threads: int = 1,
) -> RobustnessEnvelope:
    """Min/max population error of a fixed pulse over a (gamma, B) grid.

    The nominal point (``system`` as given) is part of the extrema, so
    min <= nominal <= max always holds.
    """
    gamma_grid = list(gamma_grid)
    b_field_grid = list(b_field_grid)
    if not gamma_grid or not b_field_grid:
        raise ValueError("gamma and field grids must be non-empty")
    duration = pulse.duration if duration is None else duration
    nominal = _error_at(pulse, target, system, duration, step_size)
    grid = [(g, b) for g in gamma_grid for b in b_field_grid]

    def one(point):
        g, b = point
        sys_gb = SystemParams(b, system.rabi_rate, g)
        return _error_at(pulse, target, sys_gb, duration, step_size)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            errors = list(pool.map(one, grid))
    else:
        errors = [one(p) for p in grid]
    points = [(g, b, e) for (g, b), e in zip(grid, errors)]
    all_errors = errors + [nominal]
    return RobustnessEnvelope(nominal, min(all_errors), max(all_errors), points)


@dataclass
class SweepPoint:
    duration: float
    record: OptimizationRecord
    envelope: RobustnessEnvelope | None


def sweep_pulse_length(
    target: TargetSpec,
    durations: Sequence[float],
    system: SystemParams | None = None,
    options: OptimizerOptions | None = None,
    warm_start: bool = True,
    gamma_grid: Sequence[float] | None = None,
    b_field_grid: Sequence[float] | None = None,
) -> list[SweepPoint]:
    """Independent optimization per pulse length, each followed by an envelope.

    With ``warm_start`` the previous (shorter) optimum's coefficients are
    tried as an extra initial guess.
    """
    durations = list(durations)
    if not durations:
        raise ValueError("need at least one pulse length")
    if any(b <= a for a, b in zip(durations, durations[1:])):
        raise ValueError("pulse lengths must be strictly ascending")
    system = system or SystemParams()
    options = options or OptimizerOptions()
    points = []
    previous = None
    for duration in durations:
        guesses = [previous.best_pulse.to_vector(options.include_a0)] if (warm_start and previous) else None
        record = optimize_preparation(target, duration, system, options, guesses)
        envelope = None
        if gamma_grid is not None:
            envelope = robustness_envelope(
                record.best_pulse, target, system, gamma_grid,
                b_field_grid or [system.bias_field_gauss],
                step_size=options.step_size, threads=options.threads,
            )
        points.append(SweepPoint(duration, record, envelope))
        previous = record
    return points


def constant_pulse_error(
    target: TargetSpec,
    f_const: float,
    durations: Sequence[float],
    system: SystemParams | None = None,
    step_size: float = DEFAULT_STEP,
) -> list[tuple[float, float]]:
    """Population error after an unmodulated drive of each length (one trajectory)."""
    system = system or SystemParams()
    durations = [float(t) for t in durations]
    t_max = max(durations)
    if t_max <= 0:
        return [(t, state_error(initial_state(), target)) for t in durations]
    settings = IntegratorSettings(step_size=step_size, sample_stride=1)
    traj = propagate(initial_state(), float(f_const), system, t_max, settings)
    h = traj.times[1] - traj.times[0]
    out = []
    for t in durations:
        k = int(round(t / h))
        if abs(k * h - t) > 1e-9 * max(t_max, 1e-12):
            rho = final_state(initial_state(), float(f_const), system, t, step_size)
        else:
            rho = traj.states[k]
        out.append((t, state_error(rho, target)))
    return out


DEFAULT_GAMMA_GRID_HZ = (20.0, 60.0, 110.0, 200.0)
DEFAULT_FIELD_OFFSETS_MG = (-1.0, -0.5, 0.0, 0.5, 1.0)


def default_noise_grids(system: SystemParams):
    gammas = [TWO_PI * g for g in DEFAULT_GAMMA_GRID_HZ]
    fields = [system.bias_field_gauss + 1e-3 * d for d in DEFAULT_FIELD_OFFSETS_MG]
    return gammas, fields
