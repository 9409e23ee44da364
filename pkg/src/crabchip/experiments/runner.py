"""Run orchestration: one experiment per output directory, written atomically."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from crabchip import __version__
from crabchip.dynamics import IntegratorSettings, propagate
from crabchip.experiments.config import ConfigError, ExperimentConfig
from crabchip.experiments.targets import TWO_LEVEL_TARGETS, builtin_targets
from crabchip.interferometer import ramsey_scan, sensitivity_study
from crabchip.metrics import state_error, uhlmann_fidelity
from crabchip.optimizer import (
    OptimizationRecord,
    constant_pulse_error,
    optimize_preparation,
    refine_preparation,
    robustness_envelope,
    sweep_pulse_length,
)
from crabchip.pulse import CrabPulse
from crabchip.spin_system import KHZ, SystemParams, breit_rabi_energies, eigenstate_target
from crabchip.states import TargetSpec, initial_state, populations

log = logging.getLogger(__name__)

REFERENCE_LEVELS_KHZ = (8635.0, 4320.0, 0.0, -4326.0, -8657.0)
REFERENCE_FIELD_GAUSS = 6.179
EPSILON_BOUND = 0.02
# solver defaults for canned runs, overridable through the config "solver" block
RECIPE_SOLVER = {"f_target": 0.01}
# the length sweep has no evaluation budget to respect, so it searches wider
SWEEP_SOLVER = {"f_target": 0.01, "starts": 10}
# eigenstate targets also fix relative phases, otherwise the state drifts during a hold
EIGENSTATE_SOLVER = {"f_target": 0.01, "starts": 8, "coherence_weight": 1.0}
# beam-splitter pulses are polished further: leftover population in other levels
# adds fast fringe components that distort the maximum slope
BEAM_SPLITTER_REFINE = {"epsilon_target": 5e-4, "max_evals": 3000, "rounds": 4}


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return f"{float(v):.17e}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    config: dict
    version: str
    started: str
    finished: str
    outputs: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    directory: Path | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "tool_version": self.version,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
            "summary": self.summary,
        }

    @classmethod
    def load(cls, directory) -> "RunManifest":
        directory = Path(directory)
        d = json.loads((directory / "manifest.json").read_text())
        return cls(d["config"], d["tool_version"], d["started"], d["finished"],
                   d["outputs"], d["summary"], directory)

    def verify(self) -> list[str]:
        """Outputs that are missing or whose digest changed (empty when intact)."""
        bad = []
        for entry in self.outputs:
            path = self.directory / entry["path"]
            if not path.is_file() or sha256_of(path) != entry["sha256"]:
                bad.append(entry["path"])
        return bad

    def file(self, name) -> Path:
        return self.directory / name


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(config: ExperimentConfig, out_dir, threads: int = 1) -> RunManifest:
    """Execute ``config`` and write its outputs plus ``manifest.json`` to ``out_dir``.

    Everything is produced in a sibling temporary directory and renamed into
    place at the end; on failure nothing is left behind.
    """
    out = Path(out_dir)
    if out.exists():
        if not out.is_dir():
            raise ConfigError([f"output path {out} exists and is not a directory"])
        if any(out.iterdir()) and not (out / "manifest.json").exists():
            raise ConfigError([f"output directory {out} is not empty and holds no previous run"])
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))
    started = _now()
    try:
        summary = _HANDLERS[config.kind](config, tmp, threads)
        files = sorted(p for p in tmp.rglob("*") if p.is_file())
        manifest = RunManifest(
            config=config.to_dict(),
            version=__version__,
            started=started,
            finished=_now(),
            outputs=[
                {"path": str(p.relative_to(tmp)), "sha256": sha256_of(p), "bytes": p.stat().st_size}
                for p in files
            ],
            summary=summary,
        )
        _write_json(tmp / "manifest.json", manifest.to_dict())
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    manifest.directory = out
    return manifest


# ---------------------------------------------------------------- handlers

def _design_system(config: ExperimentConfig) -> SystemParams:
    return config.system().with_dephasing(0.0)


def _breit_rabi(config, out, threads):
    fields = config.raw.get("B_list_gauss", [config.system().bias_field_gauss])
    rows = []
    table = {}
    for b in fields:
        levels = breit_rabi_energies(b) / KHZ
        table[str(b)] = levels.tolist()
        for i, (m, e) in enumerate(zip((2, 1, 0, -1, -2), levels)):
            rows.append((b, i + 1, m, e))
    write_csv(out / "breit_rabi.csv", ["B_gauss", "level", "m_F", "energy_khz"], rows)
    summary = {"energies_khz": table}
    if REFERENCE_FIELD_GAUSS in fields:
        dev = np.abs(breit_rabi_energies(REFERENCE_FIELD_GAUSS) / KHZ - REFERENCE_LEVELS_KHZ)
        summary["reference_levels_khz"] = list(REFERENCE_LEVELS_KHZ)
        summary["max_deviation_khz"] = float(dev.max())
    return summary


def _load_drive(config):
    if "pulse_file" in config.raw:
        return CrabPulse.load(config.resolve(config.raw["pulse_file"]))
    return float(config.raw.get("f_const_khz", config.f_bar() / KHZ)) * KHZ


def _simulate(config, out, threads):
    system = config.system()
    drive = _load_drive(config)
    duration = config.duration()
    stride = config.raw.get("sample_stride")
    traj = propagate(initial_state(), drive, system, duration,
                     IntegratorSettings(sample_stride=stride))
    traj.to_csv(out / "trajectory.csv", coherences=True)
    summary = {"final_populations": traj.populations[-1].tolist(), "T_us": duration * 1e6}
    if "target" in config.raw:
        summary["epsilon"] = state_error(traj.final, config.target())
    return summary


def _save_record(record: OptimizationRecord, out: Path, stem: str):
    record.save(out / f"{stem}_record.json")
    record.best_pulse.save(out / f"{stem}_pulse.json", trace_points=401)
    record.best_pulse.write_trace_csv(out / f"{stem}_pulse_trace.csv")
    write_csv(out / f"{stem}_history.csv", ["eval", "objective"], record.history)


def _record_summary(record: OptimizationRecord) -> dict:
    return {
        "target": record.target.name,
        "T_us": record.duration * 1e6,
        "epsilon": record.best_epsilon,
        "objective": record.best_error,
        "band_penalty": record.band_penalty,
        "eval_count": record.eval_count,
        "start_errors": record.start_errors,
    }


def _optimize(config, out, threads):
    record = optimize_preparation(config.target(), config.duration(), _design_system(config),
                                  config.solver(threads))
    _save_record(record, out, "optimize")
    summary = _record_summary(record)
    summary["below_bound"] = record.best_epsilon < EPSILON_BOUND
    return summary


def _sweep_time(config, out, threads):
    target = config.target()
    gammas, fields = config.noise_grids()
    points = sweep_pulse_length(
        target, config.durations(), _design_system(config), config.solver(threads),
        warm_start=config.raw.get("warm_start", True),
        gamma_grid=gammas, b_field_grid=fields,
    )
    rows = []
    running = np.inf
    for p in points:
        running = min(running, p.record.best_epsilon)
        env = p.envelope
        rows.append((p.duration * 1e6, p.record.best_epsilon, p.record.best_error,
                     env.epsilon_nominal, env.epsilon_min, env.epsilon_max, running))
        stem = f"T{p.duration * 1e6:06.1f}us"
        _save_record(p.record, out, stem)
        write_csv(out / f"{stem}_envelope.csv", ["gamma_hz", "b_gauss", "epsilon"], env.to_rows())
    write_csv(out / "sweep.csv",
              ["T_us", "epsilon", "objective", "envelope_nominal", "envelope_min",
               "envelope_max", "running_min"], rows)
    return {
        "target": target.name,
        "rows": [dict(zip(["T_us", "epsilon", "objective", "envelope_nominal", "envelope_min",
                           "envelope_max", "running_min"], r)) for r in rows],
    }


def _constant_baseline(config, out, threads):
    target = config.target()
    f_const = float(config.raw.get("f_const_khz", config.f_bar() / KHZ)) * KHZ
    result = constant_pulse_error(target, f_const, config.durations(), config.system())
    write_csv(out / "baseline.csv", ["T_us", "epsilon"], [(t * 1e6, e) for t, e in result])
    errs = [e for _, e in result]
    return {"target": target.name, "f_const_khz": f_const / KHZ,
            "min_epsilon": min(errs), "T_at_min_us": result[int(np.argmin(errs))][0] * 1e6}


@dataclass
class HoldResult:
    times: np.ndarray
    populations: np.ndarray
    epsilon: np.ndarray
    prep_epsilon: float
    max_drift: float
    hold_start_index: int


def hold_test(pulse: CrabPulse, target: TargetSpec, system: SystemParams, f_bar: float,
              hold_duration: float, sample_stride: int | None = None) -> HoldResult:
    """Apply ``pulse`` then keep f = f_bar; track populations and error throughout."""
    settings = IntegratorSettings(sample_stride=sample_stride)
    prep = propagate(initial_state(), pulse, system, pulse.duration, settings)
    times = [prep.times]
    states = [prep.states]
    start = len(prep.times) - 1
    if hold_duration > 0:
        hold = propagate(prep.final, float(f_bar), system, hold_duration, settings)
        times.append(pulse.duration + hold.times[1:])
        states.append(hold.states[1:])
    times = np.concatenate(times)
    states = np.concatenate(states)
    pops = populations(states)
    eps = np.array([state_error(p, target) for p in pops])
    drift = float(np.max(np.abs(pops[start:] - pops[start]))) if hold_duration > 0 else 0.0
    return HoldResult(times, pops, eps, float(eps[start]), drift, start)


def _solver(config, threads, defaults):
    options = config.solver(threads)
    given = config.raw.get("solver", {})
    return replace(options, **{k: v for k, v in defaults.items() if k not in given})


def _hold_outputs(result: HoldResult, out: Path, stem: str):
    rows = [(t * 1e6, *p, e) for t, p, e in zip(result.times, result.populations, result.epsilon)]
    write_csv(out / f"{stem}.csv", ["t_us", "p1", "p2", "p3", "p4", "p5", "epsilon"], rows)


def _hold_test(config, out, threads):
    system = config.system()
    f_bar = config.f_bar()
    hold = float(config.raw.get("hold_us", 80.0)) * 1e-6
    which = config.raw.get("eigenstate", "ground")
    target = eigenstate_target(system.with_dephasing(0.0), f_bar, which)
    if "pulse_file" in config.raw:
        pulse = CrabPulse.load(config.resolve(config.raw["pulse_file"]))
        summary = {}
    else:
        record = optimize_preparation(target, config.duration(), _design_system(config),
                                      _solver(config, threads, EIGENSTATE_SOLVER))
        _save_record(record, out, f"hold_{which}")
        pulse = record.best_pulse
        summary = _record_summary(record)
    result = hold_test(pulse, target, system, f_bar, hold)
    _hold_outputs(result, out, f"hold_{which}")
    summary.update({"eigenstate": which, "prep_epsilon": result.prep_epsilon,
                    "max_population_drift": result.max_drift, "hold_us": hold * 1e6,
                    "target_populations": list(target.populations)})
    return summary


def _envelope(config, out, threads):
    pulse = CrabPulse.load(config.resolve(config.raw["pulse_file"]))
    gammas, fields = config.noise_grids()
    env = robustness_envelope(pulse, config.target(), config.system(), gammas, fields,
                              threads=threads)
    write_csv(out / "envelope.csv", ["gamma_hz", "b_gauss", "epsilon"], env.to_rows())
    return {"epsilon_nominal": env.epsilon_nominal, "epsilon_min": env.epsilon_min,
            "epsilon_max": env.epsilon_max, "spread": env.spread}


def _interferometer_outputs(pulses, system, tau, out):
    for label, pulse in pulses.items():
        ramsey_scan(pulse, system, tau).to_csv(out / f"fringe_{label}.csv")
    study = sensitivity_study(pulses, system, tau)
    (out / "study.json").write_text(study.to_json())
    write_csv(out / "sensitivity.csv",
              ["label", "delta_e_khz", "amplitude", "max_slope_per_us", "s_over_a_per_us"],
              [(r.label, r.delta_e / KHZ, r.amplitude, r.slope * 1e-6, r.s_over_a * 1e-6)
               for r in study.rows])
    summary = study.to_dict()
    labels = [r.label for r in study.rows]
    if "A" in labels and "D" in labels:
        summary["ratio_A_over_D"] = study.ratio("A", "D")
    return summary


def _interferometer(config, out, threads):
    pulses = {label: CrabPulse.load(config.resolve(path))
              for label, path in config.raw["pulses"].items()}
    return _interferometer_outputs(pulses, config.system(), config.tau_grid(), out)


# ---------------------------------------------------------------- recipes

def _fig2(config, out, threads):
    system = config.system()
    f_bar = config.f_bar()
    duration = float(config.raw.get("T_us", 20.0)) * 1e-6
    hold = float(config.raw.get("hold_us", 80.0)) * 1e-6
    summary = {}
    for which in ("ground", "highest"):
        target = eigenstate_target(system.with_dephasing(0.0), f_bar, which)
        record = optimize_preparation(target, duration, _design_system(config),
                                      _solver(config, threads, EIGENSTATE_SOLVER))
        _save_record(record, out, f"fig2_{which}")
        result = hold_test(record.best_pulse, target, system, f_bar, hold)
        _hold_outputs(result, out, f"fig2_{which}")
        summary[which] = {
            "epsilon": record.best_epsilon,
            "prep_epsilon": result.prep_epsilon,
            "max_population_drift": result.max_drift,
            "target_populations": list(target.populations),
            "epsilon_below_bound": record.best_epsilon < EPSILON_BOUND,
            "drift_below_bound": result.max_drift < EPSILON_BOUND,
        }
    return summary


def _fig3(config, out, threads):
    raw = dict(config.raw)
    raw.setdefault("target", "A")
    raw.setdefault("T_list_us", [20, 40, 60, 80, 90, 100])
    raw["solver"] = {**SWEEP_SOLVER, **raw.get("solver", {})}
    sub = ExperimentConfig(kind="sweep-time", raw=raw, base_dir=config.base_dir)
    summary = {"sweep": _sweep_time(sub, out, threads)}
    grid = np.arange(0, int(max(sub.durations()) * 1e6) + 1) * 1e-6
    f_const = float(raw.get("f_const_khz", config.f_bar() / KHZ)) * KHZ
    base = constant_pulse_error(sub.target(), f_const, grid, config.system())
    write_csv(out / "baseline.csv", ["T_us", "epsilon"], [(t * 1e6, e) for t, e in base])
    errs = [e for _, e in base]
    rows = summary["sweep"]["rows"]
    eps_by_t = {round(r["T_us"], 6): r["epsilon"] for r in rows}
    summary["baseline_min_epsilon"] = min(errs)
    summary["epsilon_at_90us"] = eps_by_t.get(90.0)
    return summary


def _pulses_for(config, labels, threads):
    if "pulses" in config.raw:
        return {k: CrabPulse.load(config.resolve(v)) for k, v in config.raw["pulses"].items()}
    duration = float(config.raw.get("T_us", 100.0)) * 1e-6
    targets = builtin_targets()
    refine = {**BEAM_SPLITTER_REFINE, **config.raw.get("refine", {})}
    pulses = {}
    for k in labels:
        record = optimize_preparation(targets[k], duration, _design_system(config),
                                      _solver(config, threads, RECIPE_SOLVER))
        pulses[k] = refine_preparation(record, **refine).best_pulse
    return pulses


def _fig4(config, out, threads):
    pulses = _pulses_for(config, list(TWO_LEVEL_TARGETS), threads)
    for label, pulse in pulses.items():
        pulse.save(out / f"pulse_{label}.json")
    return _interferometer_outputs(pulses, config.system().with_dephasing(0.0),
                                   config.tau_grid(), out)


def _table1(config, out, threads):
    duration = float(config.raw.get("T_us", 100.0)) * 1e-6
    names = config.raw.get("targets", list(builtin_targets()))
    targets = builtin_targets()
    gammas, fields = config.noise_grids()
    rho0 = initial_state()
    rows = []
    summary = {"targets": {}}
    for name in names:
        target = targets[name]
        record = optimize_preparation(target, duration, _design_system(config),
                                      _solver(config, threads, RECIPE_SOLVER))
        _save_record(record, out, f"table1_{name}")
        env = robustness_envelope(record.best_pulse, target, config.system(), gammas, fields,
                                  threads=threads)
        fid = uhlmann_fidelity(rho0, target.diagonal_state())
        rows.append((name, *target.populations, record.best_epsilon, env.epsilon_min,
                     env.epsilon_max, fid))
        summary["targets"][name] = {
            "epsilon": record.best_epsilon,
            "envelope_min": env.epsilon_min,
            "envelope_max": env.epsilon_max,
            "fidelity_initial_vs_target": fid,
            "below_bound": record.best_epsilon < EPSILON_BOUND,
        }
    write_csv(out / "table1.csv",
              ["target", "b1", "b2", "b3", "b4", "b5", "epsilon", "envelope_min",
               "envelope_max", "fidelity"], rows)
    summary["all_below_bound"] = all(v["below_bound"] for v in summary["targets"].values())
    return summary


_RECIPES = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "table1": _table1}


def _reproduce(config, out, threads):
    summary = _RECIPES[config.raw["tag"]](config, out, threads)
    summary["tag"] = config.raw["tag"]
    return summary


def reproduce_figure(tag: str, out_dir, overrides: dict | None = None, threads: int = 1,
                     base_dir=None) -> RunManifest:
    raw = {"kind": "reproduce", "tag": tag}
    raw.update(overrides or {})
    return run(ExperimentConfig.from_dict(raw, base_dir), out_dir, threads)


_HANDLERS = {
    "breit-rabi": _breit_rabi,
    "simulate": _simulate,
    "optimize": _optimize,
    "sweep-time": _sweep_time,
    "constant-baseline": _constant_baseline,
    "hold-test": _hold_test,
    "envelope": _envelope,
    "interferometer": _interferometer,
    "reproduce": _reproduce,
}
