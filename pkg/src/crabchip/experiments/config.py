"""Declarative experiment configuration (JSON).

Units live in the field names: frequencies in kHz (plain frequency, the 2*pi
is applied on parsing), durations in us, fields in G, rates in Hz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from crabchip.optimizer import OptimizerOptions
from crabchip.spin_system import (
    DEFAULT_F_BAR,
    DEFAULT_FIELD_GAUSS,
    KHZ,
    TWO_PI,
    SystemParams,
    eigenstate_target,
)
from crabchip.states import TargetSpec
from crabchip.experiments.targets import builtin_targets

KINDS = (
    "simulate",
    "optimize",
    "sweep-time",
    "constant-baseline",
    "hold-test",
    "envelope",
    "interferometer",
    "breit-rabi",
    "reproduce",
)
FIGURE_TAGS = ("fig2", "fig3", "fig4", "table1")

# solver fields accepted in config files -> OptimizerOptions fields
_SOLVER_FIELDS = {
    "n_f": int,
    "include_a0": bool,
    "starts": int,
    "max_evals": int,
    "restarts": int,
    "simplex_scale": float,
    "init_bound": float,
    "feasible_starts": bool,
    "xtol": float,
    "f_target": float,
    "band_samples": int,
    "coherence_weight": float,
}

# beam-splitter refinement for interferometer recipes -> refine_preparation arguments
_REFINE_FIELDS = {
    "epsilon_target": (int, float),
    "max_evals": int,
    "rounds": int,
    "simplex_scale": (int, float),
}

_REQUIRED = {
    "simulate": ("T_us",),
    "optimize": ("target", "T_us"),
    "sweep-time": ("target", "T_list_us"),
    "constant-baseline": ("target", "T_list_us"),
    "hold-test": ("T_us",),
    "envelope": ("target", "pulse_file"),
    "interferometer": ("pulses",),
    "breit-rabi": (),
    "reproduce": ("tag",),
}


class ConfigError(ValueError):
    """Every violation found in a config, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid experiment config:\n  - " + "\n  - ".join(self.problems))


@dataclass
class ExperimentConfig:
    kind: str
    raw: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    # ---- construction ---------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError([f"config must be a JSON object, got {type(data).__name__}"])
        cfg = cls(kind=data.get("kind", ""), raw=dict(data),
                  base_dir=Path(base_dir) if base_dir else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError([f"config file {path} does not exist"]) from None
        except json.JSONDecodeError as err:
            raise ConfigError([f"{path}: line {err.lineno} col {err.colno}: {err.msg}"]) from None
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        return dict(self.raw)

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.raw == other.raw

    # ---- validation -----------------------------------------------------
    def validate(self) -> None:
        problems = []
        raw = self.raw
        if self.kind not in KINDS:
            problems.append(f"kind: must be one of {', '.join(KINDS)} (got {self.kind!r})")
            raise ConfigError(problems)
        for key in _REQUIRED[self.kind]:
            if key not in raw:
                problems.append(f"{key}: required for kind {self.kind!r}")

        def positive(key, value):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
                problems.append(f"{key}: must be a positive number (got {value!r})")

        def non_negative(key, value):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                problems.append(f"{key}: must be a non-negative number (got {value!r})")

        if "T_us" in raw:
            positive("T_us", raw["T_us"])
        if "hold_us" in raw:
            non_negative("hold_us", raw["hold_us"])
        if "T_list_us" in raw:
            tl = raw["T_list_us"]
            if not isinstance(tl, list) or not tl:
                problems.append("T_list_us: must be a non-empty list")
            else:
                for i, v in enumerate(tl):
                    non_negative(f"T_list_us[{i}]", v)
        system = raw.get("system", {})
        if not isinstance(system, dict):
            problems.append("system: must be an object")
        else:
            for key in system:
                if key not in ("B_gauss", "rabi_khz", "gamma_hz"):
                    problems.append(f"system.{key}: unknown field")
                else:
                    non_negative(f"system.{key}", system[key])
            if isinstance(system.get("B_gauss"), (int, float)) and system["B_gauss"] > 100:
                problems.append("system.B_gauss: must be <= 100 G")
        if "target" in raw:
            problems += self._target_problems(raw["target"])
        solver = raw.get("solver", {})
        if not isinstance(solver, dict):
            problems.append("solver: must be an object")
        else:
            for key, value in solver.items():
                if key in _SOLVER_FIELDS:
                    typ = _SOLVER_FIELDS[key]
                    if typ is bool:
                        ok = isinstance(value, bool)
                    elif typ is int:
                        ok = isinstance(value, int) and not isinstance(value, bool) and value >= 0
                    else:
                        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
                    if not ok:
                        problems.append(f"solver.{key}: expected {typ.__name__} (got {value!r})")
                elif key in ("f0_khz", "step_ns"):
                    positive(f"solver.{key}", value)
                elif key == "band_khz":
                    if (not isinstance(value, list) or len(value) != 2
                            or not all(isinstance(v, (int, float)) for v in value)
                            or not value[0] < value[1]):
                        problems.append("solver.band_khz: expected [low, high] with low < high")
                else:
                    problems.append(f"solver.{key}: unknown field")
        refine = raw.get("refine", {})
        if not isinstance(refine, dict):
            problems.append("refine: must be an object")
        else:
            for key, value in refine.items():
                if key not in _REFINE_FIELDS:
                    problems.append(f"refine.{key}: unknown field")
                elif isinstance(value, bool) or not isinstance(value, _REFINE_FIELDS[key]) or value < 0:
                    problems.append(f"refine.{key}: expected a non-negative number (got {value!r})")
        if "rng_seed" in raw and (not isinstance(raw["rng_seed"], int) or raw["rng_seed"] < 0):
            problems.append("rng_seed: must be a non-negative integer")
        for key in ("pulse_file",):
            if key in raw and not self.resolve(raw[key]).is_file():
                problems.append(f"{key}: file {raw[key]!r} does not exist")
        if "pulses" in raw:
            pulses = raw["pulses"]
            if not isinstance(pulses, dict) or not pulses:
                problems.append("pulses: must be a non-empty object label -> pulse file")
            else:
                for label, path in pulses.items():
                    if not isinstance(path, str) or not self.resolve(path).is_file():
                        problems.append(f"pulses.{label}: file {path!r} does not exist")
        if self.kind == "reproduce" and raw.get("tag") not in FIGURE_TAGS:
            problems.append(f"tag: must be one of {', '.join(FIGURE_TAGS)} (got {raw.get('tag')!r})")
        if self.kind == "hold-test" and "pulse_file" not in raw and "eigenstate" not in raw:
            problems.append("eigenstate: required for hold-test without pulse_file ('ground' or 'highest')")
        if "eigenstate" in raw and raw["eigenstate"] not in ("ground", "highest"):
            problems.append("eigenstate: must be 'ground' or 'highest'")
        for key in ("f_const_khz", "f_bar_khz"):
            if key in raw:
                positive(key, raw[key])
        for key in ("gamma_grid_hz", "b_grid_gauss", "B_list_gauss"):
            if key in raw:
                v = raw[key]
                if not isinstance(v, list) or not v:
                    problems.append(f"{key}: must be a non-empty list")
                else:
                    for i, x in enumerate(v):
                        non_negative(f"{key}[{i}]", x)
        if "tau_grid" in raw:
            tg = raw["tau_grid"]
            if not isinstance(tg, dict) or not {"stop_us", "step_ns"} <= set(tg):
                problems.append("tau_grid: expected {start_us?, stop_us, step_ns}")
        if problems:
            raise ConfigError(problems)

    @staticmethod
    def _target_problems(target) -> list[str]:
        if isinstance(target, str):
            if target.upper() not in builtin_targets():
                return [f"target: unknown built-in {target!r} (A-I)"]
            return []
        if isinstance(target, dict):
            if "eigenstate" in target:
                if target["eigenstate"] not in ("ground", "highest"):
                    return ["target.eigenstate: must be 'ground' or 'highest'"]
                return []
            b = target.get("populations")
            if not isinstance(b, list) or len(b) != 5:
                return ["target.populations: expected a list of five numbers"]
            try:
                TargetSpec(str(target.get("name", "custom")), tuple(float(v) for v in b))
            except (ValueError, TypeError) as err:
                return [f"target.populations: {err}"]
            return []
        return ["target: expected a built-in name or an object"]

    # ---- typed accessors ------------------------------------------------
    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def rng_seed(self) -> int:
        return int(self.raw.get("rng_seed", 0))

    def system(self) -> SystemParams:
        s = self.raw.get("system", {})
        return SystemParams(
            float(s.get("B_gauss", DEFAULT_FIELD_GAUSS)),
            float(s.get("rabi_khz", 60.0)) * KHZ,
            float(s.get("gamma_hz", 0.0)) * TWO_PI,
        )

    def f_bar(self) -> float:
        return float(self.raw.get("f_bar_khz", DEFAULT_F_BAR / KHZ)) * KHZ

    def target(self) -> TargetSpec:
        t = self.raw.get("target")
        if isinstance(t, str):
            return builtin_targets()[t.upper()]
        if isinstance(t, dict) and "eigenstate" in t:
            f_bar = float(t.get("f_bar_khz", DEFAULT_F_BAR / KHZ)) * KHZ
            return eigenstate_target(self.system().with_dephasing(0.0), f_bar, t["eigenstate"])
        if isinstance(t, dict):
            return TargetSpec(str(t.get("name", "custom")), tuple(float(v) for v in t["populations"]))
        raise ConfigError(["target: missing"])

    def solver(self, threads: int = 1) -> OptimizerOptions:
        s = self.raw.get("solver", {})
        kwargs = {k: _SOLVER_FIELDS[k](v) for k, v in s.items() if k in _SOLVER_FIELDS}
        if "f0_khz" in s:
            kwargs["f0"] = float(s["f0_khz"]) * KHZ
        if "step_ns" in s:
            kwargs["step_size"] = float(s["step_ns"]) * 1e-9
        if "band_khz" in s:
            kwargs["band_min"] = float(s["band_khz"][0]) * KHZ
            kwargs["band_max"] = float(s["band_khz"][1]) * KHZ
        kwargs.setdefault("f0", self.f_bar())
        return OptimizerOptions(rng_seed=self.rng_seed, threads=threads, **kwargs)

    def duration(self) -> float:
        return float(self.raw["T_us"]) * 1e-6

    def durations(self) -> list[float]:
        return [float(v) * 1e-6 for v in self.raw["T_list_us"]]

    def tau_grid(self) -> np.ndarray:
        tg = self.raw.get("tau_grid", {"start_us": 0.0, "stop_us": 2.0, "step_ns": 2.0})
        start = float(tg.get("start_us", 0.0)) * 1e-6
        stop = float(tg["stop_us"]) * 1e-6
        step = float(tg["step_ns"]) * 1e-9
        n = int(round((stop - start) / step)) + 1
        return start + np.arange(n) * step

    def noise_grids(self):
        system = self.system()
        gammas = [TWO_PI * float(g) for g in self.raw.get("gamma_grid_hz", [20.0, 60.0, 110.0, 200.0])]
        fields = self.raw.get("b_grid_gauss")
        if fields is None:
            fields = [system.bias_field_gauss + 1e-3 * d for d in (-1.0, -0.5, 0.0, 0.5, 1.0)]
        return gammas, [float(b) for b in fields]
