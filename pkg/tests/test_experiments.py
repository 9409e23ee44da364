import json

import numpy as np
import pytest

from crabchip.experiments.cli import main
from crabchip.experiments.config import ConfigError, ExperimentConfig
from crabchip.experiments.runner import RunManifest, hold_test, run, write_csv
from crabchip.pulse import CrabPulse
from crabchip.spin_system import DEFAULT_F_BAR, KHZ, SystemParams, eigenstate_target

QUICK_SOLVER = {"n_f": 2, "starts": 1, "max_evals": 20}


def cfg(**raw):
    return ExperimentConfig.from_dict(raw)


def test_config_round_trip():
    c = cfg(kind="optimize", target="B", T_us=30, system={"B_gauss": 6.18, "gamma_hz": 20},
            solver={"n_f": 5, "band_khz": [4000, 4700], "f_target": 0.01}, rng_seed=9)
    again = ExperimentConfig.from_dict(json.loads(c.dumps()))
    assert again == c
    assert again.system().bias_field_gauss == 6.18
    assert again.system().dephasing_rate == pytest.approx(2 * np.pi * 20)
    opts = again.solver()
    assert opts.n_f == 5 and opts.rng_seed == 9 and opts.f_target == 0.01
    assert opts.band_min == pytest.approx(4000 * KHZ)
    assert again.duration() == pytest.approx(30e-6)


def test_config_collects_every_problem():
    with pytest.raises(ConfigError) as info:
        cfg(kind="optimize", T_us=-1, system={"B_gauss": 200, "foo": 1},
            solver={"n_f": "seven", "bogus": 1}, rng_seed=-3)
    text = "\n".join(info.value.problems)
    for fragment in ("target: required", "T_us", "system.foo", "system.B_gauss",
                     "solver.n_f", "solver.bogus", "rng_seed"):
        assert fragment in text
    assert len(info.value.problems) >= 7


@pytest.mark.parametrize("raw, fragment", [
    ({"kind": "nope"}, "kind"),
    ({"kind": "optimize", "target": "Q", "T_us": 1}, "unknown built-in"),
    ({"kind": "optimize", "target": {"populations": [1, 0]}, "T_us": 1}, "five numbers"),
    ({"kind": "optimize", "target": {"populations": [0.5, 0.6, 0, 0, 0]}, "T_us": 1}, "sum"),
    ({"kind": "optimize", "target": {"eigenstate": "middle"}, "T_us": 1}, "eigenstate"),
    ({"kind": "envelope", "target": "A", "pulse_file": "missing.json"}, "does not exist"),
    ({"kind": "reproduce", "tag": "fig9"}, "tag"),
    ({"kind": "hold-test", "T_us": 20}, "eigenstate"),
    ({"kind": "sweep-time", "target": "A", "T_list_us": []}, "T_list_us"),
    ({"kind": "interferometer", "pulses": {}, "tau_grid": {"stop_us": 1}}, "tau_grid"),
    ({"kind": "reproduce", "tag": "fig4", "refine": {"rounds": "two"}}, "refine.rounds"),
    ({"kind": "reproduce", "tag": "fig4", "refine": {"budget": 1}}, "refine.budget"),
    ({"kind": "reproduce", "tag": "fig4", "refine": []}, "refine"),
])
def test_config_errors(raw, fragment):
    with pytest.raises(ConfigError, match=fragment):
        ExperimentConfig.from_dict(raw)


def test_eigenstate_target_in_config():
    c = cfg(kind="optimize", target={"eigenstate": "highest"}, T_us=20)
    t = c.target()
    assert t.full_target is not None
    np.testing.assert_allclose(t.b, eigenstate_target(SystemParams(), DEFAULT_F_BAR, "highest").b)


def test_tau_grid():
    c = cfg(kind="interferometer", pulses={"x": __file__},
            tau_grid={"start_us": 0.0, "stop_us": 0.1, "step_ns": 2})
    assert c.tau_grid().size == 51


def test_write_csv_formats(tmp_path):
    write_csv(tmp_path / "x.csv", ["a", "b", "c"], [(1, 0.5, "z")])
    line = (tmp_path / "x.csv").read_text().splitlines()[1]
    assert line == "1.00000000000000000e+00,5.00000000000000000e-01,z"


def test_breit_rabi_run_and_manifest(tmp_path):
    manifest = run(cfg(kind="breit-rabi"), tmp_path / "br")
    assert manifest.summary["max_deviation_khz"] < 2.0
    loaded = RunManifest.load(tmp_path / "br")
    assert loaded.verify() == []
    (tmp_path / "br" / "breit_rabi.csv").write_text("tampered")
    assert loaded.verify() == ["breit_rabi.csv"]


def test_failed_run_leaves_nothing(tmp_path, monkeypatch):
    from crabchip.experiments import runner

    def boom(config, out, threads):
        (out / "half.csv").write_text("x")
        raise RuntimeError("fail")

    monkeypatch.setitem(runner._HANDLERS, "breit-rabi", boom)
    with pytest.raises(RuntimeError):
        run(cfg(kind="breit-rabi"), tmp_path / "out")
    assert list(tmp_path.iterdir()) == []


def test_refuses_foreign_directory(tmp_path):
    (tmp_path / "keep.txt").write_text("mine")
    with pytest.raises(ConfigError):
        run(cfg(kind="breit-rabi"), tmp_path)


def test_optimize_run_is_deterministic(tmp_path):
    c = cfg(kind="optimize", target="D", T_us=5, solver=QUICK_SOLVER, rng_seed=3)
    a = run(c, tmp_path / "a")
    b = run(c, tmp_path / "b")
    for name in ("optimize_pulse.json", "optimize_history.csv", "optimize_pulse_trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.summary["epsilon"] == b.summary["epsilon"]


def test_simulate_envelope_and_interferometer_runs(tmp_path):
    pulse = CrabPulse(DEFAULT_F_BAR, 2e-6, [0.02 + 0.01j])
    pulse.save(tmp_path / "p.json")
    sim = run(cfg(kind="simulate", T_us=2, pulse_file=str(tmp_path / "p.json"), target="A"),
              tmp_path / "sim")
    assert abs(sum(sim.summary["final_populations"]) - 1) < 1e-9
    env = run(ExperimentConfig.from_dict(
        {"kind": "envelope", "target": "A", "pulse_file": "p.json",
         "gamma_grid_hz": [20, 200], "b_grid_gauss": [6.179]}, base_dir=tmp_path), tmp_path / "env")
    assert env.summary["epsilon_min"] <= env.summary["epsilon_nominal"] <= env.summary["epsilon_max"]
    ifm = run(ExperimentConfig.from_dict(
        {"kind": "interferometer", "pulses": {"A": "p.json"},
         "tau_grid": {"stop_us": 0.2, "step_ns": 2}}, base_dir=tmp_path), tmp_path / "ifm")
    assert (tmp_path / "ifm" / "fringe_A.csv").is_file()
    assert len(ifm.summary["rows"]) == 1


def test_baseline_run(tmp_path):
    m = run(cfg(kind="constant-baseline", target="A", T_list_us=[0, 1, 2]), tmp_path / "b")
    lines = (tmp_path / "b" / "baseline.csv").read_text().splitlines()
    assert len(lines) == 4
    assert m.summary["min_epsilon"] <= 0.5


def test_hold_test_of_exact_eigenstate_pulse_free_drift():
    system = SystemParams()
    target = eigenstate_target(system, DEFAULT_F_BAR, "ground")
    pulse = CrabPulse.constant(DEFAULT_F_BAR, 2e-6)
    result = hold_test(pulse, target, system, DEFAULT_F_BAR, 10e-6)
    assert result.times[-1] == pytest.approx(12e-6)
    assert result.hold_start_index > 0
    assert result.populations.shape == (result.times.size, 5)


# ---- CLI ---------------------------------------------------------------------

def test_cli_breit_rabi(tmp_path, capsys):
    assert main(["breit-rabi", "--out", str(tmp_path / "o")]) == 0
    assert "max_deviation_khz" in capsys.readouterr().out


def test_cli_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"target": "A"}))
    assert main(["optimize", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "T_us" in capsys.readouterr().err
    assert main(["optimize", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("{")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_cli_runtime_exit_code(tmp_path, monkeypatch):
    from crabchip.experiments import runner

    def boom(config, out, threads):
        raise RuntimeError("numerical failure")

    monkeypatch.setitem(runner._HANDLERS, "breit-rabi", boom)
    assert main(["breit-rabi", "--out", str(tmp_path / "o")]) == 1


def test_cli_seed_and_set(tmp_path):
    code = main(["optimize", "--out", str(tmp_path / "o"), "--seed", "5",
                 "--set", "target=\"D\"", "--set", "T_us=3",
                 "--set", "solver=" + json.dumps(QUICK_SOLVER)])
    assert code == 0
    manifest = RunManifest.load(tmp_path / "o")
    assert manifest.config["rng_seed"] == 5
    assert manifest.config["T_us"] == 3
