import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crabchip.dynamics import (
    DEFAULT_STEP,
    MAX_SAMPLES,
    IntegrationError,
    IntegratorSettings,
    apply_superoperator,
    channel_superoperator,
    expm_propagator,
    final_state,
    lindblad_rhs,
    liouvillian,
    propagate,
    propagate_free,
    propagate_piecewise_constant,
    step_grid,
    unitary_propagator,
)
from crabchip.pulse import CrabPulse
from crabchip.spin_system import DEFAULT_F_BAR, KHZ, SystemParams, eigenstate_target, total_hamiltonian
from crabchip.states import InvalidStateError, basis_state, initial_state, pure_state


def random_density(rng, rank=5):
    a = rng.normal(size=(5, rank)) + 1j * rng.normal(size=(5, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def small_pulse(seed, duration=20e-6, scale=0.02):
    rng = np.random.default_rng(seed)
    coeffs = scale * (rng.uniform(-1, 1, 7) + 1j * rng.uniform(-1, 1, 7))
    return CrabPulse(DEFAULT_F_BAR, duration, coeffs)


def exact_constant(rho, system, f, t):
    vals, vecs = np.linalg.eigh(total_hamiltonian(system, f))
    u = vecs @ np.diag(np.exp(-1j * vals * t)) @ vecs.conj().T
    return u @ rho @ u.conj().T


# ---- right-hand side -------------------------------------------------------

def test_rhs_zero_without_dynamics():
    rho = random_density(np.random.default_rng(0))
    assert np.allclose(lindblad_rhs(rho, np.zeros((5, 5)), 0.0), 0)


def test_rhs_dephasing_leaves_diagonal_states():
    rho = np.diag([0.1, 0.2, 0.3, 0.25, 0.15]).astype(complex)
    assert np.allclose(lindblad_rhs(rho, np.zeros((5, 5)), 123.0), 0)


def test_rhs_single_coherence_decays_at_twice_gamma():
    gamma, c = 7.5, 0.2 - 0.1j
    rho = np.zeros((5, 5), dtype=complex)
    rho[0, 1], rho[1, 0] = c, np.conj(c)
    out = lindblad_rhs(rho, np.zeros((5, 5)), gamma)
    assert out[0, 1] == pytest.approx(-2 * gamma * c)
    mask = np.ones((5, 5), bool)
    mask[0, 1] = mask[1, 0] = False
    assert np.allclose(out[mask], 0)


def test_liouvillian_matches_rhs():
    rng = np.random.default_rng(1)
    rho = random_density(rng)
    h = total_hamiltonian(SystemParams(), DEFAULT_F_BAR + 50 * KHZ)
    gen = liouvillian(h, 2 * np.pi * 200)
    lhs = (gen @ rho.reshape(25)).reshape(5, 5)
    np.testing.assert_allclose(lhs, lindblad_rhs(rho, h, 2 * np.pi * 200), atol=1e-6)


# ---- propagate ---------------------------------------------------------------

def test_no_coupling_no_dephasing_is_static():
    system = SystemParams(rabi_rate=0.0)
    traj = propagate(initial_state(), DEFAULT_F_BAR, system, 10e-6)
    assert np.allclose(traj.states, initial_state(), atol=1e-14)


def test_constant_drive_matches_exponential_oracle_100us():
    system = SystemParams()
    traj = propagate(initial_state(), DEFAULT_F_BAR, system, 100e-6)
    exact = exact_constant(initial_state(), system, DEFAULT_F_BAR, 100e-6)
    assert np.max(np.abs(traj.final - exact)) < 1e-8


def test_eigenstate_is_stationary_under_constant_drive():
    system = SystemParams()
    target = eigenstate_target(system, DEFAULT_F_BAR, "ground")
    traj = propagate(target.full_target, DEFAULT_F_BAR, system, 80e-6)
    assert np.max(np.abs(traj.populations - target.b)) < 1e-6


def test_trajectory_sampling_and_populations():
    traj = propagate(initial_state(), small_pulse(2), SystemParams(), 20e-6)
    assert len(traj.times) <= MAX_SAMPLES
    assert traj.times[0] == 0 and traj.times[-1] == pytest.approx(20e-6)
    assert np.all(np.diff(traj.times) > 0)
    np.testing.assert_allclose(
        traj.populations, np.real(np.diagonal(traj.states, axis1=1, axis2=2)), atol=1e-12
    )


def test_explicit_stride():
    traj = propagate(initial_state(), DEFAULT_F_BAR, SystemParams(), 1e-6,
                     IntegratorSettings(sample_stride=100))
    assert len(traj.times) == 6


def test_trace_drift_long_run():
    pulse = small_pulse(3, duration=200e-6)
    traj = propagate(initial_state(), pulse, SystemParams(dephasing_rate=2 * np.pi * 200), 200e-6)
    assert np.max(np.abs(np.trace(traj.states, axis1=1, axis2=2) - 1)) < 1e-9
    herm = np.abs(traj.states - np.conj(np.swapaxes(traj.states, 1, 2)))
    assert np.max(herm) < 1e-9


def test_analytic_dephasing_law():
    gamma = 2 * np.pi * 2e3
    system = SystemParams(rabi_rate=0.0, dephasing_rate=gamma, level_energies=np.zeros(5))
    rho0 = random_density(np.random.default_rng(4))
    traj = propagate(rho0, 0.0, system, 50e-6)
    off = ~np.eye(5, dtype=bool)
    for t, rho in zip(traj.times, traj.states):
        expected = np.abs(rho0[off]) * np.exp(-2 * gamma * t)
        np.testing.assert_allclose(np.abs(rho[off]), expected, rtol=1e-8)


def test_populations_conserved_under_pure_dephasing():
    system = SystemParams(rabi_rate=0.0, dephasing_rate=2 * np.pi * 500)
    rho0 = random_density(np.random.default_rng(5))
    traj = propagate(rho0, DEFAULT_F_BAR, system, 30e-6)
    assert np.max(np.abs(traj.populations - np.diag(rho0).real)) < 1e-10


@given(
    seed=st.integers(0, 2**32 - 1),
    duration_us=st.floats(1.0, 20.0),
    gamma_hz=st.floats(0.0, 1000.0),
    scale=st.floats(0.0, 0.08),
)
@settings(max_examples=15, deadline=None)
def test_invariants_over_random_pulses(seed, duration_us, gamma_hz, scale):
    pulse = small_pulse(seed, duration_us * 1e-6, scale)
    system = SystemParams(dephasing_rate=2 * np.pi * gamma_hz)
    traj = propagate(initial_state(), pulse, system, pulse.duration)
    states = traj.states
    assert np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1)) < 1e-9
    assert np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2)))) < 1e-9
    assert np.min(np.linalg.eigvalsh(states)) > -1e-8


def test_step_halving_converged():
    pulse = small_pulse(6)
    system = SystemParams()
    a = final_state(initial_state(), pulse, system, 20e-6, DEFAULT_STEP)
    b = final_state(initial_state(), pulse, system, 20e-6, DEFAULT_STEP / 2)
    assert np.max(np.abs(np.diag(a).real - np.diag(b).real)) < 1e-8


def test_far_detuned_drive_shortens_step():
    system = SystemParams()
    n_near, h_near, _ = step_grid(DEFAULT_F_BAR, system, 10e-6, DEFAULT_STEP)
    assert h_near == pytest.approx(DEFAULT_STEP)
    n_far, h_far, _ = step_grid(DEFAULT_F_BAR + 1500 * KHZ, system, 10e-6, DEFAULT_STEP)
    assert h_far < DEFAULT_STEP / 2
    assert n_far * h_far == pytest.approx(10e-6)


def test_far_detuned_pulse_stays_positive():
    coeffs = np.array([0.03 + 0.01j, -0.08 - 0.04j, 0.02 + 0.02j, -0.02, -0.01 + 0.04j,
                       0.04 - 0.05j, 0.03 - 0.04j])
    pulse = CrabPulse(DEFAULT_F_BAR, 20e-6, coeffs)
    traj = propagate(initial_state(), pulse, SystemParams(), 20e-6)
    assert np.min(np.linalg.eigvalsh(traj.states)) > -1e-8


def test_invalid_initial_state_rejected():
    with pytest.raises(InvalidStateError):
        propagate(2 * initial_state(), DEFAULT_F_BAR, SystemParams(), 1e-6)


def test_integration_error_reports_time():
    def drive(t):
        return np.where(t > 1e-6, np.nan, DEFAULT_F_BAR)
    with pytest.raises(IntegrationError) as info:
        propagate(initial_state(), drive, SystemParams(), 2e-6, IntegratorSettings(sample_stride=1))
    assert 1e-6 <= info.value.time <= 1.01e-6


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(step_size=0)
    with pytest.raises(ValueError):
        IntegratorSettings(sample_stride=0)
    with pytest.raises(ValueError):
        IntegratorSettings(method="euler")


def test_expm_method_on_constant_drive():
    system = SystemParams(dephasing_rate=2 * np.pi * 100)
    a = propagate(initial_state(), DEFAULT_F_BAR, system, 5e-6)
    b = propagate(initial_state(), DEFAULT_F_BAR, system, 5e-6, IntegratorSettings(method="expm"))
    assert np.max(np.abs(a.final - b.final)) < 1e-10


# ---- exponential oracle ------------------------------------------------------

def test_expm_small_dt_near_identity():
    h = total_hamiltonian(SystemParams(), DEFAULT_F_BAR)
    for dt in (1e-12, 1e-13):
        superop = expm_propagator(h, 10.0, dt)
        assert np.max(np.abs(superop - np.eye(25))) < 1e8 * dt


def test_expm_closed_system_is_unitary():
    h = total_hamiltonian(SystemParams(), DEFAULT_F_BAR + 30 * KHZ)
    sv = np.linalg.svd(expm_propagator(h, 0.0, 3e-6), compute_uv=False)
    assert np.max(np.abs(sv - 1)) < 1e-10


def test_expm_preserves_trace():
    h = total_hamiltonian(SystemParams(), DEFAULT_F_BAR)
    rho = random_density(np.random.default_rng(7))
    out = apply_superoperator(expm_propagator(h, 2 * np.pi * 150, 7e-6), rho)
    assert abs(np.trace(out) - 1) < 1e-12


def test_expm_agrees_with_integrator_10us():
    system = SystemParams()
    superop = expm_propagator(total_hamiltonian(system, DEFAULT_F_BAR), 0.0, 10e-6)
    exact = apply_superoperator(superop, initial_state())
    traj = propagate(initial_state(), DEFAULT_F_BAR, system, 10e-6)
    assert np.max(np.abs(traj.final - exact)) < 1e-8


@pytest.mark.parametrize("gamma_hz", [0.0, 200.0])
def test_piecewise_constant_rk4_matches_exponentials(gamma_hz):
    pulse = small_pulse(8, duration=4e-6, scale=0.05)
    dt = DEFAULT_STEP
    n = int(round(pulse.duration / dt))
    f_values = pulse.eval_f((np.arange(n) + 0.5) * dt)
    system = SystemParams(dephasing_rate=2 * np.pi * gamma_hz)
    a = propagate_piecewise_constant(initial_state(), f_values, system, dt, "rk4")
    b = propagate_piecewise_constant(initial_state(), f_values, system, dt, "expm")
    assert np.max(np.abs(a - b)) < 1e-7


# ---- fast paths ------------------------------------------------------------

def test_state_vector_path_matches_density_path():
    pulse = small_pulse(9)
    system = SystemParams()
    fast = final_state(initial_state(), pulse, system, 20e-6)
    slow = propagate(initial_state(), pulse, system, 20e-6).final
    # two RK4 discretizations of the same equation: agree to truncation level
    assert np.max(np.abs(fast - slow)) < 1e-8


def test_mixed_state_uses_density_path():
    pulse = small_pulse(10)
    rho0 = random_density(np.random.default_rng(10))
    a = final_state(rho0, pulse, SystemParams(), 20e-6)
    b = propagate(rho0, pulse, SystemParams(), 20e-6).final
    assert np.max(np.abs(a - b)) < 1e-12


def test_unitary_and_channel_consistent():
    pulse = small_pulse(11, duration=5e-6)
    system = SystemParams()
    u = unitary_propagator(pulse, system, 5e-6)
    assert np.max(np.abs(u.conj().T @ u - np.eye(5))) < 1e-9
    rho0 = pure_state([1, 0.3j, 0.2, 0, 0.1])
    via_u = u @ rho0 @ u.conj().T
    via_channel = apply_superoperator(channel_superoperator(pulse, system, 5e-6), rho0)
    assert np.max(np.abs(via_u - via_channel)) < 1e-8


# ---- free evolution --------------------------------------------------------

def test_free_zero_delay_identity():
    rho = random_density(np.random.default_rng(12))
    assert np.array_equal(propagate_free(rho, SystemParams(dephasing_rate=5.0), 0.0), rho)


def test_free_diagonal_unchanged():
    rho = np.diag([0.2, 0.2, 0.2, 0.2, 0.2]).astype(complex)
    assert np.allclose(propagate_free(rho, SystemParams(dephasing_rate=50.0), 3e-6), rho)


def test_free_outer_coherence_quarter_turn():
    tau = 0.25 / 17292e3
    rho0 = pure_state([1, 0, 0, 0, 1])
    system = SystemParams(rabi_rate=0.0)
    closed = propagate_free(rho0, system, tau)
    phase = np.angle(closed[0, 4] / rho0[0, 4])
    assert abs(abs(phase) - np.pi / 2) < 1e-3
    integrated = propagate(rho0, 0.0, system, tau, IntegratorSettings(step_size=tau / 200)).final
    assert np.max(np.abs(integrated - closed)) < 1e-10


def test_free_dephasing_factor():
    gamma = 2 * np.pi * 1e3
    rho0 = pure_state([1, 1, 1, 1, 1])
    out = propagate_free(rho0, SystemParams(dephasing_rate=gamma), 10e-6)
    assert abs(out[1, 3]) == pytest.approx(abs(rho0[1, 3]) * np.exp(-2 * gamma * 10e-6), rel=1e-12)
    out2 = propagate_free(rho0, SystemParams(dephasing_rate=gamma), 10e-6, gamma=0.0)
    assert abs(out2[1, 3]) == pytest.approx(abs(rho0[1, 3]), rel=1e-12)


def test_free_rejects_negative_delay():
    with pytest.raises(ValueError):
        propagate_free(basis_state(0), SystemParams(), -1e-9)


def test_trajectory_csv(tmp_path):
    traj = propagate(initial_state(), DEFAULT_F_BAR, SystemParams(), 1e-6)
    path = tmp_path / "traj.csv"
    traj.to_csv(path, coherences=True)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("t_us,p1,p2,p3,p4,p5,re_rho12")
    assert len(lines) == len(traj.times) + 1
