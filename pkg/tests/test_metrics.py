import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crabchip.experiments.targets import TWO_LEVEL_TARGETS, builtin_targets, get_target
from crabchip.metrics import FidelityDomainError, state_error, uhlmann_fidelity
from crabchip.states import TargetSpec, basis_state, initial_state, pure_state


def random_density(seed, rank=5):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(5, rank)) + 1j * rng.normal(size=(5, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_error_of_initial_state_for_each_target():
    for name, target in builtin_targets().items():
        expected = 0.5 * (abs(1 - target.b[0]) + target.b[1:].sum())
        assert state_error(initial_state(), target) == pytest.approx(expected, abs=1e-15)


def test_error_accepts_population_vectors():
    target = get_target("a")
    assert state_error(np.array([0.5, 0, 0, 0, 0.5]), target) == 0.0
    assert state_error(np.array([0, 0, 1.0, 0, 0]), [0, 0, 0, 0, 1.0]) == 1.0


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_error_bounded(seed):
    rho = random_density(seed)
    for target in builtin_targets().values():
        assert 0.0 <= state_error(rho, target) <= 1.0


def test_fidelity_initial_vs_two_level_targets():
    # |1><1| against diag(1/2, ...) gives sqrt(1/2)
    for name in ("A", "B", "D"):
        f = uhlmann_fidelity(initial_state(), get_target(name).diagonal_state())
        assert f == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert uhlmann_fidelity(initial_state(), get_target("C").diagonal_state()) == pytest.approx(0, abs=1e-12)


def test_fidelity_pure_states_is_overlap():
    a = np.array([1, 1j, 0, 0.5, 0])
    b = np.array([0.2, 1, 0.3j, 0, 1])
    expected = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    assert uhlmann_fidelity(pure_state(a), pure_state(b)) == pytest.approx(expected, abs=1e-12)


@given(st.integers(0, 10_000), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_fidelity_symmetric_and_bounded(s1, s2):
    a, b = random_density(s1), random_density(s2, rank=2)
    fab, fba = uhlmann_fidelity(a, b), uhlmann_fidelity(b, a)
    assert 0 <= fab <= 1
    assert fab == pytest.approx(fba, abs=1e-7)
    assert uhlmann_fidelity(a, a) == pytest.approx(1, abs=1e-7)


def test_fidelity_domain_errors():
    bad = basis_state(0) - 0.1 * basis_state(1)
    with pytest.raises(FidelityDomainError):
        uhlmann_fidelity(bad, initial_state())
    non_herm = initial_state().copy()
    non_herm[0, 1] = 0.3
    with pytest.raises(FidelityDomainError):
        uhlmann_fidelity(initial_state(), non_herm)


def test_builtin_targets():
    targets = builtin_targets()
    assert list(targets) == list("ABCDEFGHI")
    for t in targets.values():
        assert abs(t.b.sum() - 1) < 1e-12
    for name, levels in TWO_LEVEL_TARGETS.items():
        assert set(np.flatnonzero(targets[name].b)) == set(levels)
    with pytest.raises(KeyError):
        get_target("Z")


def test_target_validation():
    with pytest.raises(ValueError):
        TargetSpec("x", (0.5, 0.5, 0.1, 0, 0))
    with pytest.raises(ValueError):
        TargetSpec("x", (1.5, -0.5, 0, 0, 0))
    with pytest.raises(ValueError):
        TargetSpec("x", (1.0, 0, 0, 0))


def test_target_dict_round_trip_with_state():
    state = pure_state([1, 1j, 0, 0, 0])
    t = TargetSpec("p", (0.5, 0.5, 0, 0, 0), state)
    back = TargetSpec.from_dict(t.to_dict())
    np.testing.assert_allclose(back.full_target, state)
    assert back.populations == t.populations
