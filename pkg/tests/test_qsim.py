import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hhlsim.errors import (
    DimensionError,
    ImpossibleOutcomeError,
    LeakageError,
    NotUnitaryError,
)
from hhlsim.gates import two_qubit_matrix
from hhlsim.qsim import (
    DensityOperator,
    PureState,
    SubsystemLayout,
    apply_unitary,
    average_trajectories,
    expectation,
    postselect,
    reduced_density,
)

import oracles as orc


def qubits(n):
    return SubsystemLayout.qubits(n)


def ket(layout, amps):
    return PureState(np.asarray(amps, dtype=complex), layout)


def test_layout_validation():
    with pytest.raises(DimensionError):
        SubsystemLayout((2, 4))
    with pytest.raises(DimensionError):
        SubsystemLayout((2, 2), ("a", "a"))
    lay = SubsystemLayout((2, 3, 3), ("Q1", "Q2", "Q3"))
    assert lay.total_dim == 18
    assert lay.computational_indices().size == 8


def test_x_flips_zero():
    out = apply_unitary(PureState.basis(qubits(1), [0]), orc.X, [0])
    assert np.allclose(out.amplitudes, [0, 1])


def test_cz_on_11():
    out = apply_unitary(PureState.basis(qubits(2), [1, 1]), two_qubit_matrix("CZ"), [0, 1])
    assert np.allclose(out.amplitudes, [0, 0, 0, -1])


def test_sqrt_iswap_on_01_matches_coupling_exponential():
    # oracle: exp(-i g t (s+s- + s-s+)) at g t = pi/4
    u = orc.exchange_propagator(1.0, 1 / 8)
    out = apply_unitary(PureState.basis(qubits(2), [0, 1]), two_qubit_matrix("SQRT_ISWAP"), [0, 1])
    assert np.allclose(out.amplitudes, u[:, 1], atol=1e-12)
    assert np.allclose(out.amplitudes, np.array([0, 1, -1j, 0]) / np.sqrt(2))


def test_apply_unitary_errors():
    s = PureState.basis(qubits(2), [0, 0])
    with pytest.raises(DimensionError):
        apply_unitary(s, np.eye(4), [0])
    with pytest.raises(NotUnitaryError):
        apply_unitary(s, np.array([[1, 1], [0, 1]]), [0])
    with pytest.raises(DimensionError):
        apply_unitary(s, np.eye(4), [0, 0])


@pytest.mark.parametrize("dims", [(2, 3, 2), (3, 2, 3), (2, 2, 2, 2)])
def test_embedding_matches_bruteforce(dims):
    rng = np.random.default_rng(11)
    layout = SubsystemLayout(dims)
    psi = orc.haar_state(layout.total_dim, rng)
    for i, j in itertools.permutations(range(len(dims)), 2):
        u = orc.random_unitary(dims[i] * dims[j], rng)
        got = apply_unitary(PureState(psi, layout), u, [i, j]).amplitudes
        want = orc.embed_bruteforce(u, list(dims), [i, j]) @ psi
        assert np.allclose(got, want, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_norm_preserved_over_random_circuits(seed):
    rng = np.random.default_rng(seed)
    layout = SubsystemLayout((2, 3, 2))
    s = PureState(orc.haar_state(layout.total_dim, rng), layout)
    for _ in range(20):
        i, j = rng.choice(3, 2, replace=False)
        s = apply_unitary(s, orc.random_unitary(layout.dims[i] * layout.dims[j], rng), [i, j])
    assert abs(s.norm2 - 1) < 1e-12


def test_postselect_plus_on_one():
    s = ket(qubits(1), np.array([1, 1]) / np.sqrt(2))
    out, p = postselect(s, 0, 1)
    assert np.allclose(out.amplitudes, [0, 1])
    assert p == pytest.approx(0.5, abs=1e-15)


def test_postselect_impossible():
    with pytest.raises(ImpossibleOutcomeError):
        postselect(PureState.basis(qubits(1), [0]), 0, 1)


def test_postselect_hhl_memory_for_b0():
    # oracle: C A^-1 b with b = |0>, written as ancilla (x) memory
    x = orc.hhl_memory([[1.5, 0.5], [0.5, 1.5]], [1, 0])
    rest = np.sqrt(1 - np.vdot(x, x).real)
    psi = np.concatenate([[rest, 0], x])  # |0>_a |0>_m + |1>_a x
    out, p = postselect(ket(qubits(2), psi), 0, 1)
    assert p == pytest.approx(0.625, abs=1e-12)
    mem = out.amplitudes[2:]
    assert np.allclose(mem, np.array([3, -1]) / np.sqrt(10), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_postselection_probabilities_sum_to_norm(seed):
    rng = np.random.default_rng(seed)
    layout = SubsystemLayout((3, 2, 3))
    psi = orc.haar_state(layout.total_dim, rng) * 0.9
    s = PureState(psi, layout)
    for site in range(3):
        total = 0.0
        for k in range(layout.dims[site]):
            try:
                total += postselect(s, site, k, renormalize=False)[1]
            except ImpossibleOutcomeError:
                pass
        assert total == pytest.approx(s.norm2, abs=1e-12)


def test_expectations():
    assert expectation(PureState.basis(qubits(1), [0]), "Z") == 1.0
    plus = ket(qubits(1), np.array([1, 1]) / np.sqrt(2))
    assert expectation(plus, "X") == pytest.approx(1.0, abs=1e-15)
    x = orc.hhl_memory([[1.5, 0.5], [0.5, 1.5]], [1, 0])
    mem = ket(qubits(1), x / np.linalg.norm(x))
    vals = [expectation(mem, p) for p in "XYZ"]
    assert np.allclose(vals, [-0.6, 0.0, 0.8], atol=1e-12)


def test_expectation_strict_leakage():
    layout = SubsystemLayout((3,))
    s = ket(layout, np.array([1, 0, 1e-2]) / np.sqrt(1 + 1e-4))
    expectation(s, "Z")
    with pytest.raises(LeakageError):
        expectation(s, "Z", strict=True)


def test_reduced_density_examples():
    rho = reduced_density(PureState.basis(qubits(2), [0, 1]), [0])
    assert np.allclose(rho.matrix, np.diag([1, 0]))
    bell = ket(qubits(2), np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert np.allclose(reduced_density(bell, [0]).matrix, np.eye(2) / 2)


def test_reduced_density_of_post_subroutine1_state_is_mixed():
    # beta1 |01>_r |1>_m - i beta2 |10>_r |0>_m, site order (m, r1, r2)
    layout = qubits(3)
    b = 1 / np.sqrt(2)
    psi = np.zeros(8, dtype=complex)
    psi[0b101] = b
    psi[0b010] = -1j * b
    rho = reduced_density(ket(layout, psi), [0])
    assert np.allclose(rho.matrix, np.eye(2) / 2, atol=1e-15)


def test_reduced_density_of_product_is_exact_projector():
    rng = np.random.default_rng(2)
    a, b = orc.haar_state(2, rng), orc.haar_state(3, rng)
    s = ket(SubsystemLayout((2, 3)), np.kron(a, b))
    assert np.array_equal(reduced_density(s, [0]).matrix.round(14), np.outer(a, a.conj()).round(14))
    assert np.allclose(reduced_density(s, [1]).matrix, np.outer(b, b.conj()), atol=1e-15)


def test_average_trajectories():
    lay = qubits(1)
    mix = average_trajectories([PureState.basis(lay, [0]), PureState.basis(lay, [1])], [0.5, 0.5])
    assert np.allclose(mix.matrix, np.eye(2) / 2)
    plus = ket(lay, np.array([1, 1]) / np.sqrt(2))
    assert np.allclose(average_trajectories([plus], [1.0]).matrix, np.full((2, 2), 0.5))
    with pytest.raises(ValueError):
        average_trajectories([])


def test_density_operator_bloch_and_validity():
    rho = DensityOperator(np.array([[0.5, 0.5], [0.5, 0.5]]), (2,))
    assert rho.is_valid()
    assert np.allclose(rho.bloch_vector(), [1, 0, 0])
    assert not DensityOperator(np.diag([1.2, -0.2]), (2,)).is_valid()
