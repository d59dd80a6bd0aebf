import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hhlsim import hhl
from hhlsim.errors import ImpossibleOutcomeError, InvalidInstanceError
from hhlsim.gates import Circuit, GateKind, circuit_unitary, dumps, loads
from hhlsim.qsim import PureState, postselect

import oracles as orc

A = hhl.DEFAULT_MATRIX
U1 = np.array([1, -1]) / np.sqrt(2)
U2 = np.array([1, 1]) / np.sqrt(2)


def inst(b, C=1.0, a=A):
    return hhl.LinearSystemInstance(a, b, C)


def test_instance_validation():
    with pytest.raises(InvalidInstanceError):
        inst([1, 0], a=[[1, 2], [0, 1]])
    with pytest.raises(InvalidInstanceError):
        inst([1, 1])
    with pytest.raises(InvalidInstanceError):
        inst([1, 0], C=1.5)
    with pytest.raises(InvalidInstanceError):
        inst([1, 0], a=[[-1, 0], [0, 2]])


def test_eigendecomposition():
    e = inst([1, 0]).eigen()
    assert np.allclose(e.lambdas, [1, 2])
    for j in range(2):
        assert np.allclose(A @ e.vectors[:, j], e.lambdas[j] * e.vectors[:, j], atol=1e-10)
    assert abs(np.sum(np.abs(e.betas) ** 2) - 1) < 1e-12


def test_classical_solve_examples():
    x, n = hhl.classical_solve(A, [1, 0])
    assert np.allclose(x, [0.9487, -0.3162], atol=1e-4)
    assert n == pytest.approx(0.7906, abs=1e-4)
    x, n = hhl.classical_solve(A, U1)
    assert np.allclose(x, U1) and n == pytest.approx(1.0)
    x, n = hhl.classical_solve(A, U2)
    assert np.allclose(x, U2) and n == pytest.approx(0.5)
    with pytest.raises(InvalidInstanceError):
        hhl.classical_solve([[1, 1], [1, 1]], [1, 0])


def test_rotation_angles():
    assert hhl.rotation_angle(1, 1) == np.pi
    assert hhl.rotation_angle(2, 1) == np.pi / 3
    assert hhl.rotation_angle(2, 2) == np.pi
    with pytest.raises(InvalidInstanceError):
        hhl.rotation_angle(1, 2)
    for r in np.linspace(0.01, 1, 37):
        t = hhl.rotation_angle(1.0, r)
        assert np.sin(t / 2) == pytest.approx(r, abs=1e-14)


def test_success_probability_examples():
    assert hhl.success_probability(inst([1, 0])) == pytest.approx(0.625, abs=1e-12)
    assert hhl.success_probability(inst(U1)) == pytest.approx(1.0, abs=1e-12)


def test_success_probability_bloch_average():
    # oracle: Monte Carlo mean of |beta1|^2 + |beta2|^2/4 over Haar states
    rng = np.random.default_rng(1)
    states = rng.normal(size=(100_000, 2)) + 1j * rng.normal(size=(100_000, 2))
    states /= np.linalg.norm(states, axis=1, keepdims=True)
    mc = np.mean(np.abs(states @ U1.conj()) ** 2 + np.abs(states @ U2.conj()) ** 2 / 4)
    assert mc == pytest.approx(0.625, abs=3e-3)
    grid = [hhl.success_probability(inst(s)) for s in states[:2000]]
    assert np.mean(grid) == pytest.approx(mc, abs=0.01)


def test_compile_structure():
    c = hhl.compile_circuit(inst([1, 0]))
    assert c.roles == {"memory": ("Q1",), "register": ("Q2", "Q3"), "ancilla": ("Q4",)}
    assert c.count() >= 15
    assert c.postselection == ("Q4", 1)
    assert {g.block for g in c.gates} == {"prep", "sub1", "sub2", "sub3"}
    assert any(g.kind == GateKind.VIRTUAL_Z for g in c.gates)
    ry4 = [g.angle for g in c.block("sub2").gates if g.kind == GateKind.RY]
    assert ry4[0] == pytest.approx(np.pi / 3)
    assert ry4[1] == pytest.approx(np.pi / 3)  # half of the 2pi/3 controlled rotation
    assert loads(dumps(c)).gates == c.gates


def test_compile_rejects_degenerate_and_large_c():
    with pytest.raises(InvalidInstanceError):
        hhl.compile_circuit(inst([1, 0], a=2 * np.eye(2)))
    with pytest.raises(InvalidInstanceError):
        hhl.LinearSystemInstance(A, [1, 0], 1.2)


def _block_unitary(circ, *blocks):
    return circuit_unitary(Circuit(circ.sites, [g for g in circ.gates if g.block in blocks]))


def test_state_after_subroutine1():
    # oracle: beta1 |01>_r |1>_m - i beta2 |10>_r |0>_m, site order Q1 Q2 Q3 Q4
    rng = np.random.default_rng(4)
    for _ in range(5):
        b = orc.haar_state(2, rng)
        c = hhl.compile_circuit(inst(b), prepare=False)
        gates = [g for g in c.gates if g.block == "sub1"]
        assert gates[-1].kind == GateKind.VIRTUAL_Z  # compiled-away -i
        u = circuit_unitary(Circuit(c.sites, gates[:-1]))
        out = u @ np.kron(b, np.eye(8)[0])
        beta = np.array([U1.conj() @ b, U2.conj() @ b])
        want = np.zeros(16, dtype=complex)
        want[0b1010] = beta[0]
        want[0b0100] = -1j * beta[1]
        assert abs(abs(np.vdot(want, out)) - 1) < 1e-12


def test_subroutine3_reverses_subroutine1_on_inputs():
    c = hhl.compile_circuit(inst([0.6, 0.8j]), prepare=False)
    u = _block_unitary(c, "sub1", "sub3")
    block = u[np.ix_([0, 8], [0, 8])]
    assert np.allclose(block / block[0, 0], np.eye(2), atol=1e-12)
    assert abs(abs(block[0, 0]) - 1) < 1e-12


@pytest.mark.parametrize("b,p", [([1, 0], 0.625), (U1, 1.0), (U2, 0.25)])
def test_run_ideal_examples(b, p):
    out = hhl.run(inst(b))
    x, _ = hhl.classical_solve(A, b)
    assert out.success_probability == pytest.approx(p, abs=1e-12)
    assert abs(abs(np.vdot(x, out.memory)) - 1) < 1e-12
    assert out.fidelity == pytest.approx(1.0, abs=1e-12)
    assert out.register_cleared


def test_run_matches_postselect_probability():
    b = np.array([0.6, 0.8j])
    c = hhl.compile_circuit(inst(b))
    c.postselection = None
    psi = circuit_unitary(c)[:, 0]
    _, p = postselect(PureState(psi, c.layout), "Q4", 1)
    assert p == pytest.approx(hhl.success_probability(inst(b)), abs=1e-9)


def test_postselected_map_is_c_times_inverse():
    for C in (1.0, 0.5):
        c = hhl.compile_circuit(inst([1, 0], C), prepare=False)
        u = circuit_unitary(Circuit(c.sites, c.gates))
        # memory in -> memory out with register |00> and ancilla |0> -> |1>
        m = np.array([[u[(mo << 3) | 1, mi << 3] for mi in (0, 1)] for mo in (0, 1)])
        target = C * np.linalg.inv(A)
        phase = m[0, 0] / target[0, 0]
        assert abs(abs(phase) - 1) < 1e-12
        assert np.allclose(m, phase * target, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_success_scales_as_c_squared(seed, C):
    b = orc.haar_state(2, np.random.default_rng(seed))
    p1 = hhl.run(inst(b)).success_probability
    pc = hhl.run(inst(b, C)).success_probability
    assert pc == pytest.approx(C ** 2 * p1, abs=1e-12)


def test_general_hermitian_matrix():
    a = np.array([[2.0, 0.3 - 0.4j], [0.3 + 0.4j, 1.2]])
    rng = np.random.default_rng(8)
    for _ in range(10):
        b = orc.haar_state(2, rng)
        lam_min = np.linalg.eigvalsh(a)[0]
        i = hhl.LinearSystemInstance(a, b, lam_min)
        out = hhl.run(i)
        assert out.fidelity == pytest.approx(1.0, abs=1e-9)
        assert out.success_probability == pytest.approx(hhl.success_probability(i), abs=1e-9)


def test_c_zero_is_impossible():
    with pytest.raises(ImpossibleOutcomeError):
        hhl.run(inst([1, 0], 0.0))


def test_device_backends():
    i = inst([1, 0])
    ideal = hhl.run(i)
    dev = hhl.run(i, "device")
    noisy = hhl.run(i, "device-noisy", seed=3, trajectories=300)
    assert ideal.fidelity >= dev.fidelity > 0.98
    assert dev.fidelity > noisy.fidelity > 0.8
    assert not noisy.register_cleared
    again = hhl.run(i, "device-noisy", seed=3, trajectories=300)
    assert np.array_equal(again.memory_rho, noisy.memory_rho)


def test_shots_reconstruct_memory():
    out = hhl.run(inst([1, 0]), shots=20_000, seed=2)
    assert out.counts is not None
    assert out.fidelity > 0.99
    assert out.success_probability == pytest.approx(0.625, abs=0.02)
