import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hhlsim.errors import ConnectivityError, SimulationError
from hhlsim.gates import (
    Circuit,
    GateKind,
    GateSpec,
    circuit_unitary,
    controlled_iswap_combo,
    controlled_ry_decomposition,
    controlled_ry_matrix,
    dumps,
    equal_up_to_phase,
    hadamard_as_native,
    loads,
    reversed_circuit,
    rotation_matrix,
    two_qubit_matrix,
)
from hhlsim.qsim import is_unitary

import oracles as orc

angles = st.floats(-4 * np.pi, 4 * np.pi, allow_nan=False)


@given(st.sampled_from("XYZ"), angles)
def test_rotations_match_expm_and_are_unitary(axis, theta):
    ref = {"X": orc.rx, "Y": orc.ry, "Z": orc.rz}[axis](theta)
    u = rotation_matrix(axis, theta)
    assert np.allclose(u, ref, atol=1e-12)
    assert is_unitary(u)


def test_rotation_examples():
    assert np.allclose(rotation_matrix("Y", np.pi) @ [1, 0], [0, 1])
    assert np.allclose(rotation_matrix("Y", np.pi / 3) @ [1, 0], [np.sqrt(3) / 2, 0.5])
    assert np.allclose(rotation_matrix("Z", 0.7) @ rotation_matrix("Z", -0.7), np.eye(2))
    with pytest.raises(ValueError):
        rotation_matrix("X", np.inf)


def test_two_qubit_matrices():
    sq, isw = two_qubit_matrix("SQRT_ISWAP"), two_qubit_matrix("ISWAP")
    assert np.allclose((sq @ sq)[1:3, 1:3], isw[1:3, 1:3])
    assert np.allclose(isw @ [0, 1, 0, 0], [0, 0, -1j, 0])
    assert np.allclose(sorted(np.linalg.eigvalsh(two_qubit_matrix("CZ").real)), [-1, 1, 1, 1])
    # sign convention from the coupling term
    assert np.allclose(sq, orc.exchange_propagator(2.0, 1 / 16), atol=1e-12)
    for k in ("CZ", "SQRT_ISWAP", "ISWAP"):
        assert is_unitary(two_qubit_matrix(k))


def test_gatespec_validation():
    with pytest.raises(ValueError):
        GateSpec(GateKind.CZ, ("Q1",))
    with pytest.raises(ValueError):
        GateSpec(GateKind.RY, ("Q1",))  # missing angle
    with pytest.raises(ValueError):
        GateSpec(GateKind.VIRTUAL_Z, ("Q1",), 0.1, 5.0)
    with pytest.raises(ValueError):
        GateSpec(GateKind.RX, ("Q1",), 0.1, 0.0)
    assert GateSpec(GateKind.VIRTUAL_Z, ("Q1",), 0.1).duration == 0.0


def test_circuit_connectivity():
    with pytest.raises(ConnectivityError):
        Circuit(("Q1", "Q2", "Q3"), [GateSpec(GateKind.CZ, ("Q1", "Q3"))])
    with pytest.raises(ConnectivityError):
        controlled_iswap_combo("Q1", "Q3", "Q4")
    with pytest.raises(ConnectivityError):
        controlled_ry_decomposition(1.0, "Q1", "Q3", ("Q1", "Q2", "Q3"))


def _combo_matrix():
    return circuit_unitary(controlled_iswap_combo("Q1", "Q2", "Q3", sites=("Q1", "Q2", "Q3")))


def test_combo_against_oracle_product():
    sq = two_qubit_matrix("SQRT_ISWAP")
    oracle = orc.kron(orc.I2, sq) @ orc.kron(np.diag([1, 1, 1, -1]), orc.I2) @ orc.kron(orc.I2, sq)
    m = _combo_matrix()
    assert np.allclose(m, oracle, atol=1e-12)
    # |0>|01> -> -i|0>|10>
    assert np.allclose(m[:, 0b001], -1j * np.eye(8)[0b010])
    # |1>|01> -> +|1>|01> (oracle diagonal phase is exactly 1)
    assert np.allclose(m[:, 0b101], np.eye(8)[0b101])
    assert abs(abs(m[0, 0]) - 1) < 1e-12


def test_combo_random_states():
    rng = np.random.default_rng(5)
    m = _combo_matrix()
    iswap_ab = np.eye(4, dtype=complex)
    iswap_ab[1:3, 1:3] = [[0, -1j], [-1j, 0]]
    for _ in range(100):
        ab = orc.haar_state(4, rng)
        out0 = m @ np.kron([1, 0], ab)
        assert abs(abs(np.vdot(np.kron([1, 0], iswap_ab @ ab), out0)) - 1) < 1e-9
        sub = np.zeros(4, dtype=complex)
        sub[1] = 1.0
        out1 = (m @ np.kron([0, 1], sub)).reshape(2, 4)[1]
        assert abs(out1[2]) ** 2 <= 1e-18


@settings(max_examples=40, deadline=None)
@given(angles)
def test_controlled_ry_decomposition_exact(theta):
    u = circuit_unitary(controlled_ry_decomposition(theta, "Q3", "Q4"))
    assert equal_up_to_phase(u, controlled_ry_matrix(theta)) <= 1e-10
    back = circuit_unitary(controlled_ry_decomposition(-theta, "Q3", "Q4"))
    assert equal_up_to_phase(back @ u, np.eye(4)) <= 1e-10


def test_controlled_ry_examples():
    u = circuit_unitary(controlled_ry_decomposition(2 * np.pi / 3, "Q3", "Q4"))
    want = np.kron([0, 1], [np.cos(np.pi / 3), np.sin(np.pi / 3)])
    assert np.allclose(u @ np.kron([0, 1], [1, 0]), want, atol=1e-12)
    psi = orc.haar_state(2, np.random.default_rng(0))
    assert np.allclose(u @ np.kron([1, 0], psi), np.kron([1, 0], psi), atol=1e-12)
    assert equal_up_to_phase(circuit_unitary(controlled_ry_decomposition(0.0, "Q3", "Q4")), np.eye(4)) < 1e-12
    kinds = {g.kind for g in controlled_ry_decomposition(1.0, "Q3", "Q4").gates}
    assert kinds <= {GateKind.CZ, GateKind.RY, GateKind.H}


def test_circuit_unitary_examples():
    assert np.allclose(circuit_unitary(Circuit(("q0",))), np.eye(2))
    hh = Circuit(("q0",), [GateSpec(GateKind.H, ("q0",)), GateSpec(GateKind.H, ("q0",))])
    assert np.allclose(circuit_unitary(hh), np.eye(2))
    with pytest.raises(SimulationError):
        circuit_unitary(Circuit(("q0",), [], ("q0", 1)))


def test_hadamard_native_order():
    u = circuit_unitary(Circuit(("q",), hadamard_as_native("q")))
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert equal_up_to_phase(u, h) < 1e-12


def _random_circuit(rng, n=12):
    sites = ("Q1", "Q2", "Q3", "Q4")
    gates = []
    for _ in range(n):
        k = rng.choice(["RX", "RY", "VIRTUAL_Z", "CZ", "H"])
        if k == "CZ":
            i = int(rng.integers(3))
            gates.append(GateSpec(k, sites[i:i + 2], duration=float(rng.uniform(10, 40))))
        elif k == "H":
            gates.append(GateSpec(k, (sites[rng.integers(4)],), duration=30.0, block="b"))
        else:
            dur = 0.0 if k == "VIRTUAL_Z" else float(rng.uniform(1, 300))
            gates.append(GateSpec(k, (sites[rng.integers(4)],), float(rng.normal()), dur))
    return Circuit(sites, gates, None, {"memory": ("Q1",)})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_reversal_is_adjoint(seed):
    c = _random_circuit(np.random.default_rng(seed))
    assert np.allclose(circuit_unitary(reversed_circuit(c)), circuit_unitary(c).conj().T, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_text_roundtrip(seed):
    c = _random_circuit(np.random.default_rng(seed))
    c.postselection = ("Q4", 1)
    back = loads(dumps(c))
    assert back.gates == c.gates
    assert back.postselection == c.postselection
    assert back.roles == c.roles
    assert dumps(back) == dumps(c)


def test_loads_comments_and_errors():
    text = "# header\nsites Q1 Q2\nRY 0.5 Q1 30.0 prep  # comment\nCZ Q1 Q2 25.0\n"
    c = loads(text)
    assert c.count() == 2 and c.gates[0].block == "prep"
    with pytest.raises(ValueError, match="line 2"):
        loads("sites Q1\nRY Q1 30.0\n")
    with pytest.raises(ValueError):
        loads("RY 0.1 Q1 30.0\n")
