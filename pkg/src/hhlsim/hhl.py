"""Two-dimensional HHL: instance handling, circuit compilation and execution.

Chain roles: memory Q1 holds ``b`` and later the solution, register Q2Q3 holds
the eigenvalue label (``01`` for the smaller eigenvalue, ``10`` for the larger),
ancilla Q4 receives the eigenvalue-dependent rotation and is postselected on |1>.

The eigenvalue "estimation" is pre-compiled: a basis change on the memory
followed by a controlled-iSWAP moves a single register excitation to the
position labelling the eigencomponent.  No ``exp(-iAt)`` is simulated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .device import DeviceParams, NoiseModel, TrajectoryBatch, gate_duration, native_gate
from .errors import ImpossibleOutcomeError, InvalidInstanceError, SimulationError
from .gates import (
    Circuit,
    GateKind,
    GateSpec,
    controlled_iswap_combo,
    controlled_ry_decomposition,
    equal_up_to_phase,
    hadamard_as_native,
    inverse_gate,
)
from .qsim import IMPOSSIBLE_PROB, SubsystemLayout, embed_operator, reduced_density_matrix

SITES = ("Q1", "Q2", "Q3", "Q4")
ROLES = {"memory": ("Q1",), "register": ("Q2", "Q3"), "ancilla": ("Q4",)}
DEFAULT_MATRIX = np.array([[1.5, 0.5], [0.5, 1.5]])
BACKENDS = {"ideal": "ideal", "ideal-matrix": "ideal", "device": "device",
            "device-noiseless": "device", "device-noisy": "device-noisy"}


@dataclass(frozen=True)
class Eigendecomposition:
    lambdas: np.ndarray   # ascending
    vectors: np.ndarray   # columns u_1, u_2; first nonzero entry real positive
    betas: np.ndarray     # <u_j|b>


@dataclass(frozen=True, eq=False)
class LinearSystemInstance:
    A: np.ndarray
    b: np.ndarray
    C: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.A, dtype=complex)
        b = np.asarray(self.b, dtype=complex).reshape(-1)
        if a.shape != (2, 2) or b.shape != (2,):
            raise InvalidInstanceError("A must be 2x2 and b a 2-vector")
        if not np.allclose(a, a.conj().T, atol=1e-12, rtol=0):
            raise InvalidInstanceError("A is not Hermitian")
        if abs(np.linalg.norm(b) - 1) > 1e-12:
            raise InvalidInstanceError(f"|b| = {np.linalg.norm(b):.15g}, expected 1")
        lam = np.linalg.eigvalsh(a)
        if lam[0] <= 0:
            raise InvalidInstanceError("A must be positive definite")
        if not 0 <= self.C <= lam[0] * (1 + 1e-12):
            raise InvalidInstanceError(f"C = {self.C} outside [0, lambda_min = {lam[0]}]")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", float(self.C))

    @classmethod
    def from_bloch(cls, theta: float, phi: float, A=DEFAULT_MATRIX, C: float = 1.0):
        b = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
        return cls(A, b, C)

    def eigen(self) -> Eigendecomposition:
        lam, vec = np.linalg.eigh(self.A)
        for j in range(2):
            k = int(np.argmax(np.abs(vec[:, j]) > 1e-12))
            vec[:, j] *= np.exp(-1j * np.angle(vec[k, j]))
        return Eigendecomposition(lam, vec, vec.conj().T @ self.b)


def classical_solve(A, b) -> tuple[np.ndarray, float]:
    """Normalized ``A^-1 b`` and ``|A^-1 b|``."""
    A = np.asarray(A, dtype=complex)
    if abs(np.linalg.det(A)) < 1e-14 * max(1.0, np.abs(A).max() ** 2):
        raise InvalidInstanceError("A is singular")
    x = np.linalg.solve(A, np.asarray(b, dtype=complex))
    n = float(np.linalg.norm(x))
    return x / n, n


def rotation_angle(lam: float, C: float) -> float:
    """``theta`` with ``R_Y(theta)|0>`` having |1> amplitude ``C/lam``."""
    if lam <= 0:
        raise InvalidInstanceError("eigenvalue must be positive")
    ratio = C / lam
    if ratio > 1 + 1e-12 or ratio < 0:
        raise InvalidInstanceError(f"C/lambda = {ratio} is not a valid amplitude")
    ratio = min(ratio, 1.0)
    if ratio < 0.5:
        return float(2 * np.arcsin(ratio))
    # same angle; this form is exact at the round values (pi/3, pi/2, pi)
    return float(np.arccos(1 - 2 * ratio * ratio))


def success_probability(instance: LinearSystemInstance) -> float:
    return float(instance.C ** 2 * classical_solve(instance.A, instance.b)[1] ** 2)


def _zyz(w: np.ndarray) -> tuple[float, float, float]:
    """Angles with ``w = e^{i a} R_Z(alpha) R_Y(beta) R_Z(gamma)``; returns (alpha, beta, gamma)."""
    v = w / np.sqrt(np.linalg.det(w))
    beta = 2 * np.arctan2(abs(v[1, 0]), abs(v[0, 0]))
    plus = 2 * np.angle(v[1, 1]) if abs(v[1, 1]) > 1e-12 else 0.0
    minus = 2 * np.angle(v[1, 0]) if abs(v[1, 0]) > 1e-12 else 0.0
    return (plus + minus) / 2, float(beta), (plus - minus) / 2


def eigenbasis_gates(instance: LinearSystemInstance, block: str, durations) -> list[GateSpec]:
    """Native gates for ``W = |1><u_1| + |0><u_2|`` on the memory (H for the default A)."""
    eig = instance.eigen()
    u1, u2 = eig.vectors[:, 0], eig.vectors[:, 1]
    w = np.array([u2.conj(), u1.conj()])
    t = durations("Q1", np.pi / 2)
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    if equal_up_to_phase(w, h) < 1e-12:
        return hadamard_as_native("Q1", t, block)
    alpha, beta, gamma = _zyz(w)
    return [GateSpec(GateKind.VIRTUAL_Z, ("Q1",), gamma, 0.0, block),
            GateSpec(GateKind.RY, ("Q1",), beta, durations("Q1", beta), block),
            GateSpec(GateKind.VIRTUAL_Z, ("Q1",), alpha, 0.0, block)]


def compile_circuit(instance: LinearSystemInstance, params: DeviceParams | None = None,
                    prepare: bool = True) -> Circuit:
    """Full circuit: input preparation, then the three subroutines.

    Gate durations come from ``params`` (defaults when omitted).  The two
    ``VIRTUAL_Z(-pi/2)`` gates on the memory cancel the ``-i`` picked up by the
    exchanged branch of each controlled-iSWAP.
    """
    params = params or DeviceParams()
    eig = instance.eigen()
    if abs(eig.lambdas[1] - eig.lambdas[0]) < 1e-9:
        raise InvalidInstanceError("degenerate spectrum: eigenvalues cannot be told apart")
    if instance.C > eig.lambdas[0] * (1 + 1e-12):
        raise InvalidInstanceError("C exceeds the smallest eigenvalue")

    dur = params.rotation_duration
    two = {k: gate_duration(k, p, params) for k, p in
           [(GateKind.SQRT_ISWAP, ("Q2", "Q3")), (GateKind.CZ, ("Q3", "Q4"))]}
    combo_dur = {GateKind.SQRT_ISWAP: two[GateKind.SQRT_ISWAP],
                 GateKind.CZ: gate_duration(GateKind.CZ, ("Q1", "Q2"), params)}
    circ = Circuit(SITES, roles=dict(ROLES))

    if prepare:
        b0, b1 = instance.b
        theta = 2 * np.arctan2(abs(b1), abs(b0))
        phi = float(np.angle(b1) - np.angle(b0)) if abs(b1) > 0 and abs(b0) > 0 else 0.0
        circ.append(GateSpec(GateKind.RY, ("Q1",), float(theta), dur("Q1", theta), "prep"))
        circ.append(GateSpec(GateKind.VIRTUAL_Z, ("Q1",), phi, 0.0, "prep"))

    sub1 = eigenbasis_gates(instance, "sub1", dur)
    sub1.append(GateSpec(GateKind.RY, ("Q3",), np.pi, dur("Q3", np.pi), "sub1"))
    sub1 += controlled_iswap_combo("Q1", "Q2", "Q3", SITES, combo_dur, "sub1").gates
    sub1.append(GateSpec(GateKind.VIRTUAL_Z, ("Q1",), -np.pi / 2, 0.0, "sub1"))
    circ.extend(sub1)

    th1, th2 = (rotation_angle(l, instance.C) for l in eig.lambdas)
    circ.append(GateSpec(GateKind.RY, ("Q4",), th2, dur("Q4", th2), "sub2"))
    cry = controlled_ry_decomposition(th1 - th2, "Q3", "Q4", SITES,
                                      {GateKind.RY: dur("Q4", th1 - th2),
                                       GateKind.CZ: two[GateKind.CZ]}, "sub2")
    circ.extend(cry.gates)

    # sqrt(iSWAP) has no native inverse; the combo is reapplied instead of inverted
    circ.extend(controlled_iswap_combo("Q1", "Q2", "Q3", SITES, combo_dur, "sub3").gates)
    circ.append(GateSpec(GateKind.VIRTUAL_Z, ("Q1",), -np.pi / 2, 0.0, "sub3"))
    circ.append(GateSpec(GateKind.RY, ("Q3",), -np.pi, dur("Q3", np.pi), "sub3"))
    circ.extend(inverse_gate(g) for g in reversed(eigenbasis_gates(instance, "sub3", dur)))
    circ.postselection = ("Q4", 1)
    return circ


compile = compile_circuit


# -- execution -------------------------------------------------------------------

@dataclass
class HHLOutcome:
    memory: np.ndarray            # normalized postselected memory state (dominant eigenvector)
    memory_rho: np.ndarray        # normalized postselected memory density matrix
    success_probability: float
    register_population: float    # register weight outside |00>, before postselection
    fidelity: float               # <x|rho|x> against classical_solve
    joint: np.ndarray             # unnormalized (Q1, Q4) density matrix, register traced out
    register_cleared: bool = field(init=False)
    counts: dict | None = None

    def __post_init__(self):
        self.register_cleared = bool(self.register_population <= 1e-9)

    @property
    def bloch(self) -> np.ndarray:
        from .qsim import PAULI
        return np.array([np.trace(self.memory_rho @ PAULI[p]).real for p in "XYZ"])


def _layers(gates: Sequence[GateSpec]) -> list[list[GateSpec]]:
    """ASAP moments; device two-qubit gates act on the whole chain and get a moment alone."""
    layers: list[list[GateSpec]] = []
    last: dict[str, int] = {}
    barrier = -1
    for g in gates:
        if g.kind in (GateKind.CZ, GateKind.SQRT_ISWAP, GateKind.ISWAP):
            layers.append([g])
            barrier = len(layers) - 1
            last = {}
            continue
        k = max([barrier] + [last.get(t, -1) for t in g.targets]) + 1
        if k == len(layers):
            layers.append([])
        layers[k].append(g)
        for t in g.targets:
            last[t] = k
    return layers


def gate_operator(gate: GateSpec, backend: str, params: DeviceParams, layout: SubsystemLayout):
    """Operator on the full chain for ``gate`` under the given backend."""
    targets = [layout.index(t) for t in gate.targets]
    if backend != "ideal" and len(gate.targets) == 2:
        if layout.labels != params.labels:
            raise SimulationError("device backend needs the circuit sites to match the device")
        return native_gate(gate.kind, gate.targets, params, chain=True).unitary
    return embed_operator(gate.matrix(), layout, targets)


def simulate(circuit: Circuit, backend: str = "ideal", params: DeviceParams | None = None,
             noise: NoiseModel | None = None, trajectories: int = 1, seed: int = 0) -> np.ndarray:
    """Final density matrix of the chain (trajectory average for the noisy backend)."""
    backend = BACKENDS.get(backend)
    if backend is None:
        raise SimulationError("unknown backend")
    params = params or DeviceParams()
    layout = circuit.layout
    psi0 = np.zeros(layout.total_dim, dtype=complex)
    psi0[0] = 1.0
    if backend != "device-noisy":
        psi = psi0
        for g in circuit.gates:
            psi = gate_operator(g, backend, params, layout) @ psi
        return np.outer(psi, psi.conj())
    noise = noise or NoiseModel.from_params(params)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    batch = TrajectoryBatch.start(psi0, layout, trajectories, noise, rng)
    for layer in _layers(circuit.gates):
        for g in layer:
            batch.apply(gate_operator(g, "device", params, layout))
        batch.idle(max(g.duration for g in layer))
    return batch.density()


def analyse(rho: np.ndarray, instance: LinearSystemInstance) -> HHLOutcome:
    """Postselect the ancilla on |1> and summarize the memory."""
    dims = (2, 2, 2, 2)
    joint = reduced_density_matrix(rho, dims, [0, 3])
    mem = joint.reshape(2, 2, 2, 2)[:, 1, :, 1]
    p = float(np.trace(mem).real)
    if p < IMPOSSIBLE_PROB:
        raise ImpossibleOutcomeError("ancilla |1> outcome has zero probability")
    mem_rho = mem / p
    reg = reduced_density_matrix(rho, dims, [1, 2])
    reg_out = float(max(0.0, 1.0 - reg[0, 0].real / max(np.trace(reg).real, 1e-300)))
    evals, evecs = np.linalg.eigh(mem_rho)
    top = evecs[:, -1]
    top = top * np.exp(-1j * np.angle(top[np.argmax(np.abs(top))]))
    x, _ = classical_solve(instance.A, instance.b)
    fid = float(np.real(x.conj() @ mem_rho @ x))
    return HHLOutcome(top, mem_rho, p, reg_out, fid, joint)


def run(instance: LinearSystemInstance, backend: str = "ideal", shots: int | None = None,
        seed: int | None = None, params: DeviceParams | None = None,
        noise: NoiseModel | None = None, trajectories: int = 400) -> HHLOutcome:
    """Compile and execute one instance.

    Without ``shots`` the exact postselected state is returned.  With ``shots``
    each tomography setting is sampled ``shots`` times and the memory state is
    reconstructed from the counts (``counts`` holds the sampled data).
    """
    if backend not in BACKENDS:
        raise SimulationError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}")
    if shots is not None and shots <= 0:
        raise SimulationError("shots must be positive")
    if instance.C == 0:
        raise ImpossibleOutcomeError("C = 0 gives a zero postselection probability")
    seed = 0 if seed is None else int(seed)
    params = params or DeviceParams()
    circ = compile_circuit(instance, params)
    circ.postselection = None
    rho = simulate(circ, backend, params, noise, trajectories, seed)
    out = analyse(rho, instance)
    if shots is None:
        return out
    from . import tomography

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    counts = tomography.sample_counts(out.joint, shots, rng)
    rho_fit, p = tomography.qst_single(counts)
    x, _ = classical_solve(instance.A, instance.b)
    evals, evecs = np.linalg.eigh(rho_fit.matrix)
    return HHLOutcome(evecs[:, -1], rho_fit.matrix, p, out.register_population,
                      float(np.real(x.conj() @ rho_fit.matrix @ x)), out.joint, counts)
