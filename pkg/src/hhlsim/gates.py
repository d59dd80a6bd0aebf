"""Ideal gate matrices, the circuit IR, and the composite constructions.

Conventions
-----------
* ``R_a(t) = exp(-i t sigma_a / 2)``.
* ``sqrt(iSWAP)`` and ``iSWAP`` are ``exp(-i g t (s+s- + s-s+))`` for
  ``g t = pi/4`` and ``pi/2``: the exchanged amplitude picks up ``-i``.
* Durations are in nanoseconds; ``VIRTUAL_Z`` is instantaneous.

Text format (one statement per line, ``#`` starts a comment)::

    sites Q1 Q2 Q3 Q4
    role memory Q1
    role register Q2 Q3
    role ancilla Q4
    RY 1.5707963267948966 Q1 30.0 prep
    CZ Q1 Q2 27.2 sub1
    postselect Q4 1

A gate line is ``KIND [ANGLE] TARGET [TARGET] DURATION [BLOCK]``; ``ANGLE`` is
present exactly for RX/RY/RZ/VIRTUAL_Z and the number of targets follows the
kind.  Floats are written with ``repr`` so a dump/parse round trip is exact.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConnectivityError, DimensionError, SimulationError
from .qsim import PAULI, SubsystemLayout, embed_operator, is_unitary


class GateKind(str, enum.Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    H = "H"
    CZ = "CZ"
    SQRT_ISWAP = "SQRT_ISWAP"
    ISWAP = "ISWAP"
    VIRTUAL_Z = "VIRTUAL_Z"


ROTATIONS = {GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.VIRTUAL_Z}
TWO_QUBIT = {GateKind.CZ, GateKind.SQRT_ISWAP, GateKind.ISWAP}

# Placeholders for circuits built without device timing (default-device values).
NOMINAL_DURATION_NS = {
    GateKind.RX: 30.0, GateKind.RY: 30.0, GateKind.RZ: 30.0, GateKind.H: 30.0,
    GateKind.CZ: 25.1, GateKind.SQRT_ISWAP: 12.8, GateKind.ISWAP: 25.5,
    GateKind.VIRTUAL_Z: 0.0,
}

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    sigma = PAULI[axis.upper()]
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * sigma


def two_qubit_matrix(kind) -> np.ndarray:
    kind = GateKind(kind)
    if kind == GateKind.CZ:
        return np.diag([1, 1, 1, -1]).astype(complex)
    if kind == GateKind.SQRT_ISWAP:
        c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    elif kind == GateKind.ISWAP:
        c, s = 0.0, 1.0
    else:
        raise ValueError(f"{kind} is not a two-qubit gate")
    u = np.eye(4, dtype=complex)
    u[1:3, 1:3] = [[c, -1j * s], [-1j * s, c]]
    return u


@dataclass(frozen=True)
class GateSpec:
    kind: GateKind
    targets: tuple[str, ...]
    angle: float | None = None
    duration: float | None = None
    block: str = ""

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.duration is None:
            object.__setattr__(self, "duration", NOMINAL_DURATION_NS[kind])
        object.__setattr__(self, "targets", tuple(self.targets))
        arity = 2 if kind in TWO_QUBIT else 1
        if len(self.targets) != arity:
            raise ValueError(f"{kind.value} takes {arity} target(s), got {self.targets}")
        if len(set(self.targets)) != arity:
            raise ValueError(f"duplicate targets {self.targets}")
        if (kind in ROTATIONS) != (self.angle is not None):
            raise ValueError(f"angle must be given exactly for rotation gates ({kind.value})")
        object.__setattr__(self, "duration", float(self.duration))
        if kind == GateKind.VIRTUAL_Z:
            if self.duration != 0:
                raise ValueError("VIRTUAL_Z is instantaneous")
        elif not self.duration > 0:
            raise ValueError(f"{kind.value} needs a positive duration")

    def matrix(self) -> np.ndarray:
        k = self.kind
        if k in (GateKind.RX, GateKind.RY, GateKind.RZ):
            return rotation_matrix(k.value[1], self.angle)
        if k == GateKind.VIRTUAL_Z:
            return rotation_matrix("Z", self.angle)
        if k == GateKind.H:
            return _HADAMARD.copy()
        return two_qubit_matrix(k)


@dataclass
class Circuit:
    """Ordered gates on a linear chain of named sites."""

    sites: tuple[str, ...]
    gates: list[GateSpec] = field(default_factory=list)
    postselection: tuple[str, int] | None = None
    roles: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.sites = tuple(self.sites)
        self.gates = list(self.gates)
        for g in self.gates:
            self._check(g)
        if self.postselection is not None:
            site, outcome = self.postselection
            if site not in self.sites:
                raise DimensionError(f"postselection site {site!r} not in circuit")
            self.postselection = (site, int(outcome))

    def _check(self, gate: GateSpec):
        for t in gate.targets:
            if t not in self.sites:
                raise DimensionError(f"gate target {t!r} not in circuit sites {self.sites}")
        if len(gate.targets) == 2:
            i, j = (self.sites.index(t) for t in gate.targets)
            if abs(i - j) != 1:
                raise ConnectivityError(f"{gate.kind.value} on non-neighbours {gate.targets}")

    def append(self, gate: GateSpec) -> "Circuit":
        self._check(gate)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[GateSpec]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def block(self, name: str) -> "Circuit":
        return Circuit(self.sites, [g for g in self.gates if g.block == name], None, dict(self.roles))

    def count(self, exclude=(GateKind.VIRTUAL_Z,)) -> int:
        return sum(g.kind not in exclude for g in self.gates)

    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout.qubits(len(self.sites), self.sites)


def inverse_gate(gate: GateSpec) -> GateSpec:
    """Exact inverse when the inverse is itself a GateSpec kind."""
    if gate.kind in ROTATIONS:
        return replace(gate, angle=-gate.angle)
    if gate.kind in (GateKind.H, GateKind.CZ):
        return gate
    raise SimulationError(f"{gate.kind.value} has no native inverse")


def reversed_circuit(circuit: Circuit) -> Circuit:
    """Gates in reverse order, each replaced by its inverse."""
    return Circuit(circuit.sites, [inverse_gate(g) for g in reversed(circuit.gates)],
                   None, dict(circuit.roles))


def circuit_unitary(circuit: Circuit, layout: SubsystemLayout | None = None) -> np.ndarray:
    if circuit.postselection is not None:
        raise SimulationError("circuit with a postselection marker has no unitary")
    layout = layout or circuit.layout
    u = np.eye(layout.total_dim, dtype=complex)
    for g in circuit.gates:
        u = embed_operator(g.matrix(), layout, [layout.index(t) for t in g.targets]) @ u
    return u


def equal_up_to_phase(u: np.ndarray, v: np.ndarray) -> float:
    """Frobenius distance min_phi ||u - e^{i phi} v|| / sqrt(d)."""
    overlap = np.vdot(v, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v) / np.sqrt(u.shape[0]))


def operator_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Gate error ``1 - |Tr(v^dag u)| / d`` (global phase ignored)."""
    return float(1.0 - abs(np.trace(v.conj().T @ u)) / u.shape[0])


def _check_neighbours(sites: Sequence[str], a: str, b: str):
    if a not in sites or b not in sites:
        raise DimensionError(f"sites {a!r}/{b!r} not on the chain {tuple(sites)}")
    if abs(sites.index(a) - sites.index(b)) != 1:
        raise ConnectivityError(f"{a} and {b} are not nearest neighbours")


def controlled_iswap_combo(control: str, a: str, b: str,
                           sites: Sequence[str] = ("Q1", "Q2", "Q3", "Q4"),
                           durations: dict | None = None, block: str = "") -> Circuit:
    """sqrt(iSWAP)(a,b) . CZ(control,a) . sqrt(iSWAP)(a,b).

    control=|0>: iSWAP on (a, b).  control=|1>: Z on ``a`` (no exchange).
    """
    sites = tuple(sites)
    _check_neighbours(sites, control, a)
    _check_neighbours(sites, a, b)
    durations = durations or {}
    t_sq = durations.get(GateKind.SQRT_ISWAP)
    t_cz = durations.get(GateKind.CZ)
    gates = [
        GateSpec(GateKind.SQRT_ISWAP, (a, b), duration=t_sq, block=block),
        GateSpec(GateKind.CZ, (control, a), duration=t_cz, block=block),
        GateSpec(GateKind.SQRT_ISWAP, (a, b), duration=t_sq, block=block),
    ]
    return Circuit(sites, gates)


def controlled_ry_decomposition(theta: float, control: str, target: str,
                                sites: Sequence[str] | None = None,
                                durations: dict | None = None, block: str = "") -> Circuit:
    """Controlled-R_Y(theta) from two CZs and two R_Y(+-theta/2) on the target.

    Z R_Y(a) Z = R_Y(-a), so the control-|1> branch sees R_Y(theta/2)^2 and the
    control-|0> branch sees the identity.  Exact, not merely up to phase.
    """
    sites = tuple(sites) if sites is not None else (control, target)
    _check_neighbours(sites, control, target)
    durations = durations or {}
    t_ry = durations.get(GateKind.RY)
    t_cz = durations.get(GateKind.CZ)
    gates = [
        GateSpec(GateKind.RY, (target,), theta / 2, t_ry, block),
        GateSpec(GateKind.CZ, (control, target), duration=t_cz, block=block),
        GateSpec(GateKind.RY, (target,), -theta / 2, t_ry, block),
        GateSpec(GateKind.CZ, (control, target), duration=t_cz, block=block),
    ]
    return Circuit(sites, gates)


def controlled_ry_matrix(theta: float) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    u[2:, 2:] = rotation_matrix("Y", theta)
    return u


def hadamard_as_native(target: str, duration: float | None = None, block: str = "") -> list[GateSpec]:
    """H = R_Y(pi/2) . Z up to global phase: VIRTUAL_Z(pi) first, then R_Y(pi/2)."""
    return [GateSpec(GateKind.VIRTUAL_Z, (target,), np.pi, 0.0, block),
            GateSpec(GateKind.RY, (target,), np.pi / 2, duration, block)]


# -- text serialization ------------------------------------------------------

def dumps(circuit: Circuit) -> str:
    lines = ["sites " + " ".join(circuit.sites)]
    for role, members in circuit.roles.items():
        lines.append(f"role {role} " + " ".join(members))
    for g in circuit.gates:
        parts = [g.kind.value]
        if g.angle is not None:
            parts.append(repr(float(g.angle)))
        parts.extend(g.targets)
        parts.append(repr(float(g.duration)))
        if g.block:
            parts.append(g.block)
        lines.append(" ".join(parts))
    if circuit.postselection is not None:
        lines.append(f"postselect {circuit.postselection[0]} {circuit.postselection[1]}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Circuit:
    sites: tuple[str, ...] | None = None
    roles: dict[str, tuple[str, ...]] = {}
    gates: list[GateSpec] = []
    post = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        try:
            if head == "sites":
                sites = tuple(tok[1:])
            elif head == "role":
                roles[tok[1]] = tuple(tok[2:])
            elif head == "postselect":
                post = (tok[1], int(tok[2]))
            else:
                kind = GateKind(head)
                pos = 1
                angle = None
                if kind in ROTATIONS:
                    angle = float(tok[pos])
                    pos += 1
                arity = 2 if kind in TWO_QUBIT else 1
                targets = tuple(tok[pos:pos + arity])
                pos += arity
                duration = float(tok[pos])
                pos += 1
                block = tok[pos] if pos < len(tok) else ""
                if pos + 1 < len(tok):
                    raise ValueError("trailing tokens")
                gates.append(GateSpec(kind, targets, angle, duration, block))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}: {exc}") from None
    if sites is None:
        raise ValueError("missing 'sites' statement")
    return Circuit(sites, gates, post, roles)
