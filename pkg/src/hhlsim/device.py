"""Transmon-chain model: Hamiltonian, flux schedules, native gates and noise.

Units: time in ns, frequency in GHz (cycles/ns); Hamiltonians are returned in
rad/ns.  Level ``n`` of site ``j`` has energy ``n*w_j - eta_j*n*(n-1)/2``
(ground-referenced form of ``-w sigma_z / 2``), neighbours exchange excitations
through ``g (a_j^dag a_{j+1} + h.c.)`` with bosonic matrix elements, so a qutrit
pair couples ``|11>`` and ``|20>`` with strength ``sqrt(2) g``.

Propagators are reported in the frame rotating at each qubit's bare idle
frequency.  Schedules are piecewise constant, so each segment is propagated
with the exact exponential of a constant Hamiltonian and the frame change is
applied once at the end.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml
from scipy.optimize import brentq, minimize

from .errors import (
    ConfigError,
    ConnectivityError,
    DimensionError,
    MiscalibrationError,
    ScheduleError,
)
from .gates import GateKind, operator_distance, rotation_matrix, two_qubit_matrix
from .qsim import PureState, SubsystemLayout

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class DeviceParams:
    """Chain parameters in lab units (GHz, MHz, us, ns)."""

    labels: tuple[str, ...] = ("Q1", "Q2", "Q3", "Q4")
    idle_freq_ghz: tuple[float, ...] = (5.073, 4.074, 4.948, 4.547)
    anharmonicity_mhz: tuple[float, ...] = (250.0, 250.0, 250.0, 250.0)
    coupling_mhz: tuple[float, ...] = (13.0, 9.8, 14.1)
    t1_us: tuple[float, ...] = (15.9, 7.4, 7.8, 14.1)
    t2star_us: tuple[float, ...] = (8.7, 2.3, 5.2, 3.4)
    # drive-strength ratios Q1/Q2 and Q4/Q3 on the shared XY lines; stored, unused
    xy_crosstalk: tuple[float, ...] = (11.7, 6.7)
    # single-qubit pi-pulse length per qubit; rotations scale linearly with angle
    pi_pulse_ns: tuple[float, ...] = (30.0, 300.0, 300.0, 30.0)

    def __post_init__(self):
        n = len(self.labels)
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)):
                v = (float(v),) * (n if f.name != "coupling_mhz" else n - 1)
            object.__setattr__(self, f.name, tuple(v))
        for name, size in [("idle_freq_ghz", n), ("anharmonicity_mhz", n), ("t1_us", n),
                           ("t2star_us", n), ("pi_pulse_ns", n), ("coupling_mhz", n - 1)]:
            if len(getattr(self, name)) != size:
                raise ConfigError(f"{name} needs {size} entries")
        if min(self.idle_freq_ghz) <= 0:
            raise ConfigError("frequencies must be positive")
        if min(self.t1_us) <= 0 or min(self.t2star_us) <= 0:
            raise ConfigError("T1 and T2* must be positive")
        if min(self.pi_pulse_ns) <= 0:
            raise ConfigError("pulse lengths must be positive")
        if len(set(self.labels)) != n:
            raise ConfigError("duplicate qubit labels")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DimensionError(f"unknown qubit {label!r}") from None

    def coupling_ghz(self, a: str, b: str) -> float:
        i, j = sorted((self.index(a), self.index(b)))
        if j - i != 1:
            raise ConnectivityError(f"{a} and {b} are not coupled")
        return self.coupling_mhz[i] * 1e-3

    def anharmonicity_ghz(self, label: str) -> float:
        return self.anharmonicity_mhz[self.index(label)] * 1e-3

    def idle(self, label: str) -> float:
        return self.idle_freq_ghz[self.index(label)]

    def rotation_duration(self, label: str, angle: float) -> float:
        """Drive duration for a rotation by ``angle`` (pi-pulse length scaled)."""
        t_pi = self.pi_pulse_ns[self.index(label)]
        i = self.index(label)
        if i in (1, 2):
            return t_pi * abs(angle) / np.pi if angle else t_pi / 2
        return t_pi

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DeviceParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown device keys {sorted(unknown)}")
        try:
            return cls(**{k: (tuple(v) if isinstance(v, (list, tuple)) else v)
                          for k, v in data.items()})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "DeviceParams":
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read device file {path}: {exc}") from None
        return cls.from_dict(data)

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _layout_for(params: DeviceParams, layout: SubsystemLayout | None) -> SubsystemLayout:
    if layout is None:
        return SubsystemLayout.qubits(len(params.labels), params.labels)
    for lab in layout.labels:
        params.index(lab)
    return layout


def _number_ops(layout: SubsystemLayout):
    grid = np.indices(layout.dims).reshape(layout.n_sites, -1)
    return grid.astype(float)


def _lowering(layout: SubsystemLayout, site: int) -> np.ndarray:
    ops = [np.eye(d) for d in layout.dims]
    d = layout.dims[site]
    ops[site] = np.diag(np.sqrt(np.arange(1, d)), 1)
    out = np.ones((1, 1))
    for o in ops:
        out = np.kron(out, o)
    return out


def hamiltonian(params: DeviceParams, freqs: Mapping[str, float] | Sequence[float],
                layout: SubsystemLayout | None = None, reference_ghz: float = 0.0) -> np.ndarray:
    """Chain Hamiltonian (rad/ns) at the given per-site frequencies (GHz).

    ``reference_ghz`` shifts every level by ``-n*reference`` (a common
    rotating frame; commutes with the excitation-conserving Hamiltonian).
    """
    layout = _layout_for(params, layout)
    if not isinstance(freqs, Mapping):
        freqs = dict(zip(layout.labels, freqs))
    n = _number_ops(layout)
    diag = np.zeros(layout.total_dim)
    for j, lab in enumerate(layout.labels):
        eta = params.anharmonicity_ghz(lab)
        diag += (freqs[lab] - reference_ghz) * n[j] - 0.5 * eta * n[j] * (n[j] - 1)
    h = np.diag(TWO_PI * diag).astype(complex)
    for j in range(layout.n_sites - 1):
        a, b = layout.labels[j], layout.labels[j + 1]
        if abs(params.index(a) - params.index(b)) != 1:
            continue
        g = params.coupling_ghz(a, b)
        lo_a, lo_b = _lowering(layout, j), _lowering(layout, j + 1)
        h += TWO_PI * g * (lo_a.T @ lo_b + lo_b.T @ lo_a)
    return h


def bare_energies(params: DeviceParams, layout: SubsystemLayout, reference_ghz: float = 0.0):
    n = _number_ops(layout)
    e = np.zeros(layout.total_dim)
    for j, lab in enumerate(layout.labels):
        eta = params.anharmonicity_ghz(lab)
        e += (params.idle(lab) - reference_ghz) * n[j] - 0.5 * eta * n[j] * (n[j] - 1)
    return TWO_PI * e


@dataclass
class FrequencySchedule:
    """Piecewise-constant frequency trajectory per site over ``[0, duration]`` ns."""

    segments: dict[str, list[tuple[float, float, float]]]
    duration: float

    def __post_init__(self):
        tol = 1e-9
        if self.duration < 0:
            raise ScheduleError("negative duration")
        for lab, segs in self.segments.items():
            segs = [tuple(map(float, s)) for s in segs]
            if not segs:
                raise ScheduleError(f"{lab}: no segments")
            if abs(segs[0][0]) > tol or abs(segs[-1][1] - self.duration) > tol:
                raise ScheduleError(f"{lab}: segments must cover [0, {self.duration}]")
            for (s0, e0, _), (s1, _, _) in zip(segs, segs[1:]):
                if abs(e0 - s1) > tol:
                    kind = "gap" if s1 > e0 else "overlap"
                    raise ScheduleError(f"{lab}: {kind} between {e0} and {s1} ns")
            if any(e < s - tol for s, e, _ in segs):
                raise ScheduleError(f"{lab}: segment ends before it starts")
            self.segments[lab] = segs

    @classmethod
    def constant(cls, freqs: Mapping[str, float], duration: float) -> "FrequencySchedule":
        return cls({k: [(0.0, duration, v)] for k, v in freqs.items()}, duration)

    def breakpoints(self) -> list[float]:
        pts = {0.0, float(self.duration)}
        for segs in self.segments.values():
            for s, e, _ in segs:
                pts.update((s, e))
        return sorted(pts)

    def freqs_at(self, t: float) -> dict[str, float]:
        out = {}
        for lab, segs in self.segments.items():
            for s, e, f in segs:
                if s <= t <= e:
                    out[lab] = f
                    break
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["qubit", "start_ns", "end_ns", "freq_ghz"])
            for lab, segs in self.segments.items():
                for s, e, f in segs:
                    w.writerow([lab, repr(s), repr(e), repr(f)])


def _max_scale_ghz(params: DeviceParams, schedule: FrequencySchedule, layout: SubsystemLayout):
    scale = 0.0
    for lab in layout.labels:
        idle = params.idle(lab)
        for _, _, f in schedule.segments.get(lab, [(0, 0, idle)]):
            scale = max(scale, abs(f - idle))
        if 3 in layout.dims:
            scale = max(scale, params.anharmonicity_ghz(lab))
    scale = max(scale, max(params.coupling_mhz) * 1e-3)
    return scale


def default_dt(params: DeviceParams, schedule: FrequencySchedule, layout: SubsystemLayout) -> float:
    return 1.0 / (50.0 * _max_scale_ghz(params, schedule, layout))


def evolve(schedule: FrequencySchedule, params: DeviceParams, dt: float | None = None,
           layout: SubsystemLayout | None = None) -> np.ndarray:
    """Time-ordered propagator of the schedule in the idle rotating frame.

    Sites missing from the schedule stay at their idle frequency.  Each
    segment is advanced in steps of at most ``dt`` ns.
    """
    layout = _layout_for(params, layout)
    limit = default_dt(params, schedule, layout)
    if dt is None:
        dt = limit
    elif dt > limit * (1 + 1e-12):
        raise ScheduleError(f"dt={dt} ns exceeds 1/(50*frequency scale) = {limit:.4g} ns")
    ref = float(np.mean([params.idle(l) for l in layout.labels]))
    u = np.eye(layout.total_dim, dtype=complex)
    pts = schedule.breakpoints()
    for t0, t1 in zip(pts, pts[1:]):
        span = t1 - t0
        if span <= 0:
            continue
        mid = schedule.freqs_at(0.5 * (t0 + t1))
        freqs = {lab: mid.get(lab, params.idle(lab)) for lab in layout.labels}
        h = hamiltonian(params, freqs, layout, reference_ghz=ref)
        evals, vecs = np.linalg.eigh(h)
        nsteps = max(1, math.ceil(span / dt - 1e-12))
        step = (vecs * np.exp(-1j * evals * span / nsteps)) @ vecs.conj().T
        u = np.linalg.matrix_power(step, nsteps) @ u
    frame = np.exp(1j * bare_energies(params, layout, ref) * schedule.duration)
    return frame[:, None] * u


# -- native gates --------------------------------------------------------------

@dataclass
class PhaseCompensation:
    angles: np.ndarray  # Z-rotation error per qubit: raw ~ (x)_j R_Z(angle_j) . ideal
    residual: float

    def operator(self) -> np.ndarray:
        """The virtual-Z correction that undoes the phase error."""
        out = np.ones((1, 1), dtype=complex)
        for a in self.angles:
            out = np.kron(out, rotation_matrix("Z", -a))
        return out


def _bits(n_qubits: int) -> np.ndarray:
    return np.indices((2,) * n_qubits).reshape(n_qubits, -1).T.astype(float)


def phase_compensation(raw: np.ndarray, ideal: np.ndarray, max_residual: float = 0.05
                       ) -> PhaseCompensation:
    """Single-qubit Z phases accumulated by ``raw`` relative to ``ideal``.

    Finds ``angle_j`` minimizing ``1 - |Tr(ideal^dag D raw)|/d`` with
    ``D = (x)_j R_Z(-angle_j)`` (global phase free); ``D`` is the correction.  Raises MiscalibrationError when the best residual
    exceeds ``max_residual``.
    """
    raw = np.asarray(raw, dtype=complex)
    ideal = np.asarray(ideal, dtype=complex)
    d = ideal.shape[0]
    nq = int(round(math.log2(d)))
    if raw.shape != ideal.shape or 2 ** nq != d:
        raise DimensionError("raw and ideal must be equal-size qubit operators")
    w = np.einsum("ij,ij->i", raw, ideal.conj())  # diag(raw @ ideal^dag)
    bits = _bits(nq)

    def cost(theta):
        return 1.0 - abs(np.sum(np.exp(-1j * bits @ theta) * w)) / d

    ref = np.angle(w[0]) if abs(w[0]) > 1e-12 else 0.0
    guess = np.array([np.angle(w[1 << (nq - 1 - j)]) - ref for j in range(nq)])
    best = minimize(cost, guess, method="BFGS", options={"gtol": 1e-12})
    theta = best.x
    if best.fun > cost(guess):
        theta = guess
    theta = (theta + np.pi) % (2 * np.pi) - np.pi
    residual = float(cost(theta))
    if residual > max_residual:
        raise MiscalibrationError(f"phase compensation residual {residual:.3g} > {max_residual}")
    return PhaseCompensation(theta, residual)


@dataclass
class NativeGate:
    kind: GateKind
    pair: tuple[str, str]
    duration: float
    schedule: FrequencySchedule
    layout: SubsystemLayout
    raw: np.ndarray          # full propagator on ``layout``
    raw_computational: np.ndarray
    compensation: PhaseCompensation
    unitary: np.ndarray      # compensated computational-subspace block
    ideal: np.ndarray
    leakage: float
    distance: float

    @property
    def phase_corrections(self) -> dict[str, float]:
        return dict(zip(self.layout.labels, map(float, self.compensation.angles)))


def gate_duration(kind, pair, params: DeviceParams) -> float:
    """Nominal on-resonance periods: pi/(4g), pi/(2g), pi/(sqrt(2) g)."""
    kind = GateKind(kind)
    g = params.coupling_ghz(*pair)
    if kind == GateKind.SQRT_ISWAP:
        return 1.0 / (8.0 * g)
    if kind == GateKind.ISWAP:
        return 1.0 / (4.0 * g)
    if kind == GateKind.CZ:
        return 1.0 / (2.0 * math.sqrt(2.0) * g)
    raise ValueError(f"{kind.value} is not a native two-qubit gate")


def _pair_layout(kind: GateKind, pair, params: DeviceParams, chain: bool) -> SubsystemLayout:
    labels = params.labels if chain else tuple(sorted(pair, key=params.index))
    d = 3 if kind == GateKind.CZ else 2
    dims = tuple(d if lab in pair else 2 for lab in labels)
    return SubsystemLayout(dims, labels)


def _cz_schedule(params, control, target, duration, offset_ghz):
    hold = params.idle(target) + params.anharmonicity_ghz(control) + offset_ghz
    return FrequencySchedule({control: [(0.0, duration, hold)]}, duration)


def _exchange_schedule(params, a, b, duration):
    # the higher qubit comes down to the lower one's idle frequency
    hi, lo = (a, b) if params.idle(a) > params.idle(b) else (b, a)
    return FrequencySchedule({hi: [(0.0, duration, params.idle(lo))]}, duration)


def _conditional_phase(u: np.ndarray) -> float:
    d = np.angle(u[3, 3]) - np.angle(u[2, 2]) - np.angle(u[1, 1]) + np.angle(u[0, 0])
    return float((d + np.pi) % (2 * np.pi) - np.pi)


def _comp_block(u: np.ndarray, layout: SubsystemLayout) -> np.ndarray:
    idx = layout.computational_indices()
    return u[np.ix_(idx, idx)]


@functools.lru_cache(maxsize=64)
def calibrate_cz(params: DeviceParams, control: str, target: str) -> float:
    """Hold-frequency offset (GHz) from the bare |11>-|20> resonance.

    Chosen so the conditional phase is exactly pi at the nominal duration,
    which is what a Ramsey calibration of the gate fixes.  The offset absorbs
    the level shift from the |02> state.
    """
    duration = gate_duration(GateKind.CZ, (control, target), params)
    layout = _pair_layout(GateKind.CZ, (control, target), params, chain=False)
    order = [layout.labels.index(control), layout.labels.index(target)]

    def phase_error(offset):
        u = evolve(_cz_schedule(params, control, target, duration, offset), params, layout=layout)
        block = _comp_block(u, layout)
        if order != [0, 1]:
            perm = [0, 2, 1, 3]
            block = block[np.ix_(perm, perm)]
        return (_conditional_phase(block) - np.pi + np.pi) % (2 * np.pi) - np.pi

    g = params.coupling_ghz(control, target)
    span = 0.5 * g
    grid = np.linspace(-span, span, 21)
    vals = [phase_error(x) for x in grid]
    for (x0, v0), (x1, v1) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if v0 == 0:
            return float(x0)
        if v0 * v1 < 0 and abs(v0 - v1) < np.pi:
            return float(brentq(phase_error, x0, x1, xtol=1e-13))
    raise MiscalibrationError("no hold frequency gives a conditional phase of pi")


def native_schedule(kind, pair, params: DeviceParams) -> FrequencySchedule:
    kind = GateKind(kind)
    duration = gate_duration(kind, pair, params)
    if kind == GateKind.CZ:
        control, target = pair
        return _cz_schedule(params, control, target, duration, calibrate_cz(params, control, target))
    return _exchange_schedule(params, *pair, duration)


def _ideal_on(layout_labels, kind: GateKind, pair) -> np.ndarray:
    """Ideal gate on the computational space of ``layout_labels`` (chain order)."""
    labels = list(layout_labels)
    n = len(labels)
    i, j = sorted(labels.index(p) for p in pair)
    if j - i != 1:
        raise ConnectivityError(f"{pair} are not neighbours")
    g = two_qubit_matrix(kind)
    return np.kron(np.kron(np.eye(2 ** i), g), np.eye(2 ** (n - j - 1)))


def native_gate(kind, pair, params: DeviceParams | None = None, chain: bool = False,
                max_residual: float = 0.05) -> NativeGate:
    """Synthesize a two-qubit gate from the chain Hamiltonian.

    ``pair`` is (control, target) for CZ: the control's |1>-|2> transition is
    brought onto the target's |0>-|1> transition.  With ``chain=True`` the
    whole device chain is simulated, spectators parked at idle.
    """
    params = params or DeviceParams()
    kind = GateKind(kind)
    pair = tuple(pair)
    if kind not in (GateKind.CZ, GateKind.SQRT_ISWAP, GateKind.ISWAP):
        raise ValueError(f"{kind.value} is not a native two-qubit gate")
    params.coupling_ghz(*pair)
    return _native_gate_cached(kind, pair, params, chain, max_residual)


@functools.lru_cache(maxsize=64)
def _native_gate_cached(kind, pair, params, chain, max_residual) -> NativeGate:
    schedule = native_schedule(kind, pair, params)
    layout = _pair_layout(kind, pair, params, chain)
    raw = evolve(schedule, params, layout=layout)
    block = _comp_block(raw, layout)
    ideal = _ideal_on(layout.labels, kind, pair)
    comp = phase_compensation(block, ideal, max_residual=max_residual)
    unitary = comp.operator() @ block
    cols = raw[:, layout.computational_indices()]
    idx = layout.computational_indices()
    inside = np.sum(np.abs(cols[idx, :]) ** 2, axis=0)
    leakage = float(np.max(1.0 - inside))
    return NativeGate(kind, pair, schedule.duration, schedule, layout, raw, block, comp,
                      unitary, ideal, leakage, operator_distance(unitary, ideal))


def level2_population(gate: NativeGate) -> float:
    """Worst-case population left in any |2> level from computational inputs."""
    layout = gate.layout
    idx = layout.computational_indices()
    grid = np.indices(layout.dims).reshape(layout.n_sites, -1)
    two = np.flatnonzero(np.any(grid == 2, axis=0))
    return float(np.max(np.sum(np.abs(gate.raw[np.ix_(two, idx)]) ** 2, axis=0))) if two.size else 0.0


# -- Ramsey calibration of the CZ ----------------------------------------------

@dataclass
class RamseyCurve:
    thetas: np.ndarray
    p1: np.ndarray
    control_state: int

    def fit(self) -> tuple[float, float, float]:
        """Fit ``p1 = offset + amp*cos(theta + phase)``; returns (offset, amp, phase)."""
        th = np.asarray(self.thetas)
        if th.size < 3:
            raise MiscalibrationError("need at least three Ramsey points")
        m = np.column_stack([np.ones_like(th), np.cos(th), np.sin(th)])
        (c0, c1, c2), *_ = np.linalg.lstsq(m, self.p1, rcond=None)
        amp = float(np.hypot(c1, c2))
        if amp < 1e-9:
            raise MiscalibrationError("flat Ramsey curve")
        return float(c0), amp, float(np.arctan2(-c2, c1))


def phase_difference(curve0: RamseyCurve, curve1: RamseyCurve) -> float:
    """|phi_1 - phi_0| wrapped to [0, pi]."""
    d = curve1.fit()[2] - curve0.fit()[2]
    return float(abs((d + np.pi) % (2 * np.pi) - np.pi))


def _ramsey_pulses(theta):
    first = rotation_matrix("X", np.pi / 2)
    axis = np.cos(theta) * np.array([[0, 1], [1, 0]]) + np.sin(theta) * np.array([[0, -1j], [1j, 0]])
    second = np.cos(np.pi / 4) * np.eye(2) - 1j * np.sin(np.pi / 4) * axis
    return first, second


def _embed_level(u2: np.ndarray, d: int) -> np.ndarray:
    out = np.eye(d, dtype=complex)
    out[:2, :2] = u2
    return out


def ramsey_cz_calibration(params: DeviceParams | None, control_state: int, thetas,
                          gate: str = "device", compensate: bool = True,
                          pair: tuple[str, str] = ("Q3", "Q4"),
                          noise: "NoiseModel | None" = None, trajectories: int = 2000,
                          seed: int = 0) -> RamseyCurve:
    """P(target in |1>) for X(pi/2) - CZ - R_theta(pi/2) with the control in |c>.

    ``gate``: "device" (Hamiltonian-synthesized CZ), "ideal" or "identity".
    ``compensate=False`` leaves the CZ's dynamical single-qubit phases in.
    With a NoiseModel the sequence is averaged over noisy trajectories.
    """
    thetas = np.asarray(list(thetas), dtype=float)
    if thetas.size == 0:
        raise ValueError("thetas must be non-empty")
    params = params or DeviceParams()
    control, target = pair
    layout = _pair_layout(GateKind.CZ, pair, params, chain=False)
    ci, ti = layout.labels.index(control), layout.labels.index(target)
    if gate == "device":
        ng = native_gate(GateKind.CZ, pair, params)
        u = ng.raw
        if compensate:
            zc = np.ones((1, 1), dtype=complex)
            for lab, a in zip(layout.labels, ng.compensation.angles):
                zc = np.kron(zc, _embed_level(rotation_matrix("Z", -a), 3))
            u = zc @ u
        duration = ng.duration
    elif gate in ("ideal", "identity"):
        u = np.eye(layout.total_dim, dtype=complex)
        if gate == "ideal":
            idx = layout.computational_indices()
            cz = np.diag([1, 1, 1, -1]).astype(complex)
            u[np.ix_(idx, idx)] = cz
        duration = gate_duration(GateKind.CZ, pair, params)
    else:
        raise ValueError(f"unknown gate {gate!r}")

    def site_op(op2, site):
        mats = [np.eye(d, dtype=complex) for d in layout.dims]
        mats[site] = _embed_level(op2, layout.dims[site])
        out = np.ones((1, 1), dtype=complex)
        for m in mats:
            out = np.kron(out, m)
        return out

    levels = [0, 0]
    levels[ci] = control_state
    start = PureState.basis(layout, levels).amplitudes
    first, _ = _ramsey_pulses(0.0)
    p1 = np.empty(thetas.size)
    t_target = params.rotation_duration(target, np.pi / 2)
    for k, th in enumerate(thetas):
        _, second = _ramsey_pulses(th)
        ops = [(site_op(first, ti), t_target), (u, duration), (site_op(second, ti), t_target)]
        if noise is None:
            psi = start
            for op, _ in ops:
                psi = op @ psi
            rho = np.outer(psi, psi.conj())
        else:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
            batch = TrajectoryBatch.start(start, layout, trajectories, noise, rng)
            for op, t in ops:
                batch.apply(op)
                batch.idle(t)
            rho = batch.density()
        probs = np.real(np.diag(rho)).reshape(layout.dims)
        p1[k] = float(np.take(probs, 1, axis=ti).sum())
    return RamseyCurve(thetas, p1, control_state)


# -- decoherence -----------------------------------------------------------------

@dataclass
class NoiseModel:
    """T1 amplitude damping and quasi-static Gaussian dephasing per site (ns)."""

    t1_ns: dict[str, float]
    t2star_ns: dict[str, float]
    amplitude_damping: bool = True
    dephasing: bool = True
    seed: int = 0

    @classmethod
    def from_params(cls, params: DeviceParams, **kw) -> "NoiseModel":
        return cls({l: t * 1e3 for l, t in zip(params.labels, params.t1_us)},
                   {l: t * 1e3 for l, t in zip(params.labels, params.t2star_us)}, **kw)

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls({}, {}, amplitude_damping=False, dephasing=False)

    def detuning_sigma(self, label: str) -> float:
        """Std (rad/ns) of the static detuning: envelope exp(-(t/T2*)^2)."""
        t2 = self.t2star_ns.get(label, math.inf)
        if not self.dephasing or not math.isfinite(t2):
            return 0.0
        return math.sqrt(2.0) / t2

    def decay_prob(self, label: str, elapsed: float) -> float:
        t1 = self.t1_ns.get(label, math.inf)
        if not self.amplitude_damping or not math.isfinite(t1):
            return 0.0
        return -math.expm1(-elapsed / t1)

    def sample_detunings(self, labels, n: int, rng: np.random.Generator) -> np.ndarray:
        sig = np.array([self.detuning_sigma(l) for l in labels])
        return rng.standard_normal((n, len(labels))) * sig


class TrajectoryBatch:
    """A batch of pure-state trajectories sharing one layout.

    Each trajectory carries its own static detunings; amplitude damping is
    unravelled into sampled Kraus branches, renormalized to the incoming norm
    (norm lost to leakage elsewhere is preserved).
    """

    def __init__(self, amps: np.ndarray, layout: SubsystemLayout, detunings: np.ndarray,
                 noise: NoiseModel, rng: np.random.Generator):
        self.amps = np.array(amps, dtype=complex)
        self.layout = layout
        self.detunings = detunings
        self.noise = noise
        self.rng = rng
        self._n = _number_ops(layout)

    @classmethod
    def start(cls, amplitudes, layout, n: int, noise: NoiseModel, rng) -> "TrajectoryBatch":
        amps = np.tile(np.asarray(amplitudes, dtype=complex), (n, 1))
        return cls(amps, layout, noise.sample_detunings(layout.labels, n, rng), noise, rng)

    def apply(self, op: np.ndarray):
        self.amps = self.amps @ op.T

    def idle(self, elapsed: float):
        if elapsed <= 0:
            return
        if self.noise.dephasing:
            phase = self.detunings @ self._n  # (n_traj, dim)
            self.amps *= np.exp(-1j * phase * elapsed)
        if self.noise.amplitude_damping:
            for j, lab in enumerate(self.layout.labels):
                gamma = self.noise.decay_prob(lab, elapsed)
                if gamma > 0:
                    self._damp(j, gamma)

    def _damp(self, site: int, gamma: float):
        dims = self.layout.dims
        d = dims[site]
        pre = int(np.prod(dims[:site]))
        post = int(np.prod(dims[site + 1:]))
        n_traj = self.amps.shape[0]
        psi = self.amps.reshape(n_traj, pre, d, post)
        norm0 = np.sum(np.abs(psi) ** 2, axis=(1, 2, 3))
        branches = []
        probs = []
        for m in range(d):
            out = np.zeros_like(psi)
            for level in range(m, d):
                w = math.comb(level, m) * gamma ** m * (1 - gamma) ** (level - m)
                out[:, :, level - m, :] = math.sqrt(w) * psi[:, :, level, :]
            branches.append(out)
            probs.append(np.sum(np.abs(out) ** 2, axis=(1, 2, 3)))
        probs = np.array(probs).T  # (n_traj, d)
        total = probs.sum(axis=1, keepdims=True)
        total[total == 0] = 1.0
        cdf = np.cumsum(probs / total, axis=1)
        u = self.rng.random(n_traj)[:, None]
        choice = np.minimum((u > cdf).sum(axis=1), d - 1)
        new = np.stack(branches)[choice, np.arange(n_traj)]
        pn = probs[np.arange(n_traj), choice]
        scale = np.sqrt(np.divide(norm0, pn, out=np.zeros_like(norm0), where=pn > 0))
        self.amps = (new * scale[:, None, None, None]).reshape(n_traj, -1)

    def density(self) -> np.ndarray:
        return self.amps.T @ self.amps.conj() / self.amps.shape[0]


def apply_noise(state: PureState, elapsed: float, noise: NoiseModel, rng: np.random.Generator,
                detunings: np.ndarray | None = None) -> PureState:
    """One trajectory step of ``elapsed`` ns: static-detuning phase, then a T1 jump draw.

    Pass the same ``detunings`` (rad/ns per site) across steps to keep the
    dephasing quasi-static within a trajectory; fresh ones are drawn otherwise.
    """
    if elapsed < 0:
        raise ValueError("elapsed time must be non-negative")
    if detunings is None:
        detunings = noise.sample_detunings(state.layout.labels, 1, rng)
    batch = TrajectoryBatch(state.amplitudes[None, :], state.layout,
                            np.atleast_2d(detunings), noise, rng)
    batch.idle(elapsed)
    return PureState(batch.amps[0], state.layout)


CARDINAL_STATES = [
    np.array([1, 0], dtype=complex),
    np.array([0, 1], dtype=complex),
    np.array([1, 1], dtype=complex) / np.sqrt(2),
    np.array([1, -1], dtype=complex) / np.sqrt(2),
    np.array([1, 1j], dtype=complex) / np.sqrt(2),
    np.array([1, -1j], dtype=complex) / np.sqrt(2),
]


def pi_gate_fidelity(qubit: str, duration: float, params: DeviceParams | None = None,
                     noise: NoiseModel | None = None, trajectories: int = 10_000,
                     slices: int = 20, seed: int = 0) -> float:
    """Average fidelity of a noisy R_Y(pi) drive of ``duration`` ns.

    The drive is split into ``slices`` equal rotations with noise accruing in
    between; the six Pauli eigenstates (a 2-design) give the average.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    params = params or DeviceParams()
    if noise is None:
        noise = NoiseModel.from_params(params)
    layout = SubsystemLayout((2,), (qubit,))
    step = rotation_matrix("Y", np.pi / slices)
    ideal = rotation_matrix("Y", np.pi)
    fids = []
    for k, psi in enumerate(CARDINAL_STATES):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        batch = TrajectoryBatch.start(psi, layout, trajectories, noise, rng)
        for _ in range(slices):
            batch.apply(step)
            batch.idle(duration / slices)
        target = ideal @ psi
        fids.append(float(np.real(target.conj() @ batch.density() @ target)))
    return float(np.mean(fids))


def idle_transfer(params: DeviceParams, a: str, b: str, duration: float) -> float:
    """Population moved from a's excitation to b during an idle of ``duration`` ns."""
    layout = SubsystemLayout.qubits(len(params.labels), params.labels)
    u = evolve(FrequencySchedule.constant({}, duration), params, layout=layout)
    levels = [0] * layout.n_sites
    levels[layout.index(a)] = 1
    src = np.ravel_multi_index(levels, layout.dims)
    levels = [0] * layout.n_sites
    levels[layout.index(b)] = 1
    dst = np.ravel_multi_index(levels, layout.dims)
    return float(abs(u[dst, src]) ** 2)
