"""Single-qubit state tomography with ancilla postselection and Pauli-basis process tomography.

Measurement records are joint outcomes of the memory (Q1) and the ancilla
(Q4).  Only the ancilla-|1> records enter the memory's expectation values;
the ancilla-|1> fraction is the success probability.  The process being
reconstructed is therefore not trace preserving.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import FitError, RankDeficientError
from .gates import rotation_matrix
from .qsim import PAULI, DensityOperator

SETTINGS = ("X", "Y", "Z")
PAULI_BASIS = ("I", "X", "Y", "Z")
_E = [PAULI[p] for p in PAULI_BASIS]


@dataclass(frozen=True)
class MeasurementSetting:
    basis: str

    def __post_init__(self):
        if self.basis not in SETTINGS:
            raise ValueError(f"basis must be one of {SETTINGS}")

    @property
    def pre_rotation(self) -> np.ndarray:
        """Unitary applied before a Z measurement; ``U^dag Z U`` is the measured Pauli."""
        if self.basis == "X":
            return rotation_matrix("Y", -np.pi / 2)
        if self.basis == "Y":
            return rotation_matrix("X", np.pi / 2)
        return np.eye(2, dtype=complex)


def input_state_set() -> list[tuple[float, float]]:
    """18 Bloch angles (theta, phi): the poles plus two rings of eight."""
    ring = [k * np.pi / 4 for k in range(8)]
    return ([(0.0, 0.0)] + [(np.pi / 3, p) for p in ring]
            + [(2 * np.pi / 3, p) for p in ring] + [(np.pi, 0.0)])


def bloch_ket(theta: float, phi: float) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj()) / np.vdot(psi, psi).real


# -- datasets --------------------------------------------------------------------

@dataclass
class TomographyDataset:
    """Per input index and setting, a 2x2 array indexed [q1_outcome, q4_outcome].

    Entries are counts when ``shots`` is set and exact probabilities otherwise.
    """

    entries: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)
    shots: int | None = None

    def __post_init__(self):
        for j, ent in self.entries.items():
            for s, arr in ent.items():
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (2, 2) or np.any(arr < 0):
                    raise ValueError(f"input {j}, setting {s}: need non-negative 2x2 counts")
                if self.shots is not None and abs(arr.sum() - self.shots) > 1e-9:
                    raise ValueError(f"input {j}, setting {s}: counts sum to {arr.sum()}, not {self.shots}")
                ent[s] = arr

    def postselection_fraction(self, j: int) -> float:
        ent = self.entries[j]
        return float(sum(a[:, 1].sum() for a in ent.values()) / sum(a.sum() for a in ent.values()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["input_index", "setting", "q1_outcome", "q4_outcome", "count"])
            for j in sorted(self.entries):
                for s in SETTINGS:
                    if s not in self.entries[j]:
                        continue
                    arr = self.entries[j][s]
                    for q1 in (0, 1):
                        for q4 in (0, 1):
                            v = arr[q1, q4]
                            w.writerow([j, s, q1, q4, int(v) if self.shots else repr(float(v))])

    @classmethod
    def from_csv(cls, path, shots: int | None = None) -> "TomographyDataset":
        entries: dict[int, dict[str, np.ndarray]] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                j = int(row["input_index"])
                arr = entries.setdefault(j, {}).setdefault(row["setting"], np.zeros((2, 2)))
                arr[int(row["q1_outcome"]), int(row["q4_outcome"])] = float(row["count"])
        return cls(entries, shots)


def setting_probabilities(joint: np.ndarray) -> dict[str, np.ndarray]:
    """Exact [q1, q4] outcome probabilities per setting from a (Q1, Q4) density matrix."""
    joint = np.asarray(joint, dtype=complex)
    out = {}
    for s in SETTINGS:
        u = np.kron(MeasurementSetting(s).pre_rotation, np.eye(2))
        p = np.real(np.diag(u @ joint @ u.conj().T)).clip(min=0).reshape(2, 2)
        out[s] = p
    return out


def sample_counts(joint: np.ndarray, shots: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    for s, p in setting_probabilities(joint).items():
        out[s] = rng.multinomial(shots, p.ravel() / p.sum()).reshape(2, 2).astype(float)
    return out


# -- state tomography ------------------------------------------------------------

def postselected_expectations(entry: Mapping[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray, float]:
    """(<X>,<Y>,<Z>), postselected record weight per setting, success probability."""
    missing = set(SETTINGS) - set(entry)
    if missing:
        raise FitError(f"missing settings {sorted(missing)}")
    vec, kept = np.empty(3), np.empty(3)
    for i, s in enumerate(SETTINGS):
        n = np.asarray(entry[s], dtype=float)
        n0, n1 = n[0, 1], n[1, 1]
        if n0 + n1 <= 0:
            raise FitError(f"no ancilla-|1> records in setting {s}")
        vec[i] = (n0 - n1) / (n0 + n1)
        kept[i] = n0 + n1
    total = sum(np.asarray(entry[s], dtype=float).sum() for s in SETTINGS)
    return vec, kept, float(kept.sum() / total)


def bloch_to_rho(vec) -> np.ndarray:
    x, y, z = vec
    return 0.5 * (np.eye(2) + x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"])


def project_psd(m: np.ndarray, trace: float | None = None) -> np.ndarray:
    """Closest PSD matrix (Frobenius) with the given trace (default: that of ``m``).

    Eigenvalues are projected onto the scaled simplex, eigenvectors kept.
    """
    m = np.asarray(m, dtype=complex)
    m = (m + m.conj().T) / 2
    t = float(np.trace(m).real) if trace is None else float(trace)
    if t < 0:
        raise FitError("negative trace")
    evals, evecs = np.linalg.eigh(m)
    mu = evals[::-1]
    cums = np.cumsum(mu) - t
    k = np.nonzero(mu - cums / np.arange(1, mu.size + 1) > 0)[0]
    shift = cums[k[-1]] / (k[-1] + 1) if k.size else 0.0
    lam = np.clip(evals - shift, 0, None)
    return (evecs * lam) @ evecs.conj().T


def qst_linear(entry: Mapping[str, np.ndarray]) -> tuple[np.ndarray, float]:
    """Linear-inversion estimate (may be non-physical) and success probability."""
    vec, _, p = postselected_expectations(entry)
    return bloch_to_rho(vec), p


def qst_single(entry: Mapping[str, np.ndarray]) -> tuple[DensityOperator, float]:
    rho, p = qst_linear(entry)
    return DensityOperator(project_psd(rho, 1.0), (2,)), p


def state_fidelity(rho, psi, strict: bool = False) -> float:
    """``<psi|rho|psi>`` for a normalized pure target."""
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    tr = np.trace(m).real
    if abs(tr - 1) > 1e-9:
        if strict:
            raise FitError(f"density matrix trace {tr} != 1")
        m = m / tr
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ m @ psi))


# -- process tomography ------------------------------------------------------------

@dataclass
class ChiMatrix:
    """Process matrix over {I, X, Y, Z}: ``rho -> sum chi_mn E_m rho E_n^dag``."""

    matrix: np.ndarray
    projected: bool = False
    rank: int | None = None
    condition: float | None = None
    residual: float | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError("chi must be 4x4")
        if not np.allclose(m, m.conj().T, atol=1e-9):
            raise ValueError("chi must be Hermitian")
        self.matrix = m

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(self.matrix[m, n] * _E[m] @ rho @ _E[n].conj().T
                   for m in range(4) for n in range(4))

    def physical(self) -> "ChiMatrix":
        """PSD projection; the trace is capped at 1 (trace non-increasing map)."""
        m = project_psd(self.matrix, max(0.0, min(1.0, self.trace)))
        return ChiMatrix(m, projected=True, rank=self.rank, condition=self.condition)

    def to_json(self) -> dict:
        return {"basis": list(PAULI_BASIS), "real": self.matrix.real.tolist(),
                "imag": self.matrix.imag.tolist(), "projected": self.projected}

    @classmethod
    def from_json(cls, data: Mapping) -> "ChiMatrix":
        m = np.asarray(data["real"], dtype=float) + 1j * np.asarray(data["imag"], dtype=float)
        return cls(m, bool(data.get("projected", False)))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def _hermitian_basis(d: int = 4) -> list[np.ndarray]:
    basis = []
    for i in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[i, i] = 1
        basis.append(m)
    for i in range(d):
        for j in range(i + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = m[j, i] = 1
            basis.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[i, j], m[j, i] = -1j, 1j
            basis.append(m)
    return basis


_HB = _hermitian_basis()


def _pauli_coords(m: np.ndarray) -> np.ndarray:
    return np.array([np.trace(p @ m).real for p in _E])


def _design(inputs: Sequence[np.ndarray]) -> np.ndarray:
    rows = []
    for rho in inputs:
        rho = np.asarray(rho, dtype=complex)
        cols = []
        for b in _HB:
            img = sum(b[m, n] * _E[m] @ rho @ _E[n] for m in range(4) for n in range(4) if b[m, n] != 0)
            cols.append(_pauli_coords(img))
        rows.append(np.array(cols).T)
    return np.vstack(rows)


class _ChiSolver:
    """Least-squares solver for a fixed input set (design matrix factored once)."""

    def __init__(self, inputs: Sequence[np.ndarray]):
        if len(inputs) == 0:
            raise RankDeficientError("no input states")
        self.design = _design(inputs)
        sv = np.linalg.svd(self.design, compute_uv=False)
        self.rank = int(np.sum(sv > 1e-10 * sv[0]))
        if self.rank < len(_HB):
            raise RankDeficientError(f"input states determine only {self.rank} of 16 chi parameters")
        self.condition = float(sv[0] / sv[-1])
        self.pinv = np.linalg.pinv(self.design)

    def __call__(self, outputs: Sequence[np.ndarray]) -> ChiMatrix:
        target = np.concatenate([_pauli_coords(np.asarray(o, dtype=complex)) for o in outputs])
        coef = self.pinv @ target
        chi = sum(c * b for c, b in zip(coef, _HB))
        resid = float(np.linalg.norm(self.design @ coef - target))
        return ChiMatrix(chi, rank=self.rank, condition=self.condition, residual=resid)


def qpt_fit(inputs: Sequence[np.ndarray], outputs: Sequence[np.ndarray]) -> ChiMatrix:
    """Least-squares chi from input densities and unnormalized output densities.

    ``chi`` is expanded in a real basis of Hermitian 4x4 matrices, so the
    estimate is Hermitian by construction.  Returns the raw (unprojected) fit.
    """
    if len(inputs) != len(outputs):
        raise ValueError("one output per input required")
    return _ChiSolver(inputs)(outputs)


def ideal_chi(instance=None, A=None, C: float | None = None) -> ChiMatrix:
    """Rank-one chi of the map ``rho -> (C A^-1) rho (C A^-1)^dag``."""
    if instance is not None:
        A, C = instance.A, instance.C
    if A is None:
        raise ValueError("need an instance or a matrix")
    C = 1.0 if C is None else C
    op = C * np.linalg.inv(np.asarray(A, dtype=complex))
    v = np.array([np.trace(e.conj().T @ op) / 2 for e in _E])
    return ChiMatrix(np.outer(v, v.conj()))


def process_fidelity(chi_id, chi_exp) -> float:
    """``Tr(chi_id chi_exp) / (Tr chi_id Tr chi_exp)``."""
    a = chi_id.matrix if isinstance(chi_id, ChiMatrix) else np.asarray(chi_id)
    b = chi_exp.matrix if isinstance(chi_exp, ChiMatrix) else np.asarray(chi_exp)
    ta, tb = np.trace(a).real, np.trace(b).real
    if abs(ta) < 1e-15 or abs(tb) < 1e-15:
        raise FitError("process matrix with zero trace")
    return float(np.real(np.trace(a @ b)) / (ta * tb))


def dataset_outputs(dataset: TomographyDataset, indices: Sequence[int] | None = None):
    """Unnormalized linear-inversion outputs ``p_j rho_j`` in index order."""
    idx = sorted(dataset.entries) if indices is None else list(indices)
    out = []
    for j in idx:
        rho, p = qst_linear(dataset.entries[j])
        out.append(p * rho)
    return out


def chi_from_dataset(dataset: TomographyDataset, angles: Sequence[tuple[float, float]] | None = None
                     ) -> ChiMatrix:
    idx = sorted(dataset.entries)
    angles = input_state_set() if angles is None else list(angles)
    inputs = [projector(bloch_ket(*angles[j - 1])) for j in idx]
    return qpt_fit(inputs, dataset_outputs(dataset, idx))


# -- error bars --------------------------------------------------------------------

def _perturbed(entry, rng, n_total):
    vec, kept, p = postselected_expectations(entry)
    if n_total is None:
        return vec, p
    sig = np.sqrt(np.clip(1 - vec ** 2, 0, None) / kept)
    vec = np.clip(vec + rng.standard_normal(3) * sig, -1, 1)
    p = p + rng.standard_normal() * np.sqrt(max(p * (1 - p), 0.0) / n_total)
    return vec, p


def bootstrap_errorbars(dataset: TomographyDataset, n_resamples: int = 1000, seed: int = 0,
                        targets: Mapping[int, np.ndarray] | None = None,
                        chi_id: ChiMatrix | None = None,
                        angles: Sequence[tuple[float, float]] | None = None):
    """Standard deviations of state fidelities (and the process fidelity).

    Each resample perturbs every postselected expectation value by Gaussian
    noise with its binomial standard error; exact datasets give zero spread.
    Returns ``({j: std}, process_std or None)``.
    """
    if n_resamples < 100:
        raise ValueError("need at least 100 resamples")
    idx = sorted(dataset.entries)
    angles = input_state_set() if angles is None else list(angles)
    targets = targets or {}
    solver = _ChiSolver([projector(bloch_ket(*angles[j - 1])) for j in idx]) if chi_id is not None else None
    n_total = None
    if dataset.shots is not None:
        n_total = dataset.shots * len(SETTINGS)
    fids = {j: [] for j in targets}
    procs = []
    for r in range(n_resamples):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        outs = []
        for j in idx:
            vec, p = _perturbed(dataset.entries[j], rng, n_total)
            rho = bloch_to_rho(vec)
            if j in targets:
                fids[j].append(state_fidelity(project_psd(rho, 1.0), targets[j]))
            outs.append(p * rho)
        if chi_id is not None:
            procs.append(process_fidelity(chi_id, solver(outs)))
    stds = {j: float(np.std(v)) for j, v in fids.items()}
    return stds, (float(np.std(procs)) if procs else None)
