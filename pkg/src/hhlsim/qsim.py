"""Dense state-vector / density-matrix engine over chains of qubits and qutrits.

Amplitude ordering: site 0 is the most significant index, so the basis state
``|q0 q1 ... q_{n-1}>`` reads left to right (``|Q1 Q2 Q3 Q4>`` for the device
chain).  States are value objects: every operation returns a new state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DimensionError,
    ImpossibleOutcomeError,
    LeakageError,
    NotUnitaryError,
)

UNITARY_ATOL = 1e-10
HERMITIAN_ATOL = 1e-10
IMPOSSIBLE_PROB = 1e-12
LEAKAGE_ATOL = 1e-6

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

Site = Union[int, str]


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered per-site level counts (2 or 3) with unique site labels."""

    dims: tuple[int, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(self.labels) or tuple(f"Q{i + 1}" for i in range(len(dims)))
        if not dims:
            raise DimensionError("layout needs at least one site")
        if any(d not in (2, 3) for d in dims):
            raise DimensionError(f"site dimensions must be 2 or 3, got {dims}")
        if len(labels) != len(dims):
            raise DimensionError("one label per site required")
        if len(set(labels)) != len(labels):
            raise DimensionError(f"duplicate site labels {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def qubits(cls, n: int, labels: Sequence[str] = ()) -> "SubsystemLayout":
        return cls((2,) * n, tuple(labels))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, site: Site) -> int:
        if isinstance(site, (int, np.integer)):
            if not 0 <= site < self.n_sites:
                raise DimensionError(f"site index {site} out of range")
            return int(site)
        try:
            return self.labels.index(site)
        except ValueError:
            raise DimensionError(f"unknown site {site!r}") from None

    def with_dims(self, overrides: dict) -> "SubsystemLayout":
        """Copy of the layout with some sites' level counts replaced."""
        dims = list(self.dims)
        for site, d in overrides.items():
            dims[self.index(site)] = d
        return SubsystemLayout(tuple(dims), self.labels)

    def computational_indices(self) -> np.ndarray:
        """Flat indices of basis states with every site in {0, 1}."""
        grids = np.indices(self.dims).reshape(self.n_sites, -1)
        keep = np.all(grids < 2, axis=0)
        return np.flatnonzero(keep)


@dataclass(frozen=True, eq=False)
class PureState:
    """Amplitude vector on a layout. Subnormalized vectors are allowed."""

    amplitudes: np.ndarray
    layout: SubsystemLayout

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.total_dim:
            raise DimensionError(
                f"{amps.size} amplitudes for layout of dimension {self.layout.total_dim}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, layout: SubsystemLayout, levels: Sequence[int]) -> "PureState":
        amps = np.zeros(layout.total_dim, dtype=complex)
        amps[np.ravel_multi_index(tuple(levels), layout.dims)] = 1.0
        return cls(amps, layout)

    @classmethod
    def product(cls, layout: SubsystemLayout, local_states: Sequence[np.ndarray]) -> "PureState":
        amps = np.ones(1, dtype=complex)
        for d, v in zip(layout.dims, local_states):
            v = np.asarray(v, dtype=complex)
            if v.size != d:
                v = np.concatenate([v, np.zeros(d - v.size)])
            amps = np.kron(amps, v)
        return cls(amps, layout)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "PureState":
        return PureState(self.amplitudes / np.sqrt(self.norm2), self.layout)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Density matrix on ``dims`` (one site or a full layout); trace may be < 1."""

    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = int(np.prod(self.dims))
        if m.shape != (d, d):
            raise DimensionError(f"matrix shape {m.shape} does not match dims {self.dims}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def is_valid(self, atol: float = 1e-9) -> bool:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=HERMITIAN_ATOL):
            return False
        evals = np.linalg.eigvalsh((m + m.conj().T) / 2)
        return bool(evals.min() >= -atol and 0 < self.trace <= 1 + atol)

    def bloch_vector(self) -> np.ndarray:
        """(<X>, <Y>, <Z>) of a single-qubit operator, normalized by its trace."""
        if self.dims != (2,):
            raise DimensionError("Bloch vector is defined for one qubit only")
        t = self.trace
        return np.array([np.trace(self.matrix @ PAULI[p]).real / t for p in "XYZ"])


def _as_targets(layout: SubsystemLayout, targets) -> list[int]:
    if isinstance(targets, (int, str, np.integer)):
        targets = [targets]
    idx = [layout.index(t) for t in targets]
    if len(set(idx)) != len(idx):
        raise DimensionError(f"duplicate targets {targets}")
    return idx


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    return u.shape[0] == u.shape[1] and np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol)


def apply_operator(state: PureState, op: np.ndarray, targets) -> PureState:
    """Apply an arbitrary (not necessarily unitary) operator on ``targets``."""
    layout = state.layout
    idx = _as_targets(layout, targets)
    tdims = [layout.dims[i] for i in idx]
    k = int(np.prod(tdims))
    op = np.asarray(op, dtype=complex)
    if op.shape != (k, k):
        raise DimensionError(f"operator shape {op.shape} does not fit targets with dims {tdims}")
    psi = state.tensor()
    rest = [i for i in range(layout.n_sites) if i not in idx]
    psi = np.transpose(psi, idx + rest).reshape(k, -1)
    psi = (op @ psi).reshape(tdims + [layout.dims[i] for i in rest])
    psi = np.transpose(psi, np.argsort(idx + rest))
    return PureState(psi.reshape(-1), layout)


def apply_unitary(state: PureState, u: np.ndarray, targets) -> PureState:
    """Embed ``u`` on ``targets`` (listed in the order of u's tensor factors)."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionError(f"gate must be square, got shape {u.shape}")
    if not is_unitary(u):
        raise NotUnitaryError("gate matrix is not unitary to 1e-10")
    return apply_operator(state, u, targets)


def embed_operator(op: np.ndarray, layout: SubsystemLayout, targets) -> np.ndarray:
    """Full-dimension matrix of ``op`` acting on ``targets`` (identity elsewhere)."""
    d = layout.total_dim
    cols = np.eye(d, dtype=complex)
    out = np.empty((d, d), dtype=complex)
    for j in range(d):
        out[:, j] = apply_operator(PureState(cols[:, j], layout), op, targets).amplitudes
    return out


def postselect(state: PureState, site: Site, outcome: int, renormalize: bool = True):
    """Project ``site`` onto level ``outcome``.

    Returns ``(state, probability)`` where probability is the squared norm of
    the projected branch.  With ``renormalize=False`` the branch is returned
    unnormalized (its norm then carries the non-trace-preserving weight).
    """
    layout = state.layout
    i = layout.index(site)
    if not 0 <= outcome < layout.dims[i]:
        raise DimensionError(f"outcome {outcome} invalid for a {layout.dims[i]}-level site")
    psi = np.array(state.tensor())
    mask = [slice(None)] * layout.n_sites
    for level in range(layout.dims[i]):
        if level != outcome:
            mask[i] = level
            psi[tuple(mask)] = 0
    amps = psi.reshape(-1)
    prob = float(np.vdot(amps, amps).real)
    if prob < IMPOSSIBLE_PROB:
        raise ImpossibleOutcomeError(
            f"outcome {outcome} on site {layout.labels[i]} has probability {prob:.3g}"
        )
    if renormalize:
        amps = amps / np.sqrt(prob)
    return PureState(amps, layout), prob


def reduced_density(state: PureState, sites) -> DensityOperator:
    """Partial trace keeping ``sites`` (in the given order). Trace = norm2 of state."""
    layout = state.layout
    keep = _as_targets(layout, sites)
    rest = [i for i in range(layout.n_sites) if i not in keep]
    kd = [layout.dims[i] for i in keep]
    k = int(np.prod(kd))
    psi = np.transpose(state.tensor(), keep + rest).reshape(k, -1)
    rho = psi @ psi.conj().T
    return DensityOperator(rho, tuple(kd))


def reduced_density_matrix(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace of a full density matrix over all sites not in ``keep``."""
    n = len(dims)
    keep = list(keep)
    rest = [i for i in range(n) if i not in keep]
    t = np.asarray(rho).reshape(tuple(dims) * 2)
    perm = keep + rest
    t = np.transpose(t, perm + [p + n for p in perm])
    kd = int(np.prod([dims[i] for i in keep]))
    rd = int(np.prod([dims[i] for i in rest])) if rest else 1
    t = t.reshape(kd, rd, kd, rd)
    return np.einsum("ajbj->ab", t)


def _site_operator(obs: str, dim: int) -> np.ndarray:
    p = PAULI[obs]
    if dim == 2:
        return p
    out = np.zeros((dim, dim), dtype=complex)
    out[:2, :2] = p
    if obs == "I":
        out[:2, :2] = np.eye(2)
    return out


def expectation(target, observable: str, site=0, strict: bool = False) -> float:
    """Expectation of a Pauli string on ``site`` (one letter per site).

    ``target`` may be a PureState or a DensityOperator.  Qutrit sites are
    measured inside their {0,1} subspace; with ``strict=True`` a |2>
    population above 1e-6 raises LeakageError.
    """
    sites = [site] if isinstance(site, (int, str, np.integer)) else list(site)
    if len(observable) != len(sites) or any(c not in PAULI for c in observable):
        raise ValueError(f"observable {observable!r} must give one of I,X,Y,Z per site")
    if isinstance(target, PureState):
        rho = reduced_density(target, sites)
    elif isinstance(target, DensityOperator):
        if len(target.dims) == len(sites) and all(isinstance(s, (int, np.integer)) for s in sites) \
                and sites == list(range(len(sites))):
            rho = target
        else:
            idx = [int(s) for s in sites]
            rho = DensityOperator(reduced_density_matrix(target.matrix, target.dims, idx),
                                  tuple(target.dims[i] for i in idx))
    else:
        raise TypeError("expectation needs a PureState or DensityOperator")
    op = np.ones((1, 1), dtype=complex)
    for c, d in zip(observable, rho.dims):
        op = np.kron(op, _site_operator(c, d))
    if strict:
        for k, d in enumerate(rho.dims):
            if d == 3:
                marg = reduced_density_matrix(rho.matrix, rho.dims, [k])
                if marg[2, 2].real > LEAKAGE_ATOL:
                    raise LeakageError(f"|2> population {marg[2, 2].real:.3g} on a measured site")
    return float(np.trace(rho.matrix @ op).real)


def leakage_population(state: PureState, site: Site) -> float:
    """Population of levels >= 2 on ``site`` (0 for qubit sites)."""
    i = state.layout.index(site)
    if state.layout.dims[i] == 2:
        return 0.0
    rho = reduced_density(state, [i]).matrix
    return float(rho[2, 2].real)


def average_trajectories(runs: Iterable[PureState], weights=None) -> DensityOperator:
    """Convex mixture sum_k w_k |psi_k><psi_k| (summed in list order)."""
    runs = list(runs)
    if not runs:
        raise ValueError("no trajectories to average")
    layout = runs[0].layout
    if any(r.layout != layout for r in runs):
        raise DimensionError("trajectories must share one layout")
    if weights is None:
        weights = np.full(len(runs), 1.0 / len(runs))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(runs),) or abs(weights.sum() - 1.0) > 1e-9 or weights.min() < 0:
        raise ValueError("weights must be non-negative and sum to 1")
    amps = np.stack([r.amplitudes for r in runs])
    rho = (amps.T * weights) @ amps.conj()
    return DensityOperator(rho, layout.dims)


def average_batch(amps: np.ndarray, dims: Sequence[int]) -> DensityOperator:
    """Equal-weight mixture of a (n_traj, dim) batch of amplitude vectors."""
    amps = np.asarray(amps)
    rho = amps.T @ amps.conj() / amps.shape[0]
    return DensityOperator(rho, tuple(dims))
