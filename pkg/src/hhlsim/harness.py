"""Experiment orchestration: config, the 18-input pipeline, Ramsey scans and report files.

Seeds: input ``j`` simulates with ``SeedSequence(seed, spawn_key=(0, j))`` and
samples its counts with ``spawn_key=(1, j)``; bootstrap resample ``r`` uses
``SeedSequence(seed + 1, spawn_key=(r,))``; the noisy Ramsey scan point ``k``
uses ``SeedSequence(seed + 2, spawn_key=(k,))``.  Re-running a subset of
inputs therefore reproduces their numbers exactly.
"""
from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__, hhl, tomography
from .device import DeviceParams, NoiseModel, phase_difference, ramsey_cz_calibration
from .errors import ConfigError

BACKENDS = ("ideal", "device", "device-noisy")


@dataclass
class ExperimentConfig:
    """Run configuration; YAML keys match the field names."""

    device: str | None = None          # DeviceParams YAML; defaults when absent
    A: list = field(default_factory=lambda: hhl.DEFAULT_MATRIX.tolist())
    C: float = 1.0
    backend: str = "ideal"
    shots: int | None = None           # None: exact probabilities
    seed: int = 0
    inputs: list | None = None         # [[theta, phi], ...]; default 18-state set
    out: str = "out"
    trajectories: int = 400            # noisy backend only
    bootstrap: int = 1000              # resamples when shots are given
    ramsey_points: int = 37

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.shots is not None and (not isinstance(self.shots, int) or self.shots <= 0):
            raise ConfigError("shots must be a positive integer")
        if self.device is not None and not Path(self.device).is_file():
            raise ConfigError(f"device file {self.device} not found")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.trajectories < 1 or self.bootstrap < 100 or self.ramsey_points < 3:
            raise ConfigError("need trajectories >= 1, bootstrap >= 100, ramsey_points >= 3")
        a = np.asarray(self.A)
        if a.shape != (2, 2):
            raise ConfigError("A must be a 2x2 matrix")
        if self.inputs is not None:
            if not self.inputs or any(len(p) != 2 for p in self.inputs):
                raise ConfigError("inputs must be a non-empty list of [theta, phi] pairs")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    def device_params(self) -> DeviceParams:
        return DeviceParams.load(self.device) if self.device else DeviceParams()

    def input_angles(self) -> list[tuple[float, float]]:
        if self.inputs is None:
            return tomography.input_state_set()
        return [(float(t), float(p)) for t, p in self.inputs]


@dataclass
class InputRecord:
    index: int
    theta: float
    phi: float
    bloch: list[float]
    fidelity: float
    fidelity_std: float
    success_probability: float


@dataclass
class ReportBundle:
    records: list[InputRecord]
    chi_exp: tomography.ChiMatrix
    chi_id: tomography.ChiMatrix
    process_fidelity: float
    process_fidelity_std: float
    ramsey: dict | None = None
    dataset: tomography.TomographyDataset | None = None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "chi_exp": self.chi_exp.to_json(),
            "chi_id": self.chi_id.to_json(),
            "chi_exp_trace": self.chi_exp.trace,
            "process_fidelity": self.process_fidelity,
            "process_fidelity_std": self.process_fidelity_std,
            "ramsey": self.ramsey,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ReportBundle":
        return cls([InputRecord(**r) for r in data["records"]],
                   tomography.ChiMatrix.from_json(data["chi_exp"]),
                   tomography.ChiMatrix.from_json(data["chi_id"]),
                   data["process_fidelity"], data["process_fidelity_std"], data.get("ramsey"))


def _seed_int(seed: int, *key) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def run_pipeline(config: ExperimentConfig, ramsey: bool = True) -> ReportBundle:
    """Simulate every input, run state and process tomography, attach Ramsey data."""
    params = config.device_params()
    angles = config.input_angles()
    A = np.asarray(config.A, dtype=complex)
    entries, targets = {}, {}
    for j, (theta, phi) in enumerate(angles, 1):
        inst = hhl.LinearSystemInstance.from_bloch(theta, phi, A, config.C)
        out = hhl.run(inst, config.backend, params=params, trajectories=config.trajectories,
                      seed=_seed_int(config.seed, 0, j))
        if config.shots is None:
            entries[j] = tomography.setting_probabilities(out.joint)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, j)))
            entries[j] = tomography.sample_counts(out.joint, config.shots, rng)
        targets[j] = hhl.classical_solve(A, inst.b)[0]
    dataset = tomography.TomographyDataset(entries, config.shots)
    chi_id = tomography.ideal_chi(A=A, C=config.C)
    chi_exp = tomography.chi_from_dataset(dataset, angles)
    if config.shots is not None:
        stds, pstd = tomography.bootstrap_errorbars(dataset, config.bootstrap, config.seed + 1,
                                                    targets, chi_id, angles)
    else:
        stds, pstd = {j: 0.0 for j in targets}, 0.0
    records = []
    for j, (theta, phi) in enumerate(angles, 1):
        rho, p = tomography.qst_single(entries[j])
        records.append(InputRecord(j, theta, phi, rho.bloch_vector().tolist(),
                                   tomography.state_fidelity(rho, targets[j]), stds[j], p))
    bundle = ReportBundle(records, chi_exp, chi_id,
                          tomography.process_fidelity(chi_id, chi_exp), pstd,
                          ramsey_scan(config, params) if ramsey else None, dataset)
    bundle.metadata = run_metadata(config)
    return bundle


def ramsey_scan(config: ExperimentConfig, params: DeviceParams | None = None,
                gate: str | None = None) -> dict:
    """Ramsey curves for both control states and the fitted phase difference."""
    params = params or config.device_params()
    if gate is None:
        gate = "ideal" if config.backend == "ideal" else "device"
    noise = NoiseModel.from_params(params) if config.backend == "device-noisy" else None
    thetas = np.linspace(0, 2 * np.pi, config.ramsey_points, endpoint=False)
    curves = [ramsey_cz_calibration(params, c, thetas, gate=gate, noise=noise,
                                    trajectories=config.trajectories, seed=config.seed + 2)
              for c in (0, 1)]
    fits = [c.fit() for c in curves]
    return {"gate": gate, "theta": thetas.tolist(),
            "p1_control0": curves[0].p1.tolist(), "p1_control1": curves[1].p1.tolist(),
            "phase_control0": fits[0][2], "phase_control1": fits[1][2],
            "visibility_control0": 2 * fits[0][1], "visibility_control1": 2 * fits[1][1],
            "phase_difference": phase_difference(*curves)}


def run_metadata(config: ExperimentConfig) -> dict:
    import scipy

    return {"seed": config.seed, "backend": config.backend, "shots": config.shots,
            "package_version": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}


def ramsey_report(config: ExperimentConfig, out_dir=None, gate: str | None = None) -> tuple[Path, float]:
    out = Path(out_dir or config.out)
    out.mkdir(parents=True, exist_ok=True)
    data = ramsey_scan(config, gate=gate)
    path = out / "ramsey.csv"
    _write_ramsey(path, data)
    (out / "ramsey_fit.json").write_text(_dumps({k: v for k, v in data.items()
                                                 if not isinstance(v, list)}))
    return path, data["phase_difference"]


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_ramsey(path: Path, data: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "p1_control0", "p1_control1"])
        for row in zip(data["theta"], data["p1_control0"], data["p1_control1"]):
            w.writerow([repr(float(v)) for v in row])


def emit_figures_data(bundle: ReportBundle, out_dir) -> list[Path]:
    """Write the report files; only metadata.json carries a timestamp."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "fig3b.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input_index", "operator", "value"])
        for r in bundle.records:
            for op, v in zip("XYZ", r.bloch):
                w.writerow([r.index, op, repr(float(v))])
    written.append(path)

    path = out / "fig3c.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input_index", "fidelity", "std", "success_probability"])
        for r in bundle.records:
            w.writerow([r.index, repr(r.fidelity), repr(r.fidelity_std), repr(r.success_probability)])
    written.append(path)

    path = out / "fig4.json"
    path.write_text(_dumps({"chi_exp": bundle.chi_exp.to_json(), "chi_id": bundle.chi_id.to_json(),
                            "trace_exp": bundle.chi_exp.trace, "trace_id": bundle.chi_id.trace,
                            "process_fidelity": bundle.process_fidelity,
                            "process_fidelity_std": bundle.process_fidelity_std}))
    written.append(path)

    if bundle.ramsey is not None:
        path = out / "ramsey.csv"
        _write_ramsey(path, bundle.ramsey)
        written.append(path)

    if bundle.dataset is not None:
        path = out / "dataset.csv"
        bundle.dataset.to_csv(path)
        written.append(path)

    path = out / "report.json"
    path.write_text(_dumps(bundle.to_json()))
    written.append(path)
    if bundle.metadata:
        path = out / "metadata.json"
        path.write_text(_dumps(bundle.metadata))
        written.append(path)
    return written
