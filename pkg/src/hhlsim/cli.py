"""Command-line entry point: ``hhlsim {run,ramsey,qpt,report}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, tomography
from .errors import ConfigError, FitError, SimulationError

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_FIT = 0, 1, 2, 3


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    overrides = {k: v for k, v in (("backend", args.backend), ("shots", args.shots),
                                   ("seed", args.seed), ("out", args.out)) if v is not None}
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    bundle = harness.run_pipeline(cfg)
    harness.emit_figures_data(bundle, cfg.out)
    fids = [r.fidelity for r in bundle.records]
    print(f"process fidelity {bundle.process_fidelity:.4f} +/- {bundle.process_fidelity_std:.4f}, "
          f"Tr chi {bundle.chi_exp.trace:.4f}, state fidelities {min(fids):.4f}..{max(fids):.4f}")
    return EXIT_OK


def cmd_ramsey(args) -> int:
    cfg = _config(args)
    path, dphi = harness.ramsey_report(cfg, gate=args.gate)
    print(f"phase difference {dphi:.6f} rad -> {path}")
    return EXIT_OK


def cmd_qpt(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dataset:
        ds = tomography.TomographyDataset.from_csv(args.dataset, cfg.shots)
        chi = tomography.chi_from_dataset(ds, cfg.input_angles())
    else:
        chi = harness.run_pipeline(cfg, ramsey=False).chi_exp
    chi_id = tomography.ideal_chi(A=cfg.A, C=cfg.C)
    f = tomography.process_fidelity(chi_id, chi)
    (out / "fig4.json").write_text(json.dumps(
        {"chi_exp": chi.to_json(), "chi_id": chi_id.to_json(), "trace_exp": chi.trace,
         "trace_id": chi_id.trace, "process_fidelity": f}, indent=2, sort_keys=True) + "\n")
    print(f"process fidelity {f:.4f}, Tr chi {chi.trace:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    path = Path(cfg.out) / "report.json"
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    bundle = harness.ReportBundle.from_json(data)
    harness.emit_figures_data(bundle, cfg.out)
    for r in bundle.records:
        print(f"{r.index:2d}  F={r.fidelity:.4f}+/-{r.fidelity_std:.4f}  p={r.success_probability:.4f}")
    print(f"process fidelity {bundle.process_fidelity:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hhlsim", description="Four-qubit HHL device simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in [("run", cmd_run, "full pipeline and report files"),
                            ("ramsey", cmd_ramsey, "CZ Ramsey calibration curves"),
                            ("qpt", cmd_qpt, "process tomography only"),
                            ("report", cmd_report, "re-emit figure data from report.json")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="YAML experiment configuration")
        s.add_argument("--backend", choices=harness.BACKENDS)
        s.add_argument("--shots", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.set_defaults(func=fn)
        if name == "ramsey":
            s.add_argument("--gate", choices=("device", "ideal", "identity"))
        if name == "qpt":
            s.add_argument("--dataset", help="dataset CSV to fit instead of simulating")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (SimulationError, ValueError, OSError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
