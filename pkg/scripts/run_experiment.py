"""Noisy 18-input run with full report files, then a per-input summary table.

    python scripts/run_experiment.py --out out/noisy --shots 10000 --seed 7
"""
import argparse

from hhlsim import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--backend", default="device-noisy", choices=harness.BACKENDS)
    ap.add_argument("--shots", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--trajectories", type=int, default=400)
    ap.add_argument("--out", default="out/noisy")
    args = ap.parse_args()
    cfg = harness.ExperimentConfig(backend=args.backend, shots=args.shots, seed=args.seed,
                                   trajectories=args.trajectories, out=args.out)
    bundle = harness.run_pipeline(cfg)
    harness.emit_figures_data(bundle, cfg.out)
    print(" j   theta    phi     F      +/-     p")
    for r in bundle.records:
        print(f"{r.index:2d} {r.theta:6.3f} {r.phi:6.3f}  {r.fidelity:.4f} {r.fidelity_std:.4f} "
              f"{r.success_probability:.4f}")
    print(f"process fidelity {bundle.process_fidelity:.4f} +/- {bundle.process_fidelity_std:.4f}, "
          f"Tr chi_exp {bundle.chi_exp.trace:.4f} (ideal {bundle.chi_id.trace:.4f})")
    print(f"Ramsey phase difference {bundle.ramsey['phase_difference']:.4f} rad")
    print(f"files in {cfg.out}")


if __name__ == "__main__":
    main()
