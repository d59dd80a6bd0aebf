"""Coherence-limited pi-gate fidelity of each qubit at its default pulse length."""
import argparse

from hhlsim.device import DeviceParams, pi_gate_fidelity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trajectories", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    params = DeviceParams()
    for q, ns in zip(params.labels, params.pi_pulse_ns):
        f = pi_gate_fidelity(q, ns, params, trajectories=args.trajectories, seed=args.seed)
        print(f"{q}  {ns:6.1f} ns  F = {f:.4f}")


if __name__ == "__main__":
    main()
