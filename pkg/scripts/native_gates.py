"""Print duration, compensated operator distance and leakage of every native gate."""
import argparse

from hhlsim.device import DeviceParams, native_gate

PAIRS = [("Q1", "Q2"), ("Q2", "Q3"), ("Q3", "Q4")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--device", help="DeviceParams YAML (defaults if omitted)")
    ap.add_argument("--chain", action="store_true", help="include spectator qubits")
    args = ap.parse_args()
    params = DeviceParams.load(args.device) if args.device else DeviceParams()
    print(f"{'gate':<12}{'pair':<8}{'ns':>9}{'distance':>12}{'leakage':>12}")
    for pair in PAIRS:
        for kind in ("SQRT_ISWAP", "ISWAP", "CZ"):
            g = native_gate(kind, pair, params, chain=args.chain)
            print(f"{kind:<12}{'-'.join(pair):<8}{g.duration:9.3f}{g.distance:12.2e}{g.leakage:12.2e}")


if __name__ == "__main__":
    main()
