"""Square-pulse CZ on a qutrit pair: best distance reachable at each hold duration.

For each duration the hold frequency is re-tuned so the conditional phase is
pi, single-qubit Z phases are compensated, and the remaining operator distance
and |2> leakage are printed.  Shows how far a rectangular |11>-|20> pulse is
from a distance of 1e-3.
"""
import argparse

import numpy as np
from scipy.optimize import brentq

from hhlsim.device import DeviceParams, FrequencySchedule, evolve, gate_duration, phase_compensation
from hhlsim.gates import two_qubit_matrix
from hhlsim.qsim import SubsystemLayout


def cz_at(params, control, target, duration, offset):
    hold = params.idle(target) + params.anharmonicity_ghz(control) + offset
    lay = SubsystemLayout((3, 3), (control, target))
    u = evolve(FrequencySchedule({control: [(0.0, duration, hold)]}, duration), params, layout=lay)
    idx = lay.computational_indices()
    return u, u[np.ix_(idx, idx)]


def cphase(block):
    d = np.angle(block[3, 3]) - np.angle(block[2, 2]) - np.angle(block[1, 1]) + np.angle(block[0, 0])
    return np.angle(np.exp(1j * (d - np.pi)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pair", default="Q3,Q4")
    ap.add_argument("--scales", type=float, nargs="+",
                    default=[0.9, 0.95, 0.98, 1.0, 1.02, 1.05, 1.1, 1.2])
    args = ap.parse_args()
    params = DeviceParams()
    control, target = args.pair.split(",")
    t0 = gate_duration("CZ", (control, target), params)
    g = params.coupling_ghz(control, target)
    cz = two_qubit_matrix("CZ")
    print(f"nominal duration {t0:.3f} ns")
    print(f"{'scale':>6}{'ns':>9}{'offset MHz':>12}{'distance':>12}{'leakage':>12}")
    for s in args.scales:
        t = s * t0
        grid = np.linspace(-0.6 * g, 0.6 * g, 49)
        vals = [cphase(cz_at(params, control, target, t, x)[1]) for x in grid]
        best = None
        for x0, x1, v0, v1 in zip(grid, grid[1:], vals, vals[1:]):
            if v0 * v1 < 0 and abs(v0 - v1) < np.pi:
                x = brentq(lambda o: cphase(cz_at(params, control, target, t, o)[1]), x0, x1, xtol=1e-13)
                _, block = cz_at(params, control, target, t, x)
                res = phase_compensation(block, cz, max_residual=1.0).residual
                leak = 1 - np.linalg.norm(block[:, 3]) ** 2
                if best is None or res < best[1]:
                    best = (x, res, leak)
        if best is None:
            print(f"{s:6.2f}{t:9.3f}   no pi phase")
        else:
            print(f"{s:6.2f}{t:9.3f}{best[0] * 1e3:12.4f}{best[1]:12.2e}{best[2]:12.2e}")


if __name__ == "__main__":
    main()
