"""Local and global time accuracy of the trapezoidal solver.

1. One step of size dt from exact data: the crack-length error follows a
   dt**3 law (local error of a second-order scheme).
2. Whole runs with K time points: the global error decays like K**-2 until
   the spatial error floor is reached.

    python demos/time_step_study.py
"""

import numpy as np

from pknspectral.harness import RunConfig, sweep


def main():
    dts = np.logspace(-3, -1, 7)
    rows = sweep(RunConfig(solver=2, N=40, tol=1e-13, two_term_tip=True), "dt", dts)
    errs = np.array([r["delta_L"] for r in rows])
    p, logc = np.polyfit(np.log10(dts), np.log10(errs), 1)
    print("single step:   " + "  ".join(f"{dt:.0e}:{e:.1e}" for dt, e in zip(dts, errs)))
    print(f"fit dL = {10**logc:.2e} dt^{p:.2f}")

    ks = [15, 30, 60, 120]
    rows = sweep(RunConfig(solver=2, N=40, two_term_tip=True), "k", ks)
    errs = np.array([r["delta_L"] for r in rows])
    print("whole run:     " + "  ".join(f"K={k}:{e:.1e}" for k, e in zip(ks, errs)))
    print("observed orders " + ", ".join(f"{o:.2f}" for o in np.log2(errs[:-1] / errs[1:])))


if __name__ == "__main__":
    main()
