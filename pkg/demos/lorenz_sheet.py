"""A slab of the cut sheet squeezed by the Lorenz flow.

The Lorenz field has constant divergence -(sigma + 1 + b) = -41/3 for
the classic parameters, so any volume decays like exp(-41 t / 3).  The
first part checks this on a compact piece of the sheet; the second
integrates a Gaussian weight over the whole infinite sheet at t = 0 and
at one small time step, which is slower (about 20 s).

Run with ``python3 demos/lorenz_sheet.py [--skip-gaussian]``.
"""
import math
import sys

from transportkit.scenarios import lorenz_sheet
from transportkit.transport import transport_report


def volume_part():
    sc = lorenz_sheet(weight="volume", t_grid=[0.0, 0.1, 0.2, 0.3])
    rep = transport_report(sc, workers=1)
    print(rep.table())
    V0 = rep.integral[0]
    for t, V in zip(rep.t_grid, rep.integral):
        print(f"t={t:.2f}  V/V0={V / V0:.8f}  exp(-41t/3)={math.exp(-41 * t / 3):.8f}")


def gaussian_part():
    sc = lorenz_sheet(weight="gaussian")
    rep = transport_report(sc, t_grid=[0.0, 0.02], workers=1)
    print(rep.table())


if __name__ == "__main__":
    volume_part()
    if "--skip-gaussian" not in sys.argv:
        print()
        gaussian_part()
