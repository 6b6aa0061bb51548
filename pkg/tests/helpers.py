import numpy as np

from quadtank.plant import OperatingPoint


def exact_equilibrium(geom, op):
    """Operating point whose levels are the true steady state for ``op.v0``.

    Upper tanks balance their single pump share against their own outflow;
    lower tanks additionally receive the upper-tank outflow.
    """
    (g1, g2), (k1, k2) = op.gamma, op.pump_gain
    v1, v2 = op.v0
    a = np.asarray(geom.outlet_area)
    two_g = 2.0 * geom.g
    q3 = (1 - g2) * k2 * v2
    q4 = (1 - g1) * k1 * v1
    h = ((g1 * k1 * v1 + q3) / a[0]) ** 2 / two_g, ((g2 * k2 * v2 + q4) / a[1]) ** 2 / two_g, \
        (q3 / a[2]) ** 2 / two_g, (q4 / a[3]) ** 2 / two_g
    return OperatingPoint(op.phase, h, op.v0, op.pump_gain, op.gamma)
