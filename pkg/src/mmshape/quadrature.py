"""Quadrature rules on the reference triangle and the unit interval."""
import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

DEFAULT_DEGREE = 5


@lru_cache(maxsize=None)
def triangle_rule(degree: int = DEFAULT_DEGREE):
    """Points ``(nq, 2)`` and weights ``(nq,)`` on the triangle (0,0),(1,0),(0,1).

    Weights sum to the reference area 1/2.  Degree 5 uses the 7-point Radon
    rule; other degrees use a collapsed Gauss-Jacobi product rule.
    """
    if degree == 5:
        s = math.sqrt(15.0)
        a, b = (6 - s) / 21, (6 + s) / 21
        pts = np.array([[1 / 3, 1 / 3],
                        [a, a], [1 - 2 * a, a], [a, 1 - 2 * a],
                        [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]])
        wts = np.array([9 / 80] + [(155 - s) / 2400] * 3 + [(155 + s) / 2400] * 3)
    else:
        n = max(1, math.ceil((degree + 1) / 2))
        # x-direction carries the (1 - y) factor of the collapsed coordinates
        gy, wy = roots_jacobi(n, 1.0, 0.0)
        gx, wx = np.polynomial.legendre.leggauss(n)
        y = (gy + 1) / 2
        x = (gx + 1) / 2
        wy = wy / 4  # (1-y) Jacobian with Jacobi weight (1-t)/2 on [-1,1] -> [0,1]
        wx = wx / 2
        X, Y = np.meshgrid(x, y)
        WX, WY = np.meshgrid(wx, wy)
        pts = np.column_stack([(X * (1 - Y)).ravel(), Y.ravel()])
        wts = (WX * WY).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=None)
def line_rule(degree: int = DEFAULT_DEGREE):
    """Gauss-Legendre points on [0, 1] with weights summing to one."""
    n = max(1, math.ceil((degree + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    pts, wts = (x + 1) / 2, w / 2
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts
