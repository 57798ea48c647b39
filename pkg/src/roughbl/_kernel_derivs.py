"""Partial derivatives of the half-plane Stokes Poisson kernel.

Generated by scripts/derive_kernels.py; do not edit by hand.
"""

import numpy as np

_PI = np.pi

def _d00(t, y):
    c0 = t**2
    c1 = y**2
    c2 = 2/(_PI*(c0 + c1)**2)
    g11 = c0*c2*y
    g12 = c1*c2*t
    g22 = c2*y**3
    return g11, g12, g22


def _d01(t, y):
    c0 = t**2
    c1 = y**2
    c2 = 1/(_PI*(c0 + c1)**3)
    c3 = 2*c2
    g11 = -c0*c3*(-c0 + 3*c1)
    g12 = -4*c2*t*y*(-t + y)*(t + y)
    g22 = -c1*c3*(-3*c0 + c1)
    return g11, g12, g22


def _d10(t, y):
    c0 = t**2
    c1 = y**2
    c2 = 1/(_PI*(c0 + c1)**3)
    c3 = c2*t
    g11 = 4*c3*y*(-t + y)*(t + y)
    g12 = 2*c1*c2*(-3*c0 + c1)
    g22 = -8*c3*y**3
    return g11, g12, g22


def _d02(t, y):
    c0 = t**2
    c1 = y**2
    c2 = 1/(_PI*(c0 + c1)**4)
    c3 = t**4
    c4 = y**4
    c5 = -8*c0*c1
    c6 = 4*c2
    g11 = 24*c0*c2*y*(-t + y)*(t + y)
    g12 = c6*t*(c3 + 3*c4 + c5)
    g22 = c6*y*(3*c3 + c4 + c5)
    return g11, g12, g22


def _d11(t, y):
    c0 = t**4
    c1 = y**4
    c2 = t**2
    c3 = y**2
    c4 = -8*c2*c3
    c5 = 1/_PI
    c6 = (c2 + c3)**(-4)
    c7 = 4*c5*c6
    g11 = -c7*t*(c0 + 3*c1 + c4)
    g12 = -c7*y*(3*c0 + c1 + c4)
    g22 = 24*c3*c5*c6*t*(-t + y)*(t + y)
    return g11, g12, g22


def _d20(t, y):
    c0 = t**2
    c1 = y**2
    c2 = 1/(_PI*(c0 + c1)**4)
    g11 = 4*c2*y*(-8*c0*c1 + 3*t**4 + y**4)
    g12 = -24*c1*c2*t*(-t + y)*(t + y)
    g22 = -8*c2*y**3*(-5*c0 + c1)
    return g11, g12, g22


def _d03(t, y):
    c0 = t**2
    c1 = t**4
    c2 = y**4
    c3 = y**2
    c4 = c0*c3
    c5 = c0 + c3
    c6 = 1/(_PI*c5**5)
    c7 = t*y
    c8 = 4*c7
    g11 = -24*c0*c6*(c1 + 5*c2 - 10*c4)
    g12 = -48*c6*c7*(2*c1 + c2 - 5*c4)
    g22 = -12*c6*(c5 - c8)*(c5 + c8)*(-t + y)*(t + y)
    return g11, g12, g22


def _d12(t, y):
    c0 = y**4
    c1 = t**4
    c2 = t**2
    c3 = y**2
    c4 = -5*c2*c3
    c5 = t*y
    c6 = c2 + c3
    c7 = 1/(_PI*c6**5)
    c8 = 48*c5*c7
    c9 = 4*c5
    g11 = c8*(c0 + 2*c1 + c4)
    g12 = 12*c7*(c6 - c9)*(c6 + c9)*(-t + y)*(t + y)
    g22 = -c8*(2*c0 + c1 + c4)
    return g11, g12, g22


def _d21(t, y):
    c0 = t*y
    c1 = 4*c0
    c2 = t**2
    c3 = y**2
    c4 = c2 + c3
    c5 = 1/(_PI*c4**5)
    c6 = t**4
    c7 = y**4
    c8 = c2*c3
    g11 = -12*c5*(-c1 + c4)*(c1 + c4)*(-t + y)*(t + y)
    g12 = 48*c0*c5*(c6 + 2*c7 - 5*c8)
    g22 = 24*c3*c5*(5*c6 + c7 - 10*c8)
    return g11, g12, g22


def _d30(t, y):
    c0 = t**4
    c1 = y**4
    c2 = y**2
    c3 = t**2
    c4 = 5*c3
    c5 = 1/(_PI*(c2 + c3)**5)
    c6 = 48*c5*t
    g11 = -c6*y*(c0 + 2*c1 - c2*c4)
    g12 = -24*c2*c5*(5*c0 + c1 - 10*c2*c3)
    g22 = c6*y**3*(3*c2 - c4)
    return g11, g12, g22


TABLE = {
    (0, 0): _d00,
    (0, 1): _d01,
    (1, 0): _d10,
    (0, 2): _d02,
    (1, 1): _d11,
    (2, 0): _d20,
    (0, 3): _d03,
    (1, 2): _d12,
    (2, 1): _d21,
    (3, 0): _d30,
}
