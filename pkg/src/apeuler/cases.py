"""Initial data for the bundled case studies.

Both studies run on the periodic unit square with a shear wave along the
diagonal.  The compressible variant perturbs the constant density and the
momentum with O(eps^2) terms, so the data stay well prepared as the Mach
number drops: the density deviation and the compressible part of the
velocity both vanish at rate eps^2, which is what the asymptotic sweeps
measure.  The limit study uses the unperturbed shear, whose pointwise
divergence is zero.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "shear_velocity",
    "comp_initial_data",
    "incomp_initial_data",
]

_TWO_PI = 2.0 * math.pi


def shear_velocity(x, y):
    """Diagonal shear profile shared by every case: both components equal
    sin(2 pi (x - y))."""
    return np.sin(_TWO_PI * (x - y))


def comp_initial_data(eps: float):
    """Well-prepared compressible data: (rho0, (u0x, u0y)) as pointwise
    callables.

    Density is 1 + eps^2 sin^2(2 pi (x+y)); the momentum is the diagonal
    shear plus an O(eps^2) acoustic component, and the velocity passed to
    the projector is momentum divided by density pointwise.
    """
    e2 = eps * eps

    def rho0(x, y):
        s = np.sin(_TWO_PI * (x + y))
        return 1.0 + e2 * s * s

    def m1(x, y):
        return shear_velocity(x, y) + e2 * np.sin(_TWO_PI * (x + y))

    def m2(x, y):
        return shear_velocity(x, y) + e2 * np.cos(_TWO_PI * (x + y))

    def u0x(x, y):
        return m1(x, y) / rho0(x, y)

    def u0y(x, y):
        return m2(x, y) / rho0(x, y)

    return rho0, (u0x, u0y)


def incomp_initial_data():
    """Divergence-free shear data for the limit scheme: v1 = v2 =
    sin(2 pi (x - y))."""
    return (shear_velocity, shear_velocity)
