"""Truncated Fourier lattice and the Galerkin Navier-Stokes interaction coefficients.

Wavevectors are plain ``(k1, k2)`` integer tuples.  The truncated lattice
``Z^2_{0,N}`` excludes the origin and keeps ``max(|k1|, |k2|) <= N``.
"""

import math
from fractions import Fraction
from functools import lru_cache

Wavevector = tuple


def as_rational(value):
    """Parse ints, Fractions and ``"p/q"`` strings exactly; floats stay floats."""
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        return value
    raise TypeError(f"cannot interpret {value!r} as a rational")


def format_rational(value):
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, int):
        return str(value)
    return float(value)


@lru_cache(maxsize=None)
def lattice(N):
    """All of ``Z^2_{0,N}`` in lexicographic order."""
    if N < 1:
        raise ValueError("truncation N must be >= 1")
    return tuple((a, b) for a in range(-N, N + 1) for b in range(-N, N + 1) if (a, b) != (0, 0))


@lru_cache(maxsize=None)
def half_lattice(N):
    """Representatives of ``Z^2_{0,N}`` modulo ``k -> -k``: ``k1 > 0``, or ``k1 = 0`` and ``k2 > 0``."""
    return tuple(k for k in lattice(N) if k[0] > 0 or (k[0] == 0 and k[1] > 0))


def in_lattice(k, N):
    return k != (0, 0) and abs(k[0]) <= N and abs(k[1]) <= N


def add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def neg(a):
    return (-a[0], -a[1])


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def norm2(k, r):
    """``|k|_r^2 = k1^2 + r^2 k2^2``."""
    return k[0] * k[0] + r * r * k[1] * k[1]


def perp_pairing(j, l, r):
    """``<j^perp, l>_r = r (j2 l1 - j1 l2)``."""
    return r * (j[1] * l[0] - j[0] * l[1])


def coeff(j, l, r):
    """Interaction coefficient ``c_{j,l}``; exact when ``r`` is a Fraction."""
    p = perp_pairing(j, l, r)
    if p == 0:
        return p
    if isinstance(r, Fraction):
        return p * (Fraction(1) / norm2(l, r) - Fraction(1) / norm2(j, r))
    return p * (1.0 / norm2(l, r) - 1.0 / norm2(j, r))


def spiral_order(N):
    """Lattice points sorted outward from the origin (norm, then angle)."""
    return sorted(lattice(N), key=lambda k: (k[0] ** 2 + k[1] ** 2, math.atan2(k[1], k[0])))
