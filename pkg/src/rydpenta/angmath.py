"""Angular momentum algebra for integer angular momenta.

Clebsch-Gordan coefficients are evaluated with the Racah sum in exact
rational arithmetic; only the final square root is taken in floating point.
All phases follow the Condon-Shortley convention.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "clebsch_gordan",
    "gaunt",
    "spherical_harmonic",
    "ladder_factors",
    "assoc_legendre_normalized",
]


def _check_jm(j: int, m: int, name: str = "j") -> None:
    if j < 0:
        raise ValueError(f"{name}={j} must be non-negative")
    if abs(m) > j:
        raise ValueError(f"|m|={abs(m)} exceeds {name}={j}")


def _int_args(*args) -> tuple[int, ...]:
    out = []
    for a in args:
        ia = int(a)
        if ia != a:
            raise ValueError(f"only integer angular momenta are supported, got {a}")
        out.append(ia)
    return tuple(out)


@lru_cache(maxsize=None)
def _cg_exact(j1: int, m1: int, j2: int, m2: int, J: int, M: int) -> tuple[int, Fraction]:
    """Return (sign, square) with CG = sign * sqrt(square), both exact."""
    f = math.factorial
    pre = Fraction(
        (2 * J + 1) * f(J + j1 - j2) * f(J - j1 + j2) * f(j1 + j2 - J),
        f(j1 + j2 + J + 1),
    )
    pre *= f(J + M) * f(J - M) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)
    kmin = max(0, j2 - J - m1, j1 - J + m2)
    kmax = min(j1 + j2 - J, j1 - m1, j2 + m2)
    s = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (
            f(k)
            * f(j1 + j2 - J - k)
            * f(j1 - m1 - k)
            * f(j2 + m2 - k)
            * f(J - j2 + m1 + k)
            * f(J - j1 - m2 + k)
        )
        s += Fraction((-1) ** k, den)
    if s == 0:
        return 0, Fraction(0)
    return (1 if s > 0 else -1), pre * s * s


@lru_cache(maxsize=None)
def clebsch_gordan(j1: int, m1: int, j2: int, m2: int, J: int, M: int) -> float:
    """<j1 m1 j2 m2 | J M> for integer angular momenta.

    Returns 0 when the projections do not add up or the triangle rule fails.
    Raises ValueError for negative j or |m| > j on the inputs.
    """
    j1, m1, j2, m2, J, M = _int_args(j1, m1, j2, m2, J, M)
    _check_jm(j1, m1, "j1")
    _check_jm(j2, m2, "j2")
    if J < 0:
        raise ValueError(f"J={J} must be non-negative")
    if abs(M) > J:
        return 0.0
    if m1 + m2 != M or J < abs(j1 - j2) or J > j1 + j2:
        return 0.0
    sign, sq = _cg_exact(j1, m1, j2, m2, J, M)
    if sign == 0:
        return 0.0
    return sign * math.sqrt(sq.numerator / sq.denominator)


@lru_cache(maxsize=None)
def gaunt(l1: int, m1: int, l2: int, m2: int, l3: int, m3: int) -> float:
    """Integral of conj(Y_l1m1) * Y_l2m2 * Y_l3m3 over the unit sphere."""
    l1, m1, l2, m2, l3, m3 = _int_args(l1, m1, l2, m2, l3, m3)
    _check_jm(l1, m1, "l1")
    _check_jm(l2, m2, "l2")
    _check_jm(l3, m3, "l3")
    if m1 != m2 + m3:
        return 0.0
    if (l1 + l2 + l3) % 2 or l1 < abs(l2 - l3) or l1 > l2 + l3:
        return 0.0
    norm = math.sqrt((2 * l2 + 1) * (2 * l3 + 1) / (4.0 * math.pi * (2 * l1 + 1)))
    return norm * clebsch_gordan(l2, 0, l3, 0, l1, 0) * clebsch_gordan(l2, m2, l3, m3, l1, m1)


def assoc_legendre_normalized(lmax: int, m: int, x):
    """Orthonormalized associated Legendre functions for fixed m >= 0.

    Returns an array of shape (lmax - m + 1, *x.shape) holding
    sqrt((2l+1)/(4pi) (l-m)!/(l+m)!) P_l^m(x) for l = m..lmax, with the
    Condon-Shortley phase included. The three-term recurrence runs on the
    normalized functions, so it is stable well past l = 100.
    """
    x = np.asarray(x, dtype=float)
    if m < 0 or m > lmax:
        raise ValueError("need 0 <= m <= lmax")
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    # P_m^m
    pmm = np.full_like(x, 1.0 / math.sqrt(4.0 * math.pi))
    for k in range(1, m + 1):
        pmm = -math.sqrt((2 * k + 1) / (2.0 * k)) * s * pmm
    out = np.empty((lmax - m + 1,) + x.shape)
    out[0] = pmm
    if lmax == m:
        return out
    out[1] = math.sqrt(2 * m + 3) * x * pmm
    for idx, l in enumerate(range(m + 2, lmax + 1), start=2):
        a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
        b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
        out[idx] = a * (x * out[idx - 1] - b * out[idx - 2])
    return out


def spherical_harmonic(l: int, m: int, theta, phi):
    """Y_lm(theta, phi) with the Condon-Shortley phase.

    Accepts scalars or broadcastable arrays; returns complex.
    """
    l, m = _int_args(l, m)
    _check_jm(l, m, "l")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    plm = assoc_legendre_normalized(l, am, np.cos(theta))[l - am]
    y = plm * np.exp(1j * am * phi)
    if m < 0:
        y = (-1) ** am * np.conj(y)
    if y.ndim == 0:
        return complex(y)
    return y


def ladder_factors(l: int, m: int) -> tuple[float, float]:
    """(a_lm, b_lm) = (sqrt(l(l+1) - m(m+1)), sqrt(l(l+1) - m(m-1)))."""
    l, m = _int_args(l, m)
    _check_jm(l, m, "l")
    a = math.sqrt(l * (l + 1) - m * (m + 1))
    b = math.sqrt(l * (l + 1) - m * (m - 1))
    return a, b
