"""Rigid-rotor polar diatomics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from rydpenta.angmath import gaunt
from rydpenta.constants import CRITICAL_DIPOLE_DEBYE, DEBYE_AU, HARTREE_GHZ, KRB_B_GHZ, KRB_DIPOLE_DEBYE

__all__ = [
    "MoleculeParams",
    "RotorState",
    "rotational_energy",
    "dipole_direction_me",
    "spherical_dipole_me",
    "dipole_dipole_estimate",
    "rotor_states",
]

AXES = ("X", "Y", "Z")


@dataclass(frozen=True)
class MoleculeParams:
    """Rotational constant ``B`` in GHz, dipole moment ``d`` in atomic units."""

    B: float = KRB_B_GHZ
    d: float = KRB_DIPOLE_DEBYE * DEBYE_AU

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError(f"rotational constant must be positive, got {self.B}")
        if self.d < 0:
            raise ValueError(f"dipole moment must be non-negative, got {self.d}")
        if self.d / DEBYE_AU >= CRITICAL_DIPOLE_DEBYE:
            raise ValueError(
                f"dipole {self.d / DEBYE_AU:.3f} D is not below the critical {CRITICAL_DIPOLE_DEBYE} D"
            )

    @classmethod
    def from_debye(cls, B: float, d_debye: float) -> "MoleculeParams":
        return cls(B=B, d=d_debye * DEBYE_AU)


@dataclass(frozen=True, order=True)
class RotorState:
    N: int
    M: int

    def __post_init__(self):
        if self.N < 0 or abs(self.M) > self.N:
            raise ValueError(f"invalid rotor state N={self.N}, M={self.M}")


def rotor_states(N_max: int) -> list[RotorState]:
    return [RotorState(N, M) for N in range(N_max + 1) for M in range(-N, N + 1)]


def rotational_energy(params: MoleculeParams, N: int) -> float:
    """B N(N+1) in GHz."""
    if N < 0:
        raise ValueError("N must be non-negative")
    return params.B * N * (N + 1)


_C1 = math.sqrt(4.0 * math.pi / 3.0)


@lru_cache(maxsize=None)
def spherical_dipole_me(q: int, N1: int, M1: int, N2: int, M2: int) -> float:
    """<N1 M1| C_q |N2 M2> for the unit-vector spherical component C_q.

    C_0 = cos(theta), C_{+-1} = -+ sin(theta) e^{+-i phi} / sqrt(2). All
    elements are real under the Condon-Shortley convention.
    """
    return _C1 * gaunt(N1, M1, 1, q, N2, M2)


def dipole_direction_me(K: str, bra: RotorState, ket: RotorState) -> complex:
    """<bra| n_K |ket> for the dipole unit vector n = (sin cos, sin sin, cos)."""
    if K == "Z":
        return complex(spherical_dipole_me(0, bra.N, bra.M, ket.N, ket.M))
    m1 = spherical_dipole_me(-1, bra.N, bra.M, ket.N, ket.M)
    p1 = spherical_dipole_me(1, bra.N, bra.M, ket.N, ket.M)
    if K == "X":
        return complex((m1 - p1) / math.sqrt(2.0))
    if K == "Y":
        return 1j * (m1 + p1) / math.sqrt(2.0)
    raise ValueError(f"unknown axis {K!r}")


def cos_matrix(states: list[RotorState]) -> np.ndarray:
    """Matrix of cos(theta) over ``states``."""
    n = len(states)
    out = np.zeros((n, n))
    for i, a in enumerate(states):
        for j, b in enumerate(states):
            if a.M == b.M and abs(a.N - b.N) == 1:
                out[i, j] = spherical_dipole_me(0, a.N, a.M, b.N, b.M)
    return out


def cos2_matrix(states: list[RotorState]) -> np.ndarray:
    """Matrix of cos^2(theta) over ``states``, exact within the truncation.

    Uses cos^2 = 1/3 + (2/3) sqrt(4pi/5) Y_20 rather than squaring the
    truncated cos matrix, which would be wrong in the top N shell.
    """
    n = len(states)
    out = np.zeros((n, n))
    c2 = (2.0 / 3.0) * math.sqrt(4.0 * math.pi / 5.0)
    for i, a in enumerate(states):
        for j, b in enumerate(states):
            if a.M != b.M:
                continue
            v = c2 * gaunt(a.N, a.M, 2, 0, b.N, b.M)
            if i == j:
                v += 1.0 / 3.0
            out[i, j] = v
    return out


def dipole_dipole_estimate(d: float, separation: float) -> float:
    """Head-to-tail interaction of two parallel point dipoles, in GHz.

    Magnitude 2 d^2 / R^3 for two dipoles aligned along their separation
    axis. Only used to judge whether the dipole-dipole term may be dropped.
    """
    if separation <= 0:
        raise ValueError("separation must be positive")
    return 2.0 * d * d / separation**3 * HARTREE_GHZ
