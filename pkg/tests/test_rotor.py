import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rydpenta.angmath import spherical_harmonic
from rydpenta.constants import DEBYE_AU, HARTREE_GHZ
from rydpenta.rotor import (
    MoleculeParams,
    RotorState,
    cos2_matrix,
    cos_matrix,
    dipole_dipole_estimate,
    dipole_direction_me,
    rotational_energy,
    rotor_states,
)

KRB = MoleculeParams()


def test_default_molecule():
    assert KRB.B == 1.114
    assert KRB.d == pytest.approx(0.566 * DEBYE_AU, rel=1e-15)
    assert MoleculeParams.from_debye(1.114, 0.566) == KRB


@pytest.mark.parametrize("kw", [dict(B=0.0), dict(B=-1.0), dict(d=-0.1), dict(d=2.0 * DEBYE_AU)])
def test_molecule_validation(kw):
    with pytest.raises(ValueError):
        MoleculeParams(**kw)


def test_rotational_energies():
    assert rotational_energy(KRB, 0) == 0.0
    assert abs(rotational_energy(KRB, 5) - 33.42) < 1e-10
    assert abs(rotational_energy(KRB, 6) - 46.788) < 1e-10
    with pytest.raises(ValueError):
        rotational_energy(KRB, -1)


def test_rotor_state_enumeration():
    states = rotor_states(3)
    assert len(states) == 16
    assert states[0] == RotorState(0, 0)
    with pytest.raises(ValueError):
        RotorState(1, 2)


def _direction_quadrature(K, bra, ket):
    comp = {
        "X": lambda t, p: math.sin(t) * math.cos(p),
        "Y": lambda t, p: math.sin(t) * math.sin(p),
        "Z": lambda t, p: math.cos(t),
    }[K]
    out = []
    for part in (np.real, np.imag):

        def f(t, p):
            y = np.conj(spherical_harmonic(bra.N, bra.M, t, p)) * spherical_harmonic(ket.N, ket.M, t, p)
            return float(part(y * comp(t, p))) * math.sin(t)

        out.append(integrate.dblquad(f, 0, 2 * math.pi, 0, math.pi, epsabs=1e-11)[0])
    return complex(*out)


def test_dipole_direction_known_values():
    s, p0, p1 = RotorState(0, 0), RotorState(1, 0), RotorState(1, 1)
    assert dipole_direction_me("Z", s, p0) == pytest.approx(1 / math.sqrt(3), abs=1e-14)
    assert dipole_direction_me("Z", p0, p0) == 0.0
    assert dipole_direction_me("X", s, p1) == pytest.approx(-1 / math.sqrt(6), abs=1e-14)
    with pytest.raises(ValueError):
        dipole_direction_me("W", s, p0)


@pytest.mark.parametrize(
    "K,bra,ket",
    [
        ("X", (0, 0), (1, 1)),
        ("Y", (0, 0), (1, 1)),
        ("Y", (2, -1), (1, 0)),
        ("X", (2, 2), (3, 1)),
        ("Z", (2, 1), (3, 1)),
    ],
)
def test_dipole_direction_matches_quadrature(K, bra, ket):
    b, k = RotorState(*bra), RotorState(*ket)
    assert abs(dipole_direction_me(K, b, k) - _direction_quadrature(K, b, k)) < 1e-9


def test_direction_components_hermitian():
    states = rotor_states(3)
    for K in "XYZ":
        M = np.array([[dipole_direction_me(K, a, b) for b in states] for a in states])
        np.testing.assert_allclose(M, M.conj().T, atol=1e-14)


def test_cos_matrices():
    states = rotor_states(4)
    C, C2 = cos_matrix(states), cos2_matrix(states)
    np.testing.assert_allclose(C, C.T)
    np.testing.assert_allclose(C2, C2.T)
    # field-free ground state: isotropic alignment
    assert C2[0, 0] == pytest.approx(1 / 3, abs=1e-15)
    assert C[0, 0] == 0.0
    # below the truncation edge cos^2 equals the square of cos
    low = [i for i, s in enumerate(states) if s.N <= 2]
    np.testing.assert_allclose((C @ C)[np.ix_(low, low)], C2[np.ix_(low, low)], atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.integers(0, 4), st.integers(-4, 4))
def test_cos_selection_rules(N1, N2, M):
    if abs(M) > min(N1, N2):
        return
    v = dipole_direction_me("Z", RotorState(N1, M), RotorState(N2, M))
    if abs(N1 - N2) != 1:
        assert v == 0.0


def test_dipole_dipole_estimate():
    d = KRB.d
    assert dipole_dipole_estimate(0.0, 150.0) == 0.0
    assert dipole_dipole_estimate(d, 300.0) == pytest.approx(dipole_dipole_estimate(d, 150.0) / 8, rel=1e-14)
    assert 0.10 <= dipole_dipole_estimate(d, 150.0) <= 0.20
    assert dipole_dipole_estimate(d, 150.0) == pytest.approx(2 * d * d / 150.0**3 * HARTREE_GHZ)
    with pytest.raises(ValueError):
        dipole_dipole_estimate(d, 0.0)
