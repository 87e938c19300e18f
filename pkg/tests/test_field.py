import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydpenta.angmath import ladder_factors
from rydpenta.constants import HARTREE_GHZ
from rydpenta.field import (
    FieldCalculator,
    SitePosition,
    UnsupportedGeometry,
    a_coeff,
    core_field_interaction,
    electron_field_me,
    field_coefficients,
    field_to_ghz,
    quadrature_oracle_field_me,
)
from rydpenta.rotor import RotorState
from rydpenta.rydberg import RadialGrid, radial_wavefunction


@pytest.fixture(scope="module")
def orbitals():
    g = RadialGrid.for_n(23)
    return {(23, 0): radial_wavefunction(23, 0, g), **{(20, l): radial_wavefunction(20, l, g) for l in range(3, 9)}}


@pytest.fixture(scope="module")
def calc(orbitals):
    return FieldCalculator(list(orbitals.values()))


@pytest.fixture(scope="module")
def states(orbitals):
    return [(n, l, m) for (n, l) in orbitals for m in range(-l, l + 1)]


@pytest.mark.parametrize("l", range(0, 7))
def test_a_coeff_z_on_axis(l):
    norm = math.sqrt((2 * l + 1) / (4 * math.pi))
    for m in range(-l, l + 1):
        up = a_coeff("Z", l, m, SitePosition.on_z(500.0, +1))
        down = a_coeff("Z", l, m, SitePosition.on_z(500.0, -1))
        assert up == pytest.approx(norm if m == 0 else 0.0, abs=1e-14)
        assert down == pytest.approx((-1) ** (l + 1) * norm if m == 0 else 0.0, abs=1e-14)


def _appendix_closed_form(K, l, m, th, ph):
    """Independent evaluation of the closed-form coefficient with mpmath harmonics."""

    def yc(mm):
        if abs(mm) > l:
            return 0
        return mpmath.conj(mpmath.spherharm(l, mm, th, ph))

    a, b = ladder_factors(l, m)
    e = mpmath.exp(1j * ph)
    lad = yc(m + 1) * e * a - yc(m - 1) / e * b
    mix = yc(m + 1) / e * a + yc(m - 1) * e * b
    st_, ct = mpmath.sin(th), mpmath.cos(th)
    if K == "X":
        v = yc(m) * st_ * mpmath.cos(ph) + lad * ct * mpmath.cos(ph) - 1j * mix * st_
    elif K == "Y":
        v = yc(m) * st_ * mpmath.sin(ph) + lad * ct * mpmath.sin(ph) + 1j * mix * ct
    else:
        v = yc(m) * ct - lad * st_
    return complex(v)


@pytest.mark.parametrize("K", ["X", "Y", "Z"])
@pytest.mark.parametrize("l,m", [(2, 1), (3, -2), (5, 0)])
def test_a_coeff_general_angle(K, l, m):
    site = SitePosition(600.0, 0.3, 0.1)
    assert abs(a_coeff(K, l, m, site) - _appendix_closed_form(K, l, m, 0.3, 0.1)) < 1e-12


def test_separated_coefficients_relation_to_closed_form():
    for site in (SitePosition.on_z(400.0, 1), SitePosition.on_z(400.0, -1), SitePosition(400.0, 0.7, 0.3)):
        for l in range(6):
            for m in range(-l, l + 1):
                P, T = field_coefficients("Z", l, m, site)
                assert abs(a_coeff("Z", l, m, site) - (P + 2 * T)) < 1e-13
                if site.on_axis:
                    for K in "XY":
                        P, T = field_coefficients(K, l, m, site)
                        assert abs(a_coeff(K, l, m, site) - (P + 2 * T)) < 1e-13


@settings(max_examples=8, deadline=None)
@given(
    st.floats(0.05, 3.1),
    st.floats(-3.1, 3.1),
    st.floats(0.05, 3.1),
    st.floats(-3.1, 3.1),
    st.sampled_from([0.3, 2.5]),
)
def test_separated_expansion_is_the_coulomb_field(th_R, ph_R, th_r, ph_r, ratio):
    # sum_LM 4pi/(2L+1) Y_LM(r^) [f_L' P + f_L/R T] = (r - R)_K / |r - R|^3
    from rydpenta.angmath import spherical_harmonic

    R, r = 1.0, ratio
    site = SitePosition(R, th_R, ph_R)
    rvec = r * np.array([math.sin(th_r) * math.cos(ph_r), math.sin(th_r) * math.sin(ph_r), math.cos(th_r)])
    diff = rvec - site.cartesian
    exact = diff / np.linalg.norm(diff) ** 3
    L_max = 40
    total = np.zeros(3, dtype=complex)
    for L in range(L_max + 1):
        if r < R:
            f, fp = r**L / R ** (L + 1), -(L + 1) * r**L / R ** (L + 2)
        else:
            f, fp = R**L / r ** (L + 1), L * R ** (L - 1) / r ** (L + 1)
        for M in range(-L, L + 1):
            y = spherical_harmonic(L, M, th_r, ph_r)
            for k, K in enumerate("XYZ"):
                P, T = field_coefficients(K, L, M, site)
                total[k] += 4 * math.pi / (2 * L + 1) * y * (fp * P + f / R * T)
    np.testing.assert_allclose(total.real, exact, atol=1e-9 * np.abs(exact).max() + 1e-12)
    assert np.abs(total.imag).max() < 1e-9


def test_z_selection_rule(orbitals):
    site = SitePosition.on_z(600.0)
    a, b = orbitals[(20, 3)], orbitals[(20, 4)]
    assert electron_field_me("Z", site, a, 0, b, 1) == 0
    assert electron_field_me("X", site, a, 0, b, 2) == 0


def test_matrices_agree_with_elements(calc, states):
    site = SitePosition.on_z(500.0, -1)
    F = calc.matrices(site, states)
    rng = np.random.default_rng(3)
    for K in "XYZ":
        for i, j in rng.integers(len(states), size=(40, 2)):
            assert abs(F[K][i, j] - calc.element(K, site, states[i], states[j])) < 1e-18


@pytest.mark.parametrize("R", [400.0, 600.0, 900.0])
def test_appendix_relations_hold_on_full_space(calc, states, R):
    Fu = calc.matrices(SitePosition.on_z(R, +1), states)
    Fd = calc.matrices(SitePosition.on_z(R, -1), states)
    l = np.array([s[1] for s in states])
    m = np.array([s[2] for s in states])
    parity = (-1.0) ** (l[:, None] - l[None, :])
    dm = m[None, :] - m[:, None]
    for K in "XYZ":
        scale = np.abs(Fu[K]).max()
        assert np.abs(Fu[K] + parity * Fd[K]).max() < 1e-12 * scale
        np.testing.assert_allclose(Fu[K], Fu[K].conj().T, atol=1e-12 * scale)
    scale = np.abs(Fu["X"]).max()
    assert np.abs(Fu["Z"][dm != 0]).max() == 0.0
    for K in "XY":
        assert np.abs(Fu[K][np.abs(dm) != 1]).max() == 0.0
    assert np.abs((Fu["X"] + 1j * Fu["Y"])[dm == 1]).max() < 1e-12 * scale
    assert np.abs((Fu["X"] - 1j * Fu["Y"])[dm == -1]).max() < 1e-12 * scale
    assert np.abs(Fu["Z"].imag).max() == 0.0
    assert np.abs(Fu["X"].imag).max() == 0.0
    assert np.abs(Fu["Y"].real).max() == 0.0


@pytest.mark.parametrize(
    "K,bra,ket",
    [("Z", (23, 0, 0), (20, 4, 0)), ("X", (20, 3, 0), (20, 4, 1)), ("Y", (20, 3, -1), (20, 4, 0))],
)
def test_multipole_matches_direct_quadrature(orbitals, K, bra, ket):
    site = SitePosition.on_z(600.0)
    a, b = orbitals[bra[:2]], orbitals[ket[:2]]
    mp = electron_field_me(K, site, a, bra[2], b, ket[2])
    q = quadrature_oracle_field_me(K, site, a, bra[2], b, ket[2])
    assert abs(mp - q) < 1e-6 * abs(q)


def test_oracle_reproduces_selection_rule_zero(orbitals):
    a, b = orbitals[(20, 3)], orbitals[(20, 4)]
    assert abs(quadrature_oracle_field_me("Z", SitePosition.on_z(600.0), a, 0, b, 1)) < 1e-10


def test_off_axis_sites_rejected(calc, orbitals):
    site = SitePosition(600.0, 0.5, 0.0)
    with pytest.raises(UnsupportedGeometry):
        calc.element("Z", site, (20, 3, 0), (20, 3, 0))
    with pytest.raises(UnsupportedGeometry):
        core_field_interaction(site, RotorState(0, 0), RotorState(1, 0), 0.2)
    with pytest.raises(UnsupportedGeometry):
        quadrature_oracle_field_me("Z", site, orbitals[(20, 3)], 0, orbitals[(20, 3)], 0)


def test_core_field_interaction():
    s, p = RotorState(0, 0), RotorState(1, 0)
    up, down = SitePosition.on_z(500.0, +1), SitePosition.on_z(500.0, -1)
    assert core_field_interaction(up, s, p, 0.0) == 0.0
    assert core_field_interaction(up, s, p, 0.2227) == -core_field_interaction(down, s, p, 0.2227)
    # -d F <0|cos|1> with F = 1/R^2 along +Z, converted by hand
    expect = -0.2227 / 500.0**2 / math.sqrt(3.0)
    assert core_field_interaction(up, s, p, 0.2227) == pytest.approx(expect, rel=1e-13)
    assert field_to_ghz(1 / 500.0**2, 0.2227) == pytest.approx(0.2227 / 250000.0 * 6.5796839e6, rel=1e-7)
    assert field_to_ghz(1.0, 1.0) == HARTREE_GHZ
    assert core_field_interaction(up, s, RotorState(1, 1), 0.2227) == 0.0
