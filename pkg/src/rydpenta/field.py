"""Electric field of the Rydberg atom at the positions of the diatomics.

The electron part is the gradient with respect to the site position R of the
multipole expansion of 1/|r - R|:

    F_K = sum_L 4pi/(2L+1) sum_M Y_LM(r^) [ f_L'(r, R) P^K_LM + f_L(r, R)/R T^K_LM ]

with f_L = r<^L / r>^(L+1), P^K_LM = conj(Y_LM(R^)) R^_K the radial part
and T^K_LM = conj((-i R^ x L Y_LM)(R^))_K the tangential part. The closed
form quoted in the literature (``a_coeff``) lumps both parts under f_L'.
It equals P + 2T for the Z component at any site direction and for X, Y on
the Z axis, but differs for X, Y off axis. It is kept for reference; the
assembly uses the separated form, which the direct quadrature reproduces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from rydpenta.angmath import assoc_legendre_normalized, gaunt, ladder_factors, spherical_harmonic
from rydpenta.constants import HARTREE_GHZ
from rydpenta.rotor import RotorState, spherical_dipole_me
from rydpenta.rydberg import IntegralCache, RadialIntegrator, RydbergOrbital

__all__ = [
    "SitePosition",
    "UnsupportedGeometry",
    "OracleFailure",
    "a_coeff",
    "field_coefficients",
    "FieldCalculator",
    "electron_field_me",
    "quadrature_oracle_field_me",
    "core_field_interaction",
]

AXES = ("X", "Y", "Z")


class UnsupportedGeometry(ValueError):
    pass


class OracleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SitePosition:
    R: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"site distance must be positive, got {self.R}")

    @property
    def on_axis(self) -> bool:
        return (self.theta == 0.0 or self.theta == math.pi) and self.phi == 0.0

    @property
    def unit(self) -> np.ndarray:
        st, ct = math.sin(self.theta), math.cos(self.theta)
        if self.theta == math.pi:
            st = 0.0
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), ct])

    @property
    def cartesian(self) -> np.ndarray:
        return self.R * self.unit

    @classmethod
    def on_z(cls, R: float, side: int = +1) -> "SitePosition":
        return cls(R, 0.0 if side > 0 else math.pi, 0.0)


def _ylm_conj(l: int, m: int, theta: float, phi: float) -> complex:
    if abs(m) > l:
        return 0j
    return complex(np.conj(spherical_harmonic(l, m, theta, phi)))


def a_coeff(K: str, l: int, m: int, site: SitePosition) -> complex:
    """Literature closed form A^K_lm(Omega) at the site direction."""
    if abs(m) > l:
        raise ValueError(f"|m|={abs(m)} exceeds l={l}")
    a, b = ladder_factors(l, m)
    th, ph = site.theta, site.phi
    st, ct = math.sin(th), math.cos(th)
    if th == math.pi:
        st = 0.0
    y0 = _ylm_conj(l, m, th, ph)
    yp = _ylm_conj(l, m + 1, th, ph)
    ym = _ylm_conj(l, m - 1, th, ph)
    ep, em = np.exp(1j * ph), np.exp(-1j * ph)
    cp, sp = math.cos(ph), math.sin(ph)
    if K == "X":
        return complex(
            y0 * st * cp
            + (yp * ep * a - ym * em * b) * ct * cp
            - 1j * (yp * em * a + ym * ep * b) * st
        )
    if K == "Y":
        return complex(
            y0 * st * sp
            + (yp * ep * a - ym * em * b) * ct * sp
            + 1j * (yp * em * a + ym * ep * b) * ct
        )
    if K == "Z":
        return complex(y0 * ct - (yp * ep * a - ym * em * b) * st)
    raise ValueError(f"unknown axis {K!r}")


def field_coefficients(K: str, l: int, m: int, site: SitePosition) -> tuple[complex, complex]:
    """(P, T): radial and tangential angular coefficients of the field.

    Valid for any site direction.
    """
    if K not in AXES:
        raise ValueError(f"unknown axis {K!r}")
    if abs(m) > l:
        raise ValueError(f"|m|={abs(m)} exceeds l={l}")
    k = AXES.index(K)
    th, ph = site.theta, site.phi
    n = site.unit
    y0 = complex(spherical_harmonic(l, m, th, ph))
    a, b = ladder_factors(l, m)
    yp = a * complex(spherical_harmonic(l, m + 1, th, ph)) if m < l else 0j
    ym = b * complex(spherical_harmonic(l, m - 1, th, ph)) if m > -l else 0j
    ly = np.array([(yp + ym) / 2.0, (yp - ym) / 2j, m * y0])
    grad = -1j * np.cross(n, ly)
    return complex(np.conj(y0) * n[k]), complex(np.conj(grad[k]))


def core_field_interaction(site: SitePosition, bra: RotorState, ket: RotorState, d: float) -> float:
    """<bra| -d . F_core |ket> in hartree for an on-axis site."""
    if not site.on_axis:
        raise UnsupportedGeometry("core field assembly is restricted to Z-axis sites")
    side = 1.0 if site.theta == 0.0 else -1.0
    if bra.M != ket.M:
        return 0.0
    return -side * d / site.R**2 * spherical_dipole_me(0, bra.N, bra.M, ket.N, ket.M)


class FieldCalculator:
    """Electron-field matrices over a fixed set of Rydberg orbitals.

    Electron basis states are (orbital index, m). Radial kernels are kept in
    memory per R and optionally mirrored to an :class:`IntegralCache`.
    """

    def __init__(self, orbitals, cache: IntegralCache | None = None, species: str = "Rb"):
        self.orbitals: list[RydbergOrbital] = list(orbitals)
        self.integrator = RadialIntegrator(self.orbitals)
        self.cache = cache
        self.species = species
        self.L_max = 2 * max(o.l for o in self.orbitals)
        self._kernels: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._index = {(o.n, o.l): i for i, o in enumerate(self.orbitals)}
        self._patterns: dict = {}

    def orbital_index(self, n: int, l: int) -> int:
        return self._index[(n, l)]

    def kernels(self, R: float) -> tuple[np.ndarray, np.ndarray]:
        R = float(R)
        hit = self._kernels.get(R)
        if hit is not None:
            return hit
        key = None
        if self.cache is not None:
            key = IntegralCache.key(self.species, self.orbitals, self.L_max, R)
            loaded = self.cache.load(key)
            if loaded is not None:
                self._kernels[R] = loaded
                return loaded
        rad, tan = self.integrator.scaled_kernels(self.L_max, R)
        if self.cache is not None:
            self.cache.store(key, rad, tan)
        self._kernels[R] = (rad, tan)
        return rad, tan

    def element(self, K: str, site: SitePosition, bra: tuple[int, int, int], ket: tuple[int, int, int]) -> complex:
        """<n1 l1 m1| F^e_K(site) |n2 l2 m2> in atomic units."""
        if not site.on_axis:
            raise UnsupportedGeometry("electron field assembly is restricted to Z-axis sites")
        n1, l1, m1 = bra
        n2, l2, m2 = ket
        i1 = self.orbital_index(n1, l1)
        i2 = self.orbital_index(n2, l2)
        M = m1 - m2
        if abs(M) > 1:
            return 0j
        rad, tan = self.kernels(site.R)
        total = 0j
        for L in range(abs(l1 - l2), l1 + l2 + 1, 2):
            if abs(M) > L:
                continue
            g = gaunt(l1, m1, L, M, l2, m2)
            if g == 0.0:
                continue
            P, T = field_coefficients(K, L, M, site)
            total += 4.0 * math.pi / (2 * L + 1) * g * (rad[L, i1, i2] * P + tan[L, i1, i2] * T)
        return total

    def _structure(self, states):
        """R-independent sparsity pattern: (i, j, L, M, orbital i, orbital j, 4pi/(2L+1) Gaunt)."""
        key = tuple(states)
        hit = self._patterns.get(key)
        if hit is not None:
            return hit
        rows = []
        for i, (n1, l1, m1) in enumerate(states):
            o1 = self.orbital_index(n1, l1)
            for j, (n2, l2, m2) in enumerate(states):
                M = m1 - m2
                if abs(M) > 1:
                    continue
                o2 = self.orbital_index(n2, l2)
                for L in range(max(abs(l1 - l2), abs(M)), l1 + l2 + 1):
                    if (L + l1 + l2) % 2:
                        continue
                    g = gaunt(l1, m1, L, M, l2, m2)
                    if g != 0.0:
                        rows.append((i, j, L, M, o1, o2, 4.0 * math.pi / (2 * L + 1) * g))
        arr = np.array(rows, dtype=float).reshape(-1, 7)
        hit = tuple(arr[:, c].astype(int) for c in range(6)) + (arr[:, 6],)
        self._patterns[key] = hit
        return hit

    def matrices(self, site: SitePosition, states) -> dict[str, np.ndarray]:
        """Dense complex F^e_K for K = X, Y, Z over electron ``states`` [(n, l, m), ...].

        Same numbers as :meth:`element`, vectorized over the state pairs.
        """
        if not site.on_axis:
            raise UnsupportedGeometry("electron field assembly is restricted to Z-axis sites")
        states = [tuple(s) for s in states]
        i, j, L, M, o1, o2, g = self._structure(states)
        rad, tan = self.kernels(site.R)
        kr = rad[L, o1, o2]
        kt = tan[L, o1, o2]
        out = {}
        for K in AXES:
            P = np.zeros((self.L_max + 1, 3), dtype=complex)
            T = np.zeros_like(P)
            for ll in range(self.L_max + 1):
                for mm in range(-min(ll, 1), min(ll, 1) + 1):
                    P[ll, mm + 1], T[ll, mm + 1] = field_coefficients(K, ll, mm, site)
            vals = g * (kr * P[L, M + 1] + kt * T[L, M + 1])
            mat = np.zeros((len(states), len(states)), dtype=complex)
            np.add.at(mat, (i, j), vals)
            out[K] = mat
        return out

    def matrix(self, K: str, site: SitePosition, states) -> np.ndarray:
        """Dense complex matrix of F^e_K over electron ``states`` [(n, l, m), ...]."""
        states = list(states)
        out = np.zeros((len(states), len(states)), dtype=complex)
        for i, a in enumerate(states):
            for j in range(i, len(states)):
                v = self.element(K, site, a, states[j])
                out[i, j] = v
                out[j, i] = np.conj(v)
        return out


def electron_field_me(
    K: str,
    site: SitePosition,
    bra: RydbergOrbital,
    bra_m: int,
    ket: RydbergOrbital,
    ket_m: int,
    cache: IntegralCache | None = None,
) -> complex:
    """Single electron-field matrix element, building a throwaway calculator."""
    orbs = [bra] if (bra.n, bra.l) == (ket.n, ket.l) else [bra, ket]
    calc = FieldCalculator(orbs, cache=cache)
    return calc.element(K, site, (bra.n, bra.l, bra_m), (ket.n, ket.l, ket_m))


class _OrbitalEvaluator:
    """psi(r, theta, phi=0) for one orbital; the phi factor is exp(i m phi)."""

    def __init__(self, orb: RydbergOrbital, m: int):
        if abs(m) > orb.l:
            raise ValueError(f"|m|={abs(m)} exceeds l={orb.l}")
        self.orb = orb
        self.m = m
        self.spline = CubicSpline(orb.grid.x, orb.u)
        self.r_max = orb.grid.r_max
        self.r_min = float(orb.grid.points[0])

    def __call__(self, r, cos_t):
        r = np.asarray(r, dtype=float)
        rad = np.zeros_like(r)
        ok = (r >= self.r_min) & (r <= self.r_max)
        rad[ok] = self.spline(np.sqrt(r[ok])) / r[ok]
        l, am = self.orb.l, abs(self.m)
        plm = assoc_legendre_normalized(l, am, np.clip(cos_t, -1.0, 1.0))[l - am]
        if self.m < 0:
            plm = (-1) ** am * plm
        return rad * plm


def _gl_panels(a: float, b: float, n_panels: int, order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * t).ravel(), (half[:, None] * w).ravel()


def _smoothstep(s):
    """C-infinity step from 0 at s <= 0 to 1 at s >= 1.

    A polynomial step has a discontinuous high derivative inside the blend
    region, which caps the Gauss-Legendre convergence rate there.
    """
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0.0, np.exp(-1.0 / np.where(s > 0.0, s, 1.0)), 0.0)
        b = np.where(s < 1.0, np.exp(-1.0 / np.where(s < 1.0, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def _phi_factor(K: str, dm: int) -> complex:
    """Uniform-grid integral of exp(i dm phi) * (cos phi, sin phi, 1)[K] over [0, 2pi).

    The grid has more points than the highest frequency |dm| + 1 needs, so
    the rule is exact; roundoff on vanishing integrals is snapped to zero.
    """
    n_phi = 2 * abs(dm) + 4
    phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
    c = {"X": np.cos(phis), "Y": np.sin(phis), "Z": np.ones(n_phi)}[K]
    val = np.sum(np.exp(1j * dm * phis) * c) * 2.0 * math.pi / n_phi
    re = 0.0 if abs(val.real) < 1e-12 else val.real
    im = 0.0 if abs(val.imag) < 1e-12 else val.imag
    return complex(re, im)


class _Oracle:
    """Direct 3D integral of psi1* (r - S)_K / |r - S|^3 psi2 for S on the Z axis.

    Space is split by a smooth partition of unity in |r|: inside r_b the
    integral runs in nucleus-centered coordinates, where the field is
    smooth; outside r_a it runs in coordinates centered on the site, where
    the rho^2 Jacobian cancels the 1/rho^2 singularity. The azimuthal
    dependence is exp(i dm phi) times cos, sin or 1, integrated on a uniform
    phi grid that is exact for these harmonics.
    """

    def __init__(self, K, site, ev_bra, ev_ket):
        self.K = K
        self.zs = site.R * (1.0 if site.theta == 0.0 else -1.0)
        self.R = site.R
        self.ev_bra = ev_bra
        self.ev_ket = ev_ket
        self.phi = _phi_factor(K, ev_ket.m - ev_bra.m)
        self.r_a, self.r_b = 0.2 * site.R, 0.5 * site.R

    def _weight(self, r):
        return _smoothstep((r - self.r_a) / (self.r_b - self.r_a))

    def _density(self, r, ct):
        return self.ev_bra(r, ct) * self.ev_ket(r, ct)

    def core_part(self, level: int) -> float:
        xs, wx = _gl_panels(math.sqrt(self.ev_bra.r_min), math.sqrt(self.r_b), 60 * level, 10)
        rr, wr = xs * xs, wx * 2.0 * xs
        ct, wct = _gl_panels(-1.0, 1.0, 6 * level, 20)
        r, c = np.meshgrid(rr, ct, indexing="ij")
        s = np.sqrt(1.0 - c * c)
        dx, dz = r * s, r * c - self.zs
        dist3 = (dx * dx + dz * dz) ** 1.5
        comp = dz / dist3 if self.K == "Z" else dx / dist3
        f = self._density(r, c) * (1.0 - self._weight(r)) * comp * r * r
        return float(np.einsum("i,j,ij->", wr, wct, f))

    def site_part(self, level: int, rho_lo: float, rho_hi: float | None = None, n_lo: int = 20) -> float:
        rho_max = self.R + self.ev_bra.r_max + 1.0
        if rho_hi is None:
            ra, wa = _gl_panels(rho_lo, 2.0, n_lo * level, 10)
            rb, wb = _gl_panels(2.0, rho_max, int(rho_max / 10.0) * level, 10)
            rho = np.concatenate([ra, rb])
            wrho = np.concatenate([wa, wb])
        else:
            rho, wrho = _gl_panels(rho_lo, rho_hi, 2, 10)
        ca, wca = _gl_panels(-1.0, 1.0, 40 * level, 10)
        sa = np.sqrt(1.0 - ca * ca)
        unit = sa if self.K != "Z" else ca
        total = 0.0
        for i0 in range(0, rho.size, 512):
            rh = rho[i0 : i0 + 512, None]
            px = rh * sa[None, :]
            pz = self.zs + rh * ca[None, :]
            r = np.sqrt(px * px + pz * pz)
            c = np.where(r > 0, pz / np.where(r > 0, r, 1.0), 1.0)
            f = self._density(r, c) * self._weight(r) * unit[None, :]
            total += float(np.einsum("i,j,ij->", wrho[i0 : i0 + 512], wca, f))
        return total

    def value(self, level: int, eps: float) -> complex:
        return self.phi * (self.core_part(level) + self.site_part(level, eps))

    def shell(self, level: int, eps: float) -> complex:
        """Contribution of the shell eps/2 < rho < eps around the site."""
        return self.phi * self.site_part(level, eps / 2.0, eps)


def quadrature_oracle_field_me(
    K: str,
    site: SitePosition,
    bra: RydbergOrbital,
    bra_m: int,
    ket: RydbergOrbital,
    ket_m: int,
    tol: float = 5e-7,
    eps_fraction: float = 1e-6,
    levels: tuple[int, int] = (2, 6),
    shell_tol: float = 1e-8,
) -> complex:
    """<bra| (r - R)_K / |r - R|^3 |ket> by direct 3D quadrature.

    No multipole expansion is involved. A ball of radius
    ``eps_fraction * R`` around the site is excluded. Node density is raised
    from ``levels[0]`` one step at a time up to ``levels[1]``; the result is
    accepted once two consecutive levels agree to ``tol`` relative and
    halving the ball at the finer one moves it by less than ``shell_tol``.
    Elements that cancel strongly (high l, magnitude ~1e-10) show a level
    to level scatter of a few 1e-7, which sets the default ``tol``.
    """
    if K not in AXES:
        raise ValueError(f"unknown axis {K!r}")
    if not site.on_axis:
        raise UnsupportedGeometry("oracle supports Z-axis sites only")
    orc = _Oracle(K, site, _OrbitalEvaluator(bra, bra_m), _OrbitalEvaluator(ket, ket_m))
    if orc.phi == 0:
        return 0j
    eps = eps_fraction * site.R
    prev = orc.value(levels[0], eps)
    for level in range(levels[0] + 1, levels[1] + 1):
        fine = orc.value(level, eps)
        scale = abs(fine)
        if abs(fine - prev) <= tol * scale:
            shell = orc.shell(level, eps)
            if abs(shell) <= shell_tol * scale:
                return fine
            raise OracleFailure(f"oracle ball-halving shift {shell} exceeds tolerance at value {fine}")
        prev, last = fine, prev
    raise OracleFailure(f"oracle not converged by level {levels[1]}: last two values {last} and {prev}")


def field_to_ghz(value_au: float, d: float) -> float:
    """d * F in GHz for a field in atomic units."""
    return value_au * d * HARTREE_GHZ
