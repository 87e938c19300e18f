"""Rydberg electron radial problem for rubidium.

Energies come from the Rydberg-Ritz quantum defects; the reduced radial
functions u(r) = r R(r) are obtained by inward Numerov integration of the
l-dependent model potential at that fixed energy. The integration runs on
x = sqrt(r), where the equation becomes

    chi''(x) = [8 x^2 (V(x^2) - E) + (2l + 1/2)(2l + 3/2) / x^2] chi(x)

with u(r) = x^(1/2) chi(x).
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from rydpenta.constants import HARTREE_GHZ

log = logging.getLogger(__name__)

__all__ = [
    "RadialGrid",
    "RydbergOrbital",
    "SolverFailure",
    "model_potential",
    "quantum_defect",
    "rydberg_energy",
    "radial_wavefunction",
    "radial_multipole_integrals",
    "RadialIntegrator",
    "IntegralCache",
    "energy_gap_ghz",
]


class SolverFailure(RuntimeError):
    """Radial solver produced an unusable wavefunction."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


# Marinescu, Sadeghpour & Dalgarno parameterization for Rb, indexed by
# min(l, 3).
RB_MODEL = {
    "Z": 37,
    "alpha_c": 9.0760,
    "a1": (3.69628474, 4.44088978, 3.78717363, 2.39848933),
    "a2": (1.64915255, 1.92828831, 1.57027864, 1.76810544),
    "a3": (-9.86069196, -16.79597770, -11.65588970, -12.07106780),
    "a4": (0.19579987, -0.81633314, 0.52942835, 0.77256589),
    "rc": (1.66242117, 1.50195124, 4.86851938, 4.79831327),
}

# Rydberg-Ritz (delta_0, delta_2) per (l, j); l <= 2 only.
RB_DEFECTS = {
    (0, 0.5): (3.1311804, 0.1784),
    (1, 0.5): (2.6548849, 0.2900),
    (1, 1.5): (2.6416737, 0.2950),
    (2, 1.5): (1.34809171, -0.60286),
    (2, 2.5): (1.34646572, -0.59600),
}


def model_potential(l: int, r):
    """l-dependent Rb+ core potential in hartree (r in bohr)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("model potential requires r > 0")
    p = RB_MODEL
    k = min(l, 3)
    a1, a2, a3, a4, rc = (p[key][k] for key in ("a1", "a2", "a3", "a4", "rc"))
    z_eff = 1.0 + (p["Z"] - 1) * np.exp(-a1 * r) - r * (a3 + a4 * r) * np.exp(-a2 * r)
    v = -z_eff / r - p["alpha_c"] / (2.0 * r**4) * (1.0 - np.exp(-((r / rc) ** 6)))
    return float(v) if v.ndim == 0 else v


def quantum_defect(n: int, l: int) -> float:
    """Rydberg-Ritz defect for Rb; zero from l = 3 on.

    Fine structure is not resolved: p and d defects are averaged over j
    with weights 2j+1.
    """
    if not n > l >= 0:
        raise ValueError(f"need n > l >= 0, got n={n}, l={l}")
    if l >= 3:
        return 0.0
    num = 0.0
    den = 0.0
    for (ll, j), (d0, d2) in RB_DEFECTS.items():
        if ll != l:
            continue
        d = d0 + d2 / (n - d0) ** 2
        num += (2 * j + 1) * d
        den += 2 * j + 1
    return num / den


def rydberg_energy(n: int, l: int) -> float:
    """-1 / (2 (n - delta)^2) in hartree."""
    return -0.5 / (n - quantum_defect(n, l)) ** 2


def outer_radius(n: int) -> float:
    return 2.0 * n * (n + 15)


@dataclass(frozen=True)
class RadialGrid:
    """Grid uniform in x = sqrt(r)."""

    x_min: float
    step: float
    size: int

    @classmethod
    def for_n(cls, n_max: int, step: float = 0.01, r_min: float = 1e-4) -> "RadialGrid":
        x_min = math.sqrt(r_min)
        x_end = math.sqrt(outer_radius(n_max))
        size = int(math.ceil((x_end - x_min) / step)) + 1
        return cls(x_min, step, size)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.step * np.arange(self.size)

    @property
    def points(self) -> np.ndarray:
        return self.x**2

    @property
    def r_max(self) -> float:
        return float(self.points[-1])

    @property
    def spacing_rule(self) -> str:
        return "sqrt"

    def digest(self) -> str:
        key = f"{self.spacing_rule}:{self.x_min:.12e}:{self.step:.12e}:{self.size}"
        return hashlib.sha1(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RydbergOrbital:
    n: int
    l: int
    energy: float
    grid: RadialGrid
    u: np.ndarray = field(repr=False, compare=False)
    potential: str = "model"

    @property
    def r(self) -> np.ndarray:
        return self.grid.points

    def norm(self) -> float:
        return _integrate_x(self.grid, self.u**2)

    def expectation_r(self, power: float = 1.0) -> float:
        return _integrate_x(self.grid, self.u**2 * self.r**power)

    def node_count(self, rel_floor: float = 1e-6) -> int:
        u = self.u
        big = np.abs(u) > rel_floor * np.abs(u).max()
        s = np.sign(u[big])
        return int(np.count_nonzero(s[1:] != s[:-1]))


def _integrate_x(grid: RadialGrid, f_r: np.ndarray) -> float:
    """Integral of f(r) dr on the sqrt grid (Simpson in x, dr = 2x dx)."""
    from scipy.integrate import simpson

    return float(simpson(f_r * 2.0 * grid.x, dx=grid.step))


def _hydrogenic_potential(l: int, r):
    return -1.0 / np.asarray(r, dtype=float)


def radial_wavefunction(
    n: int, l: int, grid: RadialGrid, potential: str = "model"
) -> RydbergOrbital:
    """Reduced radial function for (n, l) at the quantum-defect energy.

    ``potential`` selects the Rb model potential (default) or a pure Coulomb
    potential; the latter is only meaningful for l >= 3, where the defect is
    taken as zero.
    """
    if not n > l >= 0:
        raise ValueError(f"need n > l >= 0, got n={n}, l={l}")
    if potential not in ("model", "hydrogenic"):
        raise ValueError(f"unknown potential {potential!r}")
    if potential == "hydrogenic" and l < 3:
        raise ValueError("hydrogenic functions are only offered for l >= 3")
    if grid.r_max < outer_radius(n) * 0.999:
        raise ValueError(f"grid ends at {grid.r_max:.1f} bohr, need {outer_radius(n):.1f}")

    energy = rydberg_energy(n, l)
    x = grid.x
    r = x * x
    h2 = grid.step**2
    vfun = model_potential if potential == "model" else _hydrogenic_potential
    g = 8.0 * r * (vfun(l, r) - energy) + (2 * l + 0.5) * (2 * l + 1.5) / r
    f = 1.0 - h2 * g / 12.0

    i_end = int(np.searchsorted(r, outer_radius(n)))
    i_end = min(i_end, grid.size - 1)
    chi = np.zeros(grid.size)
    chi[i_end] = 1e-30
    chi[i_end - 1] = 1e-30 * math.exp(grid.step * math.sqrt(max(g[i_end], 0.0)))

    # innermost edge of the outer classically allowed region
    allowed = np.nonzero(g[: i_end + 1] < 0)[0]
    if allowed.size == 0:
        raise SolverFailure("no classically allowed region", n=n, l=l)
    i_out = allowed[-1]
    i_in = i_out
    while i_in > 0 and g[i_in - 1] < 0:
        i_in -= 1

    stop = 0
    for i in range(i_end - 1, 0, -1):
        chi[i - 1] = ((12.0 - 10.0 * f[i]) * chi[i] - f[i + 1] * chi[i + 1]) / f[i - 1]
        # below the inner turning point the irregular solution grows inward
        if i - 1 < i_in and abs(chi[i - 1]) > abs(chi[i]):
            stop = i
            break
    if stop:
        # the physical branch has no node under the barrier; cut at the
        # smallest |chi| so a sign flip of the irregular branch is dropped
        stop += int(np.argmin(np.abs(chi[stop : i_in + 1])))
        if chi[stop] * chi[stop + 1] < 0:
            stop += 1
        chi[:stop] = 0.0

    u = np.sqrt(x) * chi
    norm = _integrate_x(grid, u**2)
    if not np.isfinite(norm) or norm <= 0:
        raise SolverFailure("normalization failed", n=n, l=l, norm=norm)
    u = u / math.sqrt(norm)
    # outermost lobe positive
    u_abs = np.abs(u)
    last = np.nonzero(u_abs > 1e-3 * u_abs.max())[0][-1]
    if u[last] < 0:
        u = -u
    orb = RydbergOrbital(n, l, energy, grid, u, potential)
    nodes = orb.node_count()
    if nodes != n - l - 1:
        raise SolverFailure(
            f"node count {nodes} != {n - l - 1} for n={n}, l={l}",
            n=n,
            l=l,
            nodes=nodes,
            truncated_at=float(r[stop]),
        )
    log.debug("orbital n=%d l=%d truncated below r=%.3g", n, l, r[stop])
    return orb


class RadialIntegrator:
    """Spline-based radial quadrature shared by a set of orbitals.

    The reduced functions are interpolated with cubic splines in x and
    integrated by composite Gauss-Legendre rules whose panels are split
    exactly at r = R, so the kink of the multipole kernel is resolved.
    """

    def __init__(self, orbitals, panel: float | None = None, order: int = 8):
        orbitals = list(orbitals)
        grids = {o.grid for o in orbitals}
        if len(grids) != 1:
            raise ValueError("orbitals must share one radial grid")
        self.orbitals = orbitals
        self.grid = grids.pop()
        self.panel = panel if panel is not None else 4.0 * self.grid.step
        self.order = order
        x = self.grid.x
        self._splines = [CubicSpline(x, o.u) for o in orbitals]
        self._gl_t, self._gl_w = np.polynomial.legendre.leggauss(order)

    def _nodes(self, xa: float, xb: float):
        if xb <= xa:
            return np.empty(0), np.empty(0)
        npan = max(1, int(math.ceil((xb - xa) / self.panel)))
        edges = np.linspace(xa, xb, npan + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        xs = (mid[:, None] + half[:, None] * self._gl_t[None, :]).ravel()
        ws = (half[:, None] * self._gl_w[None, :]).ravel()
        return xs, ws

    def tabulate(self, R: float, beyond: bool = False):
        """Orbital values and dr-weights on the inner and outer node sets.

        With ``beyond`` a site past the last grid point is accepted: the
        orbitals vanish there, so everything counts as inner.
        """
        g = self.grid
        if not g.points[0] < R < g.r_max and not (beyond and R >= g.r_max):
            raise ValueError(f"R={R} outside radial grid [{g.points[0]}, {g.r_max}]")
        xr = min(math.sqrt(R), g.x[-1])
        out = []
        for xa, xb in ((g.x[0], xr), (xr, g.x[-1])):
            xs, ws = self._nodes(xa, xb)
            u = np.array([s(xs) for s in self._splines])
            out.append((xs * xs, ws * 2.0 * xs, u))
        return out

    def multipole(self, L: int, R: float) -> tuple[np.ndarray, np.ndarray]:
        """Matrices of (I_inner, I_outer) over all orbital pairs for order L."""
        (ri, wi, ui), (ro, wo, uo) = self.tabulate(R)
        inner = (ui * (wi * ri**L)) @ ui.T
        outer = (uo * (wo * ro ** (-(L + 1)))) @ uo.T
        return inner, outer

    def scaled_kernels(self, L_max: int, R: float) -> tuple[np.ndarray, np.ndarray]:
        """Radial field kernels for L = 0..L_max over all orbital pairs.

        Returns ``(radial, tangential)``, each of shape (L_max+1, n_orb, n_orb):

            radial[L]     = -(L+1) R^-(L+2) I_inner + L R^(L-1) I_outer
            tangential[L] = R^-(L+2) I_inner + R^(L-1) I_outer

        evaluated with the ratios r/R and R/r so that high orders never
        overflow.
        """
        (ri, wi, ui), (ro, wo, uo) = self.tabulate(R, beyond=True)
        qi = ri / R
        qo = R / ro
        n = len(self.orbitals)
        rad = np.empty((L_max + 1, n, n))
        tan = np.empty((L_max + 1, n, n))
        pi = np.ones_like(qi)
        po = qo.copy()
        for L in range(L_max + 1):
            a = (ui * (wi * pi)) @ ui.T
            b = (uo * (wo * po)) @ uo.T
            rad[L] = (-(L + 1) * a + L * b) / R**2
            tan[L] = (a + b) / R**2
            pi = pi * qi
            po = po * qo
        return rad, tan


def radial_multipole_integrals(
    bra: RydbergOrbital, ket: RydbergOrbital, l: int, R: float
) -> tuple[float, float]:
    """(int_0^R u u' r^l dr, int_R^inf u u' r^-(l+1) dr)."""
    if l < 0:
        raise ValueError("multipole order must be non-negative")
    if bra.grid != ket.grid:
        raise ValueError("bra and ket live on different grids")
    integ = RadialIntegrator([bra, ket])
    inner, outer = integ.multipole(l, R)
    return float(inner[0, 1]), float(outer[0, 1])


def energy_gap_ghz(n_s: int = 23, n_manifold: int = 20) -> float:
    """E(n_s s) - E(n_manifold, l >= 3) in GHz."""
    return (rydberg_energy(n_s, 0) - rydberg_energy(n_manifold, 3)) * HARTREE_GHZ


class IntegralCache:
    """On-disk store of radial field kernels.

    One ``.npz`` file per (orbital set, grid, potential, L_max, R); the
    header array carries a format version and the grid digest so stale
    files are ignored rather than trusted.
    """

    VERSION = 1
    ENV = "RYDPENTA_CACHE_DIR"

    def __init__(self, directory: str | os.PathLike | None = None):
        if directory is None:
            directory = os.environ.get(self.ENV)
        self.directory = Path(directory) if directory else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.directory / f"kern-{key}.npz"

    @staticmethod
    def key(species: str, orbitals, L_max: int, R: float) -> str:
        labels = ",".join(f"{o.n}.{o.l}.{o.potential}" for o in orbitals)
        grid = orbitals[0].grid.digest()
        raw = f"v{IntegralCache.VERSION}|{species}|{labels}|{grid}|{L_max}|{R!r}"
        return hashlib.sha1(raw.encode()).hexdigest()

    def load(self, key: str):
        if self.directory is None:
            return None
        p = self._path(key)
        if not p.exists():
            self.misses += 1
            return None
        with np.load(p) as data:
            if int(data["version"]) != self.VERSION or str(data["key"]) != key:
                self.misses += 1
                return None
            self.hits += 1
            return data["radial"].copy(), data["tangential"].copy()

    def store(self, key: str, radial: np.ndarray, tangential: np.ndarray) -> None:
        if self.directory is None:
            return
        p = self._path(key)
        tmp = p.with_suffix(f".{os.getpid()}.tmp.npz")
        np.savez(tmp, version=self.VERSION, key=key, radial=radial, tangential=tangential)
        os.replace(tmp, p)
