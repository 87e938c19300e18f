"""Adiabatic Hamiltonian of one Rydberg atom and two rigid rotors on the Z axis.

Assembly happens in the uncoupled product basis
|n l m> |N1 M1> |N2 M2> restricted to m + M1 + M2 = M_J. The coupling of
rotor i is -d_i n_i . F(R_i), with F the field of the core plus electron;
it factorizes into (electron field) x (rotor direction) so no recoupling
is needed. In the Condon-Shortley product basis the sum over X, Y, Z is
real: F_Y and n_Y are both imaginary.

Energies are in GHz relative to the hydrogenic n-manifold with both rotors
in N = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from rydpenta.angmath import clebsch_gordan
from rydpenta.constants import HARTREE_GHZ
from rydpenta.field import AXES, FieldCalculator, SitePosition
from rydpenta.rotor import (
    MoleculeParams,
    RotorState,
    cos2_matrix,
    cos_matrix,
    dipole_direction_me,
    dipole_dipole_estimate,
    rotational_energy,
    rotor_states,
)
from rydpenta.rydberg import IntegralCache, RadialGrid, SolverFailure, radial_wavefunction, rydberg_energy

log = logging.getLogger(__name__)

__all__ = [
    "ConfigurationError",
    "GeometryValidityError",
    "StateSpace",
    "ProductBasisState",
    "Geometry",
    "HamiltonianBlock",
    "Eigenpair",
    "Spectrum",
    "CoupledLabel",
    "PentaMolModel",
    "enumerate_basis",
    "assemble",
    "diagonalize",
    "coupled_label",
]

DENSE_CEILING = 20000


class ConfigurationError(ValueError):
    pass


class GeometryValidityError(ValueError):
    """Same-side molecules too close for the dipole-dipole term to be dropped."""

    def __init__(self, message: str, estimate_ghz: float):
        super().__init__(message)
        self.estimate_ghz = estimate_ghz


@dataclass(frozen=True)
class StateSpace:
    """Rydberg orbitals, rotor truncation and the conserved M_J.

    The electron part is the hydrogenic ``n`` manifold with ``l_min <= l < n``
    (if ``include_manifold``) plus the ``s_n`` s state (if ``include_s``).
    ``potential`` selects how the manifold radial functions are generated.
    """

    n: int = 20
    l_min: int = 3
    include_manifold: bool = True
    include_s: bool = True
    s_n: int = 23
    N_max: int = 4
    M_J: int = 0
    potential: str = "model"

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.l_min < self.n:
            raise ConfigurationError(f"need 0 <= l_min < n, got n={self.n}, l_min={self.l_min}")
        if self.N_max < 0:
            raise ConfigurationError(f"N_max must be non-negative, got {self.N_max}")
        if self.s_n < 1:
            raise ConfigurationError(f"s_n must be positive, got {self.s_n}")
        if self.potential not in ("model", "hydrogenic"):
            raise ConfigurationError(f"unknown potential {self.potential!r}")
        if not (self.include_manifold or self.include_s):
            raise ConfigurationError("state space has no Rydberg orbitals")

    @property
    def orbitals(self) -> list[tuple[int, int]]:
        out = []
        if self.include_s:
            out.append((self.s_n, 0))
        if self.include_manifold:
            out.extend((self.n, l) for l in range(self.l_min, self.n))
        return out

    @property
    def electron_states(self) -> list[tuple[int, int, int]]:
        return [(n, l, m) for n, l in self.orbitals for m in range(-l, l + 1)]

    @property
    def zero_energy(self) -> float:
        """Hartree energy of the hydrogenic manifold, the zero of all outputs."""
        return -0.5 / self.n**2

    def with_(self, **changes) -> "StateSpace":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True, order=True)
class ProductBasisState:
    n: int
    l: int
    m: int
    N1: int
    M1: int
    N2: int
    M2: int

    @property
    def M_J(self) -> int:
        return self.m + self.M1 + self.M2


def enumerate_basis(space: StateSpace) -> list[ProductBasisState]:
    """All product states with m + M1 + M2 = M_J.

    Sort key: electron (n, l, m) in the order of ``space.electron_states``
    (s state first, then l ascending, m ascending), then rotor 1 (N1, M1),
    then rotor 2 (N2, M2), each ascending.
    """
    rotors = rotor_states(space.N_max)
    out = [
        ProductBasisState(n, l, m, a.N, a.M, b.N, b.M)
        for n, l, m in space.electron_states
        for a in rotors
        for b in rotors
        if m + a.M + b.M == space.M_J
    ]
    if not out:
        raise ConfigurationError(f"empty basis for M_J={space.M_J}")
    return out


@dataclass(frozen=True)
class Geometry:
    """Molecule i sits at distance R_i on side_i (+1 for +Z, -1 for -Z)."""

    R1: float
    side1: int
    R2: float
    side2: int
    min_gap: float = 100.0

    def __post_init__(self):
        if not (self.R1 > 0 and self.R2 > 0):
            raise ConfigurationError(f"distances must be positive, got {self.R1}, {self.R2}")
        if self.side1 not in (1, -1) or self.side2 not in (1, -1):
            raise ConfigurationError("sides must be +1 or -1")

    @classmethod
    def symmetric(cls, R: float) -> "Geometry":
        return cls(R, +1, R, -1)

    @classmethod
    def same_side(cls, R1: float, R2: float, min_gap: float = 100.0) -> "Geometry":
        return cls(R1, +1, R2, +1, min_gap)

    @property
    def sites(self) -> tuple[SitePosition, SitePosition]:
        return SitePosition.on_z(self.R1, self.side1), SitePosition.on_z(self.R2, self.side2)

    @property
    def separation(self) -> float:
        return abs(self.side1 * self.R1 - self.side2 * self.R2)

    def check_validity(self, d1: float, d2: float) -> None:
        if self.side1 == self.side2 and self.separation < self.min_gap:
            est = dipole_dipole_estimate(math.sqrt(d1 * d2), max(self.separation, 1e-300))
            raise GeometryValidityError(
                f"molecules {self.separation:.1f} bohr apart on the same side, "
                f"below the minimum gap {self.min_gap:.1f}; dipole-dipole ~ {est:.3g} GHz",
                est,
            )


@dataclass
class HamiltonianBlock:
    """Real symmetric H (GHz) for one geometry and one M_J block."""

    matrix: sp.csr_matrix
    basis: list[ProductBasisState]
    geometry: Geometry
    zero_offset_hartree: float
    imag_residue: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm(self) -> float:
        return float(spla.norm(self.matrix, 1))


@dataclass(frozen=True)
class CoupledLabel:
    electron: str
    N: int
    M_N: int
    N1: int
    N2: int
    weight: float

    def __str__(self) -> str:
        return f"{self.electron} |{self.N},{self.M_N},{self.N1},{self.N2}>"


@dataclass
class Eigenpair:
    energy: float
    vector: np.ndarray
    label: CoupledLabel | None = None


@dataclass
class Spectrum:
    """Eigenvalues (GHz, ascending) and eigenvectors as columns."""

    energies: np.ndarray
    vectors: np.ndarray
    residual: float
    solver: str

    def pairs(self, basis=None) -> list[Eigenpair]:
        out = []
        for i, e in enumerate(self.energies):
            v = self.vectors[:, i]
            out.append(Eigenpair(float(e), v, coupled_label(v, basis) if basis is not None else None))
        return out


def _electron_character(n: int, l: int, manifold_n: int, l_min: int) -> str:
    if n == manifold_n and l >= l_min:
        return f"{n}(l>={l_min})"
    return f"{n}{'spdfg'[l] if l < 5 else f'l={l}'}"


def coupled_label(eigvec: np.ndarray, basis: list[ProductBasisState], manifold_n: int | None = None, l_min: int = 3) -> CoupledLabel:
    """Dominant |N, M_N, N1, N2> component together with its Rydberg character.

    Rotor pairs are projected onto the coupled basis with Clebsch-Gordan
    coefficients; weights are summed over the electron states sharing a
    character (the degenerate manifold counts as one).
    """
    if manifold_n is None:
        manifold_n = max(b.n for b in basis if b.l >= l_min) if any(b.l >= l_min for b in basis) else -1
    amps: dict[tuple, complex] = {}
    for c, b in zip(eigvec, basis):
        if c == 0:
            continue
        M_N = b.M1 + b.M2
        for N in range(abs(b.N1 - b.N2), b.N1 + b.N2 + 1):
            if abs(M_N) > N:
                continue
            cg = clebsch_gordan(b.N1, b.M1, b.N2, b.M2, N, M_N)
            if cg == 0.0:
                continue
            key = ((b.n, b.l, b.m), N, M_N, b.N1, b.N2)
            amps[key] = amps.get(key, 0.0) + cg * c
    weights: dict[tuple, float] = {}
    for (e, N, M_N, N1, N2), a in amps.items():
        k = (_electron_character(e[0], e[1], manifold_n, l_min), N, M_N, N1, N2)
        weights[k] = weights.get(k, 0.0) + abs(a) ** 2
    best = max(sorted(weights), key=lambda k: weights[k])
    return CoupledLabel(best[0], best[1], best[2], best[3], best[4], float(weights[best]))


class PentaMolModel:
    """Precomputed orbitals, field calculator and sparsity patterns for one space.

    ``params`` holds the two molecules. The same object assembles H for
    any on-axis geometry; only the radial kernels depend on R.
    """

    def __init__(
        self,
        space: StateSpace,
        params: tuple[MoleculeParams, MoleculeParams] | MoleculeParams = MoleculeParams(),
        cache: IntegralCache | None = None,
        grid_step: float = 0.01,
    ):
        if isinstance(params, MoleculeParams):
            params = (params, params)
        self.space = space
        self.params = tuple(params)
        orbs = space.orbitals
        grid = RadialGrid.for_n(max(n for n, _ in orbs), step=grid_step)
        self.orbitals = [
            radial_wavefunction(n, l, grid, potential="model" if l < space.l_min else space.potential)
            for n, l in orbs
        ]
        self.field = FieldCalculator(self.orbitals, cache=cache)
        self.electron_states = space.electron_states
        self.rotors = rotor_states(space.N_max)
        self.basis = enumerate_basis(space)
        ne, nr = len(self.electron_states), len(self.rotors)
        self._index = np.full((ne, nr, nr), -1, dtype=np.int64)
        e_pos = {s: i for i, s in enumerate(self.electron_states)}
        r_pos = {(r.N, r.M): i for i, r in enumerate(self.rotors)}
        self._e = np.empty(len(self.basis), dtype=np.int64)
        self._r1 = np.empty_like(self._e)
        self._r2 = np.empty_like(self._e)
        for k, b in enumerate(self.basis):
            e, r1, r2 = e_pos[(b.n, b.l, b.m)], r_pos[(b.N1, b.M1)], r_pos[(b.N2, b.M2)]
            self._index[e, r1, r2] = k
            self._e[k], self._r1[k], self._r2[k] = e, r1, r2
        self._n_dir = {K: self._rotor_matrix(lambda a, b, K=K: dipole_direction_me(K, a, b)) for K in AXES}
        self._patterns = [self._coupling_pattern(i) for i in (0, 1)]

    @property
    def dim(self) -> int:
        return len(self.basis)

    def _rotor_matrix(self, fn) -> np.ndarray:
        nr = len(self.rotors)
        out = np.zeros((nr, nr), dtype=complex)
        for i, a in enumerate(self.rotors):
            for j, b in enumerate(self.rotors):
                if abs(a.N - b.N) == 1 and abs(a.M - b.M) <= 1:
                    out[i, j] = fn(a, b)
        return out

    def _coupling_pattern(self, which: int):
        """Basis-index pairs coupled through rotor ``which`` and their factor indices."""
        m_e = np.array([s[2] for s in self.electron_states])
        M_r = np.array([r.M for r in self.rotors])
        # any two orbitals share some allowed multipole, so only m decides
        ep, eq = np.nonzero(np.abs(m_e[:, None] - m_e[None, :]) <= 1)
        n_any = sum(np.abs(self._n_dir[K]) for K in AXES)
        rp, rq = np.nonzero(n_any > 0)
        empty = np.zeros(0, dtype=np.int64)
        rows, cols, eps, eqs, rps, rqs = ([empty] for _ in range(6))
        for delta in (-1, 0, 1):
            es = np.nonzero(m_e[ep] - m_e[eq] == delta)[0]
            rs = np.nonzero(M_r[rp] - M_r[rq] == -delta)[0]
            if es.size == 0 or rs.size == 0:
                continue
            E1 = np.repeat(ep[es], rs.size)
            E2 = np.repeat(eq[es], rs.size)
            R1 = np.tile(rp[rs], es.size)
            R2 = np.tile(rq[rs], es.size)
            for s in range(len(self.rotors)):
                if which == 0:
                    a = self._index[E1, R1, s]
                    b = self._index[E2, R2, s]
                else:
                    a = self._index[E1, s, R1]
                    b = self._index[E2, s, R2]
                ok = (a >= 0) & (b >= 0)
                rows.append(a[ok])
                cols.append(b[ok])
                eps.append(E1[ok])
                eqs.append(E2[ok])
                rps.append(R1[ok])
                rqs.append(R2[ok])
        return tuple(np.concatenate(x) for x in (rows, cols, eps, eqs, rps, rqs))

    def diagonal(self) -> np.ndarray:
        """Field-free energies in GHz relative to the zero convention."""
        e_ryd = np.array([rydberg_energy(n, l) for n, l, _ in self.electron_states]) - self.space.zero_energy
        rot1 = np.array([rotational_energy(self.params[0], r.N) for r in self.rotors])
        rot2 = np.array([rotational_energy(self.params[1], r.N) for r in self.rotors])
        return e_ryd[self._e] * HARTREE_GHZ + rot1[self._r1] + rot2[self._r2]

    def _coupling_values(self, which: int, site: SitePosition, F: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rows, cols, ep, eq, rp, rq = self._patterns[which]
        d = self.params[which].d
        side = 1.0 if site.theta == 0.0 else -1.0
        vals = np.zeros(rows.size, dtype=complex)
        for K in AXES:
            vals += F[K][ep, eq] * self._n_dir[K][rp, rq]
        # core field: +side/R^2 along Z, diagonal in the electron state
        vals += np.where(ep == eq, side / site.R**2, 0.0) * self._n_dir["Z"][rp, rq]
        return rows, cols, -d * vals * HARTREE_GHZ

    def assemble(self, geometry: Geometry, phases: np.ndarray | None = None) -> HamiltonianBlock:
        geometry.check_validity(self.params[0].d, self.params[1].d)
        parts_r, parts_c, parts_v = [np.arange(self.dim)], [np.arange(self.dim)], [self.diagonal().astype(complex)]
        for which, site in enumerate(geometry.sites):
            if self.params[which].d == 0.0:
                continue
            F = self.field.matrices(site, self.electron_states)
            r, c, v = self._coupling_values(which, site, F)
            parts_r.append(r)
            parts_c.append(c)
            parts_v.append(v)
        H = sp.coo_matrix(
            (np.concatenate(parts_v), (np.concatenate(parts_r), np.concatenate(parts_c))),
            shape=(self.dim, self.dim),
        ).tocsr()
        H.sum_duplicates()
        H.eliminate_zeros()
        norm = max(float(np.abs(H.data).max()), 1e-300)
        imag = float(np.abs(H.data.imag).max()) if H.nnz else 0.0
        if imag > 1e-12 * norm:
            raise SolverFailure("Hamiltonian is not real", imag_residue=imag, norm=norm)
        H = H.real.tocsr()
        asym = abs(H - H.T)
        if asym.nnz and asym.max() > 1e-12 * norm:
            raise SolverFailure("Hamiltonian is not symmetric", asymmetry=float(asym.max()), norm=norm)
        if phases is not None:
            D = sp.diags(np.asarray(phases, dtype=float))
            H = (D @ H @ D).tocsr()
        return HamiltonianBlock(H, self.basis, geometry, self.space.zero_energy, imag / norm)

    def rotor_operator(self, op: np.ndarray, which: int, phases: np.ndarray | None = None) -> sp.csr_matrix:
        """Embed a rotor operator (over ``self.rotors``) acting on molecule ``which``."""
        rp, rq = np.nonzero(op)
        rows, cols, vals = [], [], []
        own = self._r1 if which == 0 else self._r2
        for a, b in zip(rp, rq):
            sel = np.nonzero(own == b)[0]
            if which == 0:
                tgt = self._index[self._e[sel], a, self._r2[sel]]
            else:
                tgt = self._index[self._e[sel], self._r1[sel], a]
            ok = tgt >= 0
            rows.append(tgt[ok])
            cols.append(sel[ok])
            vals.append(np.full(ok.sum(), op[a, b]))
        M = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.dim, self.dim)
        ).tocsr()
        if phases is not None:
            D = sp.diags(np.asarray(phases, dtype=float))
            M = (D @ M @ D).tocsr()
        return M

    @cached_property
    def observables(self) -> dict[str, sp.csr_matrix]:
        """cos and cos^2 of each rotor axis as sparse basis operators."""
        c = cos_matrix(self.rotors)
        c2 = cos2_matrix(self.rotors)
        return {
            "cos1": self.rotor_operator(c, 0),
            "cos2": self.rotor_operator(c, 1),
            "cos2_1": self.rotor_operator(c2, 0),
            "cos2_2": self.rotor_operator(c2, 1),
        }

    def expectation(self, vectors: np.ndarray, phases: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Orientation and alignment of both rotors for each column of ``vectors``."""
        out = {}
        for name, op in self.observables.items():
            if phases is not None:
                D = sp.diags(np.asarray(phases, dtype=float))
                op = D @ op @ D
            out[name] = np.einsum("ij,ij->j", vectors, op @ vectors)
        return out

    def electron_weight(self, vectors: np.ndarray, n: int, l: int) -> np.ndarray:
        """Probability of electron orbital (n, l) in each column."""
        mask = np.array([(b.n, b.l) == (n, l) for b in self.basis])
        return np.sum(np.abs(vectors[mask]) ** 2, axis=0)

    def manifold_weight(self, vectors: np.ndarray) -> np.ndarray:
        mask = np.array([b.n == self.space.n and b.l >= self.space.l_min for b in self.basis])
        return np.sum(np.abs(vectors[mask]) ** 2, axis=0)


def assemble(space: StateSpace, geometry: Geometry, params=MoleculeParams(), **kw) -> HamiltonianBlock:
    """One-shot assembly; build a :class:`PentaMolModel` to reuse work across geometries."""
    return PentaMolModel(space, params, **kw).assemble(geometry)


def _residual(H, vals: np.ndarray, vecs: np.ndarray) -> float:
    if vals.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(H @ vecs - vecs * vals, axis=0)))


def diagonalize(
    block: HamiltonianBlock | np.ndarray | sp.spmatrix,
    k: int | None = None,
    window: tuple[float, float] | None = None,
    solver: str = "dense",
    sigma: float | None = None,
    ceiling: int = DENSE_CEILING,
    tol: float = 1e-8,
) -> Spectrum:
    """Eigenpairs of a real symmetric block.

    ``solver="dense"`` uses LAPACK and returns every eigenvalue, the ``k``
    lowest, or those inside ``window`` (GHz); it refuses dimensions above
    ``ceiling``. ``solver="sparse"`` runs shift-invert Lanczos around
    ``sigma`` (default: the Gershgorin lower bound, so the ``k`` lowest
    states are returned) for ``k`` states,
    or grows ``k`` until ``window`` is covered. Every result is checked
    against ||Hv - Ev|| <= tol ||H||.
    """
    H = block.matrix if isinstance(block, HamiltonianBlock) else block
    n = H.shape[0]
    norm = float(spla.norm(H, 1)) if sp.issparse(H) else float(np.abs(H).sum(axis=0).max())
    norm = max(norm, 1e-300)
    if solver == "dense":
        if n > ceiling:
            raise SolverFailure(
                f"dimension {n} exceeds the dense ceiling {ceiling}; reduce N_max or use solver='sparse'",
                dim=n,
                ceiling=ceiling,
            )
        A = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
        try:
            if window is not None:
                vals, vecs = scipy.linalg.eigh(A, subset_by_value=window, driver="evr")
            elif k is not None and k < n:
                vals, vecs = scipy.linalg.eigh(A, subset_by_index=(0, k - 1), driver="evr")
            else:
                vals, vecs = scipy.linalg.eigh(A, driver="evd")
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"dense eigensolver failed: {exc}", dim=n, norm=norm) from exc
        res = _residual(A, vals, vecs)
    elif solver == "sparse":
        Hs = sp.csc_matrix(H)
        if sigma is None:
            if window is None:
                diag = Hs.diagonal()
                radius = np.asarray(abs(Hs).sum(axis=1)).ravel() - np.abs(diag)
                sigma = float(np.min(diag - radius)) - 1.0
            else:
                sigma = 0.5 * (window[0] + window[1])
        kk = k if k is not None else 16
        try:
            # symmetric fill-reducing order: about half the fill of the default
            lu = spla.splu(Hs - sigma * sp.identity(n, format="csc"), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverFailure(f"shift-invert factorization failed: {exc}", dim=n, sigma=sigma) from exc
        op_inv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
        while True:
            kk = min(kk, n - 1)
            try:
                vals, vecs = spla.eigsh(Hs, k=kk, sigma=sigma, which="LM", OPinv=op_inv, tol=1e-12)
            except (spla.ArpackNoConvergence, RuntimeError) as exc:
                raise SolverFailure(f"sparse eigensolver failed: {exc}", dim=n, k=kk, sigma=sigma) from exc
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
            if window is None:
                break
            inside = (vals >= window[0]) & (vals <= window[1])
            covered = kk >= n - 1 or (vals[0] < window[0] and vals[-1] > window[1])
            if covered:
                vals, vecs = vals[inside], vecs[:, inside]
                break
            kk *= 2
        res = _residual(Hs, vals, vecs)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    if res > tol * norm:
        raise SolverFailure("eigenpair residual too large", residual=res, norm=norm, dim=n, solver=solver)
    return Spectrum(vals, vecs, res, solver)
