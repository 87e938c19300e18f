"""Geometry scans, adiabatic curve tracking and potential-curve analysis."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from rydpenta.constants import HARTREE_GHZ, KRB_MASS_AU
from rydpenta.hamiltonian import (
    Geometry,
    PentaMolModel,
    SolverFailure,
    StateSpace,
    coupled_label,
    diagonalize,
)
from rydpenta.rotor import MoleculeParams, dipole_dipole_estimate
from rydpenta.rydberg import IntegralCache

log = logging.getLogger(__name__)

__all__ = [
    "ScanPlan",
    "PotentialCurve",
    "ScanResult",
    "TrackResult",
    "WellReport",
    "VibrationalLevels",
    "run_scan",
    "track_curves",
    "orientation",
    "alignment",
    "find_wells",
    "count_levels",
    "count_vibrational",
    "convergence_study",
    "trimol_limit_check",
    "validity_report",
]

MODES = ("symmetric", "asym-gap", "asym-r1")


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanPlan:
    """What to scan and which eigenstates to follow.

    ``R`` is the scanned coordinate: R = R1 = R2 for ``symmetric``, R1 for
    ``asym-gap`` (R2 = R1 + gap) and R2 for ``asym-r1`` (R1 fixed).

    ``select`` picks the followed states at each point:
    ``"lowest"`` the ``n_states`` lowest eigenvalues, ``"manifold"`` the
    ``n_states`` lowest with majority weight on the degenerate manifold,
    ``"s:<K>"`` every state with majority weight on the s orbital and rotor
    pairs with N1(N1+1) + N2(N2+1) = K. Where the family is strongly mixed
    and fewer than ``n_states`` states pass, the remainder is filled with the
    states of largest family weight above 1/4.
    """

    mode: str
    R: tuple[float, ...]
    space: StateSpace = StateSpace()
    params: tuple[MoleculeParams, MoleculeParams] = (MoleculeParams(), MoleculeParams())
    gap: float | None = None
    R1: float | None = None
    select: str = "manifold"
    n_states: int = 6
    sigma: float | None = None
    solver: str = "sparse"
    min_gap: float = 100.0
    overlap_threshold: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown scan mode {self.mode!r}; expected one of {MODES}")
        R = tuple(float(r) for r in self.R)
        object.__setattr__(self, "R", R)
        if len(R) == 0 or any(b <= a for a, b in zip(R, R[1:])):
            raise ValueError("R schedule must be non-empty and strictly increasing")
        if self.mode == "asym-gap" and (self.gap is None or self.gap <= 0):
            raise ValueError("asym-gap mode needs a positive gap")
        if self.mode == "asym-r1" and (self.R1 is None or self.R1 <= 0):
            raise ValueError("asym-r1 mode needs a positive R1")
        if isinstance(self.params, MoleculeParams):
            object.__setattr__(self, "params", (self.params, self.params))
        if self.n_states < 1:
            raise ValueError("n_states must be positive")
        _parse_select(self.select)

    def geometry(self, x: float) -> Geometry:
        if self.mode == "symmetric":
            return Geometry.symmetric(x)
        if self.mode == "asym-gap":
            return Geometry.same_side(x, x + self.gap, self.min_gap)
        return Geometry.same_side(self.R1, x, self.min_gap)


def _parse_select(select: str):
    if select in ("lowest", "manifold"):
        return select, None
    if select.startswith("s:"):
        try:
            return "s", int(select[2:])
        except ValueError:
            pass
    raise ValueError(f"unknown state selection {select!r}")


@dataclass
class PotentialCurve:
    curve_id: int
    R: np.ndarray
    energy: np.ndarray
    cos1: np.ndarray
    cos2: np.ndarray
    cos2_1: np.ndarray
    cos2_2: np.ndarray
    overlap: np.ndarray
    flagged: np.ndarray
    label: str = ""
    state_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def flagged_R(self) -> list[float]:
        return [float(r) for r, f in zip(self.R, self.flagged) if f]


@dataclass
class TrackResult:
    """assignment[k, c] is the index in eigenset k of curve c (-1 if absent)."""

    assignment: np.ndarray
    overlap: np.ndarray
    flagged: np.ndarray


def track_curves(vector_sets, threshold: float = 0.5) -> TrackResult:
    """Follow states across consecutive eigensets by eigenvector overlap.

    ``vector_sets`` is a sequence of (dim, n_k) arrays. At each step the
    pairs are matched greedily in order of decreasing |<v_k|v_k+1>|. A curve
    whose matched overlap is below ``threshold`` is flagged (avoided
    crossing or a state entering/leaving the followed set). Unmatched new
    states open new curves.
    """
    sets = [np.asarray(v) for v in vector_sets]
    if not sets:
        return TrackResult(np.zeros((0, 0), int), np.zeros((0, 0)), np.zeros((0, 0), bool))
    dim = sets[0].shape[0]
    for v in sets:
        if v.shape[0] != dim:
            raise InvariantViolation(f"eigenvector dimension changed from {dim} to {v.shape[0]}")
    cols = [list(range(sets[0].shape[1]))]
    ov_rows = [[np.nan] * sets[0].shape[1]]
    n_curves = sets[0].shape[1]
    for k in range(1, len(sets)):
        prev_idx = cols[-1]
        O = np.abs(sets[k - 1].T @ sets[k])
        pairs = sorted(
            ((O[i, j], i, j) for i in range(O.shape[0]) for j in range(O.shape[1])),
            key=lambda t: (-t[0], t[1], t[2]),
        )
        row_of_prev = {i: c for c, i in enumerate(prev_idx) if i >= 0}
        new_idx = [-1] * n_curves
        new_ov = [np.nan] * n_curves
        used_i, used_j = set(), set()
        for o, i, j in pairs:
            if i in used_i or j in used_j or i not in row_of_prev:
                continue
            c = row_of_prev[i]
            new_idx[c] = j
            new_ov[c] = o
            used_i.add(i)
            used_j.add(j)
        for j in range(O.shape[1]):
            if j not in used_j:
                new_idx.append(j)
                new_ov.append(np.nan)
                for past in cols:
                    past.append(-1)
                for past in ov_rows:
                    past.append(np.nan)
                n_curves += 1
        cols.append(new_idx)
        ov_rows.append(new_ov)
    assignment = np.array(cols, dtype=int)
    overlap = np.array(ov_rows, dtype=float)
    flagged = (assignment >= 0) & ~np.isnan(overlap) & (overlap < threshold)
    return TrackResult(assignment, overlap, flagged)


def orientation(model: PentaMolModel, eigvec: np.ndarray, rotor_index: int) -> float:
    """<cos theta_i> for rotor 1 or 2."""
    op = model.observables["cos1" if rotor_index == 1 else "cos2"]
    return float(eigvec @ (op @ eigvec))


def alignment(model: PentaMolModel, eigvec: np.ndarray, rotor_index: int) -> float:
    """<cos^2 theta_i> for rotor 1 or 2."""
    op = model.observables["cos2_1" if rotor_index == 1 else "cos2_2"]
    return float(eigvec @ (op @ eigvec))


@dataclass
class ScanResult:
    plan: ScanPlan
    curves: list[PotentialCurve]
    dim: int
    timings: dict
    validity: dict | None
    vectors: list[np.ndarray] | None = None
    energies: list[np.ndarray] | None = None


def validity_report(plan: ScanPlan) -> dict | None:
    """Dipole-dipole magnitude at the closest same-side approach of the scan."""
    if plan.mode == "symmetric":
        return None
    seps = [plan.geometry(x).separation for x in plan.R]
    sep = min(seps)
    d1, d2 = plan.params[0].d, plan.params[1].d
    return {
        "min_separation_bohr": sep,
        "dipole_dipole_GHz": dipole_dipole_estimate(math.sqrt(d1 * d2), sep),
        "min_gap_bohr": plan.min_gap,
        "neglected": True,
    }


def _family_weight(model: PentaMolModel, vectors: np.ndarray, rot_sum: int) -> np.ndarray:
    sp = model.space
    mask = np.array(
        [b.n == sp.s_n and b.l == 0 and b.N1 * (b.N1 + 1) + b.N2 * (b.N2 + 1) == rot_sum for b in model.basis]
    )
    return np.sum(vectors[mask] ** 2, axis=0)


def _solve_point(model: PentaMolModel, plan: ScanPlan, x: float, hint: dict | None = None):
    geom = plan.geometry(x)
    block = model.assemble(geom)
    kind, rot_sum = _parse_select(plan.select)
    if kind == "lowest":
        spec = diagonalize(block, k=plan.n_states, solver=plan.solver, sigma=plan.sigma)
        return spec.energies, spec.vectors
    if kind == "s":
        B = 0.5 * (plan.params[0].B + plan.params[1].B)
        from rydpenta.rydberg import rydberg_energy

        e_s = (rydberg_energy(model.space.s_n, 0) - model.space.zero_energy) * HARTREE_GHZ
        sigma = plan.sigma if plan.sigma is not None else e_s + rot_sum * B
        k = max(4 * plan.n_states, 24)
        while True:
            spec = diagonalize(block, k=min(k, block.dim - 1), solver=plan.solver, sigma=sigma)
            w = _family_weight(model, spec.vectors, rot_sum)
            keep = np.nonzero(w > 0.5)[0]
            near = np.abs(spec.energies - sigma)
            fam_far = near[keep].max() if keep.size else 0.0
            if k >= block.dim - 1 or near.max() > fam_far + 2.0 * B:
                if keep.size < plan.n_states:
                    rest = np.setdiff1d(np.argsort(-w), keep, assume_unique=True)
                    rest = rest[w[rest] > 0.25]
                    keep = np.sort(np.concatenate([keep, rest[: plan.n_states - keep.size]]))
                return spec.energies[keep], spec.vectors[:, keep]
            k *= 2
    # manifold: lowest states with majority manifold character. The shift
    # sits just below the band, continued from the previous scan point.
    if plan.sigma is not None:
        sigma = plan.sigma
    elif hint and "sigma" in hint:
        sigma = hint["sigma"]
    else:
        sigma = -60.0
    k = plan.n_states + 12
    for _ in range(8):
        spec = diagonalize(block, k=min(k, block.dim - 1), solver=plan.solver, sigma=sigma)
        w = model.manifold_weight(spec.vectors)
        keep = np.nonzero(w > 0.5)[0]
        if keep.size and spec.energies[keep[0]] < sigma:
            # shift landed inside the manifold band: move below it
            sigma = spec.energies[keep[0]] - 10.0
            continue
        if keep.size >= plan.n_states or k >= block.dim - 1:
            keep = keep[: plan.n_states]
            if hint is not None and keep.size:
                hint["sigma"] = float(spec.energies[keep[0]]) - 3.0
            return spec.energies[keep], spec.vectors[:, keep]
        k *= 2
    raise SolverFailure("could not bracket the lowest manifold states", R=x, sigma=sigma)


def run_scan(
    plan: ScanPlan,
    model: PentaMolModel | None = None,
    keep_vectors: bool = False,
    cache: IntegralCache | None = None,
) -> ScanResult:
    """Assemble and diagonalize at every scheduled point, then track curves."""
    t0 = time.perf_counter()
    if model is None:
        model = PentaMolModel(plan.space, plan.params, cache=cache)
    t_model = time.perf_counter() - t0

    hint = {} if plan.workers <= 1 else None

    def work(x):
        try:
            return _solve_point(model, plan, x, hint)
        except SolverFailure as exc:
            exc.diagnostics["R"] = x
            raise

    t1 = time.perf_counter()
    if plan.workers > 1:
        with ThreadPoolExecutor(plan.workers) as ex:
            results = list(ex.map(work, plan.R))
    else:
        results = [work(x) for x in plan.R]
    t_solve = time.perf_counter() - t1
    energies = [r[0] for r in results]
    vectors = [r[1] for r in results]
    track = track_curves(vectors, plan.overlap_threshold)
    obs = [model.expectation(v) for v in vectors]
    curves = []
    R = np.array(plan.R)
    for c in range(track.assignment.shape[1]):
        idx = track.assignment[:, c]
        present = idx >= 0
        pick = lambda arrs: np.array([arrs[k][i] if i >= 0 else np.nan for k, i in enumerate(idx)])
        last = int(np.nonzero(present)[0][-1])
        label = str(coupled_label(vectors[last][:, idx[last]], model.basis, model.space.n, model.space.l_min))
        curves.append(
            PotentialCurve(
                curve_id=c,
                R=R[present],
                energy=pick(energies)[present],
                cos1=pick([o["cos1"] for o in obs])[present],
                cos2=pick([o["cos2"] for o in obs])[present],
                cos2_1=pick([o["cos2_1"] for o in obs])[present],
                cos2_2=pick([o["cos2_2"] for o in obs])[present],
                overlap=track.overlap[present, c],
                flagged=track.flagged[present, c],
                label=label,
                state_index=idx[present],
            )
        )
    timings = {"model_s": t_model, "solve_s": t_solve, "points": len(plan.R)}
    return ScanResult(
        plan,
        curves,
        model.dim,
        timings,
        validity_report(plan),
        vectors if keep_vectors else None,
        energies,
    )


@dataclass
class WellReport:
    """A local minimum of a potential curve; energies in GHz, radii in bohr."""

    R_min: float
    E_min: float
    depth: float
    R_left: float
    R_right: float
    barrier_left: float
    barrier_right: float
    potential: CubicSpline | None = field(default=None, repr=False)
    interp_error: float = 0.0
    n_levels: int | None = None
    levels: list[float] = field(default_factory=list)
    warning: str | None = None

    @property
    def top(self) -> float:
        return self.E_min + self.depth

    def as_dict(self) -> dict:
        return {
            "R_min_bohr": self.R_min,
            "E_min_GHz": self.E_min,
            "depth_GHz": self.depth,
            "R_left_bohr": self.R_left,
            "R_right_bohr": self.R_right,
            "barrier_left_GHz": self.barrier_left,
            "barrier_right_GHz": self.barrier_right,
            "interp_error_GHz": self.interp_error,
            "n_levels": self.n_levels,
            "levels_GHz": list(self.levels),
            "warning": self.warning,
        }


def _crossing(xs: np.ndarray, ys: np.ndarray, level: float, start: int, step: int) -> float:
    """First x walking from ``start`` in direction ``step`` where ys reaches ``level``."""
    i = start
    while 0 <= i + step < len(xs):
        j = i + step
        if ys[j] >= level:
            t = (level - ys[i]) / (ys[j] - ys[i]) if ys[j] != ys[i] else 0.0
            return float(xs[i] + t * (xs[j] - xs[i]))
        i = j
    return float(xs[i])


def find_wells(R, E, refine: int = 10) -> list[WellReport]:
    """Local minima of E(R) with their barriers, on a cubic spline refined ``refine``-fold.

    Extrema are located by sign changes of the slope on the refined grid.
    A side without an interior maximum uses the highest point towards that
    end of the scan. The depth is measured to the lower of the two barriers.
    """
    R = np.asarray(R, dtype=float)
    E = np.asarray(E, dtype=float)
    if R.size < 5:
        raise ValueError("need at least 5 points to look for wells")
    spline = CubicSpline(R, E)
    xs = np.linspace(R[0], R[-1], refine * (R.size - 1) + 1)
    ys = spline(xs)
    slope = np.diff(ys)
    sgn = np.sign(slope)
    minima = [i + 1 for i in range(len(sgn) - 1) if sgn[i] < 0 and sgn[i + 1] > 0]
    maxima = [i + 1 for i in range(len(sgn) - 1) if sgn[i] > 0 and sgn[i + 1] < 0]
    coarse = CubicSpline(R[::2], E[::2]) if R.size >= 8 else None
    wells = []
    for i in minima:
        left_max = [j for j in maxima if j < i]
        right_max = [j for j in maxima if j > i]
        jl = left_max[-1] if left_max else int(np.argmax(ys[: i + 1]))
        jr = right_max[0] if right_max else i + int(np.argmax(ys[i:]))
        bl, br = float(ys[jl]), float(ys[jr])
        top = min(bl, br)
        depth = top - float(ys[i])
        if depth <= 0:
            continue
        r_left = _crossing(xs, ys, top, i, -1)
        r_right = _crossing(xs, ys, top, i, +1)
        err = 0.0
        if coarse is not None:
            region = (xs >= r_left) & (xs <= r_right)
            err = float(np.max(np.abs(coarse(xs[region]) - ys[region]))) if region.any() else 0.0
        wells.append(
            WellReport(
                R_min=float(xs[i]),
                E_min=float(ys[i]),
                depth=depth,
                R_left=r_left,
                R_right=r_right,
                barrier_left=bl,
                barrier_right=br,
                potential=spline,
                interp_error=err,
            )
        )
    return wells


def _node_count(V: np.ndarray, h: float, energy: float, mass: float) -> int:
    """Sign changes of the Numerov solution started with psi(a) = 0."""
    g = 2.0 * mass * (energy - V)
    f = 1.0 + h * h * g / 12.0
    psi_prev, psi = 0.0, 1e-12
    nodes = 0
    for i in range(1, V.size - 1):
        psi_next = ((12.0 - 10.0 * f[i]) * psi - f[i - 1] * psi_prev) / f[i + 1]
        if psi_next == 0.0 or (psi_next < 0.0) != (psi < 0.0):
            nodes += 1
        psi_prev, psi = psi, psi_next
        if abs(psi) > 1e250:
            psi_prev *= 1e-250
            psi *= 1e-250
    return nodes


@dataclass
class VibrationalLevels:
    count: int
    energies: list[float]
    warning: str | None = None


def count_levels(
    potential,
    a: float,
    b: float,
    top: float,
    mass: float,
    n_grid: int = 6000,
    pad: float | None = None,
    tol: float = 1e-10,
) -> VibrationalLevels:
    """Bound levels below ``top`` of -psi''/(2 mass) + V psi = E psi (atomic units).

    ``potential`` is evaluated on [a, b]; outside it is held at ``top`` over
    a pad of the same width (default) and the solution is clamped to zero at
    the padded ends. Levels come from Sturm node counting of the Numerov
    solution and bisection on the count.
    """
    if not mass > 0:
        raise ValueError("mass must be positive")
    if not b > a:
        raise ValueError("need b > a")
    pad = (b - a) if pad is None else pad
    x = np.linspace(a - pad, b + pad, n_grid)
    h = x[1] - x[0]
    V = np.full_like(x, top)
    inside = (x >= a) & (x <= b)
    V[inside] = np.minimum(np.asarray(potential(x[inside]), dtype=float), top)
    vmin = float(V.min())
    e_hi = top - tol * max(top - vmin, 1e-300)
    count = _node_count(V, h, e_hi, mass)
    energies = []
    for v in range(count):
        lo, hi = vmin, e_hi
        while hi - lo > tol * (top - vmin):
            mid = 0.5 * (lo + hi)
            if _node_count(V, h, mid, mass) > v:
                hi = mid
            else:
                lo = mid
        energies.append(0.5 * (lo + hi))
    return VibrationalLevels(count, energies)


def count_vibrational(well: WellReport, reduced_mass: float = KRB_MASS_AU, n_grid: int = 6000) -> VibrationalLevels:
    """Vibrational levels (GHz) of a well from :func:`find_wells`.

    The well potential is the spline converted to hartree. A resolution
    warning is attached when the smallest level spacing is below the
    estimated interpolation error.
    """
    if well.potential is None:
        raise ValueError("well has no potential attached")
    if not well.depth > 0:
        raise ValueError("well depth must be positive")
    spline = well.potential
    res = count_levels(
        lambda r: spline(r) / HARTREE_GHZ,
        well.R_left,
        well.R_right,
        well.top / HARTREE_GHZ,
        reduced_mass,
        n_grid=n_grid,
    )
    levels = [e * HARTREE_GHZ for e in res.energies]
    warning = None
    if len(levels) >= 2:
        spacing = float(np.min(np.diff(levels)))
        if spacing < well.interp_error:
            warning = f"level spacing {spacing:.3g} GHz below interpolation error {well.interp_error:.3g} GHz"
    well.n_levels = res.count
    well.levels = levels
    well.warning = warning
    return VibrationalLevels(res.count, levels, warning)


@dataclass
class ConvergenceTable:
    R: np.ndarray
    comparisons: list[dict]

    def as_dict(self) -> dict:
        return {
            "R_bohr": [float(r) for r in self.R],
            "comparisons": [
                {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in c.items()} for c in self.comparisons
            ],
        }


def _energies_matrix(result: ScanResult, n: int) -> np.ndarray:
    out = np.full((len(result.plan.R), n), np.nan)
    for k, e in enumerate(result.energies):
        m = min(n, len(e))
        out[k, :m] = np.sort(e)[:m]
    return out


def convergence_study(
    plan: ScanPlan,
    N_max_ladder=(4, 5),
    compare_without_s: bool = True,
    n_curves: int = 6,
    results: dict | None = None,
    cache: IntegralCache | None = None,
) -> ConvergenceTable:
    """Relative changes of the ``n_curves`` lowest selected energies.

    Successive entries of ``N_max_ladder`` are compared point by point as
    |E_b - E_a| / |E_a|; with ``compare_without_s`` the first rung is also
    compared against the same space without the s orbital. Energies are
    matched by order, not by tracking. ``results`` may pre-supply scans
    keyed by (N_max, include_s).
    """
    results = dict(results or {})
    plan = replace(plan, n_states=n_curves)

    def get(N_max, include_s):
        key = (N_max, include_s)
        if key not in results:
            results[key] = run_scan(
                replace(plan, space=replace(plan.space, N_max=N_max, include_s=include_s)), cache=cache
            )
        return results[key]

    comps = []
    ladder = list(N_max_ladder)
    pairs = [((a, plan.space.include_s), (b, plan.space.include_s)) for a, b in zip(ladder, ladder[1:])]
    if compare_without_s and plan.space.include_s:
        pairs.append(((ladder[0], True), (ladder[0], False)))
    for ka, kb in pairs:
        Ea = _energies_matrix(get(*ka), n_curves)
        Eb = _energies_matrix(get(*kb), n_curves)
        rel = np.abs(Eb - Ea) / np.abs(Ea)
        comps.append(
            {
                "from": {"N_max": ka[0], "include_s": ka[1]},
                "to": {"N_max": kb[0], "include_s": kb[1]},
                "relative_error": rel,
                "max_relative_error": float(np.nanmax(rel)),
            }
        )
    return ConvergenceTable(np.array(plan.R), comps)


@dataclass
class TriMolReport:
    R1: float
    R2: float
    penta: np.ndarray
    trimol: np.ndarray
    residual: np.ndarray
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual < self.threshold))

    def as_dict(self) -> dict:
        return {
            "R1_bohr": self.R1,
            "R2_bohr": self.R2,
            "penta_GHz": self.penta.tolist(),
            "trimol_GHz": self.trimol.tolist(),
            "residual_GHz": self.residual.tolist(),
            "threshold_GHz": self.threshold,
            "passed": self.passed,
        }


def trimol_limit_check(
    plan: ScanPlan,
    threshold: float = 0.5,
    model: PentaMolModel | None = None,
    cache: IntegralCache | None = None,
) -> TriMolReport:
    """Compare the far end of an asym-r1 scan with the single-molecule reference.

    The reference is the same engine with the second dipole set to zero,
    where molecule 2 only contributes its free rotational energy; the
    lowest selected states of both then have N2 = 0 and compare directly.
    """
    if plan.mode != "asym-r1":
        raise ValueError("TriMol limit needs an asym-r1 plan")
    R2 = plan.R[-1]
    p1, p2 = plan.params
    penta_plan = replace(plan, R=(R2,))
    tri_plan = replace(penta_plan, params=(p1, MoleculeParams(B=p2.B, d=0.0)))
    penta = run_scan(penta_plan, model=model, cache=cache)
    tri = run_scan(tri_plan, cache=cache)
    ep = np.sort(penta.energies[0])
    et = np.sort(tri.energies[0])
    n = min(ep.size, et.size)
    return TriMolReport(plan.R1, R2, ep[:n], et[:n], np.abs(ep[:n] - et[:n]), threshold)
