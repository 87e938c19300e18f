import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from rydpenta.angmath import clebsch_gordan
from rydpenta.constants import HARTREE_GHZ
from rydpenta.hamiltonian import (
    ConfigurationError,
    Geometry,
    GeometryValidityError,
    HamiltonianBlock,
    PentaMolModel,
    ProductBasisState,
    StateSpace,
    coupled_label,
    diagonalize,
    enumerate_basis,
)
from rydpenta.rotor import MoleculeParams, RotorState, dipole_direction_me, rotational_energy
from rydpenta.rydberg import SolverFailure, rydberg_energy

SMALL = StateSpace(n=7, l_min=3, s_n=9, N_max=2)
DECOUPLED = MoleculeParams(d=0.0)


@pytest.fixture(scope="module")
def small_model():
    return PentaMolModel(SMALL)


def test_basis_counts():
    assert len(enumerate_basis(StateSpace(include_s=False, N_max=0))) == 17
    s_only = enumerate_basis(StateSpace(include_manifold=False, N_max=1))
    rotor_pairs = {(b.N1, b.M1, b.N2, b.M2) for b in s_only}
    assert rotor_pairs == {(0, 0, 0, 0), (0, 0, 1, 0), (1, 0, 0, 0), (1, 0, 1, 0), (1, 1, 1, -1), (1, -1, 1, 1)}
    assert len(s_only) == 6
    assert len(enumerate_basis(StateSpace(N_max=5))) > len(enumerate_basis(StateSpace(N_max=4)))


def test_basis_order_and_projection():
    basis = enumerate_basis(StateSpace(n=6, N_max=1, M_J=1))
    assert all(b.M_J == 1 for b in basis)
    assert basis[0].n == 23 and basis[0].l == 0
    keys = [(b.n != 23, b.l, b.m, b.N1, b.M1, b.N2, b.M2) for b in basis]
    assert keys == sorted(keys)


def test_empty_basis_and_bad_space():
    with pytest.raises(ConfigurationError):
        enumerate_basis(StateSpace(include_manifold=False, N_max=0, M_J=1))
    with pytest.raises(ConfigurationError):
        StateSpace(N_max=-1)
    with pytest.raises(ConfigurationError):
        StateSpace(include_manifold=False, include_s=False)


def test_geometry():
    g = Geometry.symmetric(500.0)
    assert g.separation == 1000.0
    up, down = g.sites
    assert up.theta == 0.0 and down.theta == np.pi
    assert Geometry.same_side(400.0, 575.0).separation == 175.0
    with pytest.raises(ConfigurationError):
        Geometry(500.0, 0, 500.0, 1)
    with pytest.raises(ConfigurationError):
        Geometry(-1.0, 1, 500.0, -1)


def test_validity_violation_carries_estimate(small_model):
    with pytest.raises(GeometryValidityError) as info:
        small_model.assemble(Geometry.same_side(300.0, 350.0, min_gap=100.0))
    assert info.value.estimate_ghz > 0


def _kron_reference(model, geometry):
    """Full tensor-product H (no M_J restriction) built with np.kron."""
    es, rs = model.electron_states, model.rotors
    ne, nr = len(es), len(rs)
    nK = {K: np.array([[dipole_direction_me(K, a, b) for b in rs] for a in rs]) for K in "XYZ"}
    I_e, I_r = np.eye(ne), np.eye(nr)
    zero = model.space.zero_energy
    diag = np.array([rydberg_energy(n, l) - zero for n, l, _ in es]) * HARTREE_GHZ
    H = np.kron(np.kron(np.diag(diag), I_r), I_r).astype(complex)
    rot = [np.diag([rotational_energy(p, r.N) for r in rs]) for p in model.params]
    H += np.kron(np.kron(I_e, rot[0]), I_r) + np.kron(np.kron(I_e, I_r), rot[1])
    for i, site in enumerate(geometry.sites):
        F = model.field.matrices(site, es)
        side = 1.0 if site.theta == 0.0 else -1.0
        F["Z"] = F["Z"] + side / site.R**2 * I_e
        for K in "XYZ":
            t = -model.params[i].d * HARTREE_GHZ * F[K]
            H += np.kron(np.kron(t, nK[K]), I_r) if i == 0 else np.kron(np.kron(t, I_r), nK[K])
    sel = [
        (es.index((b.n, b.l, b.m)) * nr + rs.index(RotorState(b.N1, b.M1))) * nr + rs.index(RotorState(b.N2, b.M2))
        for b in model.basis
    ]
    return H, np.array(sel)


@pytest.mark.parametrize("M_J", [0, 1, -2])
def test_assembly_matches_kron_brute_force(M_J):
    model = PentaMolModel(SMALL.with_(M_J=M_J), (MoleculeParams(), MoleculeParams(B=0.9, d=0.3)))
    geom = Geometry(300.0, 1, 420.0, -1)
    H, sel = _kron_reference(model, geom)
    block = model.assemble(geom)
    ref = H[np.ix_(sel, sel)]
    assert np.abs(ref - block.dense()).max() < 1e-12 * np.abs(ref).max()
    assert np.abs(ref.imag).max() < 1e-12 * np.abs(ref).max()
    # nothing couples the M_J block to the rest of the product space
    rest = np.setdiff1d(np.arange(H.shape[0]), sel)
    assert np.abs(H[np.ix_(sel, rest)]).max() < 1e-14 * np.abs(ref).max()


def test_assembly_is_real_symmetric(small_model):
    block = small_model.assemble(Geometry.symmetric(250.0))
    assert isinstance(block, HamiltonianBlock)
    assert block.matrix.dtype == np.float64
    assert block.imag_residue < 1e-12
    assert abs(block.matrix - block.matrix.T).max() <= 1e-12 * block.norm()


def test_decoupled_limit_is_analytic():
    model = PentaMolModel(SMALL, DECOUPLED)
    block = model.assemble(Geometry.symmetric(300.0))
    off = block.matrix - sp.diags(block.matrix.diagonal())
    assert off.nnz == 0 or abs(off).max() == 0.0
    spec = diagonalize(block)
    zero = SMALL.zero_energy
    expect = sorted(
        (rydberg_energy(b.n, b.l) - zero) * HARTREE_GHZ + 1.114 * (b.N1 * (b.N1 + 1) + b.N2 * (b.N2 + 1))
        for b in model.basis
    )
    np.testing.assert_allclose(spec.energies, expect, rtol=0, atol=1e-10)


def test_far_molecules_leave_the_zero_convention():
    model = PentaMolModel(StateSpace(n=7, include_s=False, N_max=1))
    spec = diagonalize(model.assemble(Geometry.symmetric(1e6)), k=1)
    assert abs(spec.energies[0]) < 1e-4


def test_diagonalize_two_by_two():
    a, b, c = 1.0, 0.3, -0.5
    spec = diagonalize(np.array([[a, b], [b, c]]))
    mean, half = 0.5 * (a + c), np.hypot(0.5 * (a - c), b)
    np.testing.assert_allclose(spec.energies, [mean - half, mean + half], atol=1e-14)


def test_diagonalize_paths_agree():
    space = StateSpace(n=12, include_s=False, N_max=2)
    block = PentaMolModel(space).assemble(Geometry.symmetric(200.0))
    ref = np.linalg.eigvalsh(block.dense())
    full = diagonalize(block)
    np.testing.assert_allclose(full.energies, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())
    low = diagonalize(block, k=5, solver="sparse")
    np.testing.assert_allclose(low.energies, ref[:5], rtol=1e-9)
    win = diagonalize(block, window=(ref[3] - 1e-6, ref[8] + 1e-6))
    np.testing.assert_allclose(win.energies, ref[3:9], rtol=1e-9)
    swin = diagonalize(block, window=(ref[3] - 1e-6, ref[8] + 1e-6), solver="sparse")
    np.testing.assert_allclose(swin.energies, ref[3:9], rtol=1e-9)


def test_dense_ceiling_and_unknown_solver(small_model):
    block = small_model.assemble(Geometry.symmetric(300.0))
    with pytest.raises(SolverFailure) as info:
        diagonalize(block, ceiling=10)
    assert info.value.diagnostics["dim"] == block.dim
    with pytest.raises(ValueError):
        diagonalize(block, solver="magic")


def test_labels_in_decoupled_limit():
    model = PentaMolModel(StateSpace(n=7, include_s=False, N_max=2), DECOUPLED)
    spec = diagonalize(model.assemble(Geometry.symmetric(300.0)), k=1)
    lab = coupled_label(spec.vectors[:, 0], model.basis)
    assert (lab.N, lab.M_N, lab.N1, lab.N2) == (0, 0, 0, 0)
    assert lab.weight == pytest.approx(1.0)
    assert str(lab) == "7(l>=3) |0,0,0,0>"


def test_label_of_product_state_uses_cg_weights():
    basis = [ProductBasisState(20, 3, 0, 1, 0, 1, 0)]
    lab = coupled_label(np.array([1.0]), basis)
    assert (lab.N, lab.N1, lab.N2) == (2, 1, 1)
    assert lab.weight == pytest.approx(clebsch_gordan(1, 0, 1, 0, 2, 0) ** 2)
    assert lab.weight == pytest.approx(2 / 3)


def _cluster_traces(energies, values, tol=1e-7):
    """Sum of ``values`` over groups of degenerate energies (basis-independent)."""
    out, start = [], 0
    for i in range(1, len(energies) + 1):
        if i == len(energies) or energies[i] - energies[i - 1] > tol:
            out.append(values[start:i].sum())
            start = i
    return np.array(out)


def test_phase_flips_leave_observables_unchanged(small_model):
    geom = Geometry.symmetric(260.0)
    base = diagonalize(small_model.assemble(geom))
    ref = small_model.expectation(base.vectors)
    rng = np.random.default_rng(11)
    for _ in range(3):
        phases = rng.choice([-1.0, 1.0], size=small_model.dim)
        flipped = diagonalize(small_model.assemble(geom, phases=phases))
        np.testing.assert_allclose(flipped.energies, base.energies, atol=1e-10)
        obs = small_model.expectation(flipped.vectors, phases=phases)
        for key in ref:
            np.testing.assert_allclose(
                _cluster_traces(flipped.energies, obs[key]), _cluster_traces(base.energies, ref[key]), atol=1e-10
            )


def test_symmetric_geometry_orients_oppositely(small_model):
    spec = diagonalize(small_model.assemble(Geometry.symmetric(260.0)))
    obs = small_model.expectation(spec.vectors)
    # near-degenerate pairs at the deep s level (|E| ~ 3e4 GHz) mix at the
    # 1e-12 * |E| / splitting level, so they are grouped generously
    c1, c2 = (_cluster_traces(spec.energies, obs[k], tol=1e-4) for k in ("cos1", "cos2"))
    a1, a2 = (_cluster_traces(spec.energies, obs[k], tol=1e-4) for k in ("cos2_1", "cos2_2"))
    np.testing.assert_allclose(c2, -c1, atol=1e-10)
    np.testing.assert_allclose(a2, a1, atol=1e-10)


def test_variational_monotonicity_in_rotor_cutoff():
    geom = Geometry.symmetric(260.0)
    lows = []
    for N_max in (0, 1, 2, 3):
        model = PentaMolModel(SMALL.with_(N_max=N_max))
        lows.append(diagonalize(model.assemble(geom), k=4).energies)
    for a, b in itertools.pairwise(lows) if hasattr(itertools, "pairwise") else zip(lows, lows[1:]):
        assert np.all(b <= a + 1e-9)


def test_rotor_operator_matches_kron(small_model):
    from rydpenta.rotor import cos_matrix

    c = cos_matrix(small_model.rotors)
    ne, nr = len(small_model.electron_states), len(small_model.rotors)
    full = np.kron(np.kron(np.eye(ne), np.eye(nr)), c)
    es, rs = small_model.electron_states, small_model.rotors
    sel = [
        (es.index((b.n, b.l, b.m)) * nr + rs.index(RotorState(b.N1, b.M1))) * nr + rs.index(RotorState(b.N2, b.M2))
        for b in small_model.basis
    ]
    np.testing.assert_allclose(small_model.rotor_operator(c, 1).toarray(), full[np.ix_(sel, sel)], atol=1e-15)
