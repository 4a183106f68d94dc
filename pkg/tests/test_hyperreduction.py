import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rombuckle import assembly as A
from rombuckle import hyperreduction as H
from rombuckle import rom as R
from rombuckle import solver as S
from rombuckle.errors import DegenerateSnapshotError

from conftest import beam2d_dirichlet, fd_jacobian, model


def test_identity_modes_pick_their_peaks():
    Hm = np.eye(5)[:, [3, 1]]
    assert H.deim_indices(Hm).tolist() == [3, 1]


def test_single_snapshot():
    f = np.array([0.1, -2.0, 0.5, 1.0])
    model_ = H.deim_build(f[:, None])
    assert model_.m == 1 and model_.indices.tolist() == [1]


def test_degenerate_snapshots_raise():
    with pytest.raises(DegenerateSnapshotError):
        H.deim_build(np.zeros((6, 0)))
    with pytest.raises(DegenerateSnapshotError):
        H.deim_build(np.zeros((6, 3)))
    with pytest.raises(DegenerateSnapshotError):
        H.deim_indices(np.column_stack([np.eye(4)[0], np.eye(4)[0]]))


def test_settings_validation():
    for bad in (dict(eps_greedy=0.0), dict(n_modes=0), dict(jacobian="secant"),
                dict(snapshot_source="all")):
        with pytest.raises(ValueError):
            H.DeimSettings(**bad)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(8, 40), m=st.integers(1, 6), seed=st.integers(0, 2**16))
def test_interpolation_is_exact_on_span(n, m, seed):
    # [DERIVED] P^T of H (P^T H)^{-1} P^T is the identity on range(H)
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, m))
    model_ = H.deim_build(F, H.DeimSettings(n_modes=m))
    Hm, p = model_.H, model_.indices
    assert len(set(p.tolist())) == model_.m
    c = rng.standard_normal(model_.m)
    f = Hm @ c
    approx = Hm @ np.linalg.solve(Hm[p], f[p])
    assert np.abs(approx - f).max() <= 1e-10 * np.abs(f).max()


@pytest.fixture(scope="module")
def beam_deim():
    m, bcs = beam2d_dirichlet(40, 4)
    p = A.HyperelasticProblem(m, bcs, model("svk"))
    seeding = S.Seeding(S.seed_shape(m, p.dofmap, 1, amplitude=0.05), threshold=0.01)
    plan = S.ContinuationPlan(0.0, 0.05, 11)
    rec = H.ResidualRecorder(p)
    snaps, branch = R.collect_snapshots(p, plan, seeding=seeding, callback=rec)
    basis = R.pod_compress(snaps, 1e-8)
    return p, plan, seeding, snaps, branch, basis, rec


def test_recorder_keeps_accepted_iterates(beam_deim):
    p, plan, seeding, snaps, branch, basis, rec = beam_deim
    F = rec.matrix()
    assert F.shape[0] == p.n_dofs
    assert F.shape[1] >= len(branch.points)
    assert not np.any(F[p.dofmap.constrained])
    # the last column is the converged internal force at the last point
    f_last = p.internal_force(branch.points[-1].u)
    f_last[p.dofmap.constrained] = 0
    assert np.abs(F[:, -1] - f_last).max() <= 1e-6 * np.abs(f_last).max()


def test_recorder_converged_only_and_reject():
    class Fake:
        n_dofs = 3
        dofmap = type("D", (), {"constrained": np.array([True, False, False])})()

        def external_load(self, mu):
            return np.array([0.0, mu, 0.0])

    rec = H.ResidualRecorder(Fake(), converged_only=True)
    rec.set_mu(1.0)
    rec(None, np.array([5.0, 1.0, 2.0]))
    rec(None, np.array([5.0, 0.0, 0.0]))
    rec.accept()
    rec.set_mu(2.0)
    rec(None, np.ones(3))
    rec.reject()
    assert rec.matrix().tolist() == [[0.0], [1.0], [0.0]]


def test_sampled_force_equals_full_assembly(beam_deim, rng):
    p, plan, seeding, snaps, branch, basis, rec = beam_deim
    dm = H.deim_build(rec.matrix())
    sys_ = H.DeimReducedProblem(p, basis, dm)
    x = basis.V.T @ snaps.matrix[:, 6] + 1e-3 * rng.standard_normal(basis.N)
    full = p.internal_force(sys_.reconstruct(x, 0.03))
    assert np.allclose(sys_.sampled_force(x, 0.03), full[dm.indices], rtol=1e-12, atol=1e-9)


def test_support_is_small(beam_deim):
    p, plan, seeding, snaps, branch, basis, rec = beam_deim
    dm = H.deim_build(rec.matrix(), H.DeimSettings(n_modes=20))
    assert dm.m == 20
    sys_ = H.DeimReducedProblem(p, basis, dm)
    assert sys_.support_fraction < 0.30
    assert sys_.sub.n_elements == sys_.support.size


@pytest.mark.parametrize("mode", ["analytic", "fd"])
def test_deim_jacobian_matches_fd(beam_deim, rng, mode):
    p, plan, seeding, snaps, branch, basis, rec = beam_deim
    sys_ = H.DeimReducedProblem(p, basis, H.deim_build(rec.matrix()),
                                H.DeimSettings(jacobian=mode))
    x = basis.V.T @ snaps.matrix[:, -1] + 1e-3 * rng.standard_normal(basis.N)
    J = sys_.jacobian(x, 0.05)
    Jfd = fd_jacobian(lambda y: sys_.residual(y, 0.05), x, 1e-7)
    assert np.abs(J - Jfd).max() < 1e-5 * np.abs(J).max()


def test_deim_sweep_tracks_rb(beam_deim):
    p, plan, seeding, snaps, branch, basis, rec = beam_deim
    dm = H.deim_build(rec.matrix())
    dbr, sys_ = H.deim_sweep(p, basis, dm, plan, seeding=seeding)
    assert dbr.converged.all()
    assert np.abs(dbr.values - branch.values).max() < 1e-3 * np.abs(branch.values).max()


def test_enrichment_and_persistence(beam_deim):
    p, plan, seeding, snaps, branch, basis, rec = beam_deim
    dm = H.deim_build(rec.matrix(), H.DeimSettings(n_modes=2))
    sys_ = H.DeimReducedProblem(p, basis, dm, H.DeimSettings(enrich_step=3))
    richer = sys_.enrich()
    assert richer.model.m == 5
    assert richer.model.indices[:2].tolist() == dm.indices.tolist()
    full = H.DeimModel(dm.modes, dm.n_available, H.deim_indices(dm.modes), dm.sigma)
    assert H.DeimReducedProblem(p, basis, full).enrich() is None
    back = H.unpack_deim(H.pack_deim(richer.model))
    assert back.m == 5 and np.array_equal(back.indices, richer.model.indices)
    assert np.array_equal(back.modes, dm.modes) and np.array_equal(back.sigma, dm.sigma)
