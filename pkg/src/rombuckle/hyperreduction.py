"""
Discrete empirical interpolation (DEIM) of the internal force.

Only the internal force ``f_int(u)`` is interpolated; the loads are affine
in ``mu`` and are projected exactly. Online, ``f_int`` is assembled on the
few elements that touch a sampled DoF, so the cost of one reduced Newton
iteration does not grow with the mesh.
"""

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import rom, solver
from .errors import DegenerateSnapshotError, EmptyBasisError, StaleArtifactError

__all__ = [
    "DeimSettings",
    "DeimModel",
    "ResidualRecorder",
    "internal_force_snapshots",
    "deim_indices",
    "deim_build",
    "DeimReducedProblem",
    "deim_reduced_residual",
    "deim_reduced_jacobian",
    "deim_sweep",
    "pack_deim",
    "unpack_deim",
]


@dataclass(frozen=True)
class DeimSettings:
    """Mode count for the interpolation basis.

    ``n_modes`` fixes ``m``; otherwise ``m`` is the POD size of the force
    snapshots at tolerance ``eps_greedy``. ``jacobian`` is ``"analytic"``
    (tangent assembled on the support) or ``"fd"``. ``snapshot_source``
    selects which offline residuals feed the basis: every Newton iterate
    of accepted solves (``"iterates"``) or only converged states
    (``"converged"``).
    """

    eps_greedy: float = 1e-10
    n_modes: int = None
    enrich_step: int = 5
    jacobian: str = "analytic"
    fd_step: float = 1e-7
    snapshot_source: str = "iterates"

    def __post_init__(self):
        if self.n_modes is None and not self.eps_greedy > 0:
            raise ValueError("need eps_greedy > 0 or n_modes >= 1")
        if self.n_modes is not None and self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")
        if self.jacobian not in ("analytic", "fd"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")
        if self.snapshot_source not in ("iterates", "converged"):
            raise ValueError(f"unknown snapshot source {self.snapshot_source!r}")


class ResidualRecorder:
    """Sweep callback storing ``f_int`` at the Newton iterates of accepted solves.

    The internal force is recovered from the residual the solver already
    computed, ``f_int = G + f_ext(mu)``, with constrained rows zeroed.
    Iterates of failed or rejected solves are dropped. With
    ``converged_only`` just the final iterate of each accepted solve is kept.
    """

    def __init__(self, problem, converged_only=False):
        self.problem = problem
        self.converged_only = converged_only
        self.mu = 0.0
        self.columns = []
        self._pending = []

    def set_mu(self, mu):
        self.mu = mu
        self._pending = []

    def __call__(self, x, G):
        f = G + self.problem.external_load(self.mu)
        f[self.problem.dofmap.constrained] = 0.0
        self._pending.append(f)

    def accept(self):
        keep = self._pending[-1:] if self.converged_only else self._pending
        self.columns.extend(keep)
        self._pending = []

    def reject(self):
        self._pending = []

    def matrix(self):
        if not self.columns:
            return np.zeros((self.problem.n_dofs, 0))
        return np.column_stack(self.columns)


def internal_force_snapshots(problem, states):
    """``f_int`` at the given states with constrained rows zeroed."""
    cols = []
    for u in states:
        f = problem.internal_force(u)
        f[problem.dofmap.constrained] = 0.0
        cols.append(f)
    return np.column_stack(cols)


def deim_indices(H):
    """Greedy interpolation indices for the columns of ``H``.

    Raises
    ------
    DegenerateSnapshotError
        A new mode is (numerically) interpolated exactly by the previous
        ones, so the interpolation matrix would be singular.
    """
    H = np.asarray(H, dtype=float)
    m = H.shape[1]
    if m == 0 or not np.any(H):
        raise DegenerateSnapshotError("no nonzero force snapshots")
    p = [int(np.argmax(np.abs(H[:, 0])))]
    if abs(H[p[0], 0]) == 0.0:
        raise DegenerateSnapshotError("first interpolation mode is zero")
    for k in range(1, m):
        c = np.linalg.solve(H[p, :k], H[p, k])
        r = H[:, k] - H[:, :k] @ c
        j = int(np.argmax(np.abs(r)))
        if abs(r[j]) <= 1e-13 * np.linalg.norm(H[:, k]) or j in p:
            raise DegenerateSnapshotError(f"interpolation matrix singular at mode {k + 1}")
        p.append(j)
    return np.array(p, dtype=np.int64)


@dataclass(eq=False)
class DeimModel:
    """Interpolation basis ``H`` (first ``m`` of ``modes``) and its indices."""

    modes: np.ndarray
    m: int
    indices: np.ndarray
    sigma: np.ndarray

    @property
    def H(self):
        return self.modes[:, :self.m]

    @property
    def n_available(self):
        return self.modes.shape[1]

    def with_modes(self, m):
        m = int(min(m, self.n_available))
        return DeimModel(self.modes, m, deim_indices(self.modes[:, :m]), self.sigma)

    def interpolation(self, V):
        """``M = V^T H (P H)^{-1}``, shape ``N x m``."""
        PH = self.H[self.indices]
        return sla.solve(PH.T, (V.T @ self.H).T).T

    def support(self, problem):
        """Elements touching any sampled DoF."""
        nodes = np.unique(self.indices // problem.dim)
        touch = np.isin(problem.mesh.elements, nodes).any(axis=1)
        return np.flatnonzero(touch)


def deim_build(force_snapshots, settings=None):
    """POD of the force snapshots followed by greedy index selection.

    Raises
    ------
    DegenerateSnapshotError
        All snapshots vanish or the interpolation matrix is singular.
    """
    settings = settings or DeimSettings()
    F = np.asarray(force_snapshots, dtype=float)
    if F.size == 0 or not np.any(F):
        raise DegenerateSnapshotError("all force snapshots are zero")
    U, sigma, _ = np.linalg.svd(F, full_matrices=False)
    keep = sigma > sigma[0] * 1e-14
    U, sigma = U[:, keep], sigma[keep]
    if settings.n_modes is not None:
        m = min(settings.n_modes, U.shape[1])
    else:
        m = max(rom._retained(sigma, settings.eps_greedy, "squared"), 1)
    return DeimModel(U, m, deim_indices(U[:, :m]), sigma)


class DeimReducedProblem:
    """Reduced system whose internal force is DEIM-interpolated.

    Implements the continuation protocol of :mod:`rombuckle.solver`.
    """

    def __init__(self, problem, basis, model, settings=None):
        if basis.N == 0:
            raise EmptyBasisError("reduced problem needs a non-empty basis")
        if basis.n_dofs != problem.n_dofs or model.modes.shape[0] != problem.n_dofs:
            raise StaleArtifactError("basis or DEIM model does not match the problem")
        self.problem = problem
        self.basis = basis
        self.model = model
        self.settings = settings or DeimSettings()
        self.dim = problem.dim
        self.residual_scale = problem.residual_scale
        self.V = basis.V
        self.M = model.interpolation(basis.V)
        self.support = model.support(problem)
        self.sub = problem.disc.restrict(self.support)
        d = self.dim
        loc_dofs = (self.sub.global_nodes[:, None] * d + np.arange(d)).ravel()
        self._loc_dofs = loc_dofs
        pos = {int(g): i for i, g in enumerate(self.sub.global_nodes)}
        self._sample_local = np.array([pos[int(i) // d] * d + int(i) % d
                                       for i in model.indices], dtype=np.int64)
        self._V_loc = basis.V[loc_dofs]
        self._load_const = basis.V.T @ problem.load_const
        self._load_rate = basis.V.T @ problem.load_rate

    @property
    def N(self):
        return self.basis.N

    @property
    def support_fraction(self):
        return self.support.size / self.problem.mesh.n_elements

    def _local_state(self, x, mu):
        return self.problem.dofmap.lifting(mu, self._loc_dofs) + self._V_loc @ x

    def sampled_force(self, x, mu):
        """``f_int`` at the sampled DoFs, assembled on the support only."""
        f = self.sub.internal_force(self.problem.model, self._local_state(x, mu))
        return f[self._sample_local]

    def residual(self, x, mu):
        x = np.asarray(x, dtype=float)
        return self.M @ self.sampled_force(x, mu) - (self._load_const + mu * self._load_rate)

    def jacobian(self, x, mu):
        x = np.asarray(x, dtype=float)
        if self.settings.jacobian == "fd":
            h = self.settings.fd_step * max(1.0, np.linalg.norm(x))
            cols = [(self.residual(x + h * e, mu) - self.residual(x - h * e, mu)) / (2 * h)
                    for e in np.eye(self.N)]
            return np.column_stack(cols)
        K = self.sub.stiffness(self.problem.model, self._local_state(x, mu))
        return self.M @ (K[self._sample_local] @ self._V_loc)

    def reconstruct(self, x, mu):
        return self.problem.lifting(mu) + self.V @ x

    def initial_state(self, mu):
        return np.zeros(self.N)

    def shift(self, x, mu_from, mu_to):
        return np.array(x, dtype=float)

    def project_direction(self, v):
        return self.V.T @ self.problem.project_direction(v)

    def enrich(self):
        """Same system with ``enrich_step`` more interpolation modes, or None."""
        if self.model.m >= self.model.n_available:
            return None
        model = self.model.with_modes(self.model.m + self.settings.enrich_step)
        return DeimReducedProblem(self.problem, self.basis, model, self.settings)


def deim_reduced_residual(problem, basis, model, mu, x):
    return DeimReducedProblem(problem, basis, model).residual(x, mu)


def deim_reduced_jacobian(problem, basis, model, mu, x, settings=None):
    return DeimReducedProblem(problem, basis, model, settings).jacobian(x, mu)


def deim_sweep(problem, basis, model, plan, settings=None, deim_settings=None,
               seeding=None, functional="inf_norm_y", threshold=None, stop_after=None):
    """Reduced continuation with DEIM; enrich ``m`` while any step fails.

    Returns ``(branch, system)`` where ``system`` is the DEIM system that
    produced the branch.
    """
    system = DeimReducedProblem(problem, basis, model, deim_settings)
    while True:
        try:
            branch = solver.continuation_sweep(system, plan, settings, seeding,
                                               functional, threshold=threshold,
                                               stop_after=stop_after)
            if branch.converged.all():
                return branch, system
            failure = None
        except solver.SweepError as exc:
            failure = exc
        richer = system.enrich()
        if richer is None:
            if failure is not None:
                raise failure
            return branch, system
        system = richer


# Persistence as a tagged section of the basis file:
#   int64 m, int64 n_modes, int64 n_dofs, int64[m] indices,
#   float64[n_modes] sigma, float64[n_dofs * n_modes] modes (column-major)

def pack_deim(model):
    n, k = model.modes.shape
    return b"".join([
        struct.pack("<qqq", model.m, k, n),
        np.asarray(model.indices, dtype="<i8").tobytes(),
        np.asarray(model.sigma, dtype="<f8").tobytes(),
        np.asarray(model.modes, dtype="<f8").tobytes(order="F"),
    ])


def unpack_deim(payload):
    m, k, n = struct.unpack_from("<qqq", payload, 0)
    off = 24
    indices = np.frombuffer(payload, "<i8", m, off).copy()
    off += 8 * m
    sigma = np.frombuffer(payload, "<f8", k, off).copy()
    off += 8 * k
    modes = np.frombuffer(payload, "<f8", n * k, off).reshape((n, k), order="F").copy()
    return DeimModel(modes, m, indices, sigma)
