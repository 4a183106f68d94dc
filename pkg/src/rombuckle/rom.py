"""
POD reduced basis: snapshot collection, compression and reduced Galerkin solves.

Snapshots are stored homogenized, ``u(mu) - R_D(mu)``, so the basis does
not depend on the boundary data and every reconstruction
``R_D(mu) + V x`` satisfies the Dirichlet values exactly.
"""

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from . import solver
from .errors import EmptyBasisError, GridMismatchError, StaleArtifactError

__all__ = [
    "SnapshotSet",
    "PodBasis",
    "collect_snapshots",
    "pod_compress",
    "ReducedProblem",
    "reduced_residual_jacobian",
    "reduced_sweep",
    "ErrorReport",
    "rb_error_sweep",
    "reprojection_error",
    "save_basis",
    "load_basis",
    "write_sigma_csv",
]


@dataclass(eq=False)
class SnapshotSet:
    """Columns are homogenized solutions; ``params`` holds one tuple per column."""

    matrix: np.ndarray
    params: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise ValueError("snapshot matrix must be 2-D")
        if len(self.params) != self.matrix.shape[1]:
            raise ValueError("one parameter entry per snapshot column is required")

    @property
    def n_dofs(self):
        return self.matrix.shape[0]

    @property
    def n_snapshots(self):
        return self.matrix.shape[1]

    @classmethod
    def concatenate(cls, sets):
        sets = list(sets)
        if not sets:
            raise ValueError("nothing to concatenate")
        return cls(np.hstack([s.matrix for s in sets]),
                   [p for s in sets for p in s.params])


def collect_snapshots(problem, plan, settings=None, seeding=None,
                      functional="inf_norm_y", tag=(), callback=None,
                      threshold=None, stop_after=None):
    """Run one high-fidelity sweep and keep its converged states.

    Parameters
    ----------
    problem : HyperelasticProblem
    plan : ContinuationPlan
    tag : tuple
        Extra parameter values appended to each ``mu`` in ``params`` (for
        instance ``(E, nu)`` or ``mu_g``).
    callback : callable, optional
        Forwarded to the sweep; used to record DEIM residual snapshots.

    Returns
    -------
    (SnapshotSet, Branch)
    """
    branch = solver.continuation_sweep(problem, plan, settings, seeding,
                                       functional, callback=callback,
                                       threshold=threshold, stop_after=stop_after)
    cols, params = [], []
    for p in branch.points:
        if p.converged:
            cols.append(p.u - problem.lifting(p.mu))
            params.append((p.mu, *tag))
    matrix = np.column_stack(cols) if cols else np.zeros((problem.n_dofs, 0))
    return SnapshotSet(matrix, params), branch


@dataclass(eq=False)
class PodBasis:
    """Orthonormal reduced basis ``V`` (``n_dofs x N``)."""

    V: np.ndarray
    sigma: np.ndarray
    eps: float
    fingerprint: str = ""

    @property
    def N(self):
        return self.V.shape[1]

    @property
    def n_dofs(self):
        return self.V.shape[0]

    def truncated(self, n):
        """Basis restricted to its first ``n`` modes."""
        if not 1 <= n <= self.N:
            raise EmptyBasisError(f"cannot truncate to {n} modes")
        return PodBasis(self.V[:, :n].copy(), self.sigma, self.eps, self.fingerprint)


def _retained(sigma, eps, criterion):
    energy = (sigma / sigma[0])**2
    total = energy.sum()
    # tail[n] = sum_{k >= n} energy_k / total
    tail = np.concatenate([np.cumsum(energy[::-1])[::-1], [0.0]]) / total
    bound = eps**2 if criterion == "squared" else eps
    return int(np.flatnonzero(tail <= bound)[0])


def pod_compress(snapshots, eps_pod=1e-8, criterion="squared", n_max=None):
    """Truncated left singular vectors of the snapshot matrix.

    The retained size is the smallest ``N`` with
    ``sum_{k>N} sigma_k^2 / sum_k sigma_k^2 <= eps_pod**2``. With
    ``criterion="linear"`` the bound is ``eps_pod`` instead.

    Raises
    ------
    EmptyBasisError
        The snapshot matrix is empty or identically zero.
    """
    S = snapshots.matrix if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots, float)
    if criterion not in ("squared", "linear"):
        raise ValueError(f"unknown truncation criterion {criterion!r}")
    if S.size == 0 or not np.any(S):
        raise EmptyBasisError("snapshot matrix is empty or zero")
    U, sigma, _ = np.linalg.svd(S, full_matrices=False)
    sigma = sigma[sigma > sigma[0] * np.finfo(float).eps * max(S.shape)]
    n = max(_retained(sigma, eps_pod, criterion), 1)
    if n_max is not None:
        n = min(n, int(n_max))
    V = U[:, :n]
    # rows that vanish in every snapshot (constrained DoFs) vanish exactly in V
    V[~np.any(S, axis=1)] = 0.0
    # fix the sign so the largest entry of each mode is positive
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(n)])
    return PodBasis(np.ascontiguousarray(V * flip), sigma, float(eps_pod))


def reprojection_error(snapshots, basis, n=None):
    """Frobenius norm of ``S - V V^T S`` using the first ``n`` modes."""
    S = snapshots.matrix if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots)
    V = basis.V if n is None else basis.V[:, :n]
    return float(np.linalg.norm(S - V @ (V.T @ S)))


class ReducedProblem:
    """Galerkin projection ``V^T G(R_D + V x)`` of a high-fidelity problem."""

    def __init__(self, problem, basis):
        if basis.N == 0:
            raise EmptyBasisError("reduced problem needs a non-empty basis")
        if basis.n_dofs != problem.n_dofs:
            raise StaleArtifactError("basis size does not match the problem")
        self.problem = problem
        self.basis = basis
        self.V = basis.V
        self.dim = problem.dim
        self.residual_scale = problem.residual_scale

    @property
    def N(self):
        return self.basis.N

    def reconstruct(self, x, mu):
        return self.problem.lifting(mu) + self.V @ x

    def residual(self, x, mu):
        return self.V.T @ self.problem.residual(self.reconstruct(x, mu), mu)

    def jacobian(self, x, mu):
        J = self.problem.jacobian(self.reconstruct(x, mu), mu)
        return self.V.T @ (J @ self.V)

    def initial_state(self, mu):
        return np.zeros(self.N)

    def shift(self, x, mu_from, mu_to):
        return np.array(x, dtype=float)

    def project_direction(self, v):
        return self.V.T @ self.problem.project_direction(v)


def reduced_residual_jacobian(problem, basis, mu, x):
    """Dense reduced residual and Jacobian at reduced coordinates ``x``."""
    rp = ReducedProblem(problem, basis)
    return rp.residual(np.asarray(x, float), mu), rp.jacobian(np.asarray(x, float), mu)


def reduced_sweep(problem, basis, plan, settings=None, seeding=None,
                  functional="inf_norm_y", x_start=None, threshold=None,
                  stop_after=None):
    """Simple continuation in reduced coordinates; ``s`` uses the reconstruction."""
    rp = ReducedProblem(problem, basis)
    return solver.continuation_sweep(rp, plan, settings, seeding, functional,
                                     x_start=x_start, threshold=threshold,
                                     stop_after=stop_after)


@dataclass(eq=False)
class ErrorReport:
    mus: np.ndarray
    errors: np.ndarray
    reduced: solver.Branch
    full: solver.Branch

    @property
    def max(self):
        return float(np.nanmax(self.errors))

    @property
    def mean(self):
        return float(np.nanmean(self.errors))

    @property
    def argmax_mu(self):
        return float(self.mus[np.nanargmax(self.errors)])

    @property
    def max_norm(self):
        return float(max(np.linalg.norm(p.u) for p in self.full.points if p.converged))

    def speedup(self):
        return self.full.wall_time / max(self.reduced.wall_time, 1e-300)


def rb_error_sweep(problem, basis, plan, settings=None, seeding=None,
                   functional="inf_norm_y", full_branch=None, system=None,
                   threshold=None, reduced_branch=None, stop_after=None):
    """Reduced and high-fidelity branches on one grid, with l2 DoF errors.

    ``full_branch`` and ``reduced_branch`` reuse existing sweeps on the plan
    grid; ``system`` replaces the dense reduced system (for example by a
    DEIM one). Points where either solve failed get ``nan``. Branches cut
    short by ``stop_after`` are compared on their common prefix.
    """
    if full_branch is None:
        full_branch = solver.continuation_sweep(problem, plan, settings, seeding,
                                                functional, threshold=threshold,
                                                stop_after=stop_after)
    reduced = reduced_branch
    if reduced is None:
        rb_system = system if system is not None else ReducedProblem(problem, basis)
        reduced = solver.continuation_sweep(rb_system, plan, settings, seeding, functional,
                                            threshold=threshold, stop_after=stop_after)
    n = min(len(full_branch.points), len(reduced.points))
    mus = plan.grid[:n]
    for br in (full_branch, reduced):
        if not np.allclose(br.mus[:n], mus, rtol=0, atol=1e-12 * max(1.0, abs(mus).max())):
            raise GridMismatchError("branch is not on the online grid")
    errors = np.full(n, np.nan)
    for i, (a, b) in enumerate(zip(reduced.points, full_branch.points)):
        if a.converged and b.converged:
            errors[i] = np.linalg.norm(a.u - b.u)
    return ErrorReport(mus, errors, reduced, full_branch)


# -- persistence --------------------------------------------------------
#
# Layout (little-endian):
#   b"RBPOD001"
#   int64 n_dofs, int64 N, float64 eps
#   float64[n_dofs * N]  V, column-major
#   int64 n_sigma, float64[n_sigma] sigma
#   then zero or more tagged sections: 8-byte tag, int64 byte length, payload

_MAGIC = b"RBPOD001"


def save_basis(path, basis, sections=None):
    """Write the basis and optional tagged sections (``{tag: bytes}``)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqd", basis.n_dofs, basis.N, basis.eps))
        fh.write(np.asarray(basis.V, dtype="<f8").tobytes(order="F"))
        fh.write(struct.pack("<q", basis.sigma.size))
        fh.write(np.asarray(basis.sigma, dtype="<f8").tobytes())
        for tag, payload in (sections or {}).items():
            tag = tag.encode() if isinstance(tag, str) else tag
            fh.write(tag.ljust(8, b"\0")[:8])
            fh.write(struct.pack("<q", len(payload)))
            fh.write(payload)


def load_basis(path):
    """Return ``(PodBasis, {tag: bytes})``."""
    raw = open(path, "rb").read()
    if raw[:8] != _MAGIC:
        raise StaleArtifactError(f"{path} is not a basis file")
    n, N, eps = struct.unpack_from("<qqd", raw, 8)
    off = 32
    V = np.frombuffer(raw, "<f8", n * N, off).reshape((n, N), order="F").copy()
    off += 8 * n * N
    (ns,) = struct.unpack_from("<q", raw, off)
    off += 8
    sigma = np.frombuffer(raw, "<f8", ns, off).copy()
    off += 8 * ns
    sections = {}
    while off < len(raw):
        tag = raw[off:off + 8].rstrip(b"\0").decode()
        (length,) = struct.unpack_from("<q", raw, off + 8)
        sections[tag] = raw[off + 16:off + 16 + length]
        off += 16 + length
    return PodBasis(V, sigma, eps), sections


def write_sigma_csv(path, basis):
    """Singular value spectrum with the relative energy left after each mode."""
    energy = (basis.sigma / basis.sigma[0])**2
    tail = 1.0 - np.cumsum(energy) / energy.sum()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "sigma", "tail_energy", "retained"])
        for k, (s, t) in enumerate(zip(basis.sigma, tail), start=1):
            w.writerow([k, repr(float(s)), repr(float(max(t, 0.0))), int(k <= basis.N)])
