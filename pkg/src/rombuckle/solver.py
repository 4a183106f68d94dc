"""
Newton-Kantorovich solver and simple continuation along a load parameter.

Everything here is written against a small system protocol so the same code
drives the high-fidelity problem and both reduced models:

``residual(x, mu)``, ``jacobian(x, mu)``
    Residual vector and its Jacobian (sparse or dense).
``initial_state(mu)``
    Guess satisfying the boundary data at ``mu``.
``shift(x, mu_from, mu_to)``
    Move a converged state to the boundary data at ``mu_to``.
``reconstruct(x, mu)``
    Full displacement vector for output functionals and error norms.
``project_direction(v)``
    Map a full-space perturbation into system coordinates.
``residual_scale``
    Force scale multiplying ``NewtonSettings.abs_tol``.
"""

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    InadmissibleStateError,
    InvalidFunctionalError,
    InvalidPlanError,
    NonConvergenceError,
    SingularJacobianError,
    SweepError,
)

__all__ = [
    "NewtonSettings",
    "NewtonResult",
    "newton_solve",
    "ContinuationPlan",
    "Seeding",
    "BranchPoint",
    "Branch",
    "continuation_sweep",
    "detect_critical",
    "output_functional",
    "seed_shape",
    "write_branch_csv",
    "read_branch_csv",
    "write_branch_states",
    "read_branch_states",
]


@dataclass(frozen=True)
class NewtonSettings:
    """Stopping rule: ``|G| <= max(abs_tol * scale, rel_tol * |G_0|)``."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-10
    max_iter: int = 25
    divergence_guard: float = 1e4

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class NewtonResult:
    x: np.ndarray
    iters: int
    history: list


def _solve_linear(J, G):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            if sp.issparse(J):
                dx = spla.splu(sp.csc_matrix(J)).solve(G)
            else:
                J = np.atleast_2d(J)
                dx = sla.lu_solve(sla.lu_factor(J, check_finite=True), G)
    except (RuntimeError, ValueError, sla.LinAlgError, sla.LinAlgWarning) as exc:
        raise SingularJacobianError(f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(dx)):
        raise SingularJacobianError("linear solve produced non-finite values")
    return dx


def newton_solve(residual, jacobian, x0, settings=None, scale=1.0, callback=None):
    """Newton iteration ``x <- x - J(x)^{-1} G(x)``.

    Parameters
    ----------
    residual, jacobian : callable
        ``residual(x)`` and ``jacobian(x)`` for a fixed parameter.
    x0 : ndarray
        Initial guess; must already carry the boundary data.
    settings : NewtonSettings, optional
    scale : float
        Residual scale for the absolute tolerance.
    callback : callable, optional
        Called as ``callback(x, G)`` at every evaluated iterate.

    Returns
    -------
    NewtonResult

    Raises
    ------
    NonConvergenceError
        ``max_iter`` exhausted, divergence or non-finite residual.
    SingularJacobianError
        The linear solve failed.
    """
    settings = settings or NewtonSettings()
    x = np.array(x0, dtype=float)
    G = residual(x)
    r = float(np.linalg.norm(G))
    history = [r]
    if callback is not None:
        callback(x, G)
    tol = max(settings.abs_tol * scale, 0.0)
    if not np.isfinite(r):
        raise NonConvergenceError("non-finite initial residual", residual=r, history=history)
    tol = max(tol, settings.rel_tol * r) if r > 0 else tol
    k = 0
    while r > tol:
        if k >= settings.max_iter:
            raise NonConvergenceError(
                f"no convergence in {settings.max_iter} iterations (|G| = {r:.3e})",
                residual=r, history=history)
        x = x - _solve_linear(jacobian(x), G)
        k += 1
        G = residual(x)
        r = float(np.linalg.norm(G))
        history.append(r)
        if callback is not None:
            callback(x, G)
        if not np.isfinite(r) or r > settings.divergence_guard * history[0]:
            raise NonConvergenceError(f"Newton diverged (|G| = {r:.3e})",
                                      residual=r, history=history)
    return NewtonResult(x, k, history)


@dataclass(frozen=True)
class ContinuationPlan:
    """Uniform grid ``mu_0 < mu_1 < ...`` for simple continuation."""

    mu_start: float
    mu_stop: float
    n_points: int
    max_halvings: int = 4

    def __post_init__(self):
        if self.n_points < 1:
            raise InvalidPlanError("a plan needs at least one point")
        if self.n_points > 1 and not self.mu_stop > self.mu_start:
            raise InvalidPlanError("continuation step must be positive")

    @classmethod
    def from_step(cls, mu_start, mu_stop, step, **kw):
        if not step > 0:
            raise InvalidPlanError("continuation step must be positive")
        n = int(round((mu_stop - mu_start) / step)) + 1
        return cls(mu_start, mu_start + (n - 1) * step, n, **kw)

    @property
    def grid(self):
        return np.linspace(self.mu_start, self.mu_stop, self.n_points)

    @property
    def step(self):
        return (self.mu_stop - self.mu_start) / max(self.n_points - 1, 1)


@dataclass(frozen=True)
class Seeding:
    """Transverse perturbation used to leave the trivial branch.

    While the previous point is unbuckled (``s < threshold``) each step tries
    the guess plus, then minus, ``direction`` scaled by each factor in
    ``scales``. The first solution clearly on the side of the perturbation
    (``<u, direction> > 0``) is taken and mirrored solutions are discarded.
    A solution orthogonal to the seed (still trivial) is kept as a fallback
    in case no factor reaches the seeded side. ``threshold`` should sit well
    above the pre-buckling response (Poisson thickening, gravity sag) so
    seeding continues until the branch has clearly left the trivial state.
    """

    direction: np.ndarray = None
    threshold: float = 1e-2
    enabled: bool = True
    scales: tuple = (1.0, 2.0, 4.0)

    @property
    def active(self):
        return self.enabled and self.direction is not None


@dataclass(eq=False)
class BranchPoint:
    mu: float
    u: np.ndarray
    s: float
    newton_iters: int
    converged: bool
    x: np.ndarray = None
    residual: float = float("nan")


@dataclass(eq=False)
class Branch:
    points: list = field(default_factory=list)
    functional: str = "inf_norm_y"
    mu_star: float = None
    wall_time: float = 0.0

    @property
    def mus(self):
        return np.array([p.mu for p in self.points])

    @property
    def values(self):
        return np.array([p.s for p in self.points])

    @property
    def converged(self):
        return np.array([p.converged for p in self.points], dtype=bool)

    @property
    def iterations(self):
        return np.array([p.newton_iters for p in self.points], dtype=int)

    def states(self):
        return np.array([p.u for p in self.points])


_FUNCTIONALS = {
    "inf_norm_y": (1,),
    "inf_norm_z": (2,),
    "sum_inf_xy": (0, 1),
}


def output_functional(kind, u, dofmap):
    """Infinity norm of the transverse displacement component(s).

    ``dofmap`` may be a :class:`~rombuckle.assembly.DofMap` or the spatial
    dimension as an integer.
    """
    if kind not in _FUNCTIONALS:
        raise InvalidFunctionalError(f"unknown output functional {kind!r}")
    d = dofmap if isinstance(dofmap, (int, np.integer)) else dofmap.dim
    comps = _FUNCTIONALS[kind]
    if max(comps) >= d:
        raise InvalidFunctionalError(f"{kind} needs more than {d} components")
    u = np.asarray(u, dtype=float)
    if u.size % d:
        raise InvalidFunctionalError("state size is not a multiple of the dimension")
    return float(sum(np.max(np.abs(u[c::d]), initial=0.0) for c in comps))


def detect_critical(branch, threshold):
    """Smallest converged ``mu`` with ``s > threshold``; ``None`` otherwise."""
    for p in branch.points:
        if p.converged and p.s > threshold:
            return p.mu
    return None


def seed_shape(mesh, dofmap, component, shape="sine", amplitude=1.0, sign=1.0):
    """Lowest bending shape along the beam axis, applied to one component.

    ``sine`` is ``sin(pi s)`` for bodies held at both ends; ``cantilever`` is
    ``1 - cos(pi s / 2)`` for a free right end. ``s`` runs from 0 to 1 along
    the axis recorded in the mesh info. Constrained DoFs are zeroed.
    """
    axis = int(mesh.info.get("axis", 0))
    x = mesh.nodes[:, axis]
    s = (x - x.min()) / np.ptp(x)
    if shape == "sine":
        w = np.sin(np.pi * s)
    elif shape == "cantilever":
        w = 1.0 - np.cos(0.5 * np.pi * s)
    else:
        raise ValueError(f"unknown seed shape {shape!r}")
    v = np.zeros(dofmap.n_dofs)
    v[component::dofmap.dim] = sign * amplitude * w
    v[dofmap.constrained] = 0.0
    return v


_RECOVERABLE = (NonConvergenceError, SingularJacobianError, InadmissibleStateError)


def _guesses(base, seed, seeding):
    """Seeded guesses ``base +- f * seed`` for each factor, then ``base``.

    The negated seed comes right after the positive one: with a
    reflection-symmetric discretization Newton commutes with the
    reflection, so a start that overshoots to the mirrored branch with
    ``+f`` reaches the intended one with ``-f``.
    """
    if seed is not None:
        for f in seeding.scales:
            yield base + f * seed, True
            yield base - f * seed, True
    yield base, False


def _side(u, direction, rtol=1e-6):
    """Sign of the projection of ``u`` on ``direction``: -1, 0 or +1.

    The trivial branch is orthogonal to the seed up to round-off, so tiny
    projections count as zero.
    """
    dot = float(np.dot(u, direction))
    tol = rtol * np.linalg.norm(u) * np.linalg.norm(direction)
    return 0 if abs(dot) <= tol else (1 if dot > 0 else -1)


def continuation_sweep(system, plan, settings=None, seeding=None,
                       functional="inf_norm_y", dim=None, x_start=None,
                       callback=None, threshold=None, stop_after=None):
    """Trace one branch by simple continuation.

    The guess at ``mu_j`` is the converged state at ``mu_{j-1}`` shifted to
    the new boundary data. A failed step is retried on halved sub-steps (up
    to ``plan.max_halvings`` times); if it still fails the point is recorded
    with ``converged=False`` and the sweep goes on from the last converged
    state.

    Parameters
    ----------
    system : object
        Implements the protocol described in the module docstring.
    plan : ContinuationPlan
    settings : NewtonSettings, optional
    seeding : Seeding, optional
    functional : str
        Output functional kind.
    dim : int, optional
        Spatial dimension, defaults to ``system.dim``.
    x_start : ndarray, optional
        Guess for the first point in system coordinates.
    callback : callable, optional
        Passed to :func:`newton_solve`; receives ``(x, G)``. Optional
        methods ``set_mu(mu)``, ``accept()`` and ``reject()`` are called
        before every solve and once its outcome is known.
    threshold : float, optional
        Detection threshold for ``Branch.mu_star``.
    stop_after : int, optional
        With ``threshold`` set, end the sweep this many points after the
        first converged point above the threshold. The branch is then
        shorter than the plan grid.

    Raises
    ------
    SweepError
        The first point does not converge.
    """
    settings = settings or NewtonSettings()
    dim = dim if dim is not None else system.dim
    scale = getattr(system, "residual_scale", 1.0)
    seed = None
    if seeding is not None and seeding.active:
        seed = system.project_direction(seeding.direction)
        seed_full = np.asarray(seeding.direction, dtype=float)

    def notify(name, *args):
        hook = getattr(callback, name, None)
        if hook is not None:
            hook(*args)

    def solve(guess, mu):
        notify("set_mu", mu)
        try:
            res = newton_solve(lambda x: system.residual(x, mu),
                               lambda x: system.jacobian(x, mu),
                               guess, settings, scale, callback)
        except _RECOVERABLE:
            notify("reject")
            raise
        return res

    def advance(x, mu_from, mu_to, depth):
        """Reach ``mu_to`` from a converged state, halving on failure."""
        try:
            res = solve(system.shift(x, mu_from, mu_to), mu_to)
            notify("accept")
            return res.x, res.iters, res.history[-1]
        except _RECOVERABLE:
            if depth >= plan.max_halvings:
                raise
        mid = 0.5 * (mu_from + mu_to)
        x_mid, k1, _ = advance(x, mu_from, mid, depth + 1)
        x_end, k2, r = advance(x_mid, mid, mu_to, depth + 1)
        return x_end, k1 + k2, r

    branch = Branch(functional=functional)
    t0 = time.perf_counter()
    x_prev, mu_prev, s_prev = None, None, None
    remaining = None
    for j, mu in enumerate(plan.grid):
        if remaining is not None:
            if remaining == 0:
                break
            remaining -= 1
        mu = float(mu)
        if x_prev is None:
            base = system.initial_state(mu) if x_start is None else np.array(x_start, float)
        else:
            base = system.shift(x_prev, mu_prev, mu)
        use_seed = seed is not None and (s_prev is None or s_prev < seeding.threshold)
        result = fallback = None
        spent = 0
        for guess, seeded in _guesses(base, seed if use_seed else None, seeding):
            if not seeded and fallback is not None:
                break
            try:
                res = solve(guess, mu)
            except _RECOVERABLE as exc:
                error = exc
                spent += len(getattr(exc, "history", None) or ())
                continue
            spent += res.iters
            side = _side(system.reconstruct(res.x, mu), seed_full) if seeded else 1
            if side < 0:
                notify("reject")
                error = NonConvergenceError("seeded solve landed on the mirrored branch")
                continue
            notify("accept")
            if side == 0:
                # still trivial: keep it unless a larger seed reaches the branch
                fallback = fallback or (res.x, res.history[-1])
                continue
            result = (res.x, spent, res.history[-1])
            break
        if result is None and fallback is not None:
            result = (fallback[0], spent, fallback[1])
        if result is None and x_prev is not None:
            try:
                result = advance(x_prev, mu_prev, mu, 1)
            except _RECOVERABLE as exc:
                error = exc
        if result is None:
            if x_prev is None:
                raise SweepError(f"first continuation step failed at mu = {mu}: {error}",
                                 mu=mu) from error
            u = system.reconstruct(x_prev, mu_prev)
            branch.points.append(BranchPoint(mu, u, float("nan"),
                                             settings.max_iter, False, x_prev.copy(),
                                             getattr(error, "residual", None) or float("nan")))
            continue
        x, iters, r = result
        u = system.reconstruct(x, mu)
        s = output_functional(functional, u, dim)
        branch.points.append(BranchPoint(mu, u, s, iters, True, x.copy(), r))
        x_prev, mu_prev, s_prev = x, mu, s
        if (stop_after is not None and threshold is not None and remaining is None
                and s > threshold):
            remaining = int(stop_after)
    branch.wall_time = time.perf_counter() - t0
    if threshold is not None:
        branch.mu_star = detect_critical(branch, threshold)
    return branch


# -- persistence --------------------------------------------------------

_CSV_COLUMNS = ("mu", "s", "newton_iters", "converged")


def _fmt(v):
    return repr(float(v))


def write_branch_csv(path, branch, extra=None):
    """Write ``mu, s, newton_iters, converged`` rows.

    ``extra`` maps additional column names to constants (for instance the
    geometric parameter of the branch) and is placed after ``mu``.
    """
    extra = dict(extra or {})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu", *extra, "s", "newton_iters", "converged"])
        for p in branch.points:
            w.writerow([_fmt(p.mu), *(_fmt(v) for v in extra.values()), _fmt(p.s),
                        int(p.newton_iters), int(bool(p.converged))])


def read_branch_csv(path):
    """Read a branch CSV into a dict of column arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {c: np.array([]) for c in _CSV_COLUMNS}
    out = {}
    for key in rows[0]:
        col = np.array([float(r[key]) for r in rows])
        out[key] = col.astype(int) if key in ("newton_iters", "converged") else col
    return out


def write_branch_states(path, branch):
    """Binary dump: int64 header ``(n_dofs, n_points)``, float64 ``mu`` values,
    then the states point by point, all little-endian."""
    U = np.ascontiguousarray(branch.states(), dtype="<f8")
    n_points = len(branch.points)
    n_dofs = U.shape[1] if n_points else 0
    with open(path, "wb") as fh:
        fh.write(np.array([n_dofs, n_points], dtype="<i8").tobytes())
        fh.write(np.asarray(branch.mus, dtype="<f8").tobytes())
        fh.write(U.tobytes())


def read_branch_states(path):
    """Inverse of :func:`write_branch_states`: returns ``(mus, states)``."""
    raw = open(path, "rb").read()
    n_dofs, n_points = np.frombuffer(raw[:16], dtype="<i8")
    mus = np.frombuffer(raw[16:16 + 8 * n_points], dtype="<f8")
    U = np.frombuffer(raw[16 + 8 * n_points:], dtype="<f8").reshape(n_points, n_dofs)
    return mus.copy(), U.copy()
