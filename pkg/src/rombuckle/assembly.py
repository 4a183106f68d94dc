r"""
P1 finite element assembly of the hyperelastic residual and Jacobian.

The discrete residual for a displacement vector ``u`` at load parameter
``mu`` is

.. math::
    G_i(u; \mu) = \int_\Omega P(I + \nabla u) : \nabla\varphi_i \,d\Omega
                - \int_\Omega B \cdot \varphi_i \,d\Omega
                - \int_{\Gamma_N} T(\mu) \cdot \varphi_i \,d\Gamma ,

with rows of Dirichlet-constrained DoFs set to zero; the Jacobian has the
matching rows and columns replaced by the identity so it stays symmetric.

Geometric parametrization is handled by pulling every integral back to the
reference mesh through a piecewise affine map (see :class:`GeometricMap`).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import constitutive
from .errors import InadmissibleStateError, InvalidGeometryError

__all__ = [
    "DirichletBC",
    "NeumannBC",
    "BoundaryConditions",
    "DofMap",
    "GeometricMap",
    "build_geometric_map",
    "Discretization",
    "HyperelasticProblem",
    "assemble_residual",
    "assemble_jacobian",
    "apply_lifting",
]


def _vec(v, d):
    if v is None:
        return np.zeros(d)
    v = np.asarray(v, dtype=float).ravel()
    if v.size != d:
        raise ValueError(f"expected a vector of length {d}, got {v.size}")
    return v


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed displacement ``value + mu * rate`` on a tagged boundary.

    ``components`` restricts the constraint to some displacement components
    (``None`` clamps all of them).
    """

    tag: str
    value: tuple = None
    rate: tuple = None
    components: tuple = None

    def at(self, mu, d):
        return _vec(self.value, d) + mu * _vec(self.rate, d)

    def mask(self, d):
        if self.components is None:
            return tuple(range(d))
        return tuple(sorted(set(int(c) for c in self.components)))


@dataclass(frozen=True)
class NeumannBC:
    """Dead-load traction ``value + mu * rate`` per unit reference area."""

    tag: str
    value: tuple = None
    rate: tuple = None

    def at(self, mu, d):
        return _vec(self.value, d) + mu * _vec(self.rate, d)


@dataclass(frozen=True)
class BoundaryConditions:
    dirichlet: tuple = ()
    neumann: tuple = ()

    def check(self, mesh):
        known = set(mesh.tags())
        for bc in (*self.dirichlet, *self.neumann):
            if bc.tag not in known:
                raise InvalidGeometryError(f"boundary tag {bc.tag!r} not in mesh")


class DofMap:
    """Node-major vector DoFs (``dof = node * d + component``).

    Constrained DoFs carry ``value + mu * rate``; everything else is free.
    """

    def __init__(self, mesh, bcs=None):
        bcs = bcs or BoundaryConditions()
        bcs.check(mesh)
        d = mesh.dim
        self.mesh = mesh
        self.dim = d
        self.n_nodes = mesh.n_nodes
        self.n_dofs = mesh.n_nodes * d
        constrained = np.zeros(self.n_dofs, dtype=bool)
        const = np.zeros(self.n_dofs)
        rate = np.zeros(self.n_dofs)
        for bc in bcs.dirichlet:
            nodes = mesh.tag_nodes(bc.tag)
            value, slope = _vec(bc.value, d), _vec(bc.rate, d)
            for c in bc.mask(d):
                dofs = nodes * d + c
                constrained[dofs] = True
                const[dofs] = value[c]
                rate[dofs] = slope[c]
        self.constrained = constrained
        self.free = ~constrained
        self.constrained_dofs = np.flatnonzero(constrained)
        self.free_dofs = np.flatnonzero(~constrained)
        self._const = const
        self._rate = rate
        for a in (self.constrained, self.free, self._const, self._rate):
            a.setflags(write=False)

    def node_dofs(self, nodes):
        nodes = np.asarray(nodes)
        return (nodes[..., None] * self.dim + np.arange(self.dim)).reshape(*nodes.shape, self.dim)

    def lifting(self, mu, dofs=None):
        """Lifting vector: prescribed values on constrained DoFs, zero elsewhere."""
        if dofs is None:
            return self._const + mu * self._rate
        return self._const[dofs] + mu * self._rate[dofs]

    def homogenized(self):
        h = object.__new__(DofMap)
        h.__dict__.update(self.__dict__)
        h._const = np.zeros(self.n_dofs)
        h._rate = np.zeros(self.n_dofs)
        return h

    def component(self, u, c):
        return np.asarray(u)[c::self.dim]


@dataclass(frozen=True, eq=False)
class GeometricMap:
    """Piecewise affine map from the reference mesh to a stretched domain.

    The reference domain is split at ``split`` along ``axis``. The part below
    is left untouched, the part above is mapped by
    ``x_axis -> split + (mu_g / reference) * (x_axis - split)``.
    """

    kind: str
    mu_g: float
    axis: int
    dim: int
    split: float
    reference: float
    matrices: tuple = field(default=())
    offsets: tuple = field(default=())

    def subdomain(self, points):
        """0 below the split, 1 above, judged on reference coordinates."""
        points = np.atleast_2d(points)
        return (points[:, self.axis] > self.split).astype(int)

    def jacobian(self, sub):
        return self.matrices[sub]

    def det(self, sub):
        return float(np.linalg.det(self.matrices[sub]))

    def k_tensor(self, sub):
        """``J^-1 J^-T det(J)``, the pulled-back H1 seminorm tensor."""
        Jinv = np.linalg.inv(self.matrices[sub])
        return Jinv @ Jinv.T * self.det(sub)

    def apply(self, points):
        points = np.atleast_2d(points)
        sub = self.subdomain(points)
        out = np.empty_like(points, dtype=float)
        for s in (0, 1):
            sel = sub == s
            out[sel] = points[sel] @ self.matrices[s].T + self.offsets[s]
        return out


_MAP_KINDS = {
    # kind: (dim, axis, default split, default reference mu_g)
    "beam2d_semilength": (2, 0, 0.5, 0.5),
    "tube_semilength": (3, 2, 1.0, 1.0),
}


def build_geometric_map(kind, mu_g, split=None, reference=None):
    """Semi-length parametrization of a beam or tube.

    ``beam2d_semilength`` stretches ``x > 0.5`` of the unit-length beam so
    that ``mu_g = 0.5`` is the identity; ``tube_semilength`` stretches
    ``z > 1`` of the length-2 tube so that ``mu_g = 1`` is the identity.
    ``split`` and ``reference`` override those defaults for longer bodies.
    """
    if kind not in _MAP_KINDS:
        raise InvalidGeometryError(f"unknown geometric map {kind!r}")
    if not mu_g > 0:
        raise InvalidGeometryError("geometric parameter must be positive")
    dim, axis, s0, r0 = _MAP_KINDS[kind]
    split = s0 if split is None else float(split)
    reference = r0 if reference is None else float(reference)
    stretch = mu_g / reference
    A = np.eye(dim)
    A[axis, axis] = stretch
    b = np.zeros(dim)
    b[axis] = split * (1.0 - stretch)
    return GeometricMap(kind, float(mu_g), axis, dim, split, reference,
                        (np.eye(dim), A), (np.zeros(dim), b))


# Quadrature on simplices in barycentric coordinates. With P1 elements the
# displacement gradient is constant per element, so the one-point rule is
# already exact; the higher rules exist to demonstrate that.
_QUADRATURE = {
    ("p1", 2): (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    ("p1", 3): (np.full((1, 4), 0.25), np.array([1.0])),
    ("high", 2): (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6],
                            [1 / 6, 1 / 6, 2 / 3]]), np.full(3, 1 / 3)),
}
_a, _b = 0.5854101966249685, 0.1381966011250105
_QUADRATURE[("high", 3)] = (np.array([[_a, _b, _b, _b], [_b, _a, _b, _b],
                                      [_b, _b, _a, _b], [_b, _b, _b, _a]]),
                            np.full(4, 0.25))


class Discretization:
    """Per-element P1 data, optionally restricted to a subset of elements.

    Attributes
    ----------
    conn : ndarray, (n_el, d+1)
        Connectivity in *local* node numbering.
    global_nodes : ndarray
        Local-to-global node map (identity for the full mesh).
    grads : ndarray, (n_el, d+1, d)
        Physical gradients of the shape functions.
    weights : ndarray, (n_el,)
        Physical element measures.
    """

    def __init__(self, mesh, geo=None, quadrature="p1"):
        d = mesh.dim
        if (quadrature, d) not in _QUADRATURE:
            raise ValueError(f"unknown quadrature {quadrature!r}")
        self.mesh = mesh
        self.geo = geo
        self.dim = d
        self.quadrature = quadrature
        self.element_ids = np.arange(mesh.n_elements)
        self.global_nodes = np.arange(mesh.n_nodes)
        self.conn = np.asarray(mesh.elements)
        X = mesh.nodes[self.conn]
        D = X[:, 1:, :] - X[:, :1, :]
        Dinv = np.linalg.inv(D)
        g = np.swapaxes(Dinv, -1, -2)  # row a = grad of barycentric a+1
        grads = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
        vol = np.abs(np.linalg.det(D)) / (2.0 if d == 2 else 6.0)
        self.subdomain = np.zeros(mesh.n_elements, dtype=int)
        if geo is not None:
            if geo.dim != d:
                raise InvalidGeometryError("geometric map dimension mismatch")
            self.subdomain = geo.subdomain(X.mean(axis=1))
            for s in (0, 1):
                sel = self.subdomain == s
                Jinv = np.linalg.inv(geo.jacobian(s))
                grads[sel] = grads[sel] @ Jinv
                vol[sel] = vol[sel] * geo.det(s)
        self.grads = grads
        self.weights = vol
        self._pattern = None

    @property
    def n_nodes(self):
        return self.global_nodes.size

    @property
    def n_elements(self):
        return self.conn.shape[0]

    def restrict(self, element_ids):
        """Discretization over a subset of elements with local node numbers."""
        element_ids = np.unique(np.asarray(element_ids, dtype=np.int64))
        sub = object.__new__(Discretization)
        sub.mesh, sub.geo, sub.dim = self.mesh, self.geo, self.dim
        sub.quadrature = self.quadrature
        sub.element_ids = self.element_ids[element_ids]
        conn_global = self.global_nodes[self.conn[element_ids]]
        sub.global_nodes, local = np.unique(conn_global, return_inverse=True)
        sub.conn = local.reshape(conn_global.shape)
        sub.grads = self.grads[element_ids]
        sub.weights = self.weights[element_ids]
        sub.subdomain = self.subdomain[element_ids]
        sub._pattern = None
        return sub

    def element_dofs(self):
        d = self.dim
        return (self.conn[:, :, None] * d + np.arange(d)).reshape(self.n_elements, -1)

    def pattern(self):
        """CSR pattern plus the scatter map from element entries to ``data``."""
        if self._pattern is None:
            edofs = self.element_dofs()
            k = edofs.shape[1]
            rows = np.repeat(edofs, k, axis=1).ravel()
            cols = np.tile(edofs, (1, k)).ravel()
            n = self.n_nodes * self.dim
            key = rows * n + cols
            uniq, where = np.unique(key, return_inverse=True)
            r, c = np.divmod(uniq, n)
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.add.at(indptr, r + 1, 1)
            indptr = np.cumsum(indptr)
            self._pattern = (indptr, c.astype(np.int64), where.ravel(), uniq.size)
        return self._pattern

    # -- kinematics -------------------------------------------------------
    def gradients(self, u):
        """Displacement gradient per element, ``(n_el, d, d)``."""
        ue = np.asarray(u).reshape(-1, self.dim)[self.conn]  # (n_el, d+1, d)
        return np.einsum("eai,eaj->eij", ue, self.grads)

    def _states(self, model, u):
        state = constitutive.deformation_gradient(self.gradients(u))
        if model.kind is constitutive.MaterialKind.NH and np.any(state.J <= 0):
            bad = int(self.element_ids[np.flatnonzero(state.J <= 0)[0]])
            raise InadmissibleStateError(f"J <= 0 in element {bad}", element=bad)
        return state

    def _quad_weights(self):
        _, w = _QUADRATURE[(self.quadrature, self.dim)]
        return w

    # -- element integrals --------------------------------------------------
    def internal_force(self, model, u):
        """``int P : grad(phi_i)`` for every local DoF."""
        state = self._states(model, u)
        P = 0.0
        for w in self._quad_weights():
            # constant gradient: every point sees the same stress
            P = P + w * constitutive.piola(model, state)
        fe = np.einsum("e,eij,eaj->eai", self.weights, P, self.grads)
        n = self.n_nodes * self.dim
        return np.bincount(self.element_dofs().ravel(), weights=fe.ravel(), minlength=n)

    def stiffness(self, model, u):
        """Tangent stiffness ``dG/du`` (no boundary treatment), CSR."""
        state = self._states(model, u)
        A = 0.0
        for w in self._quad_weights():
            A = A + w * constitutive.tangent(model, state)
        tmp = np.einsum("eijkl,ebl->eijkb", A, self.grads, optimize=True)
        Ke = np.einsum("e,eaj,eijkb->eaibk", self.weights, self.grads, tmp,
                       optimize=True)
        indptr, indices, where, nnz = self.pattern()
        data = np.bincount(where, weights=Ke.ravel(), minlength=nnz)
        n = self.n_nodes * self.dim
        return sp.csr_matrix((data, indices, indptr), shape=(n, n))

    def strain_energy(self, model, u):
        state = self._states(model, u)
        return float(np.dot(self.weights, constitutive.energy(model, state)))

    def body_load(self, body_force):
        """``int B . phi_i`` for a constant body force ``B``."""
        lam, wq = _QUADRATURE[(self.quadrature, self.dim)]
        shape_int = np.einsum("q,qa->a", wq, lam)  # = 1/(d+1) each
        B = _vec(body_force, self.dim)
        fe = np.einsum("e,a,i->eai", self.weights, shape_int, B)
        n = self.n_nodes * self.dim
        return np.bincount(self.element_dofs().ravel(), weights=fe.ravel(), minlength=n)

    def traction_load(self, tag, traction):
        """``int_{tag} T . phi_i`` for a constant traction ``T``."""
        mesh = self.mesh
        d = self.dim
        T = _vec(traction, d)
        sel = mesh.facet_tags == tag
        facets = mesh.facets[sel]
        f = np.zeros(mesh.n_nodes * d)
        if facets.size == 0:
            return f
        X = mesh.nodes[facets]
        if d == 2:
            t = X[:, 1] - X[:, 0]
            normal = np.column_stack([t[:, 1], -t[:, 0]])
        else:
            normal = 0.5 * np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
        meas = np.linalg.norm(normal, axis=1)
        n_hat = normal / meas[:, None]
        if self.geo is not None:
            sub = self.subdomain[mesh.facet_elements[sel]]
            for s in (0, 1):
                m = sub == s
                JinvT = np.linalg.inv(self.geo.jacobian(s)).T
                meas[m] *= self.geo.det(s) * np.linalg.norm(n_hat[m] @ JinvT.T, axis=1)
        fe = np.einsum("f,i->fi", meas / d, T)
        for a in range(d):
            dofs = facets[:, a][:, None] * d + np.arange(d)
            np.add.at(f, dofs.ravel(), fe.ravel())
        return f


class HyperelasticProblem:
    """Discrete hyperelastic system for one set of branch parameters.

    Exposes the residual/Jacobian pair used by Newton and the small
    continuation protocol (``initial_state``, ``shift``, ``reconstruct``)
    shared with the reduced systems.
    """

    def __init__(self, mesh, bcs, model, body_force=None, geo=None,
                 quadrature="p1"):
        self.mesh = mesh
        self.bcs = bcs
        self.model = model
        self.geo = geo
        self.disc = Discretization(mesh, geo, quadrature)
        self.dofmap = DofMap(mesh, bcs)
        self.dim = d = mesh.dim
        self.body_force = _vec(body_force, d)
        self.load_const = self.disc.body_load(self.body_force)
        self.load_rate = np.zeros(self.dofmap.n_dofs)
        for bc in bcs.neumann:
            self.load_const = self.load_const + self.disc.traction_load(bc.tag, _vec(bc.value, d))
            self.load_rate = self.load_rate + self.disc.traction_load(bc.tag, _vec(bc.rate, d))
        extent = np.ptp(mesh.nodes, axis=0)
        self.residual_scale = model.lame.lambda1 * mesh.volume() / extent.max()
        self._bc_positions = None

    @property
    def n_dofs(self):
        return self.dofmap.n_dofs

    def lifting(self, mu):
        return self.dofmap.lifting(mu)

    def external_load(self, mu):
        return self.load_const + mu * self.load_rate

    def internal_force(self, u):
        return self.disc.internal_force(self.model, u)

    def stiffness(self, u):
        return self.disc.stiffness(self.model, u)

    def energy(self, u, mu):
        """Total potential energy: stored energy minus work of the loads."""
        return self.disc.strain_energy(self.model, u) - float(np.dot(self.external_load(mu), u))

    def residual(self, u, mu, constrain=True):
        G = self.internal_force(u) - self.external_load(mu)
        if constrain:
            G[self.dofmap.constrained] = 0.0
        return G

    def jacobian(self, u, mu=None, constrain=True):
        K = self.stiffness(u)
        if constrain:
            K = self._constrain(K)
        return K

    def _constrain(self, K):
        if self._bc_positions is None:
            rows = np.repeat(np.arange(K.shape[0]), np.diff(K.indptr))
            c = self.dofmap.constrained
            kill = c[rows] | c[K.indices]
            diag = kill & (rows == K.indices)
            self._bc_positions = (kill, diag)
        kill, diag = self._bc_positions
        K.data[kill] = 0.0
        K.data[diag] = 1.0
        return K

    # continuation protocol
    def initial_state(self, mu):
        return self.lifting(mu)

    def shift(self, u, mu_from, mu_to):
        return u + (self.lifting(mu_to) - self.lifting(mu_from))

    def reconstruct(self, u, mu):
        return u

    def project_direction(self, v):
        v = np.array(v, dtype=float)
        v[self.dofmap.constrained] = 0.0
        return v


def assemble_residual(mesh, dofmap, bcs, model, body_force, u, mu=0.0, geo=None,
                      quadrature="p1", constrain=True):
    """Residual vector of the weak form (see module docstring)."""
    problem = HyperelasticProblem(mesh, bcs, model, body_force, geo, quadrature)
    return problem.residual(np.asarray(u, dtype=float), mu, constrain=constrain)


def assemble_jacobian(mesh, dofmap, bcs, model, u, geo=None, quadrature="p1",
                      constrain=True):
    """Sparse tangent stiffness; constrained rows/columns become identity."""
    problem = HyperelasticProblem(mesh, bcs, model, None, geo, quadrature)
    return problem.jacobian(np.asarray(u, dtype=float), constrain=constrain)


def apply_lifting(bcs, dofmap, mu):
    """Return ``(R_D, homogenized dofmap)`` for the Dirichlet data at ``mu``."""
    return dofmap.lifting(mu), dofmap.homogenized()
