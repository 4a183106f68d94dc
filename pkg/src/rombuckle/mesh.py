"""
Structured simplicial meshes for beams and tubes.

All generators are deterministic: node and element ordering depend only on
the arguments, so two calls with the same arguments give bit-identical
meshes. Boundary facets are found by face counting and tagged from the
position of their centroid.
"""

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .errors import InvalidGeometryError

__all__ = [
    "DIRICHLET_LEFT",
    "DIRICHLET_RIGHT",
    "NEUMANN_RIGHT",
    "FREE_BOUNDARY",
    "BOUNDARY_TAGS",
    "Mesh",
    "build_beam_2d",
    "build_beam_3d",
    "build_tube_3d",
    "simplex_volumes",
    "write_vtk",
]

DIRICHLET_LEFT = "DirichletLeft"
DIRICHLET_RIGHT = "DirichletRight"
NEUMANN_RIGHT = "NeumannRight"
FREE_BOUNDARY = "FreeBoundary"
BOUNDARY_TAGS = (DIRICHLET_LEFT, DIRICHLET_RIGHT, NEUMANN_RIGHT, FREE_BOUNDARY)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh with tagged boundary facets.

    Attributes
    ----------
    nodes : ndarray, shape (n_nodes, dim)
    elements : ndarray of int, shape (n_elements, dim + 1)
        Positively oriented simplices.
    facets : ndarray of int, shape (n_facets, dim)
        Boundary facets (edges in 2-D, triangles in 3-D).
    facet_tags : ndarray of str, shape (n_facets,)
    facet_elements : ndarray of int, shape (n_facets,)
        The single element owning each boundary facet.
    info : dict
        Generator metadata (dimensions, analytic volume, D/t for tubes...).
    """

    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_elements: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def boundary_facets(self):
        return list(zip(map(tuple, self.facets.tolist()), self.facet_tags.tolist()))

    def volumes(self):
        return simplex_volumes(self.nodes, self.elements)

    def volume(self):
        return float(self.volumes().sum())

    def tag_nodes(self, tag):
        """Sorted node indices lying on facets carrying ``tag``."""
        return np.unique(self.facets[self.facet_tags == tag])

    def tags(self):
        return sorted(set(self.facet_tags.tolist()))

    def fingerprint(self):
        """Hex digest identifying nodes, connectivity and tags."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.nodes, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.elements, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.facets, dtype=np.int64).tobytes())
        h.update("|".join(self.facet_tags.tolist()).encode())
        return h.hexdigest()

    def with_nodes(self, nodes):
        """Same connectivity and tags on moved nodes."""
        return Mesh(_frozen(nodes, float), self.elements, self.facets,
                    self.facet_tags, self.facet_elements, dict(self.info))


def simplex_volumes(nodes, elements):
    """Signed volumes (areas in 2-D) of the simplices."""
    x = nodes[elements]
    edges = x[:, 1:, :] - x[:, :1, :]
    d = nodes.shape[1]
    return np.linalg.det(edges) / (1.0 if d == 1 else (2.0 if d == 2 else 6.0))


def _orient(nodes, elements):
    vol = simplex_volumes(nodes, elements)
    flip = vol < 0
    elements = elements.copy()
    elements[flip, 0], elements[flip, 1] = elements[flip, 1], elements[flip, 0].copy()
    return elements


def _boundary(elements, dim):
    """Boundary facets (sorted as they appear locally) and their owner."""
    n_vert = dim + 1
    local = [tuple(j for j in range(n_vert) if j != i) for i in range(n_vert)]
    faces = np.concatenate([elements[:, list(f)] for f in local])
    owner = np.tile(np.arange(elements.shape[0]), n_vert)
    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True,
                                   return_counts=True)
    inverse = inverse.ravel()
    once = counts[inverse] == 1
    faces, owner = faces[once], owner[once]
    order = np.lexsort(np.sort(faces, axis=1).T[::-1])
    return faces[order], owner[order]


def _finish(nodes, elements, classify, info):
    dim = nodes.shape[1]
    elements = _orient(nodes, elements)
    vol = simplex_volumes(nodes, elements)
    if np.any(vol <= 0.0):
        raise InvalidGeometryError("degenerate element in generated mesh")
    facets, owner = _boundary(elements, dim)
    centroids = nodes[facets].mean(axis=1)
    tags = np.array([classify(c) for c in centroids], dtype=object).astype(str)
    return Mesh(_frozen(nodes, float), _frozen(elements, np.int64),
                _frozen(facets, np.int64), _frozen(tags, str),
                _frozen(owner, np.int64), info)


def _check_right(right):
    if right not in (DIRICHLET_RIGHT, NEUMANN_RIGHT, FREE_BOUNDARY):
        raise InvalidGeometryError(f"unknown right-end tag {right!r}")


def build_beam_2d(length, height, nx, ny, right=DIRICHLET_RIGHT):
    """Triangulated rectangle ``[0, length] x [0, height]``.

    Each of the ``nx * ny`` cells is cut along one diagonal. The diagonal
    direction is mirrored about mid-height, so for even ``ny`` the mesh is
    invariant under the reflection ``y -> height - y``.

    Parameters
    ----------
    length, height : float
    nx, ny : int
        Cells along x and y.
    right : str
        Tag of the edge ``x = length``.

    Returns
    -------
    Mesh
    """
    if not (length > 0 and height > 0):
        raise InvalidGeometryError("beam dimensions must be positive")
    if int(nx) < 1 or int(ny) < 1:
        raise InvalidGeometryError("need at least one cell per direction")
    _check_right(right)
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    # mirrored rows get bitwise mirrored coordinates
    ys = np.where(np.arange(ny + 1) > ny / 2, height - ys[::-1], ys)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    tris = []
    for j in range(ny):
        lower = (j + 0.5) < ny / 2
        for i in range(nx):
            n00 = j * (nx + 1) + i
            n10, n01, n11 = n00 + 1, n00 + nx + 1, n00 + nx + 2
            if lower:
                tris += [(n00, n10, n11), (n00, n11, n01)]
            else:
                tris += [(n00, n10, n01), (n10, n11, n01)]
    elements = np.array(tris, dtype=np.int64)
    tol = 1e-9 * max(length, height)

    def classify(c):
        if abs(c[0]) < tol:
            return DIRICHLET_LEFT
        if abs(c[0] - length) < tol:
            return right
        return FREE_BOUNDARY

    info = dict(kind="beam2d", length=length, height=height, nx=nx, ny=ny,
                thickness=height, axis=0, analytic_volume=length * height)
    return _finish(nodes, elements, classify, info)


def _kuhn_cells(shape, index, periodic_first=False):
    """Kuhn tetrahedra for a structured grid of hexahedra.

    ``shape`` is the number of cells per logical direction and ``index``
    maps a logical vertex (a, b, c) to its node number.
    """
    paths = []
    for perm in permutations(range(3)):
        corner = [0, 0, 0]
        path = [tuple(corner)]
        for axis in perm:
            corner[axis] = 1
            path.append(tuple(corner))
        paths.append(path)
    na, nb, nc = shape
    tets = []
    for c in range(nc):
        for b in range(nb):
            for a in range(na):
                for path in paths:
                    tets.append([index(a + o[0], b + o[1], c + o[2]) for o in path])
    return np.array(tets, dtype=np.int64)


def build_beam_3d(lx, ly, lz, nx, ny, nz, right=DIRICHLET_RIGHT):
    """Box ``[0,lx] x [0,ly] x [0,lz]`` split into ``6 nx ny nz`` Kuhn tetrahedra."""
    if not (lx > 0 and ly > 0 and lz > 0):
        raise InvalidGeometryError("box dimensions must be positive")
    if min(int(nx), int(ny), int(nz)) < 1:
        raise InvalidGeometryError("need at least one cell per direction")
    _check_right(right)
    nx, ny, nz = int(nx), int(ny), int(nz)
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    zs = np.linspace(0.0, lz, nz + 1)
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def index(a, b, c):
        return (c * (ny + 1) + b) * (nx + 1) + a

    elements = _kuhn_cells((nx, ny, nz), index)
    tol = 1e-9 * max(lx, ly, lz)

    def classify(p):
        if abs(p[0]) < tol:
            return DIRICHLET_LEFT
        if abs(p[0] - lx) < tol:
            return right
        return FREE_BOUNDARY

    info = dict(kind="beam3d", length=lx, width=ly, height=lz, nx=nx, ny=ny,
                nz=nz, thickness=min(ly, lz), axis=0,
                analytic_volume=lx * ly * lz)
    return _finish(nodes, elements, classify, info)


def build_tube_3d(r_inner, r_outer, length, n_circ, n_rad, n_axial,
                  right=NEUMANN_RIGHT):
    """Annular cylinder ``A_r^R x [0, length]`` with axis along z.

    The cross-section is a polygonal annulus with ``n_circ`` sectors, so the
    mesh volume falls short of the circular one; the defect is reported in
    ``mesh.info["volume_defect"]`` together with ``info["d_over_t"]``.
    """
    if not (0 < r_inner < r_outer):
        raise InvalidGeometryError("need 0 < r_inner < r_outer")
    if not length > 0:
        raise InvalidGeometryError("tube length must be positive")
    if int(n_circ) < 8:
        raise InvalidGeometryError("need n_circ >= 8")
    if int(n_rad) < 1 or int(n_axial) < 1:
        raise InvalidGeometryError("need at least one radial and axial cell")
    _check_right(right)
    nc, nr, na = int(n_circ), int(n_rad), int(n_axial)
    theta = 2.0 * np.pi * np.arange(nc) / nc
    radii = np.linspace(r_inner, r_outer, nr + 1)
    zs = np.linspace(0.0, length, na + 1)
    Z, R, T = np.meshgrid(zs, radii, theta, indexing="ij")
    nodes = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel(),
                             Z.ravel()])

    def index(a, b, c):
        return (c * (nr + 1) + b) * nc + (a % nc)

    elements = _kuhn_cells((nc, nr, na), index)
    tol = 1e-9 * max(length, r_outer)

    def classify(p):
        if abs(p[2]) < tol:
            return DIRICHLET_LEFT
        if abs(p[2] - length) < tol:
            return right
        return FREE_BOUNDARY

    exact = np.pi * (r_outer**2 - r_inner**2) * length
    info = dict(kind="tube", r_inner=r_inner, r_outer=r_outer, length=length,
                n_circ=nc, n_rad=nr, n_axial=na, thickness=2.0 * r_outer,
                axis=2, analytic_volume=exact,
                d_over_t=2.0 * r_outer / (r_outer - r_inner))
    mesh = _finish(nodes, elements, classify, info)
    mesh.info["volume_defect"] = (exact - mesh.volume()) / exact
    return mesh


_VTK_CELL = {2: 5, 3: 10}


def write_vtk(mesh, path, point_data=None):
    """Write the mesh as an ASCII legacy VTK unstructured grid.

    ``point_data`` maps names to arrays of shape (n_nodes,) or
    (n_nodes, dim); vectors are padded to three components.
    """
    pts = np.zeros((mesh.n_nodes, 3))
    pts[:, :mesh.dim] = mesh.nodes
    nv = mesh.elements.shape[1]
    lines = ["# vtk DataFile Version 3.0", "rombuckle mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    lines += [f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in pts]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (nv + 1)}")
    lines += [f"{nv} " + " ".join(map(str, e)) for e in mesh.elements.tolist()]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(_VTK_CELL[mesh.dim])] * mesh.n_elements
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in values]
            else:
                vec = np.zeros((mesh.n_nodes, 3))
                vec[:, :values.shape[1]] = values
                lines.append(f"VECTORS {name} double")
                lines += [f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}" for v in vec]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
